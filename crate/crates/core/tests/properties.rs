mod common;

use proptest::prelude::*;

use flowmarket::audit::{adequacy_audit, AuditOptions, AuditReport, Verdict};
use flowmarket::formulations::{build_ac_opf, build_dc_opf, build_ogf};
use flowmarket::ipm::{solve, SolveOutcome, SolveStatus, SolverOptions};
use flowmarket::model::{NlpProblem, VarRole};
use flowmarket::star::{ac_scale_point, dc_scale_point, ogf_scale_point, system_violation, StarOptions};

use common::{random_ac, random_dc, random_gas};

fn solved(problem: &NlpProblem) -> Option<SolveOutcome> {
    let out = solve(problem, &SolverOptions::default()).ok()?;
    (out.status == SolveStatus::Optimal).then_some(out)
}

fn audited(problem: &NlpProblem, out: &SolveOutcome) -> AuditReport {
    adequacy_audit(problem, &out.point, &AuditOptions::default(), &StarOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dc_map_is_homogeneous(seed in 0u64..5000, s in 0.0f64..=1.0) {
        let p = build_dc_opf(&random_dc(seed)).unwrap();
        let out = solved(&p);
        prop_assume!(out.is_some());
        let z = out.unwrap().point.primal;
        let zs = dc_scale_point(&p, &z, s).unwrap();
        for ((a, b), role) in zs.iter().zip(&z).zip(p.roles()) {
            match role {
                VarRole::Exposed | VarRole::Angle | VarRole::Flow => prop_assert!((a - s * b).abs() <= 1e-15 * b.abs().max(1.0)),
                _ => prop_assert_eq!(a, b),
            }
        }
        prop_assert!(system_violation(&p, &zs).unwrap() <= 1e-10);
    }

    #[test]
    fn gas_pressures_interpolate_and_ratios_track(seed in 0u64..5000, s in 0.0f64..=1.0) {
        let p = build_ogf(&random_gas(seed)).unwrap();
        let pc = p.formulation().unwrap().common_pressure.unwrap();
        let out = solved(&p);
        prop_assume!(out.is_some());
        let z = out.unwrap().point.primal;
        let zs = ogf_scale_point(&p, &z, s, pc).unwrap();
        for (j, role) in p.roles().iter().enumerate() {
            match *role {
                VarRole::NodePressure | VarRole::PipePressure => {
                    let (lo, hi) = (z[j].min(pc), z[j].max(pc));
                    prop_assert!(zs[j] >= lo - 1e-12 && zs[j] <= hi + 1e-12);
                }
                VarRole::Ratio { node, pipe } => {
                    prop_assert!((zs[j] * zs[node] - zs[pipe]).abs() <= 1e-12 * zs[pipe].abs().max(1.0));
                    // the ratio moves toward 1 by the factor s²π/((1−s²)π_c + s²π)
                    let alpha = z[pipe] / z[node];
                    if alpha > 1.0 + 1e-3 {
                        let s2 = s * s;
                        let f = s2 * z[node] / ((1.0 - s2) * pc + s2 * z[node]);
                        prop_assert!(((zs[j] - 1.0) / (alpha - 1.0) - f).abs() <= 1e-9);
                    }
                }
                VarRole::Exposed | VarRole::Flow => prop_assert!((zs[j] - s * z[j]).abs() <= 1e-15 * z[j].abs().max(1.0)),
                _ => {}
            }
        }
    }

    #[test]
    fn ac_flows_shrink_linearly(seed in 0u64..5000, s in 0.0f64..=1.0) {
        let p = build_ac_opf(&random_ac(seed)).unwrap();
        let out = solved(&p);
        prop_assume!(out.is_some());
        let z = out.unwrap().point.primal;
        let zs = ac_scale_point(&p, &z, s).unwrap();
        for (j, role) in p.roles().iter().enumerate() {
            match role {
                VarRole::Flow => prop_assert!(zs[j].abs() <= z[j].abs() && (zs[j] - s * z[j]).abs() <= 1e-15 * z[j].abs().max(1.0)),
                VarRole::Voltage => prop_assert!((zs[j] * zs[j] - s * z[j] * z[j]).abs() <= 1e-14),
                VarRole::Angle => prop_assert_eq!(zs[j], z[j]),
                _ => {}
            }
        }
    }
}

/// Audits seeds until `want` qualifying solutions are found; a solution
/// qualifies when it is optimal, passes KKT and meets both hypotheses.
fn sweep(name: &str, first_seed: u64, want: usize, build: impl Fn(u64) -> NlpProblem) {
    let mut found = 0;
    let mut seed = first_seed;
    while found < want {
        assert!(seed < first_seed + 20 * want as u64, "{name}: only {found} qualifying cases");
        let p = build(seed);
        seed += 1;
        let Some(out) = solved(&p) else { continue };
        let a = audited(&p, &out);
        if !a.kkt.pass || matches!(a.verdict, Verdict::HypothesisNotSatisfied(_) | Verdict::Inconclusive(_)) {
            continue;
        }
        found += 1;
        assert!(a.revenue.revenue >= -a.revenue.tol, "{name} seed {}: R = {:e}", seed - 1, a.revenue.revenue);
        let sign = a.rent_sign.expect("registered formulation");
        assert!(sign.inequality_rent >= -1e-6, "{name} seed {}: inequality rent {:e}", seed - 1, sign.inequality_rent);
        assert_eq!(a.verdict, Verdict::Consistent, "{name} seed {}", seed - 1);
    }
}

#[test]
fn dc_revenue_nonnegative_on_50_cases() {
    sweep("dc", 10_000, 50, |s| build_dc_opf(&random_dc(s)).unwrap());
}

#[test]
fn gas_revenue_nonnegative_on_50_cases() {
    sweep("gas", 20_000, 50, |s| build_ogf(&random_gas(s)).unwrap());
}

#[test]
fn ac_revenue_nonnegative_on_50_cases() {
    sweep("ac", 30_000, 50, |s| build_ac_opf(&random_ac(s)).unwrap());
}
