mod common;

use flowmarket::audit::{adequacy_audit, AuditOptions, Verdict};
use flowmarket::formulations::{build_ogf, GasCase};
use flowmarket::io::Case;
use flowmarket::ipm::{solve, SolveStatus, SolverOptions};
use flowmarket::star::StarOptions;

use common::fixture;

fn three_junction() -> GasCase {
    match fixture("gas_3junction.json") {
        Case::Gas(c) => c,
        _ => unreachable!(),
    }
}

/// Cheapest feasible cost with the supply at j1 and the p1 ratio on a grid.
/// Flows follow from conservation; given both, every squared pressure is
/// affine in π(j1), so feasibility reduces to a nonempty interval.
fn grid_minimum(case: &GasCase, n: usize) -> (f64, f64, f64) {
    let [j1, j2, j3] = [&case.junctions[0], &case.junctions[1], &case.junctions[2]];
    let (s1, s3) = (j1.supply.as_ref().unwrap(), j3.supply.as_ref().unwrap());
    let (p1, p2) = (&case.pipes[0], &case.pipes[1]);
    let comp = p1.compressor.as_ref().unwrap();
    let (b1, b2) = (p1.beta().unwrap(), p2.beta().unwrap());
    let demand = j2.withdrawal + j3.withdrawal;
    let sq = |a: f64, b: f64| (a * a, b * b);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let q_lo = s1.min.max(demand - s3.max);
    let q_hi = s1.max.min(demand - s3.min);
    for a in 0..n {
        let q1 = q_lo + (q_hi - q_lo) * a as f64 / (n - 1) as f64;
        let q3 = demand - q1;
        let (f1, f2) = (q1, q1 - j2.withdrawal);
        for b in 0..n {
            let alpha = 1.0 + (comp.max_ratio - 1.0) * b as f64 / (n - 1) as f64;
            // π2 = απ1 − β1 f1|f1|, π3 = π2 − β2 f2|f2|
            let d1 = b1 * f1 * f1.abs();
            let d2 = b2 * f2 * f2.abs();
            let (mut lo, mut hi) = sq(j1.pressure_min, j1.pressure_max);
            let mut clamp = |k: f64, c: f64, (l, h): (f64, f64)| {
                lo = lo.max((l - c) / k);
                hi = hi.min((h - c) / k);
            };
            let pipe1 = sq(p1.pressure_min, p1.pressure_max);
            let pipe2 = sq(p2.pressure_min, p2.pressure_max);
            clamp(alpha, 0.0, pipe1);
            clamp(alpha, -d1, pipe1);
            clamp(alpha, -d1, sq(j2.pressure_min, j2.pressure_max));
            clamp(alpha, -d1, pipe2);
            clamp(alpha, -d1 - d2, pipe2);
            clamp(alpha, -d1 - d2, sq(j3.pressure_min, j3.pressure_max));
            if lo <= hi {
                let cost = s1.price * q1 + s3.price * q3 + comp.cost * (alpha - 1.0);
                if cost < best.0 {
                    best = (cost, q1, alpha);
                }
            }
        }
    }
    best
}

#[test]
fn compressor_line_matches_grid_scan() {
    let case = three_junction();
    let p = build_ogf(&case).unwrap();
    let out = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let (cost, q1, alpha) = grid_minimum(&case, 100);
    assert!(cost.is_finite());
    assert!((out.objective - cost).abs() <= 1e-3, "ipm {} grid {cost} at q1 {q1} α {alpha}", out.objective);
    let z = &out.point.primal;
    let at = |name: &str| z[p.variable_index(name).unwrap()];
    assert!((at("q[j1]") - q1).abs() <= 0.03);
    assert!((at("alpha[p1]") - alpha).abs() <= 0.01);
}

#[test]
fn compressor_line_is_certified() {
    let case = three_junction();
    let p = build_ogf(&case).unwrap();
    assert_eq!(p.formulation().unwrap().common_pressure, Some(12.5));
    let out = solve(&p, &SolverOptions::default()).unwrap();
    let a = adequacy_audit(&p, &out.point, &AuditOptions::default(), &StarOptions::default()).unwrap();
    assert_eq!(a.verdict, Verdict::Consistent);
    assert!(a.mfcq.holds);
    assert!(a.star.unwrap().verified);
    assert!(a.revenue.revenue > 0.0);
}
