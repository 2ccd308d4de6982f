//! Scaling paths toward the zero-flow point and empirical star checks.
//!
//! Each formulation has a map `s ↦ z(s)` with `z(1)` the solved point and
//! `z(s)` feasible for the system set whenever the theory says so:
//!
//! * DC: `(s p, s θ, s p^l)`.
//! * Gas: squared pressures `π_c + s²(π − π_c)`, flows and injections `s φ`,
//!   `s x`, ratios recomputed as `π^s_pipe / π^s_node`.
//! * AC: injections and flows `× s`, voltages `× √s`, angles unchanged. Only
//!   voltage lower bounds can break feasibility, hence a local check.
//!
//! The sweep only evaluates system rows (`H`, `G`), with the exact `v|v|`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FamilyKind, Formulation, NlpProblem, Smoothing, VarRole, TOL_FEAS};

pub use crate::formulations::find_common_pressure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StarMode {
    /// Sweep `s` over `[0, 1]`.
    Gss,
    /// Bisect the largest `ε` with `[1 − ε, 1]` feasible.
    Lss,
}

impl std::str::FromStr for StarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gss" => Ok(StarMode::Gss),
            "lss" => Ok(StarMode::Lss),
            other => Err(Error::Unsupported(format!("unknown star mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarOptions {
    /// Number of GSS samples over `[0, 1]`, endpoints included.
    pub samples: usize,
    /// Defaults to GSS for DC and gas, LSS for AC.
    pub mode: Option<StarMode>,
    /// Samples over `[1 − ε, 1]` for each LSS feasibility test.
    pub lss_samples: usize,
    pub bisection_tol: f64,
    pub feas_tol: f64,
}

impl Default for StarOptions {
    fn default() -> Self {
        Self {
            samples: 101,
            mode: None,
            lss_samples: 21,
            bisection_tol: 1e-4,
            feas_tol: TOL_FEAS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSample {
    pub s: f64,
    pub max_violation: f64,
    pub feasible: bool,
    #[serde(skip)]
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPath {
    pub formulation: Formulation,
    pub mode: StarMode,
    /// Common squared pressure used by the gas map.
    pub common_pressure: Option<f64>,
    pub samples: Vec<ScalingSample>,
    pub max_violation: f64,
    /// Largest verified `ε` (LSS only).
    pub epsilon_star: Option<f64>,
    pub verified: bool,
    /// Set when the construction's precondition does not hold.
    pub hypothesis_unmet: Option<String>,
}

fn require(problem: &NlpProblem, kind: Formulation) -> Result<()> {
    match problem.formulation() {
        Some(info) if info.kind == kind => Ok(()),
        Some(info) => Err(Error::IncompatibleModel {
            kind: info.kind.to_string(),
            model: kind.to_string(),
        }),
        None => Err(Error::Unsupported("problem has no registered scaling map".into())),
    }
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("scaling factor {s} outside [0, 1]")))
    }
}

/// `(s p, s θ, s p^l)`; traded quantities are left unchanged.
pub fn dc_scale_point(problem: &NlpProblem, primal: &[f64], s: f64) -> Result<Vec<f64>> {
    require(problem, Formulation::Dc)?;
    problem.check_primal(primal)?;
    check_s(s)?;
    Ok(primal
        .iter()
        .zip(problem.roles())
        .map(|(&v, role)| match role {
            VarRole::Exposed | VarRole::Angle | VarRole::Flow => s * v,
            _ => v,
        })
        .collect())
}

/// Gas scaling around the common squared pressure `pi_c`.
pub fn ogf_scale_point(problem: &NlpProblem, primal: &[f64], s: f64, pi_c: f64) -> Result<Vec<f64>> {
    require(problem, Formulation::Ogf)?;
    problem.check_primal(primal)?;
    check_s(s)?;
    let s2 = s * s;
    let pressure = |p: f64| pi_c + s2 * (p - pi_c);
    let mut out = primal.to_vec();
    for (j, role) in problem.roles().iter().enumerate() {
        match role {
            VarRole::Exposed | VarRole::Flow => out[j] = s * primal[j],
            VarRole::NodePressure | VarRole::PipePressure => out[j] = pressure(primal[j]),
            _ => {}
        }
    }
    for (j, role) in problem.roles().iter().enumerate() {
        if let VarRole::Ratio { node, pipe } = *role {
            let den = pressure(primal[node]);
            if !(den > 0.0) {
                return Err(Error::NonFinite(format!(
                    "scaled squared pressure {den} at {} is not positive",
                    problem.variable_names()[node]
                )));
            }
            out[j] = pressure(primal[pipe]) / den;
        }
    }
    Ok(out)
}

/// `(s p, s q, √s v, θ, s p^l, s q^l)`
pub fn ac_scale_point(problem: &NlpProblem, primal: &[f64], s: f64) -> Result<Vec<f64>> {
    require(problem, Formulation::Ac)?;
    problem.check_primal(primal)?;
    check_s(s)?;
    let r = s.sqrt();
    Ok(primal
        .iter()
        .zip(problem.roles())
        .map(|(&v, role)| match role {
            VarRole::Exposed | VarRole::Flow => s * v,
            VarRole::Voltage => r * v,
            _ => v,
        })
        .collect())
}

fn common_pressure(problem: &NlpProblem) -> Option<f64> {
    problem.formulation().and_then(|f| f.common_pressure)
}

/// Scales with whichever map is registered for the problem.
pub fn scale_point(problem: &NlpProblem, primal: &[f64], s: f64) -> Result<Vec<f64>> {
    let info = problem
        .formulation()
        .ok_or_else(|| Error::Unsupported("problem has no registered scaling map".into()))?;
    match info.kind {
        Formulation::Dc => dc_scale_point(problem, primal, s),
        Formulation::Ac => ac_scale_point(problem, primal, s),
        Formulation::Ogf => {
            let pc = common_pressure(problem)
                .ok_or_else(|| Error::Unsupported("no common squared pressure fits every pressure box".into()))?;
            ogf_scale_point(problem, primal, s, pc)
        }
    }
}

/// `dz/ds` at `s = 1`: the velocity of the scaling path at the solved point.
/// Its exposed block equals `x`; traded entries are zero.
pub fn scaling_velocity(problem: &NlpProblem, primal: &[f64]) -> Result<Vec<f64>> {
    problem.check_primal(primal)?;
    let info = problem
        .formulation()
        .ok_or_else(|| Error::Unsupported("problem has no registered scaling map".into()))?;
    let pc = match info.kind {
        Formulation::Ogf => Some(
            common_pressure(problem)
                .ok_or_else(|| Error::Unsupported("no common squared pressure fits every pressure box".into()))?,
        ),
        _ => None,
    };
    let mut w = vec![0.0; primal.len()];
    for (j, role) in problem.roles().iter().enumerate() {
        let v = primal[j];
        w[j] = match (info.kind, *role) {
            (_, VarRole::Exposed | VarRole::Flow) => v,
            (Formulation::Dc, VarRole::Angle) => v,
            (Formulation::Ac, VarRole::Voltage) => 0.5 * v,
            (Formulation::Ogf, VarRole::NodePressure | VarRole::PipePressure) => 2.0 * (v - pc.unwrap_or(0.0)),
            (Formulation::Ogf, VarRole::Ratio { node, pipe }) => {
                let (pn, pp) = (primal[node], primal[pipe]);
                2.0 * pc.unwrap_or(0.0) * (pp - pn) / (pn * pn)
            }
            _ => 0.0,
        };
    }
    Ok(w)
}

/// Largest violation of the system rows `H` and `G` (exact `v|v|`).
pub fn system_violation(problem: &NlpProblem, primal: &[f64]) -> Result<f64> {
    let h = problem.family(FamilyKind::SystemEquality).values(primal, Smoothing::Exact);
    let g = problem.family(FamilyKind::SystemInequality).values(primal, Smoothing::Exact);
    let v = h
        .iter()
        .map(|r| r.abs())
        .chain(g.iter().map(|r| r.max(0.0)))
        .fold(0.0, f64::max);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("system rows along the scaling path".into()))
    }
}

/// Labels of system inequality rows violated beyond `tol`.
pub fn violated_rows(problem: &NlpProblem, primal: &[f64], tol: f64) -> Vec<String> {
    let g = problem.family(FamilyKind::SystemInequality);
    g.values(primal, Smoothing::Exact)
        .iter()
        .zip(&g.labels)
        .filter(|(v, _)| **v > tol)
        .map(|(_, l)| l.clone())
        .collect()
}

fn sample(problem: &NlpProblem, primal: &[f64], s: f64, tol: f64) -> Result<ScalingSample> {
    let point = scale_point(problem, primal, s)?;
    let max_violation = system_violation(problem, &point)?;
    Ok(ScalingSample {
        s,
        max_violation,
        feasible: max_violation <= tol,
        point,
    })
}

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k <= 1 {
        return vec![hi];
    }
    (0..k)
        .map(|i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
        .collect()
}

/// Runs the star check for the problem's formulation at `primal`.
pub fn verify_star(problem: &NlpProblem, primal: &[f64], options: &StarOptions) -> Result<ScalingPath> {
    problem.check_primal(primal)?;
    let info = problem
        .formulation()
        .ok_or_else(|| Error::Unsupported("problem has no registered scaling map".into()))?;
    let mode = options.mode.unwrap_or(match info.kind {
        Formulation::Ac => StarMode::Lss,
        _ => StarMode::Gss,
    });
    let pc = common_pressure(problem);
    let mut path = ScalingPath {
        formulation: info.kind,
        mode,
        common_pressure: pc,
        samples: Vec::new(),
        max_violation: 0.0,
        epsilon_star: None,
        verified: false,
        hypothesis_unmet: None,
    };
    if info.kind == Formulation::Ogf && pc.is_none() {
        path.hypothesis_unmet = Some("no common squared pressure fits every nodal and pipe pressure box".into());
        return Ok(path);
    }
    let tol = options.feas_tol;
    match mode {
        StarMode::Gss => {
            for s in grid(0.0, 1.0, options.samples.max(2)) {
                path.samples.push(sample(problem, primal, s, tol)?);
            }
        }
        StarMode::Lss => {
            let k = options.lss_samples.max(2);
            let check = |eps: f64| -> Result<Vec<ScalingSample>> {
                grid(1.0 - eps, 1.0, k)
                    .into_iter()
                    .map(|s| sample(problem, primal, s, tol))
                    .collect()
            };
            let all_ok = |v: &[ScalingSample]| v.iter().all(|x| x.feasible);
            let full = check(1.0)?;
            let (eps, samples) = if all_ok(&full) {
                (1.0, full)
            } else {
                let base = check(0.0)?;
                if !all_ok(&base) {
                    (0.0, base)
                } else {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    let mut best = base;
                    while hi - lo > options.bisection_tol {
                        let mid = 0.5 * (lo + hi);
                        let trial = check(mid)?;
                        if all_ok(&trial) {
                            lo = mid;
                            best = trial;
                        } else {
                            hi = mid;
                        }
                    }
                    (lo, best)
                }
            };
            path.epsilon_star = Some(eps);
            path.samples = samples;
            path.samples.dedup_by(|a, b| a.s == b.s);
            if eps == 0.0 {
                let probe = scale_point(problem, primal, 1.0 - options.bisection_tol)?;
                let rows = violated_rows(problem, &probe, tol);
                path.hypothesis_unmet = Some(if rows.is_empty() {
                    "no feasible neighbourhood below s = 1 along the scaling path".into()
                } else {
                    format!("scaling path leaves the feasible set at once via {}", rows.join(", "))
                });
            }
        }
    }
    path.max_violation = path.samples.iter().map(|x| x.max_violation).fold(0.0, f64::max);
    path.verified = !path.samples.is_empty()
        && path.samples.iter().all(|x| x.feasible)
        && path.epsilon_star.is_none_or(|e| e > 0.0);
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FormulationInfo, NlpBuilder, Row, UnitScale, VariableLayout};

    fn info(kind: Formulation, pc: Option<f64>) -> FormulationInfo {
        FormulationInfo {
            kind,
            common_pressure: pc,
            units: UnitScale::default(),
        }
    }

    /// One pipe with a compressor: y = [π_i, π_j, π_in, π_out, φ, α].
    fn pipe(pc: f64) -> NlpProblem {
        let mut b = NlpBuilder::new(VariableLayout::new(0, 2, 6));
        b.exposed(0, "x0", 0.0).exposed(1, "x1", 0.0);
        b.dependent(0, "pi_i", VarRole::NodePressure, 1.0)
            .dependent(1, "pi_j", VarRole::NodePressure, 1.0)
            .dependent(2, "pi_in", VarRole::PipePressure, 1.0)
            .dependent(3, "pi_out", VarRole::PipePressure, 1.0)
            .dependent(4, "phi", VarRole::Flow, 0.0)
            .dependent(5, "alpha", VarRole::Ratio { node: 2, pipe: 4 }, 1.0);
        b.equality("w", Row::new().linear(4, 1.0).linear(5, -1.0).signed_square(6, -1.0));
        b.formulation(info(Formulation::Ogf, Some(pc)));
        b.build().unwrap()
    }

    #[test]
    fn gas_pressure_and_ratio_arithmetic() {
        let p = pipe(4.0);
        let z = [0.0, 0.0, 16.0, 4.0, 25.0, 4.0, 0.0, 25.0 / 16.0];
        let out = ogf_scale_point(&p, &z, 0.5, 4.0).unwrap();
        assert_eq!(out[2], 7.0);
        assert!((out[7] - 9.25 / 7.0).abs() < 1e-15);
        assert!(out[7] > 1.0 && out[7] < 1.5625);
    }

    #[test]
    fn weymouth_is_preserved_by_the_gas_map() {
        let p = pipe(4.0);
        let z = [0.0, 0.0, 8.0, 4.0, 8.0, 4.0, 2.0, 1.0];
        assert_eq!(system_violation(&p, &z).unwrap(), 0.0);
        let out = ogf_scale_point(&p, &z, 0.5, 4.0).unwrap();
        assert_eq!(out[4] - out[5], 1.0);
        assert_eq!(out[6], 1.0);
        assert_eq!(system_violation(&p, &out).unwrap(), 0.0);
    }

    #[test]
    fn scale_factor_outside_unit_interval_is_rejected() {
        let p = pipe(4.0);
        assert!(ogf_scale_point(&p, &[0.0; 8], 1.5, 4.0).is_err());
    }

    #[test]
    fn velocity_matches_finite_difference_of_the_map() {
        let p = pipe(4.0);
        let z = [0.3, -0.3, 16.0, 5.0, 25.0, 4.0, 2.0, 25.0 / 16.0];
        let w = scaling_velocity(&p, &z).unwrap();
        let h = 1e-6;
        let zm = ogf_scale_point(&p, &z, 1.0 - h, 4.0).unwrap();
        for j in 0..z.len() {
            let fd = (z[j] - zm[j]) / h;
            assert!((fd - w[j]).abs() < 1e-4 * (1.0 + w[j].abs()), "{j}: {fd} vs {}", w[j]);
        }
    }

    #[test]
    fn grid_includes_both_endpoints() {
        let g = grid(0.0, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (0.0, 1.0));
    }
}
