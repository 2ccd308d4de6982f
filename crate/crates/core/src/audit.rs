//! Certificates on a solved primal-dual point: KKT residuals, an MFCQ
//! certificate, the operator's net revenue and an aggregate verdict.
//!
//! Everything is recomputed from the problem definition; nothing is taken
//! from solver internals.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use crate::model::{inf_norm, FamilyKind, NlpProblem, PrimalDualPoint, Smoothing};
use crate::star::{scaling_velocity, verify_star, ScalingPath, StarOptions};

pub const DEFAULT_KKT_TOL: f64 = 1e-6;
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-6;
/// Relative singular value threshold for the equality rank test.
pub const RANK_TOL: f64 = 1e-8;
/// Smallest strict descent margin accepted as an MFCQ direction.
pub const DIRECTION_TOL: f64 = 1e-8;
/// Agreement required between the two revenue formulas.
pub const REVENUE_FORMULA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// `‖∇_q L‖∞`, `‖∇_x L‖∞`, `‖∇_y L‖∞`
    pub stationarity_q: f64,
    pub stationarity_x: f64,
    pub stationarity_y: f64,
    pub primal_feasibility: f64,
    pub complementarity: f64,
    /// `max(0, −min(μ̲, μ̄, ν_i))`
    pub dual_sign_violation: f64,
    pub tol: f64,
    pub pass: bool,
}

impl KktReport {
    pub fn stationarity(&self) -> f64 {
        self.stationarity_q.max(self.stationarity_x).max(self.stationarity_y)
    }

    /// Names of the measures above tolerance.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.stationarity() <= self.tol) {
            out.push("stationarity");
        }
        if !(self.primal_feasibility <= self.tol) {
            out.push("primal feasibility");
        }
        if !(self.complementarity <= self.tol) {
            out.push("complementarity");
        }
        if !(self.dual_sign_violation <= self.tol) {
            out.push("dual sign");
        }
        out
    }
}

pub fn kkt_residuals(problem: &NlpProblem, point: &PrimalDualPoint, tol: f64) -> Result<KktReport> {
    let grad = problem.lagrangian_gradient(point)?;
    let values = problem.evaluate(&point.primal)?;
    let pairs = |duals: &[f64], rows: &[f64]| duals.iter().zip(rows).map(|(m, g)| (m * g).abs()).fold(0.0, f64::max);
    let complementarity = pairs(&point.mu_lower, &values.nomination_lower)
        .max(pairs(&point.mu_upper, &values.nomination_upper))
        .max(pairs(&point.nu_i, &values.system_inequality));
    let most_negative = point
        .mu_lower
        .iter()
        .chain(&point.mu_upper)
        .chain(&point.nu_i)
        .fold(0.0, |m: f64, v| m.min(*v));
    let [sq, sx, sy] = grad.norms();
    let mut report = KktReport {
        stationarity_q: sq,
        stationarity_x: sx,
        stationarity_y: sy,
        primal_feasibility: values.max_violation(),
        complementarity,
        dual_sign_violation: -most_negative,
        tol,
        pass: false,
    };
    report.pass = report.failures().is_empty();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfcqCertificate {
    /// Rows of `H` and the numerical rank of `∇_{(x,y)} H`.
    pub equality_rows: usize,
    pub equality_rank: usize,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    pub rank_ok: bool,
    /// Labels of the active rows of `G`.
    pub active: Vec<String>,
    /// Optimal margin of the direction LP.
    pub t_star: Option<f64>,
    /// Direction over the `(x, y)` block.
    pub direction: Vec<f64>,
    pub holds: bool,
    pub inconclusive: Option<String>,
}

/// Dense `∇_{(x,y)}` Jacobian of a system family at `z`.
fn system_jacobian(problem: &NlpProblem, kind: FamilyKind, z: &[f64]) -> Result<DMatrix<f64>> {
    let sys = problem.layout().system();
    let jac = problem.jacobian(kind, z, Smoothing::Exact)?;
    let mut out = DMatrix::zeros(jac.nrows, sys.len());
    for &(i, j, v) in &jac.entries {
        if sys.contains(&j) {
            out[(i, j - sys.start)] += v;
        }
    }
    Ok(out)
}

/// Singular values of the system-equality Jacobian (conservation rows are
/// excluded: they are always independent through their `x` columns).
pub fn equality_singular_values(problem: &NlpProblem, z: &[f64]) -> Result<Vec<f64>> {
    let h = system_jacobian(problem, FamilyKind::SystemEquality, z)?;
    if h.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
    // a wide matrix has min(m, n) values; missing ones are structural zeros
    sv.resize(h.nrows(), 0.0);
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn mfcq_certificate(problem: &NlpProblem, point: &PrimalDualPoint, active_tol: f64) -> Result<MfcqCertificate> {
    problem.check_point(point)?;
    let z = &point.primal;
    let sv = equality_singular_values(problem, z)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax).count();
    let rank_ok = sv.is_empty() || (smax > 0.0 && smin >= RANK_TOL * smax);

    let gfam = problem.family(FamilyKind::SystemInequality);
    let g = gfam.values(z, Smoothing::Exact);
    let active_rows: Vec<usize> = (0..g.len()).filter(|&i| g[i] >= -active_tol).collect();
    let mut cert = MfcqCertificate {
        equality_rows: sv.len(),
        equality_rank: rank,
        min_singular_value: smin,
        max_singular_value: smax,
        rank_ok,
        active: active_rows.iter().map(|&i| gfam.labels[i].clone()).collect(),
        t_star: None,
        direction: Vec::new(),
        holds: false,
        inconclusive: None,
    };
    let violation = problem.evaluate(z)?.system_violation();
    if violation > active_tol {
        cert.inconclusive = Some(format!("point violates the system rows by {violation:e}"));
        return Ok(cert);
    }

    // max t  s.t.  ∇g_i δ + t ≤ 0 (active i), ∇h δ = 0, |δ| ≤ 1, 0 ≤ t ≤ 1
    let h = system_jacobian(problem, FamilyKind::SystemEquality, z)?;
    let gj = system_jacobian(problem, FamilyKind::SystemInequality, z)?;
    let n = h.ncols();
    let mut lp = LinearProgram::new(n + 1);
    lp.objective[n] = -1.0;
    for j in 0..n {
        lp.lower[j] = -1.0;
        lp.upper[j] = 1.0;
    }
    lp.lower[n] = 0.0;
    lp.upper[n] = 1.0;
    let dense_row = |m: &DMatrix<f64>, i: usize| -> Vec<(usize, f64)> {
        (0..n).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect()
    };
    for i in 0..h.nrows() {
        lp.row(dense_row(&h, i), Sense::Eq, 0.0);
    }
    for &i in &active_rows {
        let mut coefs = dense_row(&gj, i);
        coefs.push((n, 1.0));
        lp.row(coefs, Sense::Le, 0.0);
    }
    match solve_lp(&lp) {
        Ok(sol) if sol.status == LpStatus::Optimal => {
            let t = sol.x[n];
            cert.t_star = Some(t);
            cert.direction = sol.x[..n].to_vec();
            cert.holds = rank_ok && t > DIRECTION_TOL;
        }
        Ok(sol) => cert.inconclusive = Some(format!("direction LP ended {:?}", sol.status)),
        Err(e) => cert.inconclusive = Some(format!("direction LP failed: {e}")),
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevenueReport {
    /// `R = −λᵀx`
    pub revenue: f64,
    /// `λᵀ(d − Aq)`
    pub revenue_from_nominations: f64,
    pub conservation_residual: f64,
    pub formulas_agree: bool,
    pub prices: Vec<f64>,
    pub net_inflow: Vec<f64>,
    pub tol: f64,
    pub adequate: bool,
    pub decomposition: Option<RentDecomposition>,
}

/// Revenue split along the scaling velocity `w`:
/// `R = Σ_k ν_k ∇g_k·w + ∇_y c·w_y + ν_eᵀ∇H w − ∇L·w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RentDecomposition {
    /// `ν_k ∇g_k·w` per inequality row, by label.
    pub rows: BTreeMap<String, f64>,
    /// Row rents summed per family (label prefix before `[`).
    pub families: BTreeMap<String, f64>,
    pub inequality_total: f64,
    pub objective_term: f64,
    /// `ν_eᵀ∇H w`, zero when the path keeps `H = 0`.
    pub equality_term: f64,
    /// `∇_{(x,y)} L · w`, zero at a stationary point.
    pub stationarity_term: f64,
    /// `R` minus the right-hand side above, roundoff only.
    pub identity_gap: f64,
}

fn family_of(label: &str) -> &str {
    label.split('[').next().unwrap_or(label)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn revenue(problem: &NlpProblem, point: &PrimalDualPoint) -> Result<RevenueReport> {
    problem.check_point(point)?;
    let l = problem.layout();
    let x = point.x(l);
    let q = point.q(l);
    let lambda = &point.lambda;
    let r = -lambda.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let mut inflow: Vec<f64> = problem.fixed_outflow().iter().map(|d| -d).collect();
    for (k, &node) in problem.supply_node().iter().enumerate() {
        inflow[node] += q[k];
    }
    let alt = -lambda.iter().zip(&inflow).map(|(a, b)| a * b).sum::<f64>();
    let conservation_residual = x.iter().zip(&inflow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let lam1: f64 = lambda.iter().map(|v| v.abs()).sum();
    let tol = 1e-6 * (1.0 + norm2(lambda) * norm2(x));
    let decomposition = match problem.formulation() {
        Some(_) => Some(decompose(problem, point, r)?),
        None => None,
    };
    Ok(RevenueReport {
        revenue: r,
        revenue_from_nominations: alt,
        conservation_residual,
        formulas_agree: (r - alt).abs() <= REVENUE_FORMULA_TOL * (1.0 + lam1 * inf_norm(x)),
        prices: lambda.clone(),
        net_inflow: x.to_vec(),
        tol,
        adequate: r >= -tol,
        decomposition,
    })
}

fn decompose(problem: &NlpProblem, point: &PrimalDualPoint, r: f64) -> Result<RentDecomposition> {
    let z = &point.primal;
    let w = scaling_velocity(problem, z)?;
    let gj = problem.jacobian(FamilyKind::SystemInequality, z, Smoothing::Exact)?;
    let hj = problem.jacobian(FamilyKind::SystemEquality, z, Smoothing::Exact)?;
    let gw = gj.mul_vec(&w);
    let hw = hj.mul_vec(&w);
    let labels = &problem.family(FamilyKind::SystemInequality).labels;
    let mut rows = BTreeMap::new();
    let mut families = BTreeMap::new();
    for (k, label) in labels.iter().enumerate() {
        let rent = point.nu_i[k] * gw[k];
        rows.insert(label.clone(), rent);
        *families.entry(family_of(label).to_string()).or_insert(0.0) += rent;
    }
    let inequality_total: f64 = labels.iter().enumerate().map(|(k, _)| point.nu_i[k] * gw[k]).sum();
    let sys = problem.layout().system();
    let cg = problem.objective_gradient(z, Smoothing::Exact);
    let objective_term: f64 = problem.layout().dependent().map(|j| cg[j] * w[j]).sum();
    let equality_term: f64 = point.nu_e.iter().zip(&hw).map(|(a, b)| a * b).sum();
    let lg = problem.lagrangian_gradient_full(point, Smoothing::Exact)?;
    let stationarity_term: f64 = sys.map(|j| lg[j] * w[j]).sum();
    let identity_gap = r - (inequality_total + objective_term + equality_term - stationarity_term);
    Ok(RentDecomposition {
        rows,
        families,
        inequality_total,
        objective_term,
        equality_term,
        stationarity_term,
        identity_gap,
    })
}

/// Sign of the inequality-rent total `ν_iᵀ∇G w`: complementarity and
/// `G(z(s)) ≤ 0` for `s < 1` make it nonnegative at a KKT point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RentSign {
    pub inequality_rent: f64,
    pub tol: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    pub kkt_tol: f64,
    pub active_tol: f64,
    pub chain_tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            kkt_tol: DEFAULT_KKT_TOL,
            active_tol: DEFAULT_ACTIVE_TOL,
            chain_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "reasons", rename_all = "snake_case")]
pub enum Verdict {
    /// Hypotheses hold and `R ≥ −tol_rev`.
    Consistent,
    /// A precondition (MFCQ or the star property) is not met.
    HypothesisNotSatisfied(Vec<String>),
    /// KKT failure, or a negative revenue despite every hypothesis.
    Failed(Vec<String>),
    Inconclusive(Vec<String>),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Consistent => "revenue adequacy certified",
            Verdict::HypothesisNotSatisfied(_) => "hypothesis not satisfied; adequacy not certified",
            Verdict::Failed(_) => "failed",
            Verdict::Inconclusive(_) => "inconclusive",
        }
    }

    pub fn reasons(&self) -> &[String] {
        match self {
            Verdict::Consistent => &[],
            Verdict::HypothesisNotSatisfied(r) | Verdict::Failed(r) | Verdict::Inconclusive(r) => r,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())?;
        if !self.reasons().is_empty() {
            write!(f, " ({})", self.reasons().join("; "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub kkt: KktReport,
    pub mfcq: MfcqCertificate,
    pub revenue: RevenueReport,
    pub star: Option<ScalingPath>,
    pub rent_sign: Option<RentSign>,
    pub verdict: Verdict,
}

pub fn adequacy_audit(
    problem: &NlpProblem,
    point: &PrimalDualPoint,
    options: &AuditOptions,
    star_options: &StarOptions,
) -> Result<AuditReport> {
    let kkt = kkt_residuals(problem, point, options.kkt_tol)?;
    let mfcq = mfcq_certificate(problem, point, options.active_tol)?;
    let revenue = revenue(problem, point)?;
    let star = match problem.formulation() {
        Some(_) => Some(verify_star(problem, &point.primal, star_options)?),
        None => None,
    };
    let rent_sign = revenue.decomposition.as_ref().map(|d| RentSign {
        inequality_rent: d.inequality_total,
        tol: options.chain_tol,
        holds: d.inequality_total >= -options.chain_tol,
    });
    let verdict = verdict(&kkt, &mfcq, &revenue, star.as_ref());
    Ok(AuditReport {
        kkt,
        mfcq,
        revenue,
        star,
        rent_sign,
        verdict,
    })
}

fn verdict(kkt: &KktReport, mfcq: &MfcqCertificate, revenue: &RevenueReport, star: Option<&ScalingPath>) -> Verdict {
    if let Some(why) = &mfcq.inconclusive {
        return Verdict::Inconclusive(vec![format!("mfcq: {why}")]);
    }
    if !kkt.pass {
        return Verdict::Failed(kkt.failures().iter().map(|s| s.to_string()).collect());
    }
    let mut unmet = Vec::new();
    if !mfcq.rank_ok {
        unmet.push("mfcq: dependent equality gradients".to_string());
    } else if !mfcq.holds {
        unmet.push("mfcq: no strictly feasible direction for the active rows".to_string());
    }
    match star {
        None => unmet.push("star: no scaling map registered".into()),
        Some(p) => {
            if let Some(why) = &p.hypothesis_unmet {
                unmet.push(format!("star: {why}"));
            } else if !p.verified {
                unmet.push(format!("star: scaling path infeasible (max violation {:e})", p.max_violation));
            }
        }
    }
    if !unmet.is_empty() {
        return Verdict::HypothesisNotSatisfied(unmet);
    }
    if !revenue.adequate {
        return Verdict::Failed(vec!["revenue".into()]);
    }
    Verdict::Consistent
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NlpBuilder, Row, VarRole, VariableLayout};

    /// `min q` over `q ∈ [1, 2]` delivered to a single node with no network.
    fn one_var() -> NlpProblem {
        let mut b = NlpBuilder::new(VariableLayout::new(1, 1, 0));
        b.traded(0, "q", 0, 1.0, 2.0).exposed(0, "x", 0.0);
        b.objective(Row::new().linear(0, 1.0));
        b.build().unwrap()
    }

    fn one_var_optimum(p: &NlpProblem) -> PrimalDualPoint {
        let mut pt = PrimalDualPoint::with_primal(p, vec![1.0, 1.0]);
        pt.mu_lower[0] = 1.0;
        pt
    }

    #[test]
    fn worked_kkt_point_passes() {
        let p = one_var();
        let k = kkt_residuals(&p, &one_var_optimum(&p), 1e-6).unwrap();
        assert_eq!(k.stationarity(), 0.0);
        assert_eq!((k.primal_feasibility, k.complementarity, k.dual_sign_violation), (0.0, 0.0, 0.0));
        assert!(k.pass);
    }

    #[test]
    fn perturbed_price_fails_stationarity() {
        let p = one_var();
        let mut pt = one_var_optimum(&p);
        pt.lambda[0] += 0.1;
        let k = kkt_residuals(&p, &pt, 1e-6).unwrap();
        assert!((k.stationarity() - 0.1).abs() < 1e-15);
        assert_eq!(k.failures(), vec!["stationarity"]);
    }

    #[test]
    fn negative_multiplier_is_a_sign_violation() {
        let p = one_var();
        let mut pt = one_var_optimum(&p);
        pt.mu_upper[0] = -0.5;
        pt.mu_lower[0] = 0.5;
        let k = kkt_residuals(&p, &pt, 1e-6).unwrap();
        assert_eq!(k.dual_sign_violation, 0.5);
        assert!(k.failures().contains(&"dual sign"));
    }

    /// `x ≥ 0`-style rows on a single dependent variable.
    fn box_problem(lo: f64, hi: f64) -> NlpProblem {
        let mut b = NlpBuilder::new(VariableLayout::new(0, 1, 1));
        b.exposed(0, "x", 0.0).dependent(0, "y", VarRole::Other, 0.0);
        b.equality("link", Row::new().linear(0, 1.0).linear(1, -1.0));
        b.inequality("hi", Row::new().linear(1, 1.0).constant(-hi));
        b.inequality("lo", Row::new().linear(1, -1.0).constant(lo));
        b.build().unwrap()
    }

    #[test]
    fn interior_point_has_unit_margin() {
        let p = box_problem(-1.0, 1.0);
        let c = mfcq_certificate(&p, &PrimalDualPoint::with_primal(&p, vec![0.0, 0.0]), 1e-6).unwrap();
        assert!(c.active.is_empty());
        assert_eq!(c.t_star, Some(1.0));
        assert!(c.holds);
        assert_eq!(c.equality_rank, 1);
    }

    #[test]
    fn opposing_active_rows_fail() {
        let p = box_problem(0.0, 0.0);
        let c = mfcq_certificate(&p, &PrimalDualPoint::with_primal(&p, vec![0.0, 0.0]), 1e-6).unwrap();
        assert_eq!(c.active.len(), 2);
        assert!(c.t_star.unwrap().abs() < 1e-12);
        assert!(!c.holds);
        assert!(c.inconclusive.is_none());
    }

    #[test]
    fn duplicated_equality_is_rank_deficient() {
        let mut b = NlpBuilder::new(VariableLayout::new(0, 1, 1));
        b.exposed(0, "x", 0.0).dependent(0, "y", VarRole::Other, 0.0);
        b.equality("a", Row::new().linear(0, 1.0).linear(1, -1.0));
        b.equality("b", Row::new().linear(0, 2.0).linear(1, -2.0));
        let p = b.build().unwrap();
        let c = mfcq_certificate(&p, &PrimalDualPoint::with_primal(&p, vec![0.0, 0.0]), 1e-6).unwrap();
        assert_eq!(c.equality_rank, 1);
        assert!(!c.rank_ok && !c.holds);
    }

    fn two_nodes() -> NlpProblem {
        let mut b = NlpBuilder::new(VariableLayout::new(0, 2, 0));
        b.exposed(0, "x0", 0.0).exposed(1, "x1", 0.0);
        b.build().unwrap()
    }

    #[test]
    fn revenue_arithmetic() {
        let p = two_nodes();
        let mut pt = PrimalDualPoint::with_primal(&p, vec![3.0, -4.0]);
        pt.lambda = vec![1.0, 2.0];
        let r = revenue(&p, &pt).unwrap();
        assert_eq!(r.revenue, 5.0);
        assert!(r.adequate);
        assert!(r.decomposition.is_none());
    }

    #[test]
    fn uniform_price_balanced_market_has_zero_revenue() {
        let p = two_nodes();
        let mut pt = PrimalDualPoint::with_primal(&p, vec![2.5, -2.5]);
        pt.lambda = vec![7.0, 7.0];
        assert_eq!(revenue(&p, &pt).unwrap().revenue, 0.0);
    }

    #[test]
    fn verdict_order() {
        let p = one_var();
        let pt = one_var_optimum(&p);
        let a = adequacy_audit(&p, &pt, &AuditOptions::default(), &StarOptions::default()).unwrap();
        assert!(matches!(a.verdict, Verdict::HypothesisNotSatisfied(_)));
        let mut bad = pt.clone();
        bad.lambda[0] = 3.0;
        let a = adequacy_audit(&p, &bad, &AuditOptions::default(), &StarOptions::default()).unwrap();
        assert_eq!(a.verdict, Verdict::Failed(vec!["stationarity".into()]));
        assert_eq!(a.verdict.label(), "failed");
    }
}
