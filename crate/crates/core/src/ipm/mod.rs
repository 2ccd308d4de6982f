//! Primal-dual interior point solver returning primal and dual variables.
//!
//! System inequalities are slacked (`g + s = 0`, `s > 0`), nomination bounds
//! are handled by a log barrier directly on `q`, and a fixed nomination
//! (`q_lo = q_hi`) becomes an equality row whose free multiplier is split
//! into `μ_hi − μ_lo` on output. Each iteration solves the symmetric
//! reduced KKT system
//!
//! ```text
//! [ W + Σ + δw I   J_Eᵀ     J_Iᵀ      ] [dz ]     [ ∇f + J_Eᵀy + J_Iᵀν − μ/(z−l) + μ/(u−z) ]
//! [ J_E            −δc I    0         ] [dy ] = − [ c_E                                    ]
//! [ J_I            0        −S/V − δc ] [dν ]     [ c_I + μ/ν                              ]
//! ```
//!
//! with a Bunch–Kaufman factorization whose inertia drives the
//! regularization `δw`.

mod slack;

pub use slack::{to_slack_form, SlackForm, SlackPoint, SLACK_FLOOR};

use log::{debug, info};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Ldlt;
use crate::model::{inf_norm, FamilyKind, NlpProblem, PrimalDualPoint, Row, Smoothing, SparseMatrix, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericFailure => "numeric_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    Flat,
    Warm(PrimalDualPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub initial_barrier: f64,
    pub barrier_reduction: f64,
    pub fraction_to_boundary: f64,
    pub regularization_floor: f64,
    pub initialization: Initialization,
    /// Treatment of `v|v|` terms inside the solver.
    pub smoothing: Smoothing,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            max_iter: 200,
            initial_barrier: 0.1,
            barrier_reduction: 0.2,
            fraction_to_boundary: 0.995,
            regularization_floor: 1e-10,
            initialization: Initialization::Flat,
            smoothing: Smoothing::solver_default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_kkt", self.tol_kkt),
            ("initial_barrier", self.initial_barrier),
            ("barrier_reduction", self.barrier_reduction),
            ("fraction_to_boundary", self.fraction_to_boundary),
            ("regularization_floor", self.regularization_floor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Unsupported(format!("solver option {name} must be positive, got {v}")));
            }
        }
        if self.barrier_reduction >= 1.0 {
            return Err(Error::Unsupported("barrier_reduction must be below 1".into()));
        }
        if self.fraction_to_boundary >= 1.0 {
            return Err(Error::Unsupported("fraction_to_boundary must be below 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Unsupported("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub barrier: f64,
    pub step: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub point: PrimalDualPoint,
    /// Slacks of the system inequalities at the returned point.
    pub slacks: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual_history: Vec<IterationRecord>,
}

impl SolveOutcome {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.kkt_residual_history.last()
    }
}

const BOUND_PUSH: f64 = 1e-2;
const ARMIJO: f64 = 1e-4;
const DUAL_SAFEGUARD: f64 = 1e10;
const PIVOT_TOL: f64 = 1e-13;
const MAX_REGULARIZATION: f64 = 1e20;
const DUAL_REGULARIZATION: f64 = 1e-9;
const MIN_STEP: f64 = 1e-12;
const SMALL_STEP: f64 = 1e-8;
const STALL_LIMIT: usize = 10;
const KINK_MARGIN: f64 = 1e-4;
/// Exact Newton steps taken by the polish phase even when already converged.
const POLISH_STEPS: usize = 2;

/// Equality rows seen by the solver: conservation, system equalities, fixed
/// nominations (in that order).
struct Structure<'a> {
    problem: &'a NlpProblem,
    sm: Smoothing,
    n: usize,
    eq_rows: Vec<Row>,
    n_cons: usize,
    n_h: usize,
    fixed: Vec<usize>,
    ineq: &'a [Row],
    bounded: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone)]
struct State {
    z: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    nu: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    ce: Vec<f64>,
    je: SparseMatrix,
    ci: Vec<f64>,
    ji: SparseMatrix,
}

#[derive(Debug, Clone, Copy)]
struct Errors {
    stationarity: f64,
    feasibility: f64,
    complementarity: f64,
}

impl Errors {
    fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

struct Direction {
    dz: Vec<f64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dnu: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

/// Largest `α ∈ (0, 1]` keeping `v + α dv ≥ (1 − τ) v` for every component.
fn max_step(v: &[f64], dv: &[f64], tau: f64) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -tau * x / d)
        .fold(1.0, f64::min)
}

impl<'a> Structure<'a> {
    fn new(problem: &'a NlpProblem, sm: Smoothing) -> Self {
        let l = problem.layout();
        let mut eq_rows = problem.family(FamilyKind::Conservation).rows.clone();
        let h = &problem.family(FamilyKind::SystemEquality).rows;
        eq_rows.extend(h.iter().cloned());
        let (mut fixed, mut bounded, mut lower, mut upper) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for k in 0..l.n_traded {
            let (lo, hi) = (problem.nomination_lower()[k], problem.nomination_upper()[k]);
            if problem.is_fixed_nomination(k) {
                eq_rows.push(Row::new().linear(l.q(k), 1.0).constant(-lo));
                fixed.push(k);
            } else {
                bounded.push(l.q(k));
                lower.push(lo);
                upper.push(hi);
            }
        }
        Self {
            problem,
            sm,
            n: problem.n(),
            eq_rows,
            n_cons: l.n_exposed,
            n_h: h.len(),
            fixed,
            ineq: &problem.family(FamilyKind::SystemInequality).rows,
            bounded,
            lower,
            upper,
        }
    }

    fn me(&self) -> usize {
        self.eq_rows.len()
    }

    fn mi(&self) -> usize {
        self.ineq.len()
    }

    fn gaps(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gl = self.bounded.iter().zip(&self.lower).map(|(&j, lo)| z[j] - lo).collect();
        let gu = self.bounded.iter().zip(&self.upper).map(|(&j, hi)| hi - z[j]).collect();
        (gl, gu)
    }

    fn values(&self, z: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let f = self.problem.objective().value(z, self.sm);
        let ce: Vec<f64> = self.eq_rows.iter().map(|r| r.value(z, self.sm)).collect();
        let ci: Vec<f64> = self.ineq.iter().map(|r| r.value(z, self.sm)).collect();
        let finite = f.is_finite() && ce.iter().chain(&ci).all(|v| v.is_finite());
        finite.then_some((f, ce, ci))
    }

    fn evaluate(&self, z: &[f64]) -> Result<Eval> {
        let (f, ce, ci) = self
            .values(z)
            .ok_or_else(|| Error::NonFinite("objective or constraint value at iterate".into()))?;
        let grad = self.problem.objective_gradient(z, self.sm);
        let jac = |rows: &[Row]| {
            let mut m = SparseMatrix::new(rows.len(), self.n);
            for (i, r) in rows.iter().enumerate() {
                m.entries.extend(r.gradient(z, self.sm).into_iter().map(|(j, v)| (i, j, v)));
            }
            m
        };
        let je = jac(&self.eq_rows);
        let ji = jac(self.ineq);
        let finite = grad.iter().all(|v| v.is_finite())
            && je.entries.iter().chain(&ji.entries).all(|e| e.2.is_finite());
        if !finite {
            return Err(Error::NonFinite("derivative at iterate".into()));
        }
        Ok(Eval { f, grad, ce, je, ci, ji })
    }

    /// Dual residual `∇f + J_Eᵀy + J_Iᵀν − z_L + z_U`.
    fn dual_residual(&self, st: &State, ev: &Eval) -> Vec<f64> {
        let mut rd = ev.grad.clone();
        for (r, v) in rd.iter_mut().zip(ev.je.tr_mul_vec(&st.y)) {
            *r += v;
        }
        for (r, v) in rd.iter_mut().zip(ev.ji.tr_mul_vec(&st.nu)) {
            *r += v;
        }
        for (b, &j) in self.bounded.iter().enumerate() {
            rd[j] += st.zu[b] - st.zl[b];
        }
        rd
    }

    fn errors(&self, st: &State, ev: &Eval, mu: f64) -> Errors {
        let rd = self.dual_residual(st, ev);
        let feas_i = ev.ci.iter().zip(&st.s).fold(0.0f64, |m, (c, s)| m.max((c + s).abs()));
        let (gl, gu) = self.gaps(&st.z);
        let comp = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x * y - mu).abs()));
        Errors {
            stationarity: inf_norm(&rd),
            feasibility: inf_norm(&ev.ce).max(feas_i),
            complementarity: comp(&st.s, &st.nu).max(comp(&gl, &st.zl)).max(comp(&gu, &st.zu)),
        }
    }

    fn merit(&self, z: &[f64], s: &[f64], f: f64, ce: &[f64], ci: &[f64], mu: f64, rho: f64) -> f64 {
        let (gl, gu) = self.gaps(z);
        let barrier: f64 = s.iter().chain(&gl).chain(&gu).map(|v| v.ln()).sum();
        let infeas = l1(ce) + ci.iter().zip(s).map(|(c, s)| (c + s).abs()).sum::<f64>();
        f - mu * barrier + rho * infeas
    }

    fn hessian(&self, st: &State) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        let h_duals = &st.y[self.n_cons..self.n_cons + self.n_h];
        self.problem.add_lagrangian_hessian(&st.z, self.sm, 1.0, h_duals, &st.nu, &mut w);
        w
    }

    /// Newton direction plus the primal regularization that was needed.
    fn direction(&self, st: &State, ev: &Eval, mu: f64, floor: f64) -> Result<(Direction, f64)> {
        let (n, me, mi) = (self.n, self.me(), self.mi());
        let dim = n + me + mi;
        let (gl, gu) = self.gaps(&st.z);
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&self.hessian(st));
        for (b, &j) in self.bounded.iter().enumerate() {
            k[(j, j)] += st.zl[b] / gl[b] + st.zu[b] / gu[b];
        }
        for &(i, j, v) in &ev.je.entries {
            k[(n + i, j)] += v;
            k[(j, n + i)] += v;
        }
        for &(i, j, v) in &ev.ji.entries {
            k[(n + me + i, j)] += v;
            k[(j, n + me + i)] += v;
        }
        for i in 0..mi {
            k[(n + me + i, n + me + i)] = -st.s[i] / st.nu[i];
        }

        let mut rhs = self.dual_residual(st, ev);
        for (b, &j) in self.bounded.iter().enumerate() {
            rhs[j] += st.zl[b] - mu / gl[b] - st.zu[b] + mu / gu[b];
        }
        rhs.extend_from_slice(&ev.ce);
        rhs.extend(ev.ci.iter().zip(&st.nu).map(|(c, v)| c + mu / v));
        for r in rhs.iter_mut() {
            *r = -*r;
        }

        let (mut dw, mut dc) = (0.0, 0.0);
        let (fact, mat) = loop {
            let mut m = k.clone();
            for i in 0..n {
                m[(i, i)] += dw;
            }
            for i in n..dim {
                m[(i, i)] -= dc;
            }
            let f = Ldlt::factor(&m, PIVOT_TOL);
            let inertia = f.inertia();
            if inertia.zero == 0 && inertia.positive == n && inertia.negative == me + mi {
                break (f, m);
            }
            if inertia.zero > 0 && dc == 0.0 {
                dc = DUAL_REGULARIZATION;
            }
            dw = if dw == 0.0 { floor } else { dw * 10.0 };
            if dw > MAX_REGULARIZATION {
                return Err(Error::NonFinite("KKT matrix could not be regularized".into()));
            }
        };
        let sol = fact.solve_refined(&mat, &rhs, 2);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("KKT solve".into()));
        }
        let dz = sol[..n].to_vec();
        let dy = sol[n..n + me].to_vec();
        let dnu = sol[n + me..].to_vec();
        let jdz = ev.ji.mul_vec(&dz);
        let ds = (0..mi).map(|i| -(ev.ci[i] + st.s[i]) - jdz[i]).collect();
        let dzl = (0..self.bounded.len())
            .map(|b| mu / gl[b] - st.zl[b] - st.zl[b] / gl[b] * dz[self.bounded[b]])
            .collect();
        let dzu = (0..self.bounded.len())
            .map(|b| mu / gu[b] - st.zu[b] + st.zu[b] / gu[b] * dz[self.bounded[b]])
            .collect();
        Ok((Direction { dz, ds, dy, dnu, dzl, dzu }, dw))
    }

    fn initial_state(&self, options: &SolverOptions) -> Result<State> {
        let (mut z, warm) = match &options.initialization {
            Initialization::Flat => (self.problem.flat_start(), None),
            Initialization::Warm(p) => {
                self.problem.check_point(p)?;
                (p.primal.clone(), Some(p))
            }
        };
        for (b, &j) in self.bounded.iter().enumerate() {
            let (lo, hi) = (self.lower[b], self.upper[b]);
            let push = (BOUND_PUSH * lo.abs().max(hi.abs()).max(1.0)).min(BOUND_PUSH * (hi - lo));
            z[j] = z[j].clamp(lo + push, hi - push);
        }
        for &k in &self.fixed {
            z[self.problem.layout().q(k)] = self.problem.nomination_lower()[k];
        }
        let ev = self.evaluate(&z)?;
        let s: Vec<f64> = ev.ci.iter().map(|g| (-g).max(SLACK_FLOOR)).collect();
        let nb = self.bounded.len();
        let mut st = State {
            z,
            s,
            y: vec![0.0; self.me()],
            nu: vec![1.0; self.mi()],
            zl: vec![1.0; nb],
            zu: vec![1.0; nb],
        };
        if let Some(p) = warm {
            let mu0 = options.initial_barrier;
            let (gl, gu) = self.gaps(&st.z);
            st.nu = (0..self.mi()).map(|i| p.nu_i[i].max(mu0 / st.s[i])).collect();
            st.zl = (0..nb).map(|b| p.mu_lower[self.bounded[b]].max(mu0 / gl[b])).collect();
            st.zu = (0..nb).map(|b| p.mu_upper[self.bounded[b]].max(mu0 / gu[b])).collect();
            st.y[..self.n_cons].copy_from_slice(&p.lambda);
            st.y[self.n_cons..self.n_cons + self.n_h].copy_from_slice(&p.nu_e);
            for (i, &k) in self.fixed.iter().enumerate() {
                st.y[self.n_cons + self.n_h + i] = p.mu_upper[k] - p.mu_lower[k];
            }
        } else {
            st.y = self.least_squares_multipliers(&st, &ev);
        }
        Ok(st)
    }

    /// Equality multipliers minimizing the dual residual, or zero when the
    /// estimate is implausibly large.
    fn least_squares_multipliers(&self, st: &State, ev: &Eval) -> Vec<f64> {
        let (n, me) = (self.n, self.me());
        if me == 0 {
            return Vec::new();
        }
        let mut k = DMatrix::zeros(n + me, n + me);
        for i in 0..n {
            k[(i, i)] = 1.0;
        }
        for &(i, j, v) in &ev.je.entries {
            k[(n + i, j)] += v;
            k[(j, n + i)] += v;
        }
        for i in n..n + me {
            k[(i, i)] = -1e-12;
        }
        let zero = State {
            y: vec![0.0; me],
            ..st.clone()
        };
        let mut rhs: Vec<f64> = self.dual_residual(&zero, ev).iter().map(|v| -v).collect();
        rhs.resize(n + me, 0.0);
        let sol = Ldlt::factor(&k, PIVOT_TOL).solve(&rhs);
        let y = sol[n..].to_vec();
        if y.iter().all(|v| v.is_finite()) && inf_norm(&y) <= 1e3 {
            y
        } else {
            vec![0.0; me]
        }
    }

    fn output(&self, st: &State) -> PrimalDualPoint {
        let l = self.problem.layout();
        let mut mu_lower = vec![0.0; l.n_traded];
        let mut mu_upper = vec![0.0; l.n_traded];
        for (b, &j) in self.bounded.iter().enumerate() {
            mu_lower[j] = st.zl[b];
            mu_upper[j] = st.zu[b];
        }
        for (i, &k) in self.fixed.iter().enumerate() {
            let m = st.y[self.n_cons + self.n_h + i];
            mu_upper[k] = m.max(0.0);
            mu_lower[k] = (-m).max(0.0);
        }
        PrimalDualPoint {
            primal: st.z.clone(),
            mu_lower,
            mu_upper,
            lambda: st.y[..self.n_cons].to_vec(),
            nu_e: st.y[self.n_cons..self.n_cons + self.n_h].to_vec(),
            nu_i: st.nu.clone(),
        }
    }
}

/// Clamps bound multipliers into `[μ/(κ g), κ μ / g]` so they cannot drift
/// arbitrarily far from the primal-dual central path.
fn safeguard(duals: &mut [f64], gaps: &[f64], mu: f64) {
    for (d, g) in duals.iter_mut().zip(gaps) {
        *d = d.max(mu / (DUAL_SAFEGUARD * g)).min(DUAL_SAFEGUARD * mu / g);
    }
}

struct Run {
    st: State,
    ev: Eval,
    mu: f64,
    status: SolveStatus,
    iterations: usize,
    history: Vec<IterationRecord>,
}

/// Runs the barrier iterations from `st` until convergence, failure or the
/// iteration limit. Iteration numbers start at `first_iter`.
fn iterate(
    s: &Structure,
    mut st: State,
    options: &SolverOptions,
    mut mu: f64,
    first_iter: usize,
    min_steps: usize,
) -> Result<Run> {
    let mut ev = s.evaluate(&st.z)?;
    let tol = options.tol_kkt;
    let mu_min = tol / 10.0;
    let mut rho = 1.0f64;
    let mut history = Vec::new();
    let mut small_steps = 0usize;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = first_iter;

    for iter in first_iter..=options.max_iter {
        let e0 = s.errors(&st, &ev, 0.0);
        let mut record = IterationRecord {
            iteration: iter,
            stationarity: e0.stationarity,
            feasibility: e0.feasibility,
            complementarity: e0.complementarity,
            barrier: mu,
            step: 0.0,
            regularization: 0.0,
        };
        iterations = iter;
        if !e0.max().is_finite() {
            history.push(record);
            status = SolveStatus::NumericFailure;
            break;
        }
        if e0.max() <= tol && iter >= first_iter + min_steps {
            history.push(record);
            status = SolveStatus::Optimal;
            break;
        }
        if iter == options.max_iter {
            history.push(record);
            break;
        }
        while mu > mu_min && s.errors(&st, &ev, mu).max() <= mu {
            mu = (options.barrier_reduction * mu).max(mu_min);
        }
        record.barrier = mu;

        let (dir, dw) = match s.direction(&st, &ev, mu, options.regularization_floor) {
            Ok(d) => d,
            Err(_) => {
                history.push(record);
                status = SolveStatus::NumericFailure;
                break;
            }
        };
        record.regularization = dw;

        let tau = options.fraction_to_boundary.max(1.0 - mu);
        let (gl, gu) = s.gaps(&st.z);
        let dgl: Vec<f64> = s.bounded.iter().map(|&j| dir.dz[j]).collect();
        let dgu: Vec<f64> = dgl.iter().map(|v| -v).collect();
        let alpha_p = max_step(&st.s, &dir.ds, tau)
            .min(max_step(&gl, &dgl, tau))
            .min(max_step(&gu, &dgu, tau));
        let alpha_d = max_step(&st.nu, &dir.dnu, tau)
            .min(max_step(&st.zl, &dir.dzl, tau))
            .min(max_step(&st.zu, &dir.dzu, tau));

        let dual_norm = inf_norm(&axpy(1.0, &dir.dy, &st.y)).max(inf_norm(&axpy(1.0, &dir.dnu, &st.nu)));
        rho = rho.max(dual_norm + 1.0);
        let phi0 = s.merit(&st.z, &st.s, ev.f, &ev.ce, &ev.ci, mu, rho);
        let infeas0 = l1(&ev.ce) + ev.ci.iter().zip(&st.s).map(|(c, v)| (c + v).abs()).sum::<f64>();
        let barrier_slope = -mu
            * (dir.ds.iter().zip(&st.s).map(|(d, v)| d / v).sum::<f64>()
                + dgl.iter().zip(&gl).map(|(d, g)| d / g).sum::<f64>()
                + dgu.iter().zip(&gu).map(|(d, g)| d / g).sum::<f64>());
        let slope = dot(&ev.grad, &dir.dz) + barrier_slope - rho * infeas0;

        let current_error = s.errors(&st, &ev, mu).max();
        let mut alpha = alpha_p;
        let mut accepted: Option<(State, Eval)> = None;
        let mut first = true;
        while alpha >= MIN_STEP {
            let z = axpy(alpha, &dir.dz, &st.z);
            let sl = axpy(alpha, &dir.ds, &st.s);
            if let Some((f, ce, ci)) = s.values(&z) {
                let phi = s.merit(&z, &sl, f, &ce, &ci, mu, rho);
                let trial = |z: Vec<f64>, sl: Vec<f64>| State {
                    z,
                    s: sl,
                    y: axpy(alpha, &dir.dy, &st.y),
                    nu: axpy(alpha_d, &dir.dnu, &st.nu),
                    zl: axpy(alpha_d, &dir.dzl, &st.zl),
                    zu: axpy(alpha_d, &dir.dzu, &st.zu),
                };
                if phi <= phi0 + ARMIJO * alpha * slope.min(0.0) {
                    let t = trial(z, sl);
                    if let Ok(e) = s.evaluate(&t.z) {
                        accepted = Some((t, e));
                        break;
                    }
                } else if first {
                    // Merit increase on the full step may be a Maratos-type
                    // effect; accept when the barrier KKT error drops enough.
                    let t = trial(z, sl);
                    if let Ok(e) = s.evaluate(&t.z) {
                        if s.errors(&t, &e, mu).max() <= 0.9 * current_error {
                            accepted = Some((t, e));
                            break;
                        }
                    }
                }
            }
            first = false;
            alpha *= 0.5;
        }
        let (mut next, next_ev) = match accepted {
            Some(a) => a,
            None => {
                alpha = MIN_STEP;
                let t = State {
                    z: axpy(alpha, &dir.dz, &st.z),
                    s: axpy(alpha, &dir.ds, &st.s),
                    y: axpy(alpha, &dir.dy, &st.y),
                    nu: axpy(alpha_d, &dir.dnu, &st.nu),
                    zl: axpy(alpha_d, &dir.dzl, &st.zl),
                    zu: axpy(alpha_d, &dir.dzu, &st.zu),
                };
                match s.evaluate(&t.z) {
                    Ok(e) => (t, e),
                    Err(_) => {
                        history.push(record);
                        status = SolveStatus::NumericFailure;
                        break;
                    }
                }
            }
        };
        let s_copy = next.s.clone();
        safeguard(&mut next.nu, &s_copy, mu);
        let (ngl, ngu) = s.gaps(&next.z);
        safeguard(&mut next.zl, &ngl, mu);
        safeguard(&mut next.zu, &ngu, mu);

        record.step = alpha;
        debug!(
            "iter {:3} stat {:.3e} feas {:.3e} comp {:.3e} mu {:.1e} alpha {:.2e} reg {:.1e}",
            iter, record.stationarity, record.feasibility, record.complementarity, mu, alpha, dw
        );
        history.push(record);
        st = next;
        ev = next_ev;

        if alpha < SMALL_STEP {
            small_steps += 1;
        } else {
            small_steps = 0;
        }
        if small_steps >= STALL_LIMIT && e0.feasibility > tol.sqrt() {
            iterations = iter + 1;
            let e = s.errors(&st, &ev, 0.0);
            history.push(IterationRecord {
                iteration: iter + 1,
                stationarity: e.stationarity,
                feasibility: e.feasibility,
                complementarity: e.complementarity,
                barrier: mu,
                step: 0.0,
                regularization: 0.0,
            });
            status = SolveStatus::Infeasible;
            break;
        }
    }

    Ok(Run {
        st,
        ev,
        mu,
        status,
        iterations,
        history,
    })
}

/// True when every `v|v|` argument is far enough from zero for the exact form
/// to be twice differentiable around the iterate.
fn away_from_kinks(problem: &NlpProblem, z: &[f64]) -> bool {
    let mut any = false;
    for fam in problem.families() {
        for row in &fam.rows {
            for t in &row.terms {
                if let Term::SignedSquare { var, .. } = t {
                    any = true;
                    if z[*var].abs() < KINK_MARGIN {
                        return false;
                    }
                }
            }
        }
    }
    any
}

pub fn solve(problem: &NlpProblem, options: &SolverOptions) -> Result<SolveOutcome> {
    options.validate()?;
    let s = Structure::new(problem, options.smoothing);
    let st = s.initial_state(options)?;
    let mut run = iterate(&s, st, options, options.initial_barrier, 0, 0)?;

    // A smoothed solve ends with a few exact iterations so the returned point
    // satisfies the unsmoothed rows to solver precision.
    if run.status == SolveStatus::Optimal
        && options.smoothing != Smoothing::Exact
        && away_from_kinks(problem, &run.st.z)
    {
        let exact = Structure::new(problem, Smoothing::Exact);
        let polished = iterate(&exact, run.st.clone(), options, run.mu, run.iterations, POLISH_STEPS)?;
        if polished.status == SolveStatus::Optimal {
            run.history.pop();
            run.history.extend(polished.history);
            run.st = polished.st;
            run.ev = polished.ev;
            run.iterations = polished.iterations;
        }
    }

    let Run {
        st,
        ev,
        status,
        iterations,
        history,
        ..
    } = run;
    let point = s.output(&st);
    info!("ipm finished: {status} after {iterations} iterations, objective {:.10e}", ev.f);
    Ok(SolveOutcome {
        status,
        point,
        slacks: st.s.clone(),
        objective: ev.f,
        iterations,
        kkt_residual_history: history,
    })
}
