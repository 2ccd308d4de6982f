//! Block-structured market model.
//!
//! The primal vector is laid out as `[q | x | y]`: traded quantities `q`,
//! exposed system variables `x` (one per market participant) and dependent
//! system variables `y`. Constraints come in five families:
//!
//! ```text
//! q_lo − q ≤ 0          nomination lower bounds   (dual μ_lo ≥ 0)
//! q − q_hi ≤ 0          nomination upper bounds   (dual μ_hi ≥ 0)
//! x − A q + d = 0       conservation              (dual λ)
//! H(x, y) = 0           system equalities         (dual ν_e)
//! G(x, y) ≤ 0           system inequalities       (dual ν_i ≥ 0)
//! ```
//!
//! `A` maps each traded quantity to the participant (node) it belongs to, so
//! several traded quantities may feed one node. The Lagrangian is
//! `c + μ_loᵀ(q_lo − q) + μ_hiᵀ(q − q_hi) + λᵀ(x − A q + d) + ν_iᵀG + ν_eᵀH`.

mod expr;
mod sparse;

pub use expr::{Row, Smoothing, Term, WEYMOUTH_SMOOTHING};
pub use sparse::SparseMatrix;

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default primal feasibility tolerance on scaled data.
pub const TOL_FEAS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub n_traded: usize,
    pub n_exposed: usize,
    pub n_dependent: usize,
}

impl VariableLayout {
    pub fn new(n_traded: usize, n_exposed: usize, n_dependent: usize) -> Self {
        Self {
            n_traded,
            n_exposed,
            n_dependent,
        }
    }

    pub fn total(&self) -> usize {
        self.n_traded + self.n_exposed + self.n_dependent
    }

    pub fn traded(&self) -> Range<usize> {
        0..self.n_traded
    }

    pub fn exposed(&self) -> Range<usize> {
        self.n_traded..self.n_traded + self.n_exposed
    }

    pub fn dependent(&self) -> Range<usize> {
        self.n_traded + self.n_exposed..self.total()
    }

    /// Columns of the system variables `(x, y)`.
    pub fn system(&self) -> Range<usize> {
        self.n_traded..self.total()
    }

    pub fn q(&self, i: usize) -> usize {
        i
    }

    pub fn x(&self, i: usize) -> usize {
        self.n_traded + i
    }

    pub fn y(&self, i: usize) -> usize {
        self.n_traded + self.n_exposed + i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    NominationLower,
    NominationUpper,
    Conservation,
    SystemEquality,
    SystemInequality,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::NominationLower,
        FamilyKind::NominationUpper,
        FamilyKind::Conservation,
        FamilyKind::SystemEquality,
        FamilyKind::SystemInequality,
    ];

    pub fn is_equality(self) -> bool {
        matches!(self, FamilyKind::Conservation | FamilyKind::SystemEquality)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFamily {
    pub kind: FamilyKind,
    pub rows: Vec<Row>,
    pub labels: Vec<String>,
}

impl ConstraintFamily {
    fn new(kind: FamilyKind) -> Self {
        Self {
            kind,
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self, z: &[f64], sm: Smoothing) -> Vec<f64> {
        self.rows.iter().map(|r| r.value(z, sm)).collect()
    }

    pub fn jacobian(&self, z: &[f64], sm: Smoothing) -> SparseMatrix {
        let mut m = SparseMatrix::new(self.rows.len(), z.len());
        for (i, row) in self.rows.iter().enumerate() {
            m.entries
                .extend(row.gradient(z, sm).into_iter().map(|(j, v)| (i, j, v)));
        }
        m
    }
}

/// Physical meaning of a primal variable; used by the scaling maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRole {
    Traded,
    Exposed,
    Angle,
    Flow,
    Voltage,
    NodePressure,
    PipePressure,
    /// Compression ratio `π_pipe / π_node` with the indices of both pressures.
    Ratio { node: usize, pipe: usize },
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Dc,
    Ogf,
    Ac,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Dc => "dc",
            Formulation::Ogf => "ogf",
            Formulation::Ac => "ac",
        })
    }
}

/// Multipliers converting scaled prices and quantities to physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScale {
    pub price: f64,
    pub quantity: f64,
}

impl Default for UnitScale {
    fn default() -> Self {
        Self {
            price: 1.0,
            quantity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormulationInfo {
    pub kind: Formulation,
    /// Common squared pressure shared by every pressure box (gas only).
    pub common_pressure: Option<f64>,
    pub units: UnitScale,
}

#[derive(Debug, Clone)]
pub struct NlpProblem {
    layout: VariableLayout,
    families: [ConstraintFamily; 5],
    objective: Row,
    fixed_outflow: Vec<f64>,
    nomination_lower: Vec<f64>,
    nomination_upper: Vec<f64>,
    supply_node: Vec<usize>,
    names: Vec<String>,
    roles: Vec<VarRole>,
    dependent_start: Vec<f64>,
    formulation: Option<FormulationInfo>,
}

impl NlpProblem {
    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.layout.total()
    }

    pub fn family(&self, kind: FamilyKind) -> &ConstraintFamily {
        &self.families[kind.index()]
    }

    pub fn families(&self) -> &[ConstraintFamily] {
        &self.families
    }

    pub fn objective(&self) -> &Row {
        &self.objective
    }

    pub fn fixed_outflow(&self) -> &[f64] {
        &self.fixed_outflow
    }

    pub fn nomination_lower(&self) -> &[f64] {
        &self.nomination_lower
    }

    pub fn nomination_upper(&self) -> &[f64] {
        &self.nomination_upper
    }

    /// Node (exposed index) each traded quantity feeds.
    pub fn supply_node(&self) -> &[usize] {
        &self.supply_node
    }

    pub fn is_fixed_nomination(&self, k: usize) -> bool {
        self.nomination_lower[k] == self.nomination_upper[k]
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn roles(&self) -> &[VarRole] {
        &self.roles
    }

    pub fn formulation(&self) -> Option<&FormulationInfo> {
        self.formulation.as_ref()
    }

    pub fn units(&self) -> UnitScale {
        self.formulation.as_ref().map(|f| f.units).unwrap_or_default()
    }

    /// Physically neutral interior start: nominations at their midpoint,
    /// `x = A q − d`, dependent block as supplied by the builder.
    pub fn flat_start(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut z = vec![0.0; l.total()];
        for k in 0..l.n_traded {
            z[l.q(k)] = 0.5 * (self.nomination_lower[k] + self.nomination_upper[k]);
        }
        for i in 0..l.n_exposed {
            z[l.x(i)] = -self.fixed_outflow[i];
        }
        for k in 0..l.n_traded {
            z[l.x(self.supply_node[k])] += z[l.q(k)];
        }
        for (i, v) in self.dependent_start.iter().enumerate() {
            z[l.y(i)] = *v;
        }
        z
    }

    pub fn check_primal(&self, primal: &[f64]) -> Result<()> {
        check_len("primal", self.n(), primal.len())
    }

    pub fn check_point(&self, p: &PrimalDualPoint) -> Result<()> {
        self.check_primal(&p.primal)?;
        check_len("mu_lower", self.layout.n_traded, p.mu_lower.len())?;
        check_len("mu_upper", self.layout.n_traded, p.mu_upper.len())?;
        check_len("lambda", self.layout.n_exposed, p.lambda.len())?;
        check_len("nu_e", self.family(FamilyKind::SystemEquality).len(), p.nu_e.len())?;
        check_len("nu_i", self.family(FamilyKind::SystemInequality).len(), p.nu_i.len())
    }

    pub fn evaluate(&self, primal: &[f64]) -> Result<ConstraintValues> {
        self.evaluate_with(primal, Smoothing::Exact)
    }

    pub fn evaluate_with(&self, primal: &[f64], sm: Smoothing) -> Result<ConstraintValues> {
        self.check_primal(primal)?;
        let fam = |k: FamilyKind| self.family(k).values(primal, sm);
        let values = ConstraintValues {
            objective: self.objective.value(primal, sm),
            nomination_lower: fam(FamilyKind::NominationLower),
            nomination_upper: fam(FamilyKind::NominationUpper),
            conservation: fam(FamilyKind::Conservation),
            system_equality: fam(FamilyKind::SystemEquality),
            system_inequality: fam(FamilyKind::SystemInequality),
        };
        if !values.objective.is_finite() {
            return Err(Error::NonFinite("objective".into()));
        }
        for kind in FamilyKind::ALL {
            if let Some(i) = values.family(kind).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{:?} row {}",
                    kind,
                    self.family(kind).labels[i]
                )));
            }
        }
        Ok(values)
    }

    pub fn jacobian(&self, kind: FamilyKind, primal: &[f64], sm: Smoothing) -> Result<SparseMatrix> {
        self.check_primal(primal)?;
        let j = self.family(kind).jacobian(primal, sm);
        if j.entries.iter().any(|e| !e.2.is_finite()) {
            return Err(Error::NonFinite(format!("{kind:?} jacobian")));
        }
        Ok(j)
    }

    pub fn objective_gradient(&self, primal: &[f64], sm: Smoothing) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        self.objective.add_gradient(primal, sm, 1.0, &mut g);
        g
    }

    /// Full gradient of the Lagrangian over `[q | x | y]`.
    pub fn lagrangian_gradient_full(&self, point: &PrimalDualPoint, sm: Smoothing) -> Result<Vec<f64>> {
        self.check_point(point)?;
        let z = &point.primal;
        let mut g = self.objective_gradient(z, sm);
        for kind in FamilyKind::ALL {
            let duals = point.duals(kind);
            for (row, &w) in self.family(kind).rows.iter().zip(duals) {
                if w != 0.0 {
                    row.add_gradient(z, sm, w, &mut g);
                }
            }
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("lagrangian gradient entry {}", self.names[i])));
        }
        Ok(g)
    }

    /// Block gradients of the Lagrangian:
    /// `∇c − μ_lo + μ_hi − Aᵀλ`, `λ + ∇ₓGᵀν_i + ∇ₓHᵀν_e`, `∇_y c + ∇_yGᵀν_i + ∇_yHᵀν_e`.
    pub fn lagrangian_gradient(&self, point: &PrimalDualPoint) -> Result<LagrangianGradient> {
        let g = self.lagrangian_gradient_full(point, Smoothing::Exact)?;
        let l = &self.layout;
        Ok(LagrangianGradient {
            q: g[l.traded()].to_vec(),
            x: g[l.exposed()].to_vec(),
            y: g[l.dependent()].to_vec(),
        })
    }

    /// Adds `obj_scale ∇²c + Σ eq_w ∇²H + Σ ineq_w ∇²G` into `out`.
    /// Nomination and conservation rows are linear and contribute nothing.
    pub fn add_lagrangian_hessian(
        &self,
        z: &[f64],
        sm: Smoothing,
        obj_scale: f64,
        eq_weights: &[f64],
        ineq_weights: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let mut add = |i: usize, j: usize, h: f64| out[(i, j)] += h;
        self.objective.add_hessian(z, sm, obj_scale, &mut add);
        for (row, &w) in self.family(FamilyKind::SystemEquality).rows.iter().zip(eq_weights) {
            row.add_hessian(z, sm, w, &mut add);
        }
        for (row, &w) in self.family(FamilyKind::SystemInequality).rows.iter().zip(ineq_weights) {
            row.add_hessian(z, sm, w, &mut add);
        }
    }

    /// True when every constraint row and the objective are affine.
    pub fn is_linear(&self) -> bool {
        self.objective.is_linear() && self.families.iter().all(|f| f.rows.iter().all(Row::is_linear))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianGradient {
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LagrangianGradient {
    pub fn norms(&self) -> [f64; 3] {
        [inf_norm(&self.q), inf_norm(&self.x), inf_norm(&self.y)]
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Per-family residuals at a primal point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValues {
    pub objective: f64,
    pub nomination_lower: Vec<f64>,
    pub nomination_upper: Vec<f64>,
    pub conservation: Vec<f64>,
    pub system_equality: Vec<f64>,
    pub system_inequality: Vec<f64>,
}

impl ConstraintValues {
    pub fn family(&self, kind: FamilyKind) -> &[f64] {
        match kind {
            FamilyKind::NominationLower => &self.nomination_lower,
            FamilyKind::NominationUpper => &self.nomination_upper,
            FamilyKind::Conservation => &self.conservation,
            FamilyKind::SystemEquality => &self.system_equality,
            FamilyKind::SystemInequality => &self.system_inequality,
        }
    }

    /// Largest violation over every family (equalities by magnitude,
    /// inequalities by positive part).
    pub fn max_violation(&self) -> f64 {
        FamilyKind::ALL
            .iter()
            .map(|&k| violation(self.family(k), k.is_equality()))
            .fold(0.0, f64::max)
    }

    /// Largest violation over the system families `H` and `G` only.
    pub fn system_violation(&self) -> f64 {
        violation(&self.system_equality, true).max(violation(&self.system_inequality, false))
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

fn violation(v: &[f64], equality: bool) -> f64 {
    if equality {
        inf_norm(v)
    } else {
        v.iter().fold(0.0, |m, x| m.max(*x))
    }
}

/// Primal values plus a dual for every constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualPoint {
    pub primal: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu_e: Vec<f64>,
    pub nu_i: Vec<f64>,
}

impl PrimalDualPoint {
    /// Zero duals at the given primal point.
    pub fn with_primal(problem: &NlpProblem, primal: Vec<f64>) -> Self {
        let l = problem.layout();
        Self {
            primal,
            mu_lower: vec![0.0; l.n_traded],
            mu_upper: vec![0.0; l.n_traded],
            lambda: vec![0.0; l.n_exposed],
            nu_e: vec![0.0; problem.family(FamilyKind::SystemEquality).len()],
            nu_i: vec![0.0; problem.family(FamilyKind::SystemInequality).len()],
        }
    }

    pub fn duals(&self, kind: FamilyKind) -> &[f64] {
        match kind {
            FamilyKind::NominationLower => &self.mu_lower,
            FamilyKind::NominationUpper => &self.mu_upper,
            FamilyKind::Conservation => &self.lambda,
            FamilyKind::SystemEquality => &self.nu_e,
            FamilyKind::SystemInequality => &self.nu_i,
        }
    }

    pub fn q<'a>(&'a self, layout: &VariableLayout) -> &'a [f64] {
        &self.primal[layout.traded()]
    }

    pub fn x<'a>(&'a self, layout: &VariableLayout) -> &'a [f64] {
        &self.primal[layout.exposed()]
    }

    pub fn y<'a>(&'a self, layout: &VariableLayout) -> &'a [f64] {
        &self.primal[layout.dependent()]
    }
}

/// Assembles an [`NlpProblem`]; conservation and nomination rows are
/// generated from the traded/exposed declarations.
#[derive(Debug, Clone)]
pub struct NlpBuilder {
    layout: VariableLayout,
    names: Vec<String>,
    roles: Vec<VarRole>,
    supply_node: Vec<usize>,
    q_lower: Vec<f64>,
    q_upper: Vec<f64>,
    outflow: Vec<f64>,
    dependent_start: Vec<f64>,
    objective: Row,
    equalities: Vec<(String, Row)>,
    inequalities: Vec<(String, Row)>,
    formulation: Option<FormulationInfo>,
}

impl NlpBuilder {
    pub fn new(layout: VariableLayout) -> Self {
        let n = layout.total();
        let mut roles = vec![VarRole::Other; n];
        roles[layout.traded()].fill(VarRole::Traded);
        roles[layout.exposed()].fill(VarRole::Exposed);
        let names = (0..n)
            .map(|j| {
                if j < layout.n_traded {
                    format!("q[{j}]")
                } else if j < layout.n_traded + layout.n_exposed {
                    format!("x[{}]", j - layout.n_traded)
                } else {
                    format!("y[{}]", j - layout.n_traded - layout.n_exposed)
                }
            })
            .collect();
        Self {
            layout,
            names,
            roles,
            supply_node: vec![0; layout.n_traded],
            q_lower: vec![0.0; layout.n_traded],
            q_upper: vec![0.0; layout.n_traded],
            outflow: vec![0.0; layout.n_exposed],
            dependent_start: vec![0.0; layout.n_dependent],
            objective: Row::new(),
            equalities: Vec::new(),
            inequalities: Vec::new(),
            formulation: None,
        }
    }

    pub fn layout(&self) -> VariableLayout {
        self.layout
    }

    pub fn traded(&mut self, k: usize, name: impl Into<String>, node: usize, lower: f64, upper: f64) -> &mut Self {
        let j = self.layout.q(k);
        self.names[j] = name.into();
        self.supply_node[k] = node;
        self.q_lower[k] = lower;
        self.q_upper[k] = upper;
        self
    }

    pub fn exposed(&mut self, i: usize, name: impl Into<String>, outflow: f64) -> &mut Self {
        let j = self.layout.x(i);
        self.names[j] = name.into();
        self.outflow[i] = outflow;
        self
    }

    pub fn dependent(&mut self, i: usize, name: impl Into<String>, role: VarRole, start: f64) -> &mut Self {
        let j = self.layout.y(i);
        self.names[j] = name.into();
        self.roles[j] = role;
        self.dependent_start[i] = start;
        self
    }

    pub fn objective(&mut self, row: Row) -> &mut Self {
        self.objective = row;
        self
    }

    pub fn equality(&mut self, label: impl Into<String>, row: Row) -> &mut Self {
        self.equalities.push((label.into(), row));
        self
    }

    pub fn inequality(&mut self, label: impl Into<String>, row: Row) -> &mut Self {
        self.inequalities.push((label.into(), row));
        self
    }

    pub fn formulation(&mut self, info: FormulationInfo) -> &mut Self {
        self.formulation = Some(info);
        self
    }

    pub fn build(self) -> Result<NlpProblem> {
        let l = self.layout;
        let n = l.total();
        for k in 0..l.n_traded {
            let (lo, hi) = (self.q_lower[k], self.q_upper[k]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::build(format!("nomination bounds of {} must be finite", self.names[k])));
            }
            if lo > hi {
                return Err(Error::build(format!(
                    "nomination lower bound {lo} exceeds upper bound {hi} for {}",
                    self.names[k]
                )));
            }
            if self.supply_node[k] >= l.n_exposed {
                return Err(Error::build(format!("{} feeds unknown node {}", self.names[k], self.supply_node[k])));
            }
        }
        if let Some(v) = self.objective.max_var() {
            if v >= n {
                return Err(Error::build("objective references an unknown variable"));
            }
        }
        if self.objective.pattern().iter().any(|j| l.exposed().contains(j)) {
            return Err(Error::build("objective may not depend on exposed variables"));
        }

        let mut families = FamilyKind::ALL.map(ConstraintFamily::new);
        for k in 0..l.n_traded {
            let name = &self.names[l.q(k)];
            let lower = &mut families[FamilyKind::NominationLower.index()];
            lower.rows.push(Row::new().constant(self.q_lower[k]).linear(l.q(k), -1.0));
            lower.labels.push(format!("nomination_lower[{name}]"));
            let upper = &mut families[FamilyKind::NominationUpper.index()];
            upper.rows.push(Row::new().linear(l.q(k), 1.0).constant(-self.q_upper[k]));
            upper.labels.push(format!("nomination_upper[{name}]"));
        }
        for i in 0..l.n_exposed {
            let mut row = Row::new().linear(l.x(i), 1.0).constant(self.outflow[i]);
            for k in (0..l.n_traded).filter(|&k| self.supply_node[k] == i) {
                row = row.linear(l.q(k), -1.0);
            }
            let cons = &mut families[FamilyKind::Conservation.index()];
            cons.rows.push(row);
            cons.labels.push(format!("conservation[{}]", self.names[l.x(i)]));
        }
        for (kind, rows) in [
            (FamilyKind::SystemEquality, self.equalities),
            (FamilyKind::SystemInequality, self.inequalities),
        ] {
            for (label, row) in rows {
                if row.terms.is_empty() {
                    return Err(Error::build(format!("row {label} is constant")));
                }
                let pattern = row.pattern();
                if pattern.last().is_some_and(|&j| j >= n) {
                    return Err(Error::build(format!("row {label} references an unknown variable")));
                }
                if pattern.iter().any(|j| l.traded().contains(j)) {
                    return Err(Error::build(format!("system row {label} may not depend on traded quantities")));
                }
                let fam = &mut families[kind.index()];
                fam.rows.push(row);
                fam.labels.push(label);
            }
        }
        Ok(NlpProblem {
            layout: l,
            families,
            objective: self.objective,
            fixed_outflow: self.outflow,
            nomination_lower: self.q_lower,
            nomination_upper: self.q_upper,
            supply_node: self.supply_node,
            names: self.names,
            roles: self.roles,
            dependent_start: self.dependent_start,
            formulation: self.formulation,
        })
    }
}
