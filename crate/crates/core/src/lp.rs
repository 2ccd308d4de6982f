//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Small and exact enough to serve as a reference for the interior point
//! solver on linear instances and for the MFCQ direction problem. Row duals
//! are reported as sensitivities `∂ objective / ∂ rhs`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{FamilyKind, NlpProblem, PrimalDualPoint, Smoothing};

const PIVOT_EPS: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cᵀz` subject to the rows and `lower ≤ z ≤ upper` (bounds may be
/// infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// `∂ objective / ∂ rhs` per row.
    pub duals: Vec<f64>,
    /// `c_j − Σ_i a_ij duals_i`
    pub reduced_costs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }

    pub fn row(&mut self, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> &mut Self {
        self.rows.push(LpRow { coefs, sense, rhs });
        self
    }
}

/// How an original variable is expressed through nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum Map {
    /// `z = l + c`
    Shift(usize, f64),
    /// `z = u − c`
    Mirror(usize, f64),
    /// `z = c⁺ − c⁻`
    Split(usize, usize),
}

struct Tableau {
    /// `m × (cols + 1)`; last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost · columns` over the allowed columns. Returns false
    /// when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            let m = self.t.len();
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let rc = cost[j] - (0..m).map(|i| cost[self.basis[i]] * self.t[i][j]).sum::<f64>();
                if rc < -PIVOT_EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][self.cols] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(Error::Dimension {
            what: "lp bounds",
            expected: n,
            got: lp.lower.len().min(lp.upper.len()),
        });
    }
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
            return Ok(infeasible(lp));
        }
        if l.is_finite() {
            maps.push(Map::Shift(ncols, l));
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(Map::Mirror(ncols, u));
            ncols += 1;
        } else {
            maps.push(Map::Split(ncols, ncols + 1));
            ncols += 2;
        }
    }

    // Standardized rows over the nonnegative columns: (dense coefs, sense, rhs).
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for &(j, v) in &row.coefs {
            if j >= n {
                return Err(Error::Dimension {
                    what: "lp row column",
                    expected: n,
                    got: j,
                });
            }
            match maps[j] {
                Map::Shift(c, l) => {
                    a[c] += v;
                    rhs -= v * l;
                }
                Map::Mirror(c, u) => {
                    a[c] -= v;
                    rhs -= v * u;
                }
                Map::Split(p, m) => {
                    a[p] += v;
                    a[m] -= v;
                }
            }
        }
        rows.push((a, row.sense, rhs));
    }
    for &(c, width) in &bound_rows {
        let mut a = vec![0.0; ncols];
        a[c] = 1.0;
        rows.push((a, Sense::Le, width));
    }
    let mut cost = vec![0.0; ncols];
    let mut offset = 0.0;
    for j in 0..n {
        let c = lp.objective[j];
        match maps[j] {
            Map::Shift(k, l) => {
                cost[k] += c;
                offset += c * l;
            }
            Map::Mirror(k, u) => {
                cost[k] -= c;
                offset += c * u;
            }
            Map::Split(p, m) => {
                cost[p] += c;
                cost[m] -= c;
            }
        }
    }

    // Flip rows to nonnegative rhs, then add slack/surplus and artificial columns.
    let m = rows.len();
    let mut flip = vec![1.0; m];
    for (i, (a, sense, rhs)) in rows.iter_mut().enumerate() {
        if *rhs < 0.0 {
            flip[i] = -1.0;
            a.iter_mut().for_each(|v| *v = -*v);
            *rhs = -*rhs;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let total = ncols + n_slack + n_art;
    let mut t = vec![vec![0.0; total + 1]; m];
    let mut basis = vec![0; m];
    let (mut sc, mut ac) = (ncols, ncols + n_slack);
    for (i, (a, sense, rhs)) in rows.iter().enumerate() {
        t[i][..ncols].copy_from_slice(a);
        t[i][total] = *rhs;
        match sense {
            Sense::Le => {
                t[i][sc] = 1.0;
                basis[i] = sc;
                sc += 1;
            }
            Sense::Ge => {
                t[i][sc] = -1.0;
                sc += 1;
                t[i][ac] = 1.0;
                basis[i] = ac;
                ac += 1;
            }
            Sense::Eq => {
                t[i][ac] = 1.0;
                basis[i] = ac;
                ac += 1;
            }
        }
    }
    let std_matrix: Vec<Vec<f64>> = t.iter().map(|r| r[..ncols + n_slack].to_vec()).collect();
    let mut tab = Tableau { t, basis, cols: total };

    let is_art = |j: usize| j >= ncols + n_slack;
    let phase1_cost: Vec<f64> = (0..total).map(|j| if is_art(j) { 1.0 } else { 0.0 }).collect();
    tab.optimize(&phase1_cost, &vec![true; total]);
    let infeas: f64 = (0..m).filter(|&i| is_art(tab.basis[i])).map(|i| tab.t[i][total]).sum();
    if infeas > PHASE_ONE_TOL * (1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max)) {
        return Ok(infeasible(lp));
    }
    // Drive zero-level artificials out; rows where that fails are redundant.
    let mut redundant = vec![false; m];
    for i in 0..m {
        if is_art(tab.basis[i]) {
            match (0..ncols + n_slack).find(|&j| tab.t[i][j].abs() > PIVOT_EPS) {
                Some(j) => tab.pivot(i, j),
                None => redundant[i] = true,
            }
        }
    }
    let mut phase2_cost = cost.clone();
    phase2_cost.resize(total, 0.0);
    let allowed: Vec<bool> = (0..total).map(|j| !is_art(j)).collect();
    if !tab.optimize(&phase2_cost, &allowed) {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective: f64::NEG_INFINITY,
            duals: vec![0.0; lp.rows.len()],
            reduced_costs: vec![0.0; n],
        });
    }

    let mut col_val = vec![0.0; total];
    for i in 0..m {
        col_val[tab.basis[i]] = tab.t[i][total];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| match *mp {
            Map::Shift(c, l) => l + col_val[c],
            Map::Mirror(c, u) => u - col_val[c],
            Map::Split(p, q) => col_val[p] - col_val[q],
        })
        .collect();

    // Duals from Bᵀy = c_B over the non-redundant rows.
    let keep: Vec<usize> = (0..m).filter(|&i| !redundant[i]).collect();
    let k = keep.len();
    let mut y_std = vec![0.0; m];
    if k > 0 {
        let bmat = DMatrix::from_fn(k, k, |r, c| {
            let col = tab.basis[keep[c]];
            if col < ncols + n_slack {
                std_matrix[keep[r]][col]
            } else {
                // artificial still basic at zero on a kept row: unit column
                if keep[r] == keep[c] {
                    1.0
                } else {
                    0.0
                }
            }
        });
        let cb = nalgebra::DVector::from_fn(k, |c, _| phase2_cost[tab.basis[keep[c]]]);
        let y = bmat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::NonFinite("simplex basis is singular".into()))?;
        for (r, &i) in keep.iter().enumerate() {
            y_std[i] = y[r];
        }
    }
    let duals: Vec<f64> = (0..lp.rows.len()).map(|i| flip[i] * y_std[i]).collect();
    let mut reduced_costs = lp.objective.clone();
    for (row, y) in lp.rows.iter().zip(&duals) {
        for &(j, v) in &row.coefs {
            reduced_costs[j] -= v * y;
        }
    }
    let objective = offset + (0..ncols).map(|j| cost[j] * col_val[j]).sum::<f64>();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        reduced_costs,
    })
}

fn infeasible(lp: &LinearProgram) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; lp.n()],
        objective: f64::NAN,
        duals: vec![0.0; lp.rows.len()],
        reduced_costs: vec![0.0; lp.n()],
    }
}

/// Linear program equivalent to an affine [`NlpProblem`]: nominations become
/// variable bounds, conservation and `H` rows equalities, `G` rows `≤ 0`.
pub fn from_problem(problem: &NlpProblem) -> Result<LinearProgram> {
    if !problem.is_linear() {
        return Err(Error::Unsupported("simplex reference needs an affine problem".into()));
    }
    let n = problem.n();
    let zero = vec![0.0; n];
    let mut lp = LinearProgram::new(n);
    lp.objective = problem.objective_gradient(&zero, Smoothing::Exact);
    lp.lower = vec![f64::NEG_INFINITY; n];
    lp.upper = vec![f64::INFINITY; n];
    for k in 0..problem.layout().n_traded {
        lp.lower[k] = problem.nomination_lower()[k];
        lp.upper[k] = problem.nomination_upper()[k];
    }
    for (kind, sense) in [
        (FamilyKind::Conservation, Sense::Eq),
        (FamilyKind::SystemEquality, Sense::Eq),
        (FamilyKind::SystemInequality, Sense::Le),
    ] {
        for row in &problem.family(kind).rows {
            let coefs = row.gradient(&zero, Smoothing::Exact);
            lp.row(coefs, sense, -row.value(&zero, Smoothing::Exact));
        }
    }
    Ok(lp)
}

/// Maps an LP solution of [`from_problem`] back to model multipliers, which
/// are the negated rhs sensitivities.
pub fn to_point(problem: &NlpProblem, sol: &LpSolution) -> PrimalDualPoint {
    let mut point = PrimalDualPoint::with_primal(problem, sol.x.clone());
    let n_cons = problem.layout().n_exposed;
    let n_h = problem.family(FamilyKind::SystemEquality).len();
    point.lambda = sol.duals[..n_cons].iter().map(|y| -y).collect();
    point.nu_e = sol.duals[n_cons..n_cons + n_h].iter().map(|y| -y).collect();
    point.nu_i = sol.duals[n_cons + n_h..].iter().map(|y| -y).collect();
    for k in 0..problem.layout().n_traded {
        let r = sol.reduced_costs[k];
        point.mu_lower[k] = r.max(0.0);
        point.mu_upper[k] = (-r).max(0.0);
    }
    point
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3a + 5b s.t. a ≤ 4, 2b ≤ 12, 3a + 2b ≤ 18 → (2, 6), value 36.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.row(vec![(0, 1.0)], Sense::Le, 4.0)
            .row(vec![(1, 2.0)], Sense::Le, 12.0)
            .row(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective + 36.0).abs() < 1e-12);
        // shadow prices of the binding rows are −3/2 and −1
        assert!(s.duals[0].abs() < 1e-12);
        assert!((s.duals[1] + 1.5).abs() < 1e-12);
        assert!((s.duals[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min z0 + 2 z1 s.t. z0 + z1 = 3, z0 − z1 ≥ −1, z free, z1 ≤ 5
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.lower = vec![f64::NEG_INFINITY; 2];
        lp.upper = vec![f64::INFINITY, 5.0];
        lp.row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 3.0);
        lp.row(vec![(0, 1.0), (1, -1.0)], Sense::Le, 10.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 6.5).abs() < 1e-12 && (s.x[1] + 3.5).abs() < 1e-12);
        assert!((s.objective + 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.row(vec![(0, 1.0)], Sense::Le, -1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 2.0)
            .row(vec![(0, 2.0), (1, 2.0)], Sense::Eq, 4.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duals_are_rhs_sensitivities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![2.0, 3.0];
        lp.row(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 4.0)
            .row(vec![(0, 1.0)], Sense::Le, 3.0);
        let base = solve_lp(&lp).unwrap();
        for i in 0..2 {
            let mut bumped = lp.clone();
            bumped.rows[i].rhs += 1e-3;
            let fd = (solve_lp(&bumped).unwrap().objective - base.objective) / 1e-3;
            assert!((fd - base.duals[i]).abs() < 1e-9, "row {i}: {fd} vs {}", base.duals[i]);
        }
    }
}
