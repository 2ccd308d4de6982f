//! Closed-form scalar expressions used for every objective and constraint row.
//!
//! A [`Row`] is a constant plus a sum of [`Term`]s. Each term knows its value,
//! gradient and Hessian, so the whole model gets exact first and second
//! derivatives without automatic differentiation. The sparsity pattern of a
//! row depends only on its terms, never on the evaluation point.

use serde::{Deserialize, Serialize};

/// Default smoothing parameter for `v|v|` inside the solver.
pub const WEYMOUTH_SMOOTHING: f64 = 1e-8;

/// How the signed square `v|v|` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Smoothing {
    /// `v|v|`: C¹ with a jump in the second derivative at zero.
    #[default]
    Exact,
    /// `v·sqrt(v² + eps)`: C² everywhere.
    Smoothed(f64),
}

impl Smoothing {
    pub fn solver_default() -> Self {
        Smoothing::Smoothed(WEYMOUTH_SMOOTHING)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum Term {
    /// `coef · z[var]`
    Linear { var: usize, coef: f64 },
    /// `coef · z[a] · z[b]`; `a == b` gives a square.
    Product { a: usize, b: usize, coef: f64 },
    /// `coef · z[var] · |z[var]|`
    SignedSquare { var: usize, coef: f64 },
    /// `coef · z[vi] · z[vj] · cos(z[ti] − z[tj])`
    CosDiff {
        vi: usize,
        vj: usize,
        ti: usize,
        tj: usize,
        coef: f64,
    },
    /// `coef · z[vi] · z[vj] · sin(z[ti] − z[tj])`
    SinDiff {
        vi: usize,
        vj: usize,
        ti: usize,
        tj: usize,
        coef: f64,
    },
}

fn signed_square(v: f64, sm: Smoothing) -> (f64, f64, f64) {
    match sm {
        Smoothing::Exact => (v * v.abs(), 2.0 * v.abs(), 2.0 * v.signum() * (v != 0.0) as u8 as f64),
        Smoothing::Smoothed(eps) => {
            let r = (v * v + eps).sqrt();
            let d1 = (2.0 * v * v + eps) / r;
            let d2 = v * (2.0 * v * v + 3.0 * eps) / (r * r * r);
            (v * r, d1, d2)
        }
    }
}

impl Term {
    pub fn is_linear(&self) -> bool {
        matches!(self, Term::Linear { .. })
    }

    fn vars(&self, out: &mut Vec<usize>) {
        match *self {
            Term::Linear { var, .. } | Term::SignedSquare { var, .. } => out.push(var),
            Term::Product { a, b, .. } => out.extend([a, b]),
            Term::CosDiff { vi, vj, ti, tj, .. } | Term::SinDiff { vi, vj, ti, tj, .. } => {
                out.extend([vi, vj, ti, tj])
            }
        }
    }

    pub fn value(&self, z: &[f64], sm: Smoothing) -> f64 {
        match *self {
            Term::Linear { var, coef } => coef * z[var],
            Term::Product { a, b, coef } => coef * z[a] * z[b],
            Term::SignedSquare { var, coef } => coef * signed_square(z[var], sm).0,
            Term::CosDiff { vi, vj, ti, tj, coef } => coef * z[vi] * z[vj] * (z[ti] - z[tj]).cos(),
            Term::SinDiff { vi, vj, ti, tj, coef } => coef * z[vi] * z[vj] * (z[ti] - z[tj]).sin(),
        }
    }

    /// Calls `f(var, ∂term/∂z[var])`; a variable may be reported more than once.
    pub fn for_each_partial(&self, z: &[f64], sm: Smoothing, mut f: impl FnMut(usize, f64)) {
        match *self {
            Term::Linear { var, coef } => f(var, coef),
            Term::Product { a, b, coef } => {
                f(a, coef * z[b]);
                f(b, coef * z[a]);
            }
            Term::SignedSquare { var, coef } => f(var, coef * signed_square(z[var], sm).1),
            Term::CosDiff { vi, vj, ti, tj, coef } => {
                let (s, c) = (z[ti] - z[tj]).sin_cos();
                let vv = z[vi] * z[vj];
                f(vi, coef * z[vj] * c);
                f(vj, coef * z[vi] * c);
                f(ti, -coef * vv * s);
                f(tj, coef * vv * s);
            }
            Term::SinDiff { vi, vj, ti, tj, coef } => {
                let (s, c) = (z[ti] - z[tj]).sin_cos();
                let vv = z[vi] * z[vj];
                f(vi, coef * z[vj] * s);
                f(vj, coef * z[vi] * s);
                f(ti, coef * vv * c);
                f(tj, -coef * vv * c);
            }
        }
    }

    /// Calls `f(i, j, h)` for entries of the full symmetric Hessian. Mixed
    /// partials are reported in both orientations, so aliased slots sum up
    /// correctly when accumulated into a dense matrix.
    pub fn for_each_second(&self, z: &[f64], sm: Smoothing, mut f: impl FnMut(usize, usize, f64)) {
        let mixed = |i: usize, j: usize, h: f64, f: &mut dyn FnMut(usize, usize, f64)| {
            f(i, j, h);
            f(j, i, h);
        };
        match *self {
            Term::Linear { .. } => {}
            Term::Product { a, b, coef } => mixed(a, b, coef, &mut f),
            Term::SignedSquare { var, coef } => f(var, var, coef * signed_square(z[var], sm).2),
            Term::CosDiff { vi, vj, ti, tj, coef } => {
                let (s, c) = (z[ti] - z[tj]).sin_cos();
                let (a, b) = (z[vi], z[vj]);
                mixed(vi, vj, coef * c, &mut f);
                mixed(vi, ti, -coef * b * s, &mut f);
                mixed(vi, tj, coef * b * s, &mut f);
                mixed(vj, ti, -coef * a * s, &mut f);
                mixed(vj, tj, coef * a * s, &mut f);
                f(ti, ti, -coef * a * b * c);
                f(tj, tj, -coef * a * b * c);
                mixed(ti, tj, coef * a * b * c, &mut f);
            }
            Term::SinDiff { vi, vj, ti, tj, coef } => {
                let (s, c) = (z[ti] - z[tj]).sin_cos();
                let (a, b) = (z[vi], z[vj]);
                mixed(vi, vj, coef * s, &mut f);
                mixed(vi, ti, coef * b * c, &mut f);
                mixed(vi, tj, -coef * b * c, &mut f);
                mixed(vj, ti, coef * a * c, &mut f);
                mixed(vj, tj, -coef * a * c, &mut f);
                f(ti, ti, -coef * a * b * s);
                f(tj, tj, -coef * a * b * s);
                mixed(ti, tj, coef * a * b * s, &mut f);
            }
        }
    }

    pub(crate) fn max_var(&self) -> usize {
        let mut v = Vec::with_capacity(4);
        self.vars(&mut v);
        v.into_iter().max().unwrap_or(0)
    }
}

/// `constant + Σ terms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub constant: f64,
    pub terms: Vec<Term>,
}

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn linear(mut self, var: usize, coef: f64) -> Self {
        self.terms.push(Term::Linear { var, coef });
        self
    }

    pub fn product(mut self, a: usize, b: usize, coef: f64) -> Self {
        self.terms.push(Term::Product { a, b, coef });
        self
    }

    pub fn signed_square(mut self, var: usize, coef: f64) -> Self {
        self.terms.push(Term::SignedSquare { var, coef });
        self
    }

    pub fn term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn is_linear(&self) -> bool {
        self.terms.iter().all(Term::is_linear)
    }

    /// Sorted, deduplicated variable indices the row depends on.
    pub fn pattern(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for t in &self.terms {
            t.vars(&mut v);
        }
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn value(&self, z: &[f64], sm: Smoothing) -> f64 {
        self.constant + self.terms.iter().map(|t| t.value(z, sm)).sum::<f64>()
    }

    /// Adds `scale · ∇row` into `out`.
    pub fn add_gradient(&self, z: &[f64], sm: Smoothing, scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            t.for_each_partial(z, sm, |i, g| out[i] += scale * g);
        }
    }

    /// Gradient restricted to [`Row::pattern`], in pattern order.
    pub fn gradient(&self, z: &[f64], sm: Smoothing) -> Vec<(usize, f64)> {
        let pattern = self.pattern();
        let mut vals = vec![0.0; pattern.len()];
        for t in &self.terms {
            t.for_each_partial(z, sm, |i, g| {
                let k = pattern.binary_search(&i).expect("variable in pattern");
                vals[k] += g;
            });
        }
        pattern.into_iter().zip(vals).collect()
    }

    /// Adds `scale · ∇²row` through `f(i, j, h)` (full symmetric entries).
    pub fn add_hessian(&self, z: &[f64], sm: Smoothing, scale: f64, mut f: impl FnMut(usize, usize, f64)) {
        if scale == 0.0 {
            return;
        }
        for t in &self.terms {
            t.for_each_second(z, sm, |i, j, h| f(i, j, scale * h));
        }
    }

    pub(crate) fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(Term::max_var).max()
    }
}
