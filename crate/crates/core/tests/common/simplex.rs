//! Test-only dense simplex: standard form, two phases, Bland's rule, duals
//! from `Bᵀy = c_B`. Written separately from the library LP on purpose.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `min cᵀx` over `lo ≤ x ≤ hi` (finite `lo`) and dense rows.
#[derive(Debug, Clone)]
pub struct Lp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Optimal {
        x: Vec<f64>,
        obj: f64,
        /// `∂obj/∂rhs` for the caller's rows.
        duals: Vec<f64>,
        /// No basic variable at zero and no zero reduced cost off the basis.
        nondegenerate: bool,
    },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-10;

impl Lp {
    pub fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            rows: Vec::new(),
            lo: vec![0.0; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn add(&mut self, a: Vec<f64>, rel: Rel, b: f64) {
        self.rows.push((a, rel, b));
    }

    pub fn solve(&self) -> Outcome {
        let n = self.c.len();
        // shift x = lo + u, u ≥ 0; finite upper bounds become rows
        let mut rows: Vec<(Vec<f64>, Rel, f64)> = self
            .rows
            .iter()
            .map(|(a, r, b)| {
                let shift: f64 = a.iter().zip(&self.lo).map(|(ai, l)| ai * l).sum();
                (a.clone(), *r, b - shift)
            })
            .collect();
        let n_user = rows.len();
        for j in 0..n {
            if self.hi[j].is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                rows.push((a, Rel::Le, self.hi[j] - self.lo[j]));
            }
        }
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Rel::Eq).count();
        let ncol = n + n_slack + m; // structural, slacks, one artificial per row
        let mut a = DMatrix::<f64>::zeros(m, ncol);
        let mut b = DVector::<f64>::zeros(m);
        let mut sign = vec![1.0; m];
        let mut k = n;
        for (i, (coefs, rel, rhs)) in rows.iter().enumerate() {
            for j in 0..n {
                a[(i, j)] = coefs[j];
            }
            match rel {
                Rel::Le => {
                    a[(i, k)] = 1.0;
                    k += 1;
                }
                Rel::Ge => {
                    a[(i, k)] = -1.0;
                    k += 1;
                }
                Rel::Eq => {}
            }
            b[i] = *rhs;
            if b[i] < 0.0 {
                sign[i] = -1.0;
                for j in 0..ncol {
                    a[(i, j)] = -a[(i, j)];
                }
                b[i] = -b[i];
            }
            a[(i, n + n_slack + i)] = 1.0;
        }
        let art0 = n + n_slack;
        let mut basis: Vec<usize> = (0..m).map(|i| art0 + i).collect();
        let mut t = a.clone();
        let mut rhs = b.clone();

        // phase one: minimize the artificial sum
        let mut c1 = vec![0.0; ncol];
        for cj in c1.iter_mut().skip(art0) {
            *cj = 1.0;
        }
        if !run(&mut t, &mut rhs, &mut basis, &c1, ncol) {
            return Outcome::Unbounded;
        }
        let infeas: f64 = basis.iter().zip(rhs.iter()).filter(|(&j, _)| j >= art0).map(|(_, v)| *v).sum();
        if infeas > 1e-8 {
            return Outcome::Infeasible;
        }
        // drive zero artificials out where possible
        for r in 0..m {
            if basis[r] >= art0 {
                if let Some(j) = (0..art0).find(|&j| t[(r, j)].abs() > 1e-9) {
                    pivot(&mut t, &mut rhs, r, j);
                    basis[r] = j;
                }
            }
        }

        let mut c2 = vec![0.0; ncol];
        c2[..n].copy_from_slice(&self.c);
        if !run(&mut t, &mut rhs, &mut basis, &c2, art0) {
            return Outcome::Unbounded;
        }

        let mut u = vec![0.0; ncol];
        for (r, &j) in basis.iter().enumerate() {
            u[j] = rhs[r];
        }
        let x: Vec<f64> = (0..n).map(|j| self.lo[j] + u[j]).collect();
        let obj = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();

        let bm = DMatrix::from_fn(m, m, |i, r| a[(i, basis[r])]);
        let cb = DVector::from_fn(m, |r, _| c2[basis[r]]);
        let y = bm.transpose().lu().solve(&cb).expect("optimal basis is nonsingular");
        let duals = (0..n_user).map(|i| y[i] * sign[i]).collect();

        let in_basis = |j: usize| basis.contains(&j);
        let primal_nd = basis.iter().zip(rhs.iter()).all(|(&j, &v)| j >= art0 || v > 1e-9);
        let dual_nd = (0..art0).filter(|&j| !in_basis(j)).all(|j| {
            let rc = c2[j] - (0..m).map(|i| y[i] * a[(i, j)]).sum::<f64>();
            rc > 1e-9
        });
        Outcome::Optimal {
            x,
            obj,
            duals,
            nondegenerate: primal_nd && dual_nd,
        }
    }
}

fn pivot(t: &mut DMatrix<f64>, rhs: &mut DVector<f64>, r: usize, c: usize) {
    let p = t[(r, c)];
    for j in 0..t.ncols() {
        t[(r, j)] /= p;
    }
    rhs[r] /= p;
    for i in 0..t.nrows() {
        if i != r {
            let f = t[(i, c)];
            if f != 0.0 {
                for j in 0..t.ncols() {
                    t[(i, j)] -= f * t[(r, j)];
                }
                rhs[i] -= f * rhs[r];
            }
        }
    }
}

/// Bland's rule over columns `< allowed`; false when unbounded.
fn run(t: &mut DMatrix<f64>, rhs: &mut DVector<f64>, basis: &mut [usize], c: &[f64], allowed: usize) -> bool {
    let m = t.nrows();
    loop {
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let rc = c[j] - (0..m).map(|i| c[basis[i]] * t[(i, j)]).sum::<f64>();
            rc < -EPS
        });
        let Some(j) = entering else {
            return true;
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[(i, j)] > EPS {
                let ratio = rhs[i] / t[(i, j)];
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12 || (ratio <= br + 1e-12 && basis[i] < basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = best else {
            return false;
        };
        pivot(t, rhs, r, j);
        basis[r] = j;
    }
}
