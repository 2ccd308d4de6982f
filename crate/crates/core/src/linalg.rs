//! Dense symmetric indefinite `LDLᵀ` factorization with Bunch–Kaufman
//! pivoting. `D` is block diagonal with 1×1 and 2×2 blocks, which makes the
//! inertia of the input matrix directly readable from the factor.

use nalgebra::DMatrix;

/// Counts of positive, negative and zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, Copy)]
enum Block {
    One(f64),
    /// `[[a, b], [b, c]]`
    Two(f64, f64, f64),
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    l: DMatrix<f64>,
    blocks: Vec<(usize, Block)>,
    perm: Vec<usize>,
    inertia: Inertia,
}

const BK_ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + √17) / 8

fn swap_sym(a: &mut DMatrix<f64>, i: usize, j: usize) {
    if i != j {
        a.swap_rows(i, j);
        a.swap_columns(i, j);
    }
}

impl Ldlt {
    /// Factorizes the symmetric matrix `a` (both triangles must be filled).
    /// Pivots with magnitude at or below `pivot_tol` count as zero.
    pub fn factor(a: &DMatrix<f64>, pivot_tol: f64) -> Ldlt {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LDLt needs a square matrix");
        let tiny = pivot_tol;
        let mut w = a.clone();
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut blocks = Vec::new();
        let mut inertia = Inertia::default();

        let swap = |w: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut Vec<usize>, k: usize, i: usize, j: usize| {
            swap_sym(w, i, j);
            perm.swap(i, j);
            for c in 0..k {
                let t = l[(i, c)];
                l[(i, c)] = l[(j, c)];
                l[(j, c)] = t;
            }
        };

        let mut k = 0;
        while k < n {
            let akk = w[(k, k)].abs();
            let (mut lambda, mut r) = (0.0, k);
            for i in k + 1..n {
                if w[(i, k)].abs() > lambda {
                    lambda = w[(i, k)].abs();
                    r = i;
                }
            }
            if akk.max(lambda) <= tiny {
                blocks.push((k, Block::One(0.0)));
                inertia.zero += 1;
                k += 1;
                continue;
            }
            let two_by_two = if akk >= BK_ALPHA * lambda {
                false
            } else {
                let sigma = (k..n).filter(|&j| j != r).fold(0.0f64, |m, j| m.max(w[(r, j)].abs()));
                if akk * sigma >= BK_ALPHA * lambda * lambda {
                    false
                } else if w[(r, r)].abs() >= BK_ALPHA * sigma {
                    swap(&mut w, &mut l, &mut perm, k, k, r);
                    false
                } else {
                    swap(&mut w, &mut l, &mut perm, k, k + 1, r);
                    true
                }
            };

            if !two_by_two {
                let d = w[(k, k)];
                if d.abs() <= tiny {
                    inertia.zero += 1;
                    blocks.push((k, Block::One(0.0)));
                    k += 1;
                    continue;
                }
                if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                let col: Vec<f64> = (k + 1..n).map(|i| w[(i, k)] / d).collect();
                for (jj, j) in (k + 1..n).enumerate() {
                    let wjk = w[(j, k)];
                    if wjk == 0.0 {
                        continue;
                    }
                    for (ii, i) in (k + 1..n).enumerate().skip(jj) {
                        let v = w[(i, j)] - col[ii] * wjk;
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
                for (ii, i) in (k + 1..n).enumerate() {
                    l[(i, k)] = col[ii];
                }
                blocks.push((k, Block::One(d)));
                k += 1;
            } else {
                let (a11, a21, a22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                let det = a11 * a22 - a21 * a21;
                if det.abs() <= tiny * a11.abs().max(a21.abs()).max(a22.abs()) {
                    inertia.zero += 2;
                    blocks.push((k, Block::Two(0.0, 0.0, 0.0)));
                    k += 2;
                    continue;
                }
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if a11 + a22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                let m = n - k - 2;
                let mut c1 = vec![0.0; m];
                let mut c2 = vec![0.0; m];
                for (ii, i) in (k + 2..n).enumerate() {
                    let (u, v) = (w[(i, k)], w[(i, k + 1)]);
                    c1[ii] = (u * a22 - v * a21) / det;
                    c2[ii] = (v * a11 - u * a21) / det;
                }
                for (jj, j) in (k + 2..n).enumerate() {
                    let (u, v) = (w[(j, k)], w[(j, k + 1)]);
                    for ii in jj..m {
                        let i = k + 2 + ii;
                        let val = w[(i, j)] - c1[ii] * u - c2[ii] * v;
                        w[(i, j)] = val;
                        w[(j, i)] = val;
                    }
                }
                for ii in 0..m {
                    l[(k + 2 + ii, k)] = c1[ii];
                    l[(k + 2 + ii, k + 1)] = c2[ii];
                }
                blocks.push((k, Block::Two(a11, a21, a22)));
                k += 2;
            }
        }
        Ldlt {
            l,
            blocks,
            perm,
            inertia,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn is_singular(&self) -> bool {
        self.inertia.zero > 0
    }

    /// Solves `A x = b`; zero pivots are skipped (their component is set to 0).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..n {
                    y[i] -= self.l[(i, k)] * yk;
                }
            }
        }
        for &(k, block) in &self.blocks {
            match block {
                Block::One(d) => y[k] = if d == 0.0 { 0.0 } else { y[k] / d },
                Block::Two(a, b, c) => {
                    let det = a * c - b * b;
                    if det == 0.0 {
                        y[k] = 0.0;
                        y[k + 1] = 0.0;
                    } else {
                        let (u, v) = (y[k], y[k + 1]);
                        y[k] = (c * u - b * v) / det;
                        y[k + 1] = (a * v - b * u) / det;
                    }
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for i in k + 1..n {
                s -= self.l[(i, k)] * y[i];
            }
            y[k] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Solve followed by `steps` rounds of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &DMatrix<f64>, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a * nalgebra::DVector::from_column_slice(&x);
            let r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        x
    }
}
