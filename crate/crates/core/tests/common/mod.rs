//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod simplex;

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowmarket::formulations::{
    Compressor, GasCase, GasUnits, Generator, Junction, Line, Pipe, PowerCase, PowerNode, PowerUnits, Supply,
};
use flowmarket::io::{parse_case, Case};
use flowmarket::model::{FamilyKind, NlpProblem, Smoothing};

use simplex::{Lp, Outcome, Rel};

pub fn fixture(name: &str) -> Case {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(name);
    parse_case(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn node(id: String, pd: f64) -> PowerNode {
    PowerNode {
        id,
        pd,
        qd: 0.0,
        vmin: None,
        vmax: None,
    }
}

/// Random spanning tree on `n` nodes plus up to `extra` chords, no parallels.
fn random_graph(r: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (r.gen_range(0..i), i)).collect();
    for _ in 0..extra {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.contains(&(a, b)) {
            edges.push((a, b));
        }
    }
    edges
}

// ---------------------------------------------------------------- DC ------

/// LMPs and dispatch of a DC case, solved in shift-factor form.
#[derive(Debug, Clone)]
pub struct DcOracle {
    pub pg: Vec<f64>,
    /// `∂ cost / ∂ pd_i` in $ per unit.
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub nondegenerate: bool,
}

/// Power transfer distribution factors `(E × N)` with the reference node
/// absorbing every injection.
pub fn ptdf(case: &PowerCase) -> DMatrix<f64> {
    let n = case.nodes.len();
    let idx = |id: &str| case.nodes.iter().position(|x| x.id == id).unwrap();
    let r = match &case.reference_node {
        Some(id) => idx(id),
        None => (0..n).min_by(|&a, &b| case.nodes[a].id.cmp(&case.nodes[b].id)).unwrap(),
    };
    let mut b = DMatrix::<f64>::zeros(n, n);
    for l in &case.lines {
        let (f, t) = (idx(&l.from), idx(&l.to));
        let y = 1.0 / l.reactance.unwrap();
        b[(f, f)] += y;
        b[(t, t)] += y;
        b[(f, t)] -= y;
        b[(t, f)] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != r).collect();
    let red = DMatrix::from_fn(n - 1, n - 1, |i, j| b[(keep[i], keep[j])]);
    let inv = red.try_inverse().expect("connected network");
    let mut x = DMatrix::<f64>::zeros(n, n);
    for (a, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            x[(i, j)] = inv[(a, c)];
        }
    }
    DMatrix::from_fn(case.lines.len(), n, |l, i| {
        let line = &case.lines[l];
        (x[(idx(&line.from), i)] - x[(idx(&line.to), i)]) / line.reactance.unwrap()
    })
}

pub fn dc_oracle(case: &PowerCase) -> Option<DcOracle> {
    let base = case.units.base_mva;
    let n = case.nodes.len();
    let g = case.generators.len();
    let idx = |id: &str| case.nodes.iter().position(|x| x.id == id).unwrap();
    let h = ptdf(case);
    let pd: Vec<f64> = case.nodes.iter().map(|x| x.pd / base).collect();
    let mut lp = Lp::new(g);
    for (k, gen) in case.generators.iter().enumerate() {
        lp.c[k] = gen.cost * base;
        lp.lo[k] = gen.pmin / base;
        lp.hi[k] = gen.pmax / base;
    }
    lp.add(vec![1.0; g], Rel::Eq, pd.iter().sum());
    for (l, line) in case.lines.iter().enumerate() {
        let a: Vec<f64> = case.generators.iter().map(|gen| h[(l, idx(&gen.node))]).collect();
        let shift: f64 = (0..n).map(|i| h[(l, i)] * pd[i]).sum();
        let lim = line.limit / base;
        lp.add(a.clone(), Rel::Le, lim + shift);
        lp.add(a.iter().map(|v| -v).collect(), Rel::Le, lim - shift);
    }
    match lp.solve() {
        Outcome::Optimal {
            x,
            obj,
            duals,
            nondegenerate,
        } => {
            let lambda = (0..n)
                .map(|i| {
                    duals[0]
                        + (0..case.lines.len())
                            .map(|l| h[(l, i)] * (duals[1 + 2 * l] - duals[2 + 2 * l]))
                            .sum::<f64>()
                })
                .collect();
            Some(DcOracle {
                pg: x,
                lambda,
                objective: obj,
                nondegenerate,
            })
        }
        _ => None,
    }
}

/// Random 3–6 bus DC case, redrawn until the oracle finds it feasible.
pub fn random_dc(seed: u64) -> PowerCase {
    let mut r = rng(seed);
    loop {
        let n = r.gen_range(3..=6);
        let edges = random_graph(&mut r, n, 2);
        let mut nodes: Vec<PowerNode> = (0..n).map(|i| node(format!("b{}", i + 1), 0.0)).collect();
        let n_gen = r.gen_range(2..=3);
        let mut gen_nodes = Vec::new();
        let generators = (0..n_gen)
            .map(|k| {
                let at = r.gen_range(0..n);
                gen_nodes.push(at);
                Generator {
                    id: format!("g{}", k + 1),
                    node: format!("b{}", at + 1),
                    pmin: 0.0,
                    pmax: r.gen_range(50.0..200.0),
                    cost: r.gen_range(5.0..50.0),
                    qmin: None,
                    qmax: None,
                    qcost: 0.0,
                }
            })
            .collect();
        for (i, nd) in nodes.iter_mut().enumerate() {
            if !gen_nodes.contains(&i) || r.gen_bool(0.3) {
                nd.pd = r.gen_range(10.0..100.0);
            }
        }
        let lines = edges
            .iter()
            .enumerate()
            .map(|(l, &(a, b))| Line {
                id: format!("l{}", l + 1),
                from: format!("b{}", a + 1),
                to: format!("b{}", b + 1),
                reactance: Some(r.gen_range(0.05..0.3)),
                conductance: None,
                susceptance: None,
                shunt_susceptance: 0.0,
                limit: r.gen_range(20.0..120.0),
            })
            .collect();
        let case = PowerCase {
            format_version: 1,
            name: Some(format!("dc_random_{seed}")),
            units: PowerUnits { base_mva: 100.0 },
            reference_node: None,
            nodes,
            generators,
            lines,
            known_solution: None,
        };
        if dc_oracle(&case).is_some() {
            return case;
        }
    }
}

// --------------------------------------------------------------- gas ------

/// Random tree gas network, feasible by construction: the all-from-root
/// flow state is built first and every box is drawn around it and around a
/// shared squared pressure of 16.
pub fn random_gas(seed: u64) -> GasCase {
    let mut r = rng(seed);
    let n = r.gen_range(3..=6);
    let parent: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { r.gen_range(0..i) }).collect();
    let w: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { r.gen_range(0.2..1.0) }).collect();
    let mut subtree = w.clone();
    for i in (1..n).rev() {
        subtree[parent[i]] += subtree[i];
    }
    let n_comp = r.gen_range(1..=2).min(n - 1);
    let mut comp = vec![false; n];
    while comp.iter().filter(|&&c| c).count() < n_comp {
        comp[r.gen_range(1..n)] = true;
    }
    let pc = 16.0;
    let mut pi = vec![0.0; n];
    pi[0] = pc * r.gen_range(1.0..1.1);
    let mut alpha = vec![1.0; n];
    let mut beta = vec![0.0; n];
    for i in 1..n {
        let phi = subtree[i];
        let drop = r.gen_range(2.0..6.0);
        beta[i] = (drop / (phi * phi)).min(1.0);
        let drop = beta[i] * phi * phi;
        if comp[i] {
            alpha[i] = r.gen_range(1.1..1.5);
        }
        pi[i] = alpha[i] * pi[parent[i]] - drop;
        if pi[i] < 4.0 {
            alpha[i] = (4.0 + drop) / pi[parent[i]];
            pi[i] = 4.0;
            comp[i] = true;
        }
    }
    let widen = |lo: f64, hi: f64, r: &mut ChaCha8Rng| {
        let (a, b) = (r.gen_range(0.0..0.1), r.gen_range(0.0..0.1));
        ((lo * (1.0 - a)).sqrt(), (hi * (1.0 + b)).sqrt())
    };
    let leaf = (1..n).rfind(|&i| !parent.contains(&i) && w[i] >= 0.35);
    let junctions = (0..n)
        .map(|i| {
            let (lo, hi) = widen(pi[i].min(pc), pi[i].max(pc), &mut r);
            let supply = if i == 0 {
                Some(Supply {
                    min: 0.0,
                    max: subtree[0] + 1.0,
                    price: r.gen_range(1.0..2.0),
                })
            } else if Some(i) == leaf && r.gen_bool(0.5) {
                Some(Supply {
                    min: 0.0,
                    max: w[i] - 0.15,
                    price: r.gen_range(2.0..4.0),
                })
            } else {
                None
            };
            Junction {
                id: format!("j{}", i + 1),
                withdrawal: w[i],
                pressure_min: lo,
                pressure_max: hi,
                supply,
            }
        })
        .collect();
    let pipes = (1..n)
        .map(|i| {
            let pin = alpha[i] * pi[parent[i]];
            let (lo, hi) = widen(pin.min(pi[i]).min(pc), pin.max(pi[i]).max(pc), &mut r);
            Pipe {
                id: format!("p{i}"),
                from: format!("j{}", parent[i] + 1),
                to: format!("j{}", i + 1),
                resistance: Some(beta[i]),
                physical: None,
                pressure_min: lo,
                pressure_max: hi,
                compressor: comp[i].then(|| Compressor {
                    max_ratio: alpha[i] * (1.0 + r.gen_range(0.0..0.2)),
                    cost: r.gen_range(0.05..0.5),
                }),
            }
        })
        .collect();
    GasCase {
        format_version: 1,
        name: Some(format!("gas_random_{seed}")),
        units: GasUnits {
            pressure_base: 1.0,
            flow_base: 1.0,
        },
        junctions,
        pipes,
        known_solution: None,
    }
}

// ---------------------------------------------------------------- AC ------

/// Random 2–4 bus AC case with a cheap slack-side generator.
pub fn random_ac(seed: u64) -> PowerCase {
    let mut r = rng(seed);
    let n = r.gen_range(2..=4);
    let edges = random_graph(&mut r, n, 1);
    let nodes = (0..n)
        .map(|i| PowerNode {
            id: format!("b{}", i + 1),
            pd: if i == 0 { 0.0 } else { r.gen_range(10.0..60.0) },
            qd: if i == 0 { 0.0 } else { r.gen_range(0.0..20.0) },
            vmin: Some(0.9),
            vmax: Some(1.1),
        })
        .collect();
    let mut generators = vec![Generator {
        id: "g1".into(),
        node: "b1".into(),
        pmin: 0.0,
        pmax: 300.0,
        cost: r.gen_range(10.0..20.0),
        qmin: Some(-200.0),
        qmax: Some(200.0),
        qcost: 0.0,
    }];
    if r.gen_bool(0.6) {
        generators.push(Generator {
            id: "g2".into(),
            node: format!("b{}", r.gen_range(2..=n)),
            pmin: 0.0,
            pmax: 100.0,
            cost: r.gen_range(20.0..40.0),
            qmin: Some(-50.0),
            qmax: Some(50.0),
            qcost: 0.0,
        });
    }
    let lines = edges
        .iter()
        .enumerate()
        .map(|(l, &(a, b))| {
            let (rr, xx) = (r.gen_range(0.01..0.05), r.gen_range(0.05..0.2));
            let d = rr * rr + xx * xx;
            Line {
                id: format!("l{}", l + 1),
                from: format!("b{}", a + 1),
                to: format!("b{}", b + 1),
                reactance: Some(xx),
                conductance: Some(rr / d),
                susceptance: Some(-xx / d),
                shunt_susceptance: r.gen_range(0.0..0.05),
                limit: r.gen_range(60.0..200.0),
            }
        })
        .collect();
    PowerCase {
        format_version: 1,
        name: Some(format!("ac_random_{seed}")),
        units: PowerUnits { base_mva: 100.0 },
        reference_node: None,
        nodes,
        generators,
        lines,
        known_solution: None,
    }
}

// ----------------------------------------------------------- oracles ------

/// Dense `(x, y)`-block Jacobian of a family.
pub fn system_block(problem: &NlpProblem, kind: FamilyKind, z: &[f64]) -> DMatrix<f64> {
    let sys = problem.layout().system();
    let full = problem.jacobian(kind, z, Smoothing::Exact).unwrap().to_dense();
    DMatrix::from_fn(full.nrows(), sys.len(), |i, j| full[(i, sys.start + j)])
}

/// Rank of `∇H` from the eigenvalues of `∇H ∇Hᵀ` and the MFCQ margin from
/// the test simplex.
pub fn dense_mfcq(problem: &NlpProblem, z: &[f64], active_tol: f64) -> (usize, f64) {
    let h = system_block(problem, FamilyKind::SystemEquality, z);
    let rank = if h.nrows() == 0 {
        0
    } else {
        let eig = SymmetricEigen::new(&h * h.transpose()).eigenvalues;
        let sv: Vec<f64> = eig.iter().map(|e| e.max(0.0).sqrt()).collect();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > 1e-8 * smax).count()
    };
    let g = system_block(problem, FamilyKind::SystemInequality, z);
    let gv = problem.family(FamilyKind::SystemInequality).values(z, Smoothing::Exact);
    let n = h.ncols();
    let mut lp = Lp::new(n + 1);
    for j in 0..n {
        lp.lo[j] = -1.0;
        lp.hi[j] = 1.0;
    }
    lp.hi[n] = 1.0;
    lp.c[n] = -1.0;
    for i in 0..h.nrows() {
        let mut a: Vec<f64> = h.row(i).iter().copied().collect();
        a.push(0.0);
        lp.add(a, Rel::Eq, 0.0);
    }
    for (i, &v) in gv.iter().enumerate() {
        if v >= -active_tol {
            let mut a: Vec<f64> = g.row(i).iter().copied().collect();
            a.push(1.0);
            lp.add(a, Rel::Le, 0.0);
        }
    }
    let t = match lp.solve() {
        Outcome::Optimal { x, .. } => x[n],
        other => panic!("oracle LP: {other:?}"),
    };
    (rank, t)
}

/// Largest relative mismatch between the analytic Jacobian of every family
/// and central differences.
pub fn jacobian_fd_error(problem: &NlpProblem, z: &[f64]) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for kind in FamilyKind::ALL {
        let fam = problem.family(kind);
        if fam.is_empty() {
            continue;
        }
        let an = problem.jacobian(kind, z, Smoothing::Exact).unwrap().to_dense();
        for j in 0..z.len() {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += h;
            zm[j] -= h;
            let fp = fam.values(&zp, Smoothing::Exact);
            let fm = fam.values(&zm, Smoothing::Exact);
            for i in 0..fam.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let err = (fd - an[(i, j)]).abs() / an[(i, j)].abs().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    worst
}

/// Newton power flow for a 2-bus line: bus 1 holds `(v1, 0)`, bus 2 draws
/// `(p2, q2)` in per unit. Returns `(v2, θ2, p1, q1)`.
pub fn newton_pf_2bus(g: f64, b: f64, bsh: f64, v1: f64, p2: f64, q2: f64, start: (f64, f64)) -> (f64, f64, f64, f64) {
    // injections at bus 2 into the line: p21 + p2 = 0, q21 + q2 = 0
    let flow = |vi: f64, vj: f64, d: f64| {
        let p = g * vi * vi - g * vi * vj * d.cos() - b * vi * vj * d.sin();
        let q = -(b + bsh / 2.0) * vi * vi + b * vi * vj * d.cos() - g * vi * vj * d.sin();
        (p, q)
    };
    let mismatch = |v2: f64, t2: f64| {
        let (p, q) = flow(v2, v1, t2);
        [p + p2, q + q2]
    };
    let (mut v2, mut t2) = start;
    for _ in 0..50 {
        let f = mismatch(v2, t2);
        if f[0].abs().max(f[1].abs()) < 1e-14 {
            break;
        }
        let e = 1e-7;
        let fv = mismatch(v2 + e, t2);
        let ft = mismatch(v2, t2 + e);
        let j = [
            [(fv[0] - f[0]) / e, (ft[0] - f[0]) / e],
            [(fv[1] - f[1]) / e, (ft[1] - f[1]) / e],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        v2 -= (j[1][1] * f[0] - j[0][1] * f[1]) / det;
        t2 -= (-j[1][0] * f[0] + j[0][0] * f[1]) / det;
    }
    let (p1, q1) = flow(v1, v2, -t2);
    (v2, t2, p1, q1)
}
