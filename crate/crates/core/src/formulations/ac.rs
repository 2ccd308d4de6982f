use crate::error::{Error, Result};
use crate::model::{Formulation, FormulationInfo, NlpBuilder, NlpProblem, Row, Term, UnitScale, VarRole, VariableLayout};

use super::case::PowerCase;

/// Polar AC power flow.
///
/// Each line contributes two directed arcs (from→to and to→from) since AC
/// flows are lossy. Variables: `2G` generator outputs `(p^g, q^g)`, `2N` net
/// injections `(p, q)`, then `N` voltages, `N` angles and `4E` arc flows
/// (`2G + 4N + 4E`). Equalities: `2N` balances, `4E` flow definitions and one
/// reference angle. Inequalities: `2E` apparent-power limits and `2N`
/// voltage bounds.
pub fn build_ac_opf(case: &PowerCase) -> Result<NlpProblem> {
    case.validate()?;
    case.check_connected()?;
    let base = case.units.base_mva;
    let idx = case.node_index();
    let (n, e, g) = (case.nodes.len(), case.lines.len(), case.generators.len());
    let layout = VariableLayout::new(2 * g, 2 * n, 2 * n + 4 * e);
    let v = |i: usize| layout.y(i);
    let th = |i: usize| layout.y(n + i);
    let pa = |a: usize| layout.y(2 * n + a);
    let qa = |a: usize| layout.y(2 * n + 2 * e + a);

    let mut b = NlpBuilder::new(layout);
    let mut objective = Row::new();
    for (k, gen) in case.generators.iter().enumerate() {
        let node = idx[gen.node.as_str()];
        let qmax = gen
            .qmax
            .ok_or_else(|| Error::build(format!("generator {} needs qmax in an AC case", gen.id)))?;
        let qmin = gen.qmin.unwrap_or(0.0);
        if qmin > qmax {
            return Err(Error::build(format!("generator {} has qmin above qmax", gen.id)));
        }
        b.traded(k, format!("pg[{}]", gen.id), node, gen.pmin / base, gen.pmax / base);
        b.traded(g + k, format!("qg[{}]", gen.id), n + node, qmin / base, qmax / base);
        if gen.cost != 0.0 {
            objective = objective.linear(layout.q(k), gen.cost * base);
        }
        if gen.qcost != 0.0 {
            objective = objective.linear(layout.q(g + k), gen.qcost * base);
        }
    }
    b.objective(objective);
    for (i, node) in case.nodes.iter().enumerate() {
        b.exposed(i, format!("p[{}]", node.id), node.pd / base);
        b.exposed(n + i, format!("q[{}]", node.id), node.qd / base);
        b.dependent(i, format!("v[{}]", node.id), VarRole::Voltage, 1.0);
        b.dependent(n + i, format!("theta[{}]", node.id), VarRole::Angle, 0.0);
    }

    // arcs 0..E run from→to, E..2E to→from
    let mut fwd = Vec::with_capacity(e);
    let mut rev = Vec::with_capacity(e);
    for (l, line) in case.lines.iter().enumerate() {
        let (f, t) = (idx[line.from.as_str()], idx[line.to.as_str()]);
        let bs = line
            .susceptance
            .ok_or_else(|| Error::build(format!("line {} needs a susceptance in an AC case", line.id)))?;
        let gs = line.conductance.unwrap_or(0.0);
        if gs == 0.0 && bs == 0.0 {
            return Err(Error::build(format!("line {} has zero series admittance", line.id)));
        }
        fwd.push((l, f, t, gs, bs, format!("{}:{}>{}", line.id, line.from, line.to)));
        rev.push((l, t, f, gs, bs, format!("{}:{}>{}", line.id, line.to, line.from)));
    }
    let arcs: Vec<_> = fwd.into_iter().chain(rev).collect();
    for (a, arc) in arcs.iter().enumerate() {
        b.dependent(2 * n + a, format!("pl[{}]", arc.5), VarRole::Flow, 0.0);
        b.dependent(2 * n + 2 * e + a, format!("ql[{}]", arc.5), VarRole::Flow, 0.0);
    }

    let mut pbal: Vec<Row> = (0..n).map(|i| Row::new().linear(layout.x(i), -1.0)).collect();
    let mut qbal: Vec<Row> = (0..n).map(|i| Row::new().linear(layout.x(n + i), -1.0)).collect();
    for (a, arc) in arcs.iter().enumerate() {
        let i = arc.1;
        pbal[i] = std::mem::take(&mut pbal[i]).linear(pa(a), 1.0);
        qbal[i] = std::mem::take(&mut qbal[i]).linear(qa(a), 1.0);
    }
    for (node, row) in case.nodes.iter().zip(pbal) {
        b.equality(format!("p_balance[{}]", node.id), row);
    }
    for (node, row) in case.nodes.iter().zip(qbal) {
        b.equality(format!("q_balance[{}]", node.id), row);
    }

    let with = |row: Row, coef: f64, term: Term| if coef != 0.0 { row.term(term) } else { row };
    for (a, &(l, i, j, gs, bs, ref name)) in arcs.iter().enumerate() {
        let bsh = case.lines[l].shunt_susceptance;
        let (vi, vj, ti, tj) = (v(i), v(j), th(i), th(j));
        // p_ij = g v_i² − g v_i v_j cos θ_ij − b v_i v_j sin θ_ij
        let mut p = Row::new().linear(pa(a), 1.0);
        p = with(p, gs, Term::Product { a: vi, b: vi, coef: -gs });
        p = with(p, gs, Term::CosDiff { vi, vj, ti, tj, coef: gs });
        p = with(p, bs, Term::SinDiff { vi, vj, ti, tj, coef: bs });
        b.equality(format!("p_flow[{name}]"), p);
        // q_ij = −(b + b_sh/2) v_i² + b v_i v_j cos θ_ij − g v_i v_j sin θ_ij
        let self_b = bs + bsh / 2.0;
        let mut q = Row::new().linear(qa(a), 1.0);
        q = with(q, self_b, Term::Product { a: vi, b: vi, coef: self_b });
        q = with(q, bs, Term::CosDiff { vi, vj, ti, tj, coef: -bs });
        q = with(q, gs, Term::SinDiff { vi, vj, ti, tj, coef: gs });
        b.equality(format!("q_flow[{name}]"), q);
    }
    let r = case.reference_index();
    b.equality(format!("reference[{}]", case.nodes[r].id), Row::new().linear(th(r), 1.0));

    for (a, arc) in arcs.iter().enumerate() {
        let lim = case.lines[arc.0].limit / base;
        b.inequality(
            format!("s_max[{}]", arc.5),
            Row::new()
                .product(pa(a), pa(a), 1.0)
                .product(qa(a), qa(a), 1.0)
                .constant(-lim * lim),
        );
    }
    for (i, node) in case.nodes.iter().enumerate() {
        let (lo, hi) = match (node.vmin, node.vmax) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(Error::build(format!("node {} needs voltage bounds in an AC case", node.id))),
        };
        b.inequality(format!("v_max[{}]", node.id), Row::new().linear(v(i), 1.0).constant(-hi));
        b.inequality(format!("v_min[{}]", node.id), Row::new().linear(v(i), -1.0).constant(lo));
    }
    b.formulation(FormulationInfo {
        kind: Formulation::Ac,
        common_pressure: None,
        units: UnitScale {
            price: 1.0 / base,
            quantity: base,
        },
    });
    b.build()
}
