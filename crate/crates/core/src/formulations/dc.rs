use crate::error::{Error, Result};
use crate::model::{Formulation, FormulationInfo, NlpBuilder, NlpProblem, Row, UnitScale, VarRole, VariableLayout};

use super::case::PowerCase;

/// Lossless linearized power flow.
///
/// Variables: `G` generator outputs, `N` net injections, then `N` angles and
/// `E` line flows (`G + 2N + E` in total). Equalities: `N` balances, `E`
/// Ohm's-law rows and one reference angle. Inequalities: `2E` flow limits.
pub fn build_dc_opf(case: &PowerCase) -> Result<NlpProblem> {
    case.validate()?;
    case.check_connected()?;
    let base = case.units.base_mva;
    let idx = case.node_index();
    let (n, e, g) = (case.nodes.len(), case.lines.len(), case.generators.len());
    let layout = VariableLayout::new(g, n, n + e);
    let theta = |i: usize| layout.y(i);
    let flow = |l: usize| layout.y(n + l);

    let mut b = NlpBuilder::new(layout);
    let mut objective = Row::new();
    for (k, gen) in case.generators.iter().enumerate() {
        b.traded(k, format!("pg[{}]", gen.id), idx[gen.node.as_str()], gen.pmin / base, gen.pmax / base);
        if gen.cost != 0.0 {
            objective = objective.linear(layout.q(k), gen.cost * base);
        }
    }
    b.objective(objective);
    for (i, node) in case.nodes.iter().enumerate() {
        b.exposed(i, format!("p[{}]", node.id), node.pd / base);
        b.dependent(i, format!("theta[{}]", node.id), VarRole::Angle, 0.0);
    }
    for (l, line) in case.lines.iter().enumerate() {
        b.dependent(n + l, format!("pl[{}]", line.id), VarRole::Flow, 0.0);
    }

    let mut balance: Vec<Row> = (0..n).map(|i| Row::new().linear(layout.x(i), -1.0)).collect();
    for (l, line) in case.lines.iter().enumerate() {
        let (f, t) = (idx[line.from.as_str()], idx[line.to.as_str()]);
        balance[f] = std::mem::take(&mut balance[f]).linear(flow(l), 1.0);
        balance[t] = std::mem::take(&mut balance[t]).linear(flow(l), -1.0);
    }
    for (node, row) in case.nodes.iter().zip(balance) {
        b.equality(format!("balance[{}]", node.id), row);
    }
    for (l, line) in case.lines.iter().enumerate() {
        let z = match line.reactance {
            Some(z) if z > 0.0 => z,
            _ => return Err(Error::build(format!("line {} needs a positive reactance in a DC case", line.id))),
        };
        let (f, t) = (idx[line.from.as_str()], idx[line.to.as_str()]);
        b.equality(
            format!("ohm[{}]", line.id),
            Row::new().linear(theta(f), 1.0).linear(theta(t), -1.0).linear(flow(l), -z),
        );
    }
    let r = case.reference_index();
    b.equality(format!("reference[{}]", case.nodes[r].id), Row::new().linear(theta(r), 1.0));
    for (l, line) in case.lines.iter().enumerate() {
        let lim = line.limit / base;
        b.inequality(format!("flow_max[{}]", line.id), Row::new().linear(flow(l), 1.0).constant(-lim));
        b.inequality(format!("flow_min[{}]", line.id), Row::new().linear(flow(l), -1.0).constant(-lim));
    }
    b.formulation(FormulationInfo {
        kind: Formulation::Dc,
        common_pressure: None,
        units: UnitScale {
            price: 1.0 / base,
            quantity: base,
        },
    });
    b.build()
}
