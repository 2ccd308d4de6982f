use crate::error::{Error, Result};
use crate::model::{Formulation, FormulationInfo, NlpBuilder, NlpProblem, Row, UnitScale, VarRole, VariableLayout};

use super::case::GasCase;

/// Midpoint of the intersection of every nodal and pipe squared-pressure box
/// (scaled), or `None` when the boxes share no common value.
pub fn find_common_pressure(case: &GasCase) -> Option<f64> {
    let boxes = case
        .junctions
        .iter()
        .map(|j| case.squared_box(j.pressure_min, j.pressure_max))
        .chain(case.pipes.iter().map(|p| case.squared_box(p.pressure_min, p.pressure_max)));
    let (lo, hi) = boxes.fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), (a, b)| (lo.max(a), hi.min(b)));
    (lo <= hi).then_some(0.5 * (lo + hi))
}

/// Steady-state gas flow on squared pressures.
///
/// Variables: `S` supplies (junctions with a `supply` block), `J` net
/// injections, then `J` nodal squared pressures, `2P` pipe-end squared
/// pressures, `P` flows and `C` compression ratios (`S + 2J + 3P + C`).
/// Equalities: `J` balances, `P` Weymouth rows and `2P` end couplings.
/// Inequalities: `4P` pipe-end boxes, `2C` ratio bounds and `2J` nodal boxes.
/// A compressor whose maximum ratio is exactly 1 is treated as a plain pipe.
pub fn build_ogf(case: &GasCase) -> Result<NlpProblem> {
    case.validate()?;
    case.check_connected()?;
    let (pb, fb) = (case.units.pressure_base, case.units.flow_base);
    let idx = case.junction_index();
    let nj = case.junctions.len();
    let np = case.pipes.len();
    let mut betas = Vec::with_capacity(np);
    for pipe in &case.pipes {
        if let Some(c) = &pipe.compressor {
            if c.max_ratio < 1.0 {
                return Err(Error::build(format!("compressor on pipe {} has max_ratio below 1", pipe.id)));
            }
        }
        let beta = pipe.beta().unwrap_or(0.0);
        if !(beta > 0.0) {
            return Err(Error::build(format!("pipe {} needs a positive resistance", pipe.id)));
        }
        betas.push(beta * fb * fb / (pb * pb));
    }
    let supplies: Vec<usize> = (0..nj).filter(|&i| case.junctions[i].supply.is_some()).collect();
    let compressors: Vec<usize> = (0..np).filter(|&p| case.pipes[p].is_compressor()).collect();
    let layout = VariableLayout::new(supplies.len(), nj, nj + 3 * np + compressors.len());
    let pi = |i: usize| layout.y(i);
    let pin = |p: usize| layout.y(nj + 2 * p);
    let pout = |p: usize| layout.y(nj + 2 * p + 1);
    let phi = |p: usize| layout.y(nj + 2 * np + p);
    let alpha = |c: usize| layout.y(nj + 3 * np + c);

    let mut b = NlpBuilder::new(layout);
    let mut objective = Row::new();
    for (k, &i) in supplies.iter().enumerate() {
        let j = &case.junctions[i];
        let s = j.supply.as_ref().expect("filtered on supply");
        b.traded(k, format!("q[{}]", j.id), i, s.min / fb, s.max / fb);
        if s.price != 0.0 {
            objective = objective.linear(layout.q(k), s.price * fb);
        }
    }
    for (i, j) in case.junctions.iter().enumerate() {
        let (lo, hi) = case.squared_box(j.pressure_min, j.pressure_max);
        b.exposed(i, format!("x[{}]", j.id), j.withdrawal / fb);
        b.dependent(i, format!("pi[{}]", j.id), VarRole::NodePressure, 0.5 * (lo + hi));
    }
    for (p, pipe) in case.pipes.iter().enumerate() {
        let (lo, hi) = case.squared_box(pipe.pressure_min, pipe.pressure_max);
        b.dependent(nj + 2 * p, format!("pi_in[{}]", pipe.id), VarRole::PipePressure, 0.5 * (lo + hi));
        b.dependent(nj + 2 * p + 1, format!("pi_out[{}]", pipe.id), VarRole::PipePressure, 0.5 * (lo + hi));
        b.dependent(nj + 2 * np + p, format!("phi[{}]", pipe.id), VarRole::Flow, 0.0);
    }
    for (c, &p) in compressors.iter().enumerate() {
        let pipe = &case.pipes[p];
        let node = idx[pipe.from.as_str()];
        b.dependent(
            nj + 3 * np + c,
            format!("alpha[{}]", pipe.id),
            VarRole::Ratio {
                node: pi(node),
                pipe: pin(p),
            },
            1.0,
        );
        let kappa = pipe.compressor.as_ref().map_or(0.0, |c| c.cost);
        if kappa != 0.0 {
            objective = objective.linear(alpha(c), kappa).constant(-kappa);
        }
    }
    b.objective(objective);

    let mut balance: Vec<Row> = (0..nj).map(|i| Row::new().linear(layout.x(i), -1.0)).collect();
    for (p, pipe) in case.pipes.iter().enumerate() {
        let (f, t) = (idx[pipe.from.as_str()], idx[pipe.to.as_str()]);
        balance[f] = std::mem::take(&mut balance[f]).linear(phi(p), 1.0);
        balance[t] = std::mem::take(&mut balance[t]).linear(phi(p), -1.0);
    }
    for (j, row) in case.junctions.iter().zip(balance) {
        b.equality(format!("balance[{}]", j.id), row);
    }
    for (p, pipe) in case.pipes.iter().enumerate() {
        b.equality(
            format!("weymouth[{}]", pipe.id),
            Row::new()
                .linear(pin(p), 1.0)
                .linear(pout(p), -1.0)
                .signed_square(phi(p), -betas[p]),
        );
    }
    for (p, pipe) in case.pipes.iter().enumerate() {
        let (f, t) = (idx[pipe.from.as_str()], idx[pipe.to.as_str()]);
        let inlet = match compressors.iter().position(|&q| q == p) {
            Some(c) => Row::new().product(pi(f), alpha(c), 1.0).linear(pin(p), -1.0),
            None => Row::new().linear(pi(f), 1.0).linear(pin(p), -1.0),
        };
        b.equality(format!("inlet[{}]", pipe.id), inlet);
        b.equality(format!("outlet[{}]", pipe.id), Row::new().linear(pi(t), 1.0).linear(pout(p), -1.0));
    }

    for (p, pipe) in case.pipes.iter().enumerate() {
        let (lo, hi) = case.squared_box(pipe.pressure_min, pipe.pressure_max);
        for (end, var) in [("in", pin(p)), ("out", pout(p))] {
            b.inequality(format!("pi_{end}_max[{}]", pipe.id), Row::new().linear(var, 1.0).constant(-hi));
            b.inequality(format!("pi_{end}_min[{}]", pipe.id), Row::new().linear(var, -1.0).constant(lo));
        }
    }
    for (c, &p) in compressors.iter().enumerate() {
        let pipe = &case.pipes[p];
        let amax = pipe.compressor.as_ref().map_or(1.0, |c| c.max_ratio);
        b.inequality(format!("alpha_max[{}]", pipe.id), Row::new().linear(alpha(c), 1.0).constant(-amax));
        b.inequality(format!("alpha_min[{}]", pipe.id), Row::new().linear(alpha(c), -1.0).constant(1.0));
    }
    for (i, j) in case.junctions.iter().enumerate() {
        let (lo, hi) = case.squared_box(j.pressure_min, j.pressure_max);
        b.inequality(format!("pi_max[{}]", j.id), Row::new().linear(pi(i), 1.0).constant(-hi));
        b.inequality(format!("pi_min[{}]", j.id), Row::new().linear(pi(i), -1.0).constant(lo));
    }
    b.formulation(FormulationInfo {
        kind: Formulation::Ogf,
        common_pressure: find_common_pressure(case),
        units: UnitScale {
            price: 1.0 / fb,
            quantity: fb,
        },
    });
    b.build()
}
