//! Builders turning power and gas case data into [`NlpProblem`]s.

mod ac;
pub mod case;
mod dc;
mod gas;

use std::collections::BTreeMap;

pub use ac::build_ac_opf;
pub use case::{
    Compressor, GasCase, GasUnits, Generator, Junction, Line, Pipe, PipePhysical, PowerCase, PowerNode, PowerUnits,
    Supply, FORMAT_VERSION,
};
pub use dc::build_dc_opf;
pub use gas::{build_ogf, find_common_pressure};

use crate::error::{Error, Result};
use crate::model::NlpProblem;

/// Primal vector assembled from named scaled values; every variable must be
/// present exactly once.
pub fn known_point(problem: &NlpProblem, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let mut z = vec![f64::NAN; problem.n()];
    for (name, &v) in values {
        let j = problem
            .variable_index(name)
            .ok_or_else(|| Error::case(format!("known_solution.{name}"), "unknown variable name"))?;
        z[j] = v;
    }
    if let Some(j) = z.iter().position(|v| v.is_nan()) {
        return Err(Error::case(
            "known_solution",
            format!("missing value for {}", problem.variable_names()[j]),
        ));
    }
    Ok(z)
}

/// Named view of a primal vector, the inverse of [`known_point`].
pub fn named_values(problem: &NlpProblem, primal: &[f64]) -> BTreeMap<String, f64> {
    problem.variable_names().iter().cloned().zip(primal.iter().copied()).collect()
}
