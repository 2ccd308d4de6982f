use crate::error::{Error, Result};
use crate::model::{FamilyKind, NlpProblem, PrimalDualPoint, Smoothing};

/// Smallest slack assigned when a start point violates or touches a row.
pub const SLACK_FLOOR: f64 = 1e-2;

/// Slack reformulation of the system inequalities: every `g_i ≤ 0` becomes
/// `g_i + s_i = 0` with `s_i > 0` kept interior by the barrier. Nomination
/// bounds stay as simple bounds on `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackForm {
    pub n_primal: usize,
    pub n_slack: usize,
}

/// A primal-dual point of the slacked problem. `y_slack` is the multiplier of
/// `g + s = 0`, `z_slack` the multiplier of `s ≥ 0`; at a KKT point they agree.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackPoint {
    pub primal: Vec<f64>,
    pub slack: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu_e: Vec<f64>,
    pub y_slack: Vec<f64>,
    pub z_slack: Vec<f64>,
}

pub fn to_slack_form(problem: &NlpProblem) -> Result<SlackForm> {
    let g = problem.family(FamilyKind::SystemInequality);
    if let Some(i) = g.rows.iter().position(|r| r.terms.is_empty()) {
        return Err(Error::build(format!("inequality {} is constant", g.labels[i])));
    }
    Ok(SlackForm {
        n_primal: problem.n(),
        n_slack: g.len(),
    })
}

impl SlackForm {
    /// `s = max(−g(z), SLACK_FLOOR)`.
    pub fn initial_slacks(&self, problem: &NlpProblem, primal: &[f64], sm: Smoothing) -> Vec<f64> {
        problem
            .family(FamilyKind::SystemInequality)
            .values(primal, sm)
            .into_iter()
            .map(|g| (-g).max(SLACK_FLOOR))
            .collect()
    }

    /// `g(z) + s`
    pub fn residual(&self, problem: &NlpProblem, primal: &[f64], slack: &[f64], sm: Smoothing) -> Vec<f64> {
        problem
            .family(FamilyKind::SystemInequality)
            .values(primal, sm)
            .into_iter()
            .zip(slack)
            .map(|(g, s)| g + s)
            .collect()
    }

    /// Maps an original KKT point to the slacked one: `s = −g`, both slack
    /// multipliers equal to `ν_i`.
    pub fn lift(&self, problem: &NlpProblem, point: &PrimalDualPoint) -> SlackPoint {
        let slack = problem
            .family(FamilyKind::SystemInequality)
            .values(&point.primal, Smoothing::Exact)
            .into_iter()
            .map(|g| -g)
            .collect();
        SlackPoint {
            primal: point.primal.clone(),
            slack,
            mu_lower: point.mu_lower.clone(),
            mu_upper: point.mu_upper.clone(),
            lambda: point.lambda.clone(),
            nu_e: point.nu_e.clone(),
            y_slack: point.nu_i.clone(),
            z_slack: point.nu_i.clone(),
        }
    }

    /// Reports a slacked point in original coordinates (`ν_i = y_slack`).
    pub fn project(&self, point: &SlackPoint) -> PrimalDualPoint {
        PrimalDualPoint {
            primal: point.primal.clone(),
            mu_lower: point.mu_lower.clone(),
            mu_upper: point.mu_upper.clone(),
            lambda: point.lambda.clone(),
            nu_e: point.nu_e.clone(),
            nu_i: point.y_slack.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NlpBuilder, Row, VariableLayout};

    fn one_row(row: Row) -> Result<NlpProblem> {
        let mut b = NlpBuilder::new(VariableLayout::new(0, 1, 0));
        b.exposed(0, "x", 0.0);
        b.inequality("g", row);
        b.build()
    }

    #[test]
    fn slack_of_inactive_row() {
        let p = one_row(Row::new().linear(0, 1.0).constant(-1.0)).unwrap();
        let form = to_slack_form(&p).unwrap();
        assert_eq!(form.initial_slacks(&p, &[0.0], Smoothing::Exact), vec![1.0]);
        assert_eq!(form.residual(&p, &[0.0], &[1.0], Smoothing::Exact), vec![0.0]);
    }

    #[test]
    fn constant_row_is_rejected() {
        assert!(one_row(Row::new().constant(0.0)).is_err());
    }
}
