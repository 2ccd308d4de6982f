//! Case → problem → solution → audit, as used by the command line and the
//! examples.

use crate::audit::{adequacy_audit, AuditOptions, AuditReport};
use crate::error::{Error, Result};
use crate::io::report::{AuditReportFile, SolveReport};
use crate::io::Case;
use crate::ipm::{solve, SolveOutcome, SolverOptions};
use crate::lp::{from_problem, solve_lp, to_point, LpSolution};
use crate::model::{Formulation, NlpProblem, PrimalDualPoint};
use crate::star::StarOptions;

#[derive(Debug, Clone)]
pub struct Solved {
    pub problem: NlpProblem,
    pub outcome: SolveOutcome,
}

pub fn solve_case(case: &Case, model: Option<Formulation>, options: &SolverOptions) -> Result<Solved> {
    let problem = case.build(model)?;
    let outcome = solve(&problem, options)?;
    Ok(Solved { problem, outcome })
}

impl Solved {
    pub fn report(&self, case: &Case) -> SolveReport {
        SolveReport::new(case.name(), case.kind(), &self.problem, &self.outcome)
    }

    pub fn audit(&self, audit: &AuditOptions, star: &StarOptions) -> Result<AuditReport> {
        adequacy_audit(&self.problem, &self.outcome.point, audit, star)
    }

    pub fn audit_file(&self, case: &Case, report: &AuditReport) -> AuditReportFile {
        AuditReportFile::new(case.name(), case.kind(), &self.problem, &self.outcome, report)
    }
}

/// Simplex solution of a linear problem together with its primal-dual point.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub lp: LpSolution,
    pub point: PrimalDualPoint,
}

pub fn simplex_oracle(problem: &NlpProblem) -> Result<OracleSolution> {
    if !problem.is_linear() {
        return Err(Error::Unsupported("the simplex oracle needs a linear problem".into()));
    }
    let lp = solve_lp(&from_problem(problem)?)?;
    let point = to_point(problem, &lp);
    Ok(OracleSolution { lp, point })
}
