//! Solve and audit reports.
//!
//! Reports are rendered through [`render`]: object keys sorted, floats with
//! 17 significant digits, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::audit::{AuditReport, KktReport, Verdict};
use crate::error::Result;
use crate::formulations::named_values;
use crate::ipm::SolveOutcome;
use crate::model::{FamilyKind, NlpProblem};
use crate::star::{ScalingPath, StarMode};

use super::CaseKind;

pub const REPORT_VERSION: u32 = 1;

/// JSON text for any serializable report.
pub fn render<T: Serialize>(report: &T) -> Result<String> {
    let value = serde_json::to_value(report)?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

/// `{:.16e}`: 17 significant digits, exact round trip for every `f64`.
/// Negative zero prints as zero.
pub fn format_float(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                indent(out, depth + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, depth);
            out.push('}');
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub final_stationarity: Option<f64>,
    pub final_feasibility: Option<f64>,
}

impl SolverSummary {
    pub fn new(outcome: &SolveOutcome) -> Self {
        let last = outcome.final_record();
        Self {
            status: outcome.status.to_string(),
            iterations: outcome.iterations,
            objective: outcome.objective,
            final_stationarity: last.map(|r| r.stationarity),
            final_feasibility: last.map(|r| r.feasibility),
        }
    }
}

/// Price and net inflow at one exposed node, scaled and physical.
#[derive(Debug, Clone, Serialize)]
pub struct NodeEntry {
    pub price: f64,
    pub price_physical: f64,
    pub net_inflow: f64,
    pub net_inflow_physical: f64,
}

fn node_entries(problem: &NlpProblem, lambda: &[f64], x: &[f64]) -> BTreeMap<String, NodeEntry> {
    let u = problem.units();
    let names = &problem.variable_names()[problem.layout().exposed()];
    names
        .iter()
        .zip(lambda.iter().zip(x))
        .map(|(name, (&l, &xi))| {
            (
                name.clone(),
                NodeEntry {
                    price: l,
                    price_physical: l * u.price,
                    net_inflow: xi,
                    net_inflow_physical: xi * u.quantity,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub format_version: u32,
    pub case: Option<String>,
    pub kind: CaseKind,
    pub solver: SolverSummary,
    /// Scaled primal values by variable name.
    pub variables: BTreeMap<String, f64>,
    pub nodes: BTreeMap<String, NodeEntry>,
    /// Multipliers of the system rows by label.
    pub system_duals: BTreeMap<String, f64>,
}

impl SolveReport {
    pub fn new(case: Option<&str>, kind: CaseKind, problem: &NlpProblem, outcome: &SolveOutcome) -> Self {
        let p = &outcome.point;
        let l = problem.layout();
        let mut system_duals = BTreeMap::new();
        for (kind, duals) in [(FamilyKind::SystemEquality, &p.nu_e), (FamilyKind::SystemInequality, &p.nu_i)] {
            for (label, &d) in problem.family(kind).labels.iter().zip(duals) {
                system_duals.insert(label.clone(), d);
            }
        }
        Self {
            format_version: REPORT_VERSION,
            case: case.map(str::to_string),
            kind,
            solver: SolverSummary::new(outcome),
            variables: named_values(problem, &p.primal),
            nodes: node_entries(problem, &p.lambda, p.x(l)),
            system_duals,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MfcqSummary {
    pub holds: bool,
    pub rank_ok: bool,
    pub equality_rows: usize,
    pub equality_rank: usize,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    pub active: Vec<String>,
    pub t_star: Option<f64>,
    pub inconclusive: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RevenueSummary {
    pub revenue: f64,
    pub revenue_physical: f64,
    pub revenue_from_nominations: f64,
    pub tol: f64,
    pub adequate: bool,
    pub nodes: BTreeMap<String, NodeEntry>,
    /// Inequality rents per row family along the scaling velocity.
    pub congestion_rent: Option<BTreeMap<String, f64>>,
    pub objective_term: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StarSummary {
    pub mode: StarMode,
    pub samples: usize,
    pub max_violation: f64,
    pub epsilon_star: Option<f64>,
    pub common_pressure: Option<f64>,
    pub verified: bool,
    pub hypothesis_unmet: Option<String>,
}

impl StarSummary {
    pub fn new(path: &ScalingPath) -> Self {
        Self {
            mode: path.mode,
            samples: path.samples.len(),
            max_violation: path.max_violation,
            epsilon_star: path.epsilon_star,
            common_pressure: path.common_pressure,
            verified: path.verified,
            hypothesis_unmet: path.hypothesis_unmet.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictSummary {
    pub label: String,
    pub reasons: Vec<String>,
}

impl VerdictSummary {
    pub fn new(v: &Verdict) -> Self {
        Self {
            label: v.label().to_string(),
            reasons: v.reasons().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReportFile {
    pub format_version: u32,
    pub case: Option<String>,
    pub kind: CaseKind,
    pub solver: SolverSummary,
    pub kkt: KktReport,
    pub mfcq: MfcqSummary,
    pub revenue: RevenueSummary,
    pub star: Option<StarSummary>,
    pub inequality_rent: Option<f64>,
    pub verdict: VerdictSummary,
}

impl AuditReportFile {
    pub fn new(
        case: Option<&str>,
        kind: CaseKind,
        problem: &NlpProblem,
        outcome: &SolveOutcome,
        audit: &AuditReport,
    ) -> Self {
        let u = problem.units();
        let m = &audit.mfcq;
        let r = &audit.revenue;
        Self {
            format_version: REPORT_VERSION,
            case: case.map(str::to_string),
            kind,
            solver: SolverSummary::new(outcome),
            kkt: audit.kkt.clone(),
            mfcq: MfcqSummary {
                holds: m.holds,
                rank_ok: m.rank_ok,
                equality_rows: m.equality_rows,
                equality_rank: m.equality_rank,
                min_singular_value: m.min_singular_value,
                max_singular_value: m.max_singular_value,
                active: m.active.clone(),
                t_star: m.t_star,
                inconclusive: m.inconclusive.clone(),
            },
            revenue: RevenueSummary {
                revenue: r.revenue,
                revenue_physical: r.revenue * u.price * u.quantity,
                revenue_from_nominations: r.revenue_from_nominations,
                tol: r.tol,
                adequate: r.adequate,
                nodes: node_entries(problem, &r.prices, &r.net_inflow),
                congestion_rent: r.decomposition.as_ref().map(|d| d.families.clone()),
                objective_term: r.decomposition.as_ref().map(|d| d.objective_term),
            },
            star: audit.star.as_ref().map(StarSummary::new),
            inequality_rent: audit.rent_sign.as_ref().map(|c| c.inequality_rent),
            verdict: VerdictSummary::new(&audit.verdict),
        }
    }
}
