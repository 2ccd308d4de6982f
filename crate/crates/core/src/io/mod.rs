//! Case files, point files and JSON reports.
//!
//! A case file is a [`PowerCase`] or [`GasCase`] document with an extra
//! top-level `"kind"`: `power_dc`, `power_ac` or `gas`.

pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::formulations::{build_ac_opf, build_dc_opf, build_ogf, known_point, GasCase, PowerCase};
use crate::model::{Formulation, NlpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    PowerDc,
    PowerAc,
    Gas,
}

impl CaseKind {
    pub fn formulation(self) -> Formulation {
        match self {
            CaseKind::PowerDc => Formulation::Dc,
            CaseKind::PowerAc => Formulation::Ac,
            CaseKind::Gas => Formulation::Ogf,
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseKind::PowerDc => "power_dc",
            CaseKind::PowerAc => "power_ac",
            CaseKind::Gas => "gas",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    PowerDc(PowerCase),
    PowerAc(PowerCase),
    Gas(GasCase),
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    kind: CaseKind,
    #[serde(flatten)]
    case: &'a T,
}

impl Case {
    pub fn kind(&self) -> CaseKind {
        match self {
            Case::PowerDc(_) => CaseKind::PowerDc,
            Case::PowerAc(_) => CaseKind::PowerAc,
            Case::Gas(_) => CaseKind::Gas,
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Case::PowerDc(c) | Case::PowerAc(c) => c.name.as_deref(),
            Case::Gas(c) => c.name.as_deref(),
        }
    }

    pub fn known_solution(&self) -> Option<&BTreeMap<String, f64>> {
        match self {
            Case::PowerDc(c) | Case::PowerAc(c) => c.known_solution.as_ref(),
            Case::Gas(c) => c.known_solution.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Case::PowerDc(c) | Case::PowerAc(c) => c.validate(),
            Case::Gas(c) => c.validate(),
        }
    }

    /// Builds the problem, rejecting a `model` that does not match the kind.
    pub fn build(&self, model: Option<Formulation>) -> Result<NlpProblem> {
        let native = self.kind().formulation();
        if let Some(m) = model {
            if m != native {
                return Err(Error::IncompatibleModel {
                    kind: self.kind().to_string(),
                    model: m.to_string(),
                });
            }
        }
        match self {
            Case::PowerDc(c) => build_dc_opf(c),
            Case::PowerAc(c) => build_ac_opf(c),
            Case::Gas(c) => build_ogf(c),
        }
    }

    /// The `known_solution` block as a primal vector of `problem`.
    pub fn known_point(&self, problem: &NlpProblem) -> Result<Option<Vec<f64>>> {
        self.known_solution().map(|v| known_point(problem, v)).transpose()
    }

    /// Canonical JSON, `kind` first, then the case fields in declaration
    /// order.
    pub fn to_json(&self) -> Result<String> {
        let kind = self.kind();
        let mut out = match self {
            Case::PowerDc(c) | Case::PowerAc(c) => serde_json::to_string_pretty(&Tagged { kind, case: c }),
            Case::Gas(c) => serde_json::to_string_pretty(&Tagged { kind, case: c }),
        }?;
        out.push('\n');
        Ok(out)
    }
}

fn typed<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        Error::case(if path == "." { "case".to_string() } else { path }, message)
    })
}

pub fn parse_case_str(text: &str) -> Result<Case> {
    let mut value: Value = serde_json::from_str(text)?;
    let map = value
        .as_object_mut()
        .ok_or_else(|| Error::case("case", "top level must be a JSON object"))?;
    let kind = map.remove("kind").ok_or_else(|| Error::case("kind", "missing field"))?;
    let kind: CaseKind = serde_json::from_value(kind).map_err(|e| Error::case("kind", e.to_string()))?;
    let case = match kind {
        CaseKind::PowerDc => Case::PowerDc(typed(value)?),
        CaseKind::PowerAc => Case::PowerAc(typed(value)?),
        CaseKind::Gas => Case::Gas(typed(value)?),
    };
    case.validate()?;
    Ok(case)
}

pub fn parse_case(path: impl AsRef<Path>) -> Result<Case> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_case_str(&text)
}

/// Named scaled primal values, as written by `solve` and read by `star`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFile {
    pub values: BTreeMap<String, f64>,
}

impl PointFile {
    pub fn from_primal(problem: &NlpProblem, primal: &[f64]) -> Self {
        Self {
            values: crate::formulations::named_values(problem, primal),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        typed(serde_json::from_str(&text)?)
    }

    pub fn primal(&self, problem: &NlpProblem) -> Result<Vec<f64>> {
        known_point(problem, &self.values)
    }
}
