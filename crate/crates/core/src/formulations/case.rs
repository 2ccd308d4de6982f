//! Declarative case data for power and gas networks, in physical units.
//!
//! Per-unit scaling happens when a problem is built, so a case read from a
//! file serializes back to exactly the same document.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerUnits {
    /// Power base in MVA; loads, limits and capacities are divided by it.
    pub base_mva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerNode {
    pub id: String,
    /// Active load in MW.
    #[serde(default)]
    pub pd: f64,
    /// Reactive load in MVAr (AC only).
    #[serde(default)]
    pub qd: f64,
    /// Voltage magnitude bounds in per unit (AC only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub node: String,
    #[serde(default)]
    pub pmin: f64,
    pub pmax: f64,
    /// Active energy price in $/MWh.
    #[serde(default)]
    pub cost: f64,
    /// Reactive lower bound in MVAr; defaults to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qmax: Option<f64>,
    /// Reactive price in $/MVArh.
    #[serde(default)]
    pub qcost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Series reactance in per unit (DC).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
    /// Series conductance and susceptance in per unit (AC).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub susceptance: Option<f64>,
    /// Total line charging susceptance in per unit (AC).
    #[serde(default)]
    pub shunt_susceptance: f64,
    /// Flow limit in MW (DC) or MVA (AC).
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCase {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub units: PowerUnits,
    /// Node whose angle is fixed to zero; defaults to the smallest id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_node: Option<String>,
    pub nodes: Vec<PowerNode>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
    /// Scaled values keyed by problem variable name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasUnits {
    /// Nominal pressure; squared pressures are scaled by its square.
    pub pressure_base: f64,
    /// Nominal mass flow.
    pub flow_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Supply {
    /// Bounds on injected flow; a negative minimum allows flexible withdrawal.
    pub min: f64,
    pub max: f64,
    /// Price per unit of flow.
    #[serde(default)]
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Junction {
    pub id: String,
    /// Fixed withdrawal.
    #[serde(default)]
    pub withdrawal: f64,
    /// Pressure bounds (not squared).
    pub pressure_min: f64,
    pub pressure_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply: Option<Supply>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipePhysical {
    pub length: f64,
    pub diameter: f64,
    pub friction: f64,
    pub wave_speed: f64,
    /// Cross-section; defaults to `π D² / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
}

impl PipePhysical {
    /// `β = a² λ L / (A² D)`
    pub fn resistance(&self) -> f64 {
        let area = self
            .area
            .unwrap_or(std::f64::consts::PI * self.diameter * self.diameter / 4.0);
        self.wave_speed * self.wave_speed * self.friction * self.length / (area * area * self.diameter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compressor {
    /// Upper bound on the squared-pressure ratio.
    pub max_ratio: f64,
    /// Cost per unit of ratio above 1.
    #[serde(default)]
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Resistance in physical units; alternative to `physical`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resistance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PipePhysical>,
    /// Pressure bounds at both pipe ends (not squared).
    pub pressure_min: f64,
    pub pressure_max: f64,
    /// Compression at the `from` end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressor: Option<Compressor>,
}

impl Pipe {
    pub fn beta(&self) -> Option<f64> {
        self.resistance.or_else(|| self.physical.as_ref().map(PipePhysical::resistance))
    }

    /// True when the pipe carries a compressor with a ratio range above 1.
    pub fn is_compressor(&self) -> bool {
        self.compressor.as_ref().is_some_and(|c| c.max_ratio > 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasCase {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub units: GasUnits,
    pub junctions: Vec<Junction>,
    pub pipes: Vec<Pipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<BTreeMap<String, f64>>,
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::case(path, format!("value {v} is not finite")))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    finite(path, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::case(path, format!("must be positive, got {v}")))
    }
}

fn unique_ids<'a>(section: &str, ids: impl Iterator<Item = &'a str>) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if id.is_empty() {
            return Err(Error::case(format!("{section}[{i}].id"), "empty id"));
        }
        if map.insert(id, i).is_some() {
            return Err(Error::case(format!("{section}[{i}].id"), format!("duplicate id {id}")));
        }
    }
    Ok(map)
}

fn lookup(map: &HashMap<&str, usize>, path: String, id: &str, what: &str) -> Result<usize> {
    map.get(id)
        .copied()
        .ok_or_else(|| Error::case(path, format!("unknown {what} id {id}")))
}

fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::case("format_version", format!("unsupported version {v}, expected {FORMAT_VERSION}")))
    }
}

/// Checks that every node is reachable from the first one.
pub(crate) fn check_connected(n: usize, edges: &[(usize, usize)], names: &[&str]) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        None => Ok(()),
        Some(i) => Err(Error::build(format!(
            "network is disconnected: {} is unreachable from {}",
            names[i], names[0]
        ))),
    }
}

impl PowerCase {
    /// Schema-level checks shared by both power formulations: ids, references,
    /// signs. Formulation-specific requirements are checked by the builders.
    pub fn validate(&self) -> Result<()> {
        check_version(self.format_version)?;
        positive("units.base_mva", self.units.base_mva)?;
        if self.nodes.is_empty() {
            return Err(Error::case("nodes", "at least one node is required"));
        }
        let nodes = unique_ids("nodes", self.nodes.iter().map(|n| n.id.as_str()))?;
        unique_ids("generators", self.generators.iter().map(|g| g.id.as_str()))?;
        unique_ids("lines", self.lines.iter().map(|l| l.id.as_str()))?;
        for (i, n) in self.nodes.iter().enumerate() {
            finite(&format!("nodes[{i}].pd"), n.pd)?;
            finite(&format!("nodes[{i}].qd"), n.qd)?;
            if let (Some(lo), Some(hi)) = (n.vmin, n.vmax) {
                positive(&format!("nodes[{i}].vmin"), lo)?;
                finite(&format!("nodes[{i}].vmax"), hi)?;
                if lo >= hi {
                    return Err(Error::case(format!("nodes[{i}]"), format!("vmin {lo} must be below vmax {hi}")));
                }
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            lookup(&nodes, format!("generators[{k}].node"), &g.node, "node")?;
            finite(&format!("generators[{k}].pmin"), g.pmin)?;
            finite(&format!("generators[{k}].pmax"), g.pmax)?;
            finite(&format!("generators[{k}].cost"), g.cost)?;
            finite(&format!("generators[{k}].qcost"), g.qcost)?;
            if g.pmin > g.pmax {
                return Err(Error::case(format!("generators[{k}]"), format!("pmin {} exceeds pmax {}", g.pmin, g.pmax)));
            }
            if let (Some(lo), Some(hi)) = (g.qmin, g.qmax) {
                if lo > hi {
                    return Err(Error::case(format!("generators[{k}]"), format!("qmin {lo} exceeds qmax {hi}")));
                }
            }
        }
        for (l, line) in self.lines.iter().enumerate() {
            let f = lookup(&nodes, format!("lines[{l}].from"), &line.from, "node")?;
            let t = lookup(&nodes, format!("lines[{l}].to"), &line.to, "node")?;
            if f == t {
                return Err(Error::case(format!("lines[{l}]"), "line connects a node to itself"));
            }
            positive(&format!("lines[{l}].limit"), line.limit)?;
            finite(&format!("lines[{l}].shunt_susceptance"), line.shunt_susceptance)?;
            for (name, v) in [
                ("reactance", line.reactance),
                ("conductance", line.conductance),
                ("susceptance", line.susceptance),
            ] {
                if let Some(v) = v {
                    finite(&format!("lines[{l}].{name}"), v)?;
                }
            }
        }
        if let Some(r) = &self.reference_node {
            lookup(&nodes, "reference_node".into(), r, "node")?;
        }
        Ok(())
    }

    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }

    /// Index of the reference node: the declared one or the smallest id.
    pub fn reference_index(&self) -> usize {
        match &self.reference_node {
            Some(r) => self.nodes.iter().position(|n| &n.id == r).unwrap_or(0),
            None => (0..self.nodes.len()).min_by(|&a, &b| self.nodes[a].id.cmp(&self.nodes[b].id)).unwrap_or(0),
        }
    }

    pub(crate) fn check_connected(&self) -> Result<()> {
        let idx = self.node_index();
        let edges: Vec<(usize, usize)> = self.lines.iter().map(|l| (idx[l.from.as_str()], idx[l.to.as_str()])).collect();
        let names: Vec<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        check_connected(self.nodes.len(), &edges, &names)
    }
}

impl GasCase {
    pub fn validate(&self) -> Result<()> {
        check_version(self.format_version)?;
        positive("units.pressure_base", self.units.pressure_base)?;
        positive("units.flow_base", self.units.flow_base)?;
        if self.junctions.is_empty() {
            return Err(Error::case("junctions", "at least one junction is required"));
        }
        let junctions = unique_ids("junctions", self.junctions.iter().map(|j| j.id.as_str()))?;
        unique_ids("pipes", self.pipes.iter().map(|p| p.id.as_str()))?;
        for (i, j) in self.junctions.iter().enumerate() {
            finite(&format!("junctions[{i}].withdrawal"), j.withdrawal)?;
            positive(&format!("junctions[{i}].pressure_min"), j.pressure_min)?;
            finite(&format!("junctions[{i}].pressure_max"), j.pressure_max)?;
            if j.pressure_min > j.pressure_max {
                return Err(Error::case(format!("junctions[{i}]"), "pressure_min exceeds pressure_max"));
            }
            if let Some(s) = &j.supply {
                finite(&format!("junctions[{i}].supply.min"), s.min)?;
                finite(&format!("junctions[{i}].supply.max"), s.max)?;
                finite(&format!("junctions[{i}].supply.price"), s.price)?;
                if s.min > s.max {
                    return Err(Error::case(format!("junctions[{i}].supply"), "min exceeds max"));
                }
            }
        }
        for (p, pipe) in self.pipes.iter().enumerate() {
            let f = lookup(&junctions, format!("pipes[{p}].from"), &pipe.from, "junction")?;
            let t = lookup(&junctions, format!("pipes[{p}].to"), &pipe.to, "junction")?;
            if f == t {
                return Err(Error::case(format!("pipes[{p}]"), "pipe connects a junction to itself"));
            }
            positive(&format!("pipes[{p}].pressure_min"), pipe.pressure_min)?;
            finite(&format!("pipes[{p}].pressure_max"), pipe.pressure_max)?;
            if pipe.pressure_min > pipe.pressure_max {
                return Err(Error::case(format!("pipes[{p}]"), "pressure_min exceeds pressure_max"));
            }
            match (pipe.resistance, &pipe.physical) {
                (Some(_), Some(_)) => {
                    return Err(Error::case(format!("pipes[{p}]"), "give either resistance or physical, not both"))
                }
                (None, None) => return Err(Error::case(format!("pipes[{p}]"), "missing resistance or physical parameters")),
                (Some(b), None) => finite(&format!("pipes[{p}].resistance"), b)?,
                (None, Some(ph)) => {
                    for (name, v) in [
                        ("length", ph.length),
                        ("diameter", ph.diameter),
                        ("friction", ph.friction),
                        ("wave_speed", ph.wave_speed),
                    ] {
                        positive(&format!("pipes[{p}].physical.{name}"), v)?;
                    }
                    if let Some(a) = ph.area {
                        positive(&format!("pipes[{p}].physical.area"), a)?;
                    }
                }
            }
            if let Some(c) = &pipe.compressor {
                finite(&format!("pipes[{p}].compressor.max_ratio"), c.max_ratio)?;
                finite(&format!("pipes[{p}].compressor.cost"), c.cost)?;
                if c.cost < 0.0 {
                    return Err(Error::case(format!("pipes[{p}].compressor.cost"), "must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    pub fn junction_index(&self) -> HashMap<&str, usize> {
        self.junctions.iter().enumerate().map(|(i, j)| (j.id.as_str(), i)).collect()
    }

    pub(crate) fn check_connected(&self) -> Result<()> {
        let idx = self.junction_index();
        let edges: Vec<(usize, usize)> = self.pipes.iter().map(|p| (idx[p.from.as_str()], idx[p.to.as_str()])).collect();
        let names: Vec<&str> = self.junctions.iter().map(|j| j.id.as_str()).collect();
        check_connected(self.junctions.len(), &edges, &names)
    }

    /// Scaled squared-pressure box `[(p_min/p_base)², (p_max/p_base)²]`.
    pub fn squared_box(&self, pmin: f64, pmax: f64) -> (f64, f64) {
        let b = self.units.pressure_base;
        ((pmin / b).powi(2), (pmax / b).powi(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> PowerCase {
        PowerCase {
            format_version: 1,
            name: None,
            units: PowerUnits { base_mva: 100.0 },
            reference_node: None,
            nodes: vec![
                PowerNode { id: "b2".into(), pd: 50.0, qd: 0.0, vmin: None, vmax: None },
                PowerNode { id: "b1".into(), pd: 0.0, qd: 0.0, vmin: None, vmax: None },
            ],
            generators: vec![Generator {
                id: "g1".into(),
                node: "b1".into(),
                pmin: 0.0,
                pmax: 100.0,
                cost: 10.0,
                qmin: None,
                qmax: None,
                qcost: 0.0,
            }],
            lines: vec![Line {
                id: "l1".into(),
                from: "b1".into(),
                to: "b2".into(),
                reactance: Some(0.1),
                conductance: None,
                susceptance: None,
                shunt_susceptance: 0.0,
                limit: 100.0,
            }],
            known_solution: None,
        }
    }

    #[test]
    fn valid_case_passes_and_reference_defaults_to_smallest_id() {
        let c = two_bus();
        c.validate().unwrap();
        assert_eq!(c.nodes[c.reference_index()].id, "b1");
    }

    #[test]
    fn unknown_node_is_named() {
        let mut c = two_bus();
        c.lines[0].to = "b7".into();
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("unknown node id b7") && e.contains("lines[0].to"), "{e}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut c = two_bus();
        c.nodes[1].id = "b2".into();
        assert!(c.validate().unwrap_err().to_string().contains("duplicate id b2"));
    }

    #[test]
    fn disconnected_network_is_detected() {
        let mut c = two_bus();
        c.nodes.push(PowerNode { id: "b3".into(), pd: 0.0, qd: 0.0, vmin: None, vmax: None });
        assert!(matches!(c.check_connected(), Err(Error::Build(_))));
    }

    #[test]
    fn physical_pipe_resistance() {
        let ph = PipePhysical { length: 2.0, diameter: 0.5, friction: 0.01, wave_speed: 300.0, area: Some(0.25) };
        let beta = 300.0f64.powi(2) * 0.01 * 2.0 / (0.25 * 0.25 * 0.5);
        assert!((ph.resistance() - beta).abs() < 1e-9 * beta);
    }
}
