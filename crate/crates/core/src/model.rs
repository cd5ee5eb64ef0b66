//! Static description of the coupled gas and power network.
//!
//! Arcs and plants refer to nodes and busses by id. [`validate_network`]
//! checks that every reference resolves and that the topology is usable;
//! the simulator resolves ids to indices once, after validation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::compressor::CompressorCostModel;
use crate::{Error, Result};

/// Default pipe diameter in m.
pub const DEFAULT_DIAMETER: f64 = 0.6;
/// Default pipe roughness in m.
pub const DEFAULT_ROUGHNESS: f64 = 5.0e-4;
/// Target spatial cell size in m used when a pipe does not set its cell count.
pub const TARGET_CELL_LENGTH: f64 = 1000.0;

/// Pressure law `p = kappa * rho^gamma` and the gas viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasConstants {
    /// Pa·(m³/kg)^gamma; for gamma = 1 this is the squared speed of sound.
    pub kappa: f64,
    pub gamma: f64,
    /// Dynamic viscosity, kg/(m·s).
    pub eta: f64,
    /// Density at reference conditions, kg/m³. Converts volumetric plant
    /// offtake (m³/s) into mass flow.
    pub reference_density: f64,
}

impl Default for GasConstants {
    fn default() -> Self {
        GasConstants { kappa: 340.0 * 340.0, gamma: 1.0, eta: 1.0e-5, reference_density: 0.785 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    /// m
    pub length: f64,
    /// m
    pub diameter: f64,
    /// m
    pub roughness: f64,
    pub cell_count: usize,
}

impl Pipe {
    /// A pipe with default diameter and roughness and `round(length / 1 km)` cells.
    pub fn new(id: &str, from: &str, to: &str, length: f64) -> Self {
        Pipe {
            id: id.into(),
            from_node: from.into(),
            to_node: to.into(),
            length,
            diameter: DEFAULT_DIAMETER,
            roughness: DEFAULT_ROUGHNESS,
            cell_count: default_cell_count(length),
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.diameter * self.diameter / 4.0
    }

    /// Uniform cell length `length / cell_count`.
    pub fn dx(&self) -> f64 {
        self.length / self.cell_count as f64
    }
}

/// `round(length / 1 km)`, at least one cell.
pub fn default_cell_count(length: f64) -> usize {
    let n = libm::round(length / TARGET_CELL_LENGTH);
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GasNodeKind {
    Junction,
    PressureBoundary,
    FlowBoundary,
    PowerCoupling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasNode {
    pub id: String,
    pub kind: GasNodeKind,
}

impl GasNode {
    pub fn new(id: &str, kind: GasNodeKind) -> Self {
        GasNode { id: id.into(), kind }
    }
}

/// An algebraic arc enforcing `p_out - p_in = u(t)` with a single flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressorArc {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    /// Diameter of the connecting pipework; the compressor flow unknown is a
    /// mass flux over this cross section.
    pub diameter: f64,
    pub cost: CompressorCostModel,
}

impl CompressorArc {
    pub fn new(id: &str, from: &str, to: &str) -> Self {
        CompressorArc {
            id: id.into(),
            from_node: from.into(),
            to_node: to.into(),
            diameter: DEFAULT_DIAMETER,
            cost: CompressorCostModel::default(),
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.diameter * self.diameter / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    /// Diagonal admittance entry G_kk, p.u.
    pub self_conductance: f64,
    /// Diagonal admittance entry B_kk, p.u.
    pub self_susceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionLine {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    /// Off-diagonal admittance entry G_kj, p.u.
    pub conductance: f64,
    /// Off-diagonal admittance entry B_kj, p.u.
    pub susceptance: f64,
}

/// Gas-fired plant drawing `a0 + a1 P + a2 P²` (m³/s at reference density)
/// from `gas_node` while injecting real power `P` at `bus`.
#[derive(Debug, Clone, PartialEq)]
pub struct GasPowerPlant {
    pub gas_node: String,
    pub bus: String,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitSystem {
    /// W
    pub base_power: f64,
    /// V
    pub base_voltage: f64,
}

impl Default for PerUnitSystem {
    fn default() -> Self {
        PerUnitSystem { base_power: 100.0e6, base_voltage: 345.0e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GasNetwork {
    pub nodes: Vec<GasNode>,
    pub pipes: Vec<Pipe>,
    pub compressors: Vec<CompressorArc>,
    pub constants: GasConstants,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerGrid {
    pub busses: Vec<Bus>,
    pub lines: Vec<TransmissionLine>,
    pub per_unit: PerUnitSystem,
}

/// The complete coupled description.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    pub gas: GasNetwork,
    pub power: PowerGrid,
    pub plants: Vec<GasPowerPlant>,
}

impl Network {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.gas.nodes.iter().position(|n| n.id == id)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.power.busses.iter().position(|b| b.id == id)
    }

    pub fn compressor_index(&self, id: &str) -> Option<usize> {
        self.gas.compressors.iter().position(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateId { kind: &'static str, id: String },
    UnknownEndpoint { arc: String, node: String },
    UnknownBus { element: String, bus: String },
    SelfLoop { arc: String },
    DanglingNode { node: String },
    NonPositive { entity: String, field: &'static str },
    Negative { entity: String, field: &'static str },
    OutOfRange { entity: String, field: &'static str, requirement: &'static str },
    SlackNotUnique { count: usize },
    DuplicateLine { from: String, to: String },
    BoundaryDegree { node: String, degree: usize },
    PlantNodeKind { node: String },
    CouplingWithoutPlant { node: String },
    CouplingPlantCount { node: String, count: usize },
    NoPressureBoundary,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { kind, id } => write!(f, "duplicate {kind} id {id:?}"),
            Violation::UnknownEndpoint { arc, node } => {
                write!(f, "arc {arc:?}: unknown endpoint {node:?}")
            }
            Violation::UnknownBus { element, bus } => write!(f, "{element}: unknown bus {bus:?}"),
            Violation::SelfLoop { arc } => write!(f, "arc {arc:?} connects a node to itself"),
            Violation::DanglingNode { node } => write!(f, "node {node:?} has no incident arc"),
            Violation::NonPositive { entity, field } => {
                write!(f, "{entity}: {field} must be positive")
            }
            Violation::Negative { entity, field } => {
                write!(f, "{entity}: {field} must be non-negative")
            }
            Violation::OutOfRange { entity, field, requirement } => {
                write!(f, "{entity}: {field} must be {requirement}")
            }
            Violation::SlackNotUnique { count } => {
                write!(f, "slack bus not unique ({count} slack busses)")
            }
            Violation::DuplicateLine { from, to } => {
                write!(f, "more than one line between {from:?} and {to:?}")
            }
            Violation::BoundaryDegree { node, degree } => {
                write!(f, "boundary node {node:?} must have exactly one incident arc (has {degree})")
            }
            Violation::PlantNodeKind { node } => {
                write!(f, "plant gas node {node:?} is not a power-coupling node")
            }
            Violation::CouplingWithoutPlant { node } => {
                write!(f, "power-coupling node {node:?} hosts no plant")
            }
            Violation::CouplingPlantCount { node, count } => {
                write!(f, "power-coupling node {node:?} hosts {count} plants")
            }
            Violation::NoPressureBoundary => write!(f, "gas network has no pressure-boundary node"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks ids, references, parameter signs and node kinds.
pub fn validate_network(network: &Network) -> ValidationReport {
    let mut out = Vec::new();
    let gas = &network.gas;
    let grid = &network.power;

    check_unique(gas.nodes.iter().map(|n| n.id.as_str()), "gas node", &mut out);
    check_unique(
        gas.pipes.iter().map(|p| p.id.as_str()).chain(gas.compressors.iter().map(|c| c.id.as_str())),
        "arc",
        &mut out,
    );
    check_unique(grid.busses.iter().map(|b| b.id.as_str()), "bus", &mut out);
    check_unique(grid.lines.iter().map(|l| l.id.as_str()), "line", &mut out);

    let c = &gas.constants;
    for (field, value) in [("kappa", c.kappa), ("eta", c.eta), ("reference_density", c.reference_density)] {
        if !(value > 0.0) {
            out.push(Violation::NonPositive { entity: "constants".into(), field });
        }
    }
    if !(c.gamma >= 1.0) {
        out.push(Violation::OutOfRange { entity: "constants".into(), field: "gamma", requirement: "at least 1" });
    }
    let pu = &grid.per_unit;
    for (field, value) in [("base_power", pu.base_power), ("base_voltage", pu.base_voltage)] {
        if !(value > 0.0) {
            out.push(Violation::NonPositive { entity: "per_unit".into(), field });
        }
    }

    let mut degree = vec![0usize; gas.nodes.len()];
    let mut arc_ends = |arc: &str, from: &str, to: &str, out: &mut Vec<Violation>| {
        for end in [from, to] {
            match network.node_index(end) {
                Some(i) => degree[i] += 1,
                None => out.push(Violation::UnknownEndpoint { arc: arc.into(), node: end.into() }),
            }
        }
        if from == to {
            out.push(Violation::SelfLoop { arc: arc.into() });
        }
    };
    for p in &gas.pipes {
        arc_ends(&p.id, &p.from_node, &p.to_node, &mut out);
        let entity = format!("pipe {}", p.id);
        if !(p.length > 0.0) {
            out.push(Violation::NonPositive { entity: entity.clone(), field: "length" });
        }
        if !(p.diameter > 0.0) {
            out.push(Violation::NonPositive { entity: entity.clone(), field: "diameter" });
        }
        if !(p.roughness >= 0.0) {
            out.push(Violation::Negative { entity: entity.clone(), field: "roughness" });
        }
        if p.cell_count == 0 {
            out.push(Violation::NonPositive { entity, field: "cell_count" });
        }
    }
    for cs in &gas.compressors {
        arc_ends(&cs.id, &cs.from_node, &cs.to_node, &mut out);
        let entity = format!("compressor {}", cs.id);
        if !(cs.diameter > 0.0) {
            out.push(Violation::NonPositive { entity: entity.clone(), field: "diameter" });
        }
        if !(cs.cost.d1 >= 0.0) {
            out.push(Violation::Negative { entity: entity.clone(), field: "cost.d1" });
        }
        if !(cs.cost.d2 >= 0.0) {
            out.push(Violation::Negative { entity, field: "cost.d2" });
        }
    }
    for (node, &deg) in gas.nodes.iter().zip(&degree) {
        if deg == 0 {
            out.push(Violation::DanglingNode { node: node.id.clone() });
        } else if matches!(node.kind, GasNodeKind::PressureBoundary | GasNodeKind::FlowBoundary) && deg != 1 {
            out.push(Violation::BoundaryDegree { node: node.id.clone(), degree: deg });
        }
    }
    if !gas.nodes.is_empty() && !gas.nodes.iter().any(|n| n.kind == GasNodeKind::PressureBoundary) {
        out.push(Violation::NoPressureBoundary);
    }

    if !grid.busses.is_empty() {
        let slack = grid.busses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack != 1 {
            out.push(Violation::SlackNotUnique { count: slack });
        }
    }
    let mut pairs = BTreeMap::new();
    for l in &grid.lines {
        let mut ok = true;
        for end in [&l.from_bus, &l.to_bus] {
            if network.bus_index(end).is_none() {
                out.push(Violation::UnknownBus { element: format!("line {}", l.id), bus: end.clone() });
                ok = false;
            }
        }
        if l.from_bus == l.to_bus {
            out.push(Violation::SelfLoop { arc: l.id.clone() });
        } else if ok {
            let key = if l.from_bus < l.to_bus {
                (l.from_bus.clone(), l.to_bus.clone())
            } else {
                (l.to_bus.clone(), l.from_bus.clone())
            };
            if pairs.insert(key.clone(), ()).is_some() {
                out.push(Violation::DuplicateLine { from: key.0, to: key.1 });
            }
        }
    }

    let mut plants_at = vec![0usize; gas.nodes.len()];
    for (k, plant) in network.plants.iter().enumerate() {
        let entity = format!("plant {k}");
        match network.node_index(&plant.gas_node) {
            Some(i) => {
                plants_at[i] += 1;
                if gas.nodes[i].kind != GasNodeKind::PowerCoupling {
                    out.push(Violation::PlantNodeKind { node: plant.gas_node.clone() });
                }
            }
            None => out.push(Violation::UnknownEndpoint { arc: entity.clone(), node: plant.gas_node.clone() }),
        }
        if network.bus_index(&plant.bus).is_none() {
            out.push(Violation::UnknownBus { element: entity.clone(), bus: plant.bus.clone() });
        }
        if !(plant.a1 >= 0.0) {
            out.push(Violation::Negative { entity: entity.clone(), field: "a1" });
        }
        if !(plant.a2 >= 0.0) {
            out.push(Violation::Negative { entity, field: "a2" });
        }
    }
    for (node, &count) in gas.nodes.iter().zip(&plants_at) {
        if node.kind == GasNodeKind::PowerCoupling {
            match count {
                0 => out.push(Violation::CouplingWithoutPlant { node: node.id.clone() }),
                1 => {}
                n => out.push(Violation::CouplingPlantCount { node: node.id.clone(), count: n }),
            }
        }
    }

    ValidationReport { violations: out }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, kind: &'static str, out: &mut Vec<Violation>) {
    let mut seen = BTreeMap::new();
    for id in ids {
        if seen.insert(id, ()).is_some() {
            out.push(Violation::DuplicateId { kind, id: id.into() });
        }
    }
}

/// Nodal admittance matrix stored by rows. Entries are `(G, B)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    rows: Vec<Vec<(usize, f64, f64)>>,
}

impl Admittance {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Nonzero entries of row `k`, sorted by column.
    pub fn row(&self, k: usize) -> &[(usize, f64, f64)] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, j: usize) -> (f64, f64) {
        match self.rows[k].binary_search_by_key(&j, |e| e.0) {
            Ok(pos) => (self.rows[k][pos].1, self.rows[k][pos].2),
            Err(_) => (0.0, 0.0),
        }
    }
}

/// Diagonal entries come from the bus rows, off-diagonal entries from the
/// line rows, mirrored. The table values are used as matrix entries as given.
pub fn nodal_admittance(grid: &PowerGrid) -> Result<Admittance> {
    let n = grid.busses.len();
    let lookup = |id: &str| {
        grid.busses.iter().position(|b| b.id == id).ok_or_else(|| Error::invalid(format!("unknown bus {id:?}")))
    };
    let mut rows: Vec<Vec<(usize, f64, f64)>> =
        (0..n).map(|k| vec![(k, grid.busses[k].self_conductance, grid.busses[k].self_susceptance)]).collect();
    for l in &grid.lines {
        let (k, j) = (lookup(&l.from_bus)?, lookup(&l.to_bus)?);
        if k == j {
            return Err(Error::invalid(format!("line {} is a self loop", l.id)));
        }
        rows[k].push((j, l.conductance, l.susceptance));
        rows[j].push((k, l.conductance, l.susceptance));
    }
    for row in &mut rows {
        row.sort_by_key(|e| e.0);
        if row.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("parallel lines between one bus pair"));
        }
    }
    Ok(Admittance { rows })
}
