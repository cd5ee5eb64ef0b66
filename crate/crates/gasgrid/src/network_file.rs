//! Network files: gas nodes, pipes, compressors, busses, lines and plants.
//!
//! Lengths, diameters and roughness are in m, electrical data in p.u.

use std::path::Path;

use gasgrid_core::compressor::CompressorCostModel;
use gasgrid_core::model::{
    default_cell_count, validate_network, Bus, BusKind, CompressorArc, GasConstants, GasNetwork, GasNode, GasNodeKind,
    GasPowerPlant, Network, PerUnitSystem, Pipe, PowerGrid, TransmissionLine, DEFAULT_DIAMETER, DEFAULT_ROUGHNESS,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, KeyPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default)]
    pub constants: ConstantsFile,
    #[serde(default)]
    pub per_unit: PerUnitFile,
    pub gas_nodes: Vec<GasNodeFile>,
    pub pipes: Vec<PipeFile>,
    #[serde(default)]
    pub compressors: Vec<CompressorFile>,
    pub busses: Vec<BusFile>,
    #[serde(default)]
    pub lines: Vec<LineFile>,
    #[serde(default)]
    pub plants: Vec<PlantFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantsFile {
    pub kappa: f64,
    pub gamma: f64,
    /// Dynamic viscosity, kg/(m·s).
    pub eta: f64,
    pub reference_density: f64,
}

impl Default for ConstantsFile {
    fn default() -> Self {
        let c = GasConstants::default();
        ConstantsFile { kappa: c.kappa, gamma: c.gamma, eta: c.eta, reference_density: c.reference_density }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerUnitFile {
    pub base_power_mw: f64,
    pub base_voltage_kv: f64,
}

impl Default for PerUnitFile {
    fn default() -> Self {
        let p = PerUnitSystem::default();
        PerUnitFile { base_power_mw: p.base_power / 1e6, base_voltage_kv: p.base_voltage / 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindFile {
    Junction,
    PressureBoundary,
    FlowBoundary,
    PowerCoupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasNodeFile {
    pub id: String,
    pub kind: NodeKindFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeFile {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roughness_m: Option<f64>,
    /// Defaults to the length in km, rounded, at least one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFile {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressorFile {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKindFile {
    Slack,
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusFile {
    pub id: String,
    pub kind: BusKindFile,
    /// Diagonal conductance G_kk.
    pub g: f64,
    /// Diagonal susceptance B_kk.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFile {
    pub id: String,
    pub from: String,
    pub to: String,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantFile {
    pub gas_node: String,
    pub bus: String,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl NetworkFile {
    /// Model objects, not yet validated.
    pub fn to_model(&self) -> Network {
        let c = &self.constants;
        let gas = GasNetwork {
            nodes: self
                .gas_nodes
                .iter()
                .map(|n| {
                    let kind = match n.kind {
                        NodeKindFile::Junction => GasNodeKind::Junction,
                        NodeKindFile::PressureBoundary => GasNodeKind::PressureBoundary,
                        NodeKindFile::FlowBoundary => GasNodeKind::FlowBoundary,
                        NodeKindFile::PowerCoupling => GasNodeKind::PowerCoupling,
                    };
                    GasNode::new(&n.id, kind)
                })
                .collect(),
            pipes: self
                .pipes
                .iter()
                .map(|p| Pipe {
                    id: p.id.clone(),
                    from_node: p.from.clone(),
                    to_node: p.to.clone(),
                    length: p.length_m,
                    diameter: p.diameter_m.unwrap_or(DEFAULT_DIAMETER),
                    roughness: p.roughness_m.unwrap_or(DEFAULT_ROUGHNESS),
                    cell_count: p.cell_count.unwrap_or_else(|| default_cell_count(p.length_m)),
                })
                .collect(),
            compressors: self
                .compressors
                .iter()
                .map(|k| {
                    let mut arc = CompressorArc::new(&k.id, &k.from, &k.to);
                    if let Some(d) = k.diameter_m {
                        arc.diameter = d;
                    }
                    if let Some(cost) = &k.cost {
                        arc.cost = CompressorCostModel { d0: cost.d0, d1: cost.d1, d2: cost.d2 };
                    }
                    arc
                })
                .collect(),
            constants: GasConstants {
                kappa: c.kappa,
                gamma: c.gamma,
                eta: c.eta,
                reference_density: c.reference_density,
            },
        };
        let power = PowerGrid {
            busses: self
                .busses
                .iter()
                .map(|b| Bus {
                    id: b.id.clone(),
                    kind: match b.kind {
                        BusKindFile::Slack => BusKind::Slack,
                        BusKindFile::Generator => BusKind::Generator,
                        BusKindFile::Load => BusKind::Load,
                    },
                    self_conductance: b.g,
                    self_susceptance: b.b,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| TransmissionLine {
                    id: l.id.clone(),
                    from_bus: l.from.clone(),
                    to_bus: l.to.clone(),
                    conductance: l.g,
                    susceptance: l.b,
                })
                .collect(),
            per_unit: PerUnitSystem {
                base_power: self.per_unit.base_power_mw * 1e6,
                base_voltage: self.per_unit.base_voltage_kv * 1e3,
            },
        };
        let plants = self
            .plants
            .iter()
            .map(|p| GasPowerPlant { gas_node: p.gas_node.clone(), bus: p.bus.clone(), a0: p.a0, a1: p.a1, a2: p.a2 })
            .collect();
        Network { gas, power, plants }
    }

    /// Fully explicit file form of `network`.
    pub fn from_model(network: &Network) -> Self {
        let c = network.gas.constants;
        NetworkFile {
            constants: ConstantsFile {
                kappa: c.kappa,
                gamma: c.gamma,
                eta: c.eta,
                reference_density: c.reference_density,
            },
            per_unit: PerUnitFile {
                base_power_mw: network.power.per_unit.base_power / 1e6,
                base_voltage_kv: network.power.per_unit.base_voltage / 1e3,
            },
            gas_nodes: network
                .gas
                .nodes
                .iter()
                .map(|n| GasNodeFile {
                    id: n.id.clone(),
                    kind: match n.kind {
                        GasNodeKind::Junction => NodeKindFile::Junction,
                        GasNodeKind::PressureBoundary => NodeKindFile::PressureBoundary,
                        GasNodeKind::FlowBoundary => NodeKindFile::FlowBoundary,
                        GasNodeKind::PowerCoupling => NodeKindFile::PowerCoupling,
                    },
                })
                .collect(),
            pipes: network
                .gas
                .pipes
                .iter()
                .map(|p| PipeFile {
                    id: p.id.clone(),
                    from: p.from_node.clone(),
                    to: p.to_node.clone(),
                    length_m: p.length,
                    diameter_m: Some(p.diameter),
                    roughness_m: Some(p.roughness),
                    cell_count: Some(p.cell_count),
                })
                .collect(),
            compressors: network
                .gas
                .compressors
                .iter()
                .map(|k| CompressorFile {
                    id: k.id.clone(),
                    from: k.from_node.clone(),
                    to: k.to_node.clone(),
                    diameter_m: Some(k.diameter),
                    cost: Some(CostFile { d0: k.cost.d0, d1: k.cost.d1, d2: k.cost.d2 }),
                })
                .collect(),
            busses: network
                .power
                .busses
                .iter()
                .map(|b| BusFile {
                    id: b.id.clone(),
                    kind: match b.kind {
                        BusKind::Slack => BusKindFile::Slack,
                        BusKind::Generator => BusKindFile::Generator,
                        BusKind::Load => BusKindFile::Load,
                    },
                    g: b.self_conductance,
                    b: b.self_susceptance,
                })
                .collect(),
            lines: network
                .power
                .lines
                .iter()
                .map(|l| LineFile {
                    id: l.id.clone(),
                    from: l.from_bus.clone(),
                    to: l.to_bus.clone(),
                    g: l.conductance,
                    b: l.susceptance,
                })
                .collect(),
            plants: network
                .plants
                .iter()
                .map(|p| PlantFile { gas_node: p.gas_node.clone(), bus: p.bus.clone(), a0: p.a0, a1: p.a1, a2: p.a2 })
                .collect(),
        }
    }
}

/// Parses a network file without validating it.
pub fn read_network_file(path: &Path, policy: KeyPolicy) -> Result<NetworkFile> {
    json::read(path, policy)
}

/// Parses and validates a network file.
pub fn load_network(path: &Path, policy: KeyPolicy) -> Result<Network> {
    let network = read_network_file(path, policy)?.to_model();
    validate_network(&network).into_result()?;
    Ok(network)
}

pub fn save_network(path: &Path, network: &Network) -> Result<()> {
    json::write(path, &NetworkFile::from_model(network))
}

pub(crate) fn node_of<'a>(network: &'a Network, id: &str, path: &Path) -> Result<&'a GasNode> {
    network.gas.nodes.iter().find(|n| n.id == id).ok_or_else(|| Error::input(path, format!("unknown gas node {id:?}")))
}
