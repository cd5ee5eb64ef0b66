//! The reference case: six pipes and one compressor of a GasLib-40 subnetwork,
//! the nine-bus grid from MATPOWER's `case9`, and one gas-fired plant linking
//! node S4 to the slack bus N1.
//!
//! Electrical setpoints are in p.u. on a 100 MW base.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{
    Bus, BusKind, CompressorArc, GasConstants, GasNetwork, GasNode, GasNodeKind, GasPowerPlant, Network, PerUnitSystem,
    Pipe, PowerGrid, TransmissionLine,
};
use crate::opt::OptimizerSettings;
use crate::sim::{BoundaryData, BusBoundary, GasBoundary, PressureBound, Scenario, TimeSeries};
use crate::{BAR, HOUR};

/// `(id, from, to, length in m)`.
pub const PIPES: [(&str, &str, &str, f64); 6] = [
    ("P10", "S4", "S20", 20_322.0),
    ("P20", "S5", "S0", 20_635.0),
    ("P21", "S17", "S4", 10_586.0),
    ("P22", "S17", "S8", 10_452.0),
    ("P24", "S8", "S20", 19_303.0),
    ("P25", "S20", "S25", 66_037.0),
];

/// `(id, kind, G_kk, B_kk)`.
const BUSSES: [(&str, BusKind, f64, f64); 9] = [
    ("N1", BusKind::Slack, 0.0, -17.3611),
    ("N2", BusKind::Generator, 0.0, -16.0),
    ("N3", BusKind::Generator, 0.0, -17.0648),
    ("N4", BusKind::Load, 3.3074, -39.3089),
    ("N5", BusKind::Load, 3.2242, -15.8409),
    ("N6", BusKind::Load, 2.4371, -32.1539),
    ("N7", BusKind::Load, 2.7722, -23.3032),
    ("N8", BusKind::Load, 2.8047, -35.4456),
    ("N9", BusKind::Load, 2.5528, -17.3382),
];

/// `(id, from, to, G_kj, B_kj)`.
const LINES: [(&str, &str, &str, f64, f64); 9] = [
    ("TL14", "N1", "N4", 0.0, 17.3611),
    ("TL45", "N4", "N5", -1.9422, 10.5107),
    ("TL56", "N5", "N6", -1.2820, 5.5882),
    ("TL36", "N3", "N6", 0.0, 17.0648),
    ("TL67", "N6", "N7", -1.1551, 9.7843),
    ("TL78", "N7", "N8", -1.6171, 13.6980),
    ("TL82", "N8", "N2", 0.0, 16.0),
    ("TL89", "N8", "N9", -1.1876, 5.9751),
    ("TL94", "N9", "N4", -1.3652, 11.6041),
];

/// Boundary pressure at S5, Pa.
pub const SUPPLY_PRESSURE: f64 = 60.0 * BAR;
/// Lower pressure bound at S25, Pa.
pub const DELIVERY_MIN_PRESSURE: f64 = 41.0 * BAR;
/// Volumetric offtake at S25, m³/s at reference density.
pub const DELIVERY_VOLUME_FLOW: f64 = 100.0;

pub fn network() -> Network {
    use GasNodeKind::*;
    let nodes = [
        ("S0", Junction),
        ("S4", PowerCoupling),
        ("S5", PressureBoundary),
        ("S8", Junction),
        ("S17", Junction),
        ("S20", Junction),
        ("S25", FlowBoundary),
    ]
    .iter()
    .map(|&(id, kind)| GasNode::new(id, kind))
    .collect();
    let pipes = PIPES.iter().map(|&(id, a, b, l)| Pipe::new(id, a, b, l)).collect();
    let gas = GasNetwork {
        nodes,
        pipes,
        compressors: vec![CompressorArc::new("C0", "S0", "S17")],
        constants: GasConstants::default(),
    };
    let power = PowerGrid {
        busses: BUSSES
            .iter()
            .map(|&(id, kind, g, b)| Bus { id: id.into(), kind, self_conductance: g, self_susceptance: b })
            .collect(),
        lines: LINES
            .iter()
            .map(|&(id, a, b, g, s)| TransmissionLine {
                id: id.into(),
                from_bus: a.into(),
                to_bus: b.into(),
                conductance: g,
                susceptance: s,
            })
            .collect(),
        per_unit: PerUnitSystem::default(),
    };
    let plants = vec![GasPowerPlant { gas_node: "S4".into(), bus: "N1".into(), a0: 2.0, a1: 5.0, a2: 10.0 }];
    Network { gas, power, plants }
}

/// Outflow flux at S25 over the P25 cross section, kg/(m²·s).
pub fn delivery_outflow() -> f64 {
    let c = GasConstants::default();
    let area = Pipe::new("P25", "S20", "S25", 1.0).area();
    DELIVERY_VOLUME_FLOW * c.reference_density / area
}

fn constant(v: f64) -> Option<TimeSeries> {
    Some(TimeSeries::constant(v))
}

pub fn boundary() -> BoundaryData {
    let mut gas = BTreeMap::new();
    gas.insert(String::from("S5"), GasBoundary::Pressure(TimeSeries::constant(SUPPLY_PRESSURE)));
    gas.insert(String::from("S25"), GasBoundary::Outflow(TimeSeries::constant(delivery_outflow())));

    let ramp = |a: f64, b: f64| TimeSeries::new(vec![(1.0 * HOUR, a), (1.5 * HOUR, b)]).ok();
    let load = |p: f64, q: f64| BusBoundary { p: constant(p), q: constant(q), ..Default::default() };
    let entries: Vec<(&str, BusBoundary)> = vec![
        ("N1", BusBoundary { v: constant(1.0), phi: constant(0.0), ..Default::default() }),
        ("N2", BusBoundary { p: constant(1.63), v: constant(1.0), ..Default::default() }),
        ("N3", BusBoundary { p: constant(0.85), v: constant(1.0), ..Default::default() }),
        ("N4", load(0.0, 0.0)),
        ("N5", BusBoundary { p: ramp(-0.9, -1.8), q: ramp(-0.3, -0.6), ..Default::default() }),
        ("N6", load(0.0, 0.0)),
        ("N7", load(-1.0, -0.35)),
        ("N8", load(0.0, 0.0)),
        ("N9", load(-1.25, -0.5)),
    ];
    let busses = entries.into_iter().map(|(k, b)| (String::from(k), b)).collect();
    BoundaryData { gas, busses }
}

/// Twelve hours in quarter-hour steps with the 41 bar bound at S25.
pub fn scenario() -> Scenario {
    Scenario {
        horizon: 12.0 * HOUR,
        dt: 0.25 * HOUR,
        boundary: boundary(),
        pressure_bounds: vec![PressureBound { node: "S25".into(), min: DELIVERY_MIN_PRESSURE }],
        u_max: 30.0 * BAR,
        optimizer: OptimizerSettings::default(),
    }
}
