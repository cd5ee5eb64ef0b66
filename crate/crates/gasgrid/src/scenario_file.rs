//! Scenario files: time grid, boundary data, pressure bounds and optimizer
//! settings.
//!
//! Times are in hours and pressures in bar. A series is either a number
//! (constant in time) or a list of `[t_hours, value]` breakpoints,
//! interpolated linearly and held constant outside.

use std::collections::BTreeMap;
use std::path::Path;

use gasgrid_core::model::Network;
use gasgrid_core::opt::OptimizerSettings;
use gasgrid_core::sim::{
    BoundaryData, BoundarySchedule, BusBoundary, GasBoundary, PressureBound, Scenario, TimeSeries,
};
use gasgrid_core::{BAR, HOUR};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, KeyPolicy};
use crate::network_file::node_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesFile {
    Constant(f64),
    Points(Vec<[f64; 2]>),
}

impl SeriesFile {
    /// Converts times to s and values with `scale`.
    fn to_series(&self, scale: impl Fn(f64) -> f64, path: &Path, what: &str) -> Result<TimeSeries> {
        match self {
            SeriesFile::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::input(path, format!("{what}: value must be finite")));
                }
                Ok(TimeSeries::constant(scale(*v)))
            }
            SeriesFile::Points(points) => {
                let pts = points.iter().map(|[t, v]| (t * HOUR, scale(*v))).collect();
                TimeSeries::new(pts).map_err(|e| Error::input(path, format!("{what}: {e}")))
            }
        }
    }

    fn from_series(series: &TimeSeries, scale: impl Fn(f64) -> f64) -> Self {
        match series.points() {
            [(t, v)] if *t == 0.0 => SeriesFile::Constant(scale(*v)),
            pts => SeriesFile::Points(pts.iter().map(|(t, v)| [t / HOUR, scale(*v)]).collect()),
        }
    }
}

/// Exactly one entry must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GasBoundaryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_bar: Option<SeriesFile>,
    /// Mass flux leaving the network, kg/(m²·s) over the incident pipe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow_flux: Option<SeriesFile>,
    /// Outflow as volume at reference density, m³/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_flow: Option<SeriesFile>,
}

/// Per-unit setpoints; the bus kind decides which two are required.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BusBoundaryFile {
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<SeriesFile>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<SeriesFile>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<SeriesFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<SeriesFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureBoundFile {
    pub node: String,
    pub min_bar: f64,
}

/// Missing entries take the built-in defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbfgs_memory: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_initial_control: Option<bool>,
}

impl OptimizerFile {
    pub fn to_settings(&self) -> OptimizerSettings {
        let d = OptimizerSettings::default();
        OptimizerSettings {
            mu0: self.mu0.unwrap_or(d.mu0),
            mu_factor: self.mu_factor.unwrap_or(d.mu_factor),
            mu_min: self.mu_min.unwrap_or(d.mu_min),
            tol: self.tol.unwrap_or(d.tol),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner: self.max_inner.unwrap_or(d.max_inner),
            lbfgs_memory: self.lbfgs_memory.unwrap_or(d.lbfgs_memory),
            feasibility_tol_bar: self.feasibility_tol_bar.unwrap_or(d.feasibility_tol_bar),
            free_initial_control: self.free_initial_control.unwrap_or(d.free_initial_control),
        }
    }

    pub fn from_settings(s: &OptimizerSettings) -> Self {
        OptimizerFile {
            mu0: Some(s.mu0),
            mu_factor: Some(s.mu_factor),
            mu_min: Some(s.mu_min),
            tol: Some(s.tol),
            max_outer: Some(s.max_outer),
            max_inner: Some(s.max_inner),
            lbfgs_memory: Some(s.lbfgs_memory),
            feasibility_tol_bar: Some(s.feasibility_tol_bar),
            free_initial_control: Some(s.free_initial_control),
        }
    }
}

fn default_u_max() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub horizon_hours: f64,
    pub dt_hours: f64,
    pub gas_boundary: BTreeMap<String, GasBoundaryFile>,
    pub bus_boundary: BTreeMap<String, BusBoundaryFile>,
    #[serde(default)]
    pub pressure_bounds: Vec<PressureBoundFile>,
    #[serde(default = "default_u_max")]
    pub u_max_bar: f64,
    #[serde(default)]
    pub optimizer: OptimizerFile,
}

/// Mean cross section of the arcs at a node, m².
fn incident_area(network: &Network, node: &str) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in network.gas.pipes.iter().filter(|p| p.from_node == node || p.to_node == node) {
        sum += p.area();
        count += 1;
    }
    for c in network.gas.compressors.iter().filter(|c| c.from_node == node || c.to_node == node) {
        sum += c.area();
        count += 1;
    }
    sum / count.max(1) as f64
}

impl ScenarioFile {
    /// Resolves the file against `network` and checks that it is complete.
    pub fn to_model(&self, network: &Network, path: &Path) -> Result<Scenario> {
        let mut gas = BTreeMap::new();
        for (id, b) in &self.gas_boundary {
            node_of(network, id, path)?;
            let what = format!("gas boundary {id}");
            let entry = match (&b.pressure_bar, &b.outflow_flux, &b.volume_flow) {
                (Some(s), None, None) => GasBoundary::Pressure(s.to_series(|v| v * BAR, path, &what)?),
                (None, Some(s), None) => GasBoundary::Outflow(s.to_series(|v| v, path, &what)?),
                (None, None, Some(s)) => {
                    let rho = network.gas.constants.reference_density;
                    let area = incident_area(network, id);
                    GasBoundary::Outflow(s.to_series(|v| v * rho / area, path, &what)?)
                }
                _ => {
                    return Err(Error::input(
                        path,
                        format!("{what}: give exactly one of pressure_bar, outflow_flux, volume_flow"),
                    ))
                }
            };
            gas.insert(id.clone(), entry);
        }
        let mut busses = BTreeMap::new();
        for (id, b) in &self.bus_boundary {
            let what = format!("bus {id}");
            let conv = |s: &Option<SeriesFile>| s.as_ref().map(|s| s.to_series(|v| v, path, &what)).transpose();
            busses
                .insert(id.clone(), BusBoundary { p: conv(&b.p)?, q: conv(&b.q)?, v: conv(&b.v)?, phi: conv(&b.phi)? });
        }
        let mut pressure_bounds = Vec::new();
        for b in &self.pressure_bounds {
            node_of(network, &b.node, path)
                .map_err(|_| Error::input(path, format!("pressure bound references unknown node {:?}", b.node)))?;
            pressure_bounds.push(PressureBound { node: b.node.clone(), min: b.min_bar * BAR });
        }
        let scenario = Scenario {
            horizon: self.horizon_hours * HOUR,
            dt: self.dt_hours * HOUR,
            boundary: BoundaryData { gas, busses },
            pressure_bounds,
            u_max: self.u_max_bar * BAR,
            optimizer: self.optimizer.to_settings(),
        };
        let wrap = |e: gasgrid_core::Error| Error::input(path, e.to_string());
        scenario.steps().map_err(wrap)?;
        BoundarySchedule::resolve(network, &scenario.boundary).map_err(wrap)?;
        scenario.optimizer.validate().map_err(wrap)?;
        if scenario.u_max.is_nan() || scenario.u_max <= 0.0 {
            return Err(Error::input(path, "u_max_bar must be positive"));
        }
        Ok(scenario)
    }

    /// Fully explicit file form; outflows are written as fluxes.
    pub fn from_model(scenario: &Scenario) -> Self {
        let gas_boundary = scenario
            .boundary
            .gas
            .iter()
            .map(|(id, b)| {
                let f = match b {
                    GasBoundary::Pressure(s) => GasBoundaryFile {
                        pressure_bar: Some(SeriesFile::from_series(s, |v| v / BAR)),
                        ..Default::default()
                    },
                    GasBoundary::Outflow(s) => {
                        GasBoundaryFile { outflow_flux: Some(SeriesFile::from_series(s, |v| v)), ..Default::default() }
                    }
                };
                (id.clone(), f)
            })
            .collect();
        let conv = |s: &Option<TimeSeries>| s.as_ref().map(|s| SeriesFile::from_series(s, |v| v));
        let bus_boundary = scenario
            .boundary
            .busses
            .iter()
            .map(|(id, b)| {
                (id.clone(), BusBoundaryFile { p: conv(&b.p), q: conv(&b.q), v: conv(&b.v), phi: conv(&b.phi) })
            })
            .collect();
        ScenarioFile {
            horizon_hours: scenario.horizon / HOUR,
            dt_hours: scenario.dt / HOUR,
            gas_boundary,
            bus_boundary,
            pressure_bounds: scenario
                .pressure_bounds
                .iter()
                .map(|b| PressureBoundFile { node: b.node.clone(), min_bar: b.min / BAR })
                .collect(),
            u_max_bar: scenario.u_max / BAR,
            optimizer: OptimizerFile::from_settings(&scenario.optimizer),
        }
    }
}

pub fn read_scenario_file(path: &Path, policy: KeyPolicy) -> Result<ScenarioFile> {
    json::read(path, policy)
}

/// Parses a scenario file and resolves it against `network`.
pub fn load_scenario(path: &Path, network: &Network, policy: KeyPolicy) -> Result<Scenario> {
    read_scenario_file(path, policy)?.to_model(network, path)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    json::write(path, &ScenarioFile::from_model(scenario))
}
