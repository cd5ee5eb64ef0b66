//! Result files of a run.
//!
//! * `gas_nodes.csv`: `t_hours,node,p_bar,q` with `q` the net mass flow in
//!   kg/s from the node into its arcs (positive at a supply).
//! * `busses.csv`: `t_hours,bus,P,Q,V,phi` in p.u. and rad.
//! * `control.csv`: the control in the input format.
//! * `summary.json`: objective, margins and the steady initial pressures.
//! * `iterations.csv` after an optimization: `iter,mu,objective,min_margin_bar,grad_norm`.
//!
//! Numbers carry nine significant digits; line endings are LF.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gasgrid_core::adjoint::TrajectoryFunctional;
use gasgrid_core::opt::{CompressorCost, OptimizationResult};
use gasgrid_core::sim::{PressureBound, Simulator, Trajectory};
use gasgrid_core::{BAR, HOUR};
use serde::{Deserialize, Serialize};

use crate::control_file::control_csv;
use crate::error::{Error, Result};
use crate::format::{fmt9, round9};
use crate::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub node: String,
    pub min_bar: f64,
    pub min_pressure_bar: f64,
    pub min_margin_bar: f64,
    /// First grid time with pressure below the bound.
    pub first_violation_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub converged: bool,
    pub iterations: usize,
    pub mu: f64,
    pub grad_norm: f64,
    /// Objective at the end of each barrier problem.
    pub outer_objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub dt_hours: f64,
    /// Trapezoidal compressor cost; absent if it cannot be evaluated.
    pub objective: Option<f64>,
    /// Smallest margin over all bounds and time points, bar.
    pub min_margin_bar: Option<f64>,
    /// Margin to the tightest bound per time point, bar.
    pub margins_bar: Vec<f64>,
    pub bounds: Vec<BoundSummary>,
    /// Node pressures of the steady initial state, bar.
    pub steady_state_pressure_bar: BTreeMap<String, f64>,
    pub newton_iterations: Vec<usize>,
    pub max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSummary>,
}

impl Summary {
    pub fn new(
        sim: &Simulator,
        trajectory: &Trajectory,
        bounds: &[PressureBound],
        optimization: Option<&OptimizationResult>,
    ) -> Self {
        let sys = sim.system();
        let net = sys.network();
        let mut margins = vec![f64::INFINITY; trajectory.states.len()];
        let mut bound_summaries = Vec::new();
        for b in bounds {
            let Some(node) = net.node_index(&b.node) else { continue };
            let p = sim.pressure_series(trajectory, node);
            let mut lowest = f64::INFINITY;
            for (m, &pj) in margins.iter_mut().zip(&p) {
                *m = m.min((pj - b.min) / BAR);
                lowest = lowest.min(pj);
            }
            bound_summaries.push(BoundSummary {
                node: b.node.clone(),
                min_bar: round9(b.min / BAR),
                min_pressure_bar: round9(lowest / BAR),
                min_margin_bar: round9((lowest - b.min) / BAR),
                first_violation_hours: p.iter().position(|&pj| pj < b.min).map(|j| round9(sim.time(j) / HOUR)),
            });
        }
        let (margins_bar, min_margin_bar) = if bounds.is_empty() {
            (Vec::new(), None)
        } else {
            let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
            (margins.iter().map(|&m| round9(m)).collect(), Some(round9(min)))
        };
        let steady_state_pressure_bar = net
            .gas
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| (n.id.clone(), round9(sys.node_pressure(trajectory.state(0), k) / BAR)))
            .collect();
        Summary {
            steps: trajectory.steps(),
            dt_hours: round9(trajectory.dt / HOUR),
            objective: CompressorCost.value(sim, trajectory).ok().map(round9),
            min_margin_bar,
            margins_bar,
            bounds: bound_summaries,
            steady_state_pressure_bar,
            newton_iterations: trajectory.iterations.clone(),
            max_residual: round9(trajectory.residuals.iter().copied().fold(0.0, f64::max)),
            optimizer: optimization.map(|r| OptimizerSummary {
                converged: r.converged,
                iterations: r.log.len(),
                mu: round9(r.mu),
                grad_norm: round9(r.grad_norm),
                outer_objectives: r.outer_objectives.iter().map(|&v| round9(v)).collect(),
            }),
        }
    }
}

pub fn gas_nodes_csv(sim: &Simulator, trajectory: &Trajectory) -> String {
    let sys = sim.system();
    let mut out = String::from("t_hours,node,p_bar,q\n");
    for (j, s) in trajectory.states.iter().enumerate() {
        let t = fmt9(sim.time(j) / HOUR);
        for (k, node) in sys.network().gas.nodes.iter().enumerate() {
            let p = sys.node_pressure(&s.values, k) / BAR;
            let q = sys.node_supply(&s.values, k);
            writeln!(out, "{t},{},{},{}", node.id, fmt9(p), fmt9(q)).expect("string write");
        }
    }
    out
}

pub fn busses_csv(sim: &Simulator, trajectory: &Trajectory) -> String {
    let idx = sim.index();
    let mut out = String::from("t_hours,bus,P,Q,V,phi\n");
    for (j, s) in trajectory.states.iter().enumerate() {
        let t = fmt9(sim.time(j) / HOUR);
        for (k, bus) in sim.system().network().power.busses.iter().enumerate() {
            let y = &s.values;
            writeln!(
                out,
                "{t},{},{},{},{},{}",
                bus.id,
                fmt9(y[idx.real_power(k)]),
                fmt9(y[idx.reactive_power(k)]),
                fmt9(y[idx.voltage(k)]),
                fmt9(y[idx.phase(k)])
            )
            .expect("string write");
        }
    }
    out
}

pub fn iterations_csv(result: &OptimizationResult) -> String {
    let mut out = String::from("iter,mu,objective,min_margin_bar,grad_norm\n");
    for r in &result.log {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            fmt9(r.mu),
            fmt9(r.objective),
            fmt9(r.min_margin_bar),
            fmt9(r.grad_norm)
        )
        .expect("string write");
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(Error::io(path))
}

/// Writes every result file into `out_dir`, creating it if needed.
pub fn write_results(
    out_dir: &Path,
    sim: &Simulator,
    trajectory: &Trajectory,
    bounds: &[PressureBound],
    optimization: Option<&OptimizationResult>,
) -> Result<Summary> {
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let network = sim.system().network();
    write(out_dir, "gas_nodes.csv", &gas_nodes_csv(sim, trajectory))?;
    write(out_dir, "busses.csv", &busses_csv(sim, trajectory))?;
    write(out_dir, "control.csv", &control_csv(network, &trajectory.control, trajectory.dt))?;
    if let Some(r) = optimization {
        write(out_dir, "iterations.csv", &iterations_csv(r))?;
    }
    let summary = Summary::new(sim, trajectory, bounds, optimization);
    json::write(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
