//! The coupled gas and power system, one implicit time step at a time.
//!
//! Every step solves `E(y_{n-1}, y_n, u_n) = 0` for `y_n` with damped Newton.
//! Boundary data is sampled at the new time level. The initial state is the
//! time-derivative-free solution at `t = 0` under the control `u_0`.

mod boundary;
mod index;
mod system;

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use boundary::{
    BoundaryData, BoundarySchedule, BoundaryValues, BusBoundary, GasBoundary, PressureBound, Scenario, TimeSeries,
};
pub use index::{Quantity, VariableIndex, FLOW_SCALE};
pub use system::{NewtonOutcome, NewtonSettings, StepJacobian, System};

use crate::model::Network;
use crate::{Error, Result};

/// Compressor pressure lifts (Pa) at every time grid point, stored time
/// major: entry `j * n_compressors + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    values: Vec<f64>,
    compressors: usize,
}

impl ControlVector {
    pub fn new(values: Vec<f64>, compressors: usize) -> Result<Self> {
        if compressors == 0 && !values.is_empty() {
            return Err(Error::invalid("control values given for a network without compressors"));
        }
        if compressors > 0 && !values.len().is_multiple_of(compressors) {
            return Err(Error::DimensionMismatch {
                expected: values.len().div_ceil(compressors) * compressors,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("control values must be finite"));
        }
        Ok(ControlVector { values, compressors })
    }

    pub fn constant(points: usize, compressors: usize, u: f64) -> Self {
        ControlVector { values: alloc::vec![u; points * compressors], compressors }
    }

    /// Number of time grid points.
    pub fn points(&self) -> usize {
        self.values.len().checked_div(self.compressors).unwrap_or(0)
    }

    pub fn compressors(&self) -> usize {
        self.compressors
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, j: usize) -> &[f64] {
        &self.values[j * self.compressors..(j + 1) * self.compressors]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// All coupled unknowns at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub values: Vec<f64>,
    pub index: Arc<VariableIndex>,
}

/// States at `t_j = j dt` for `j = 0..=M` with the control that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub control: ControlVector,
    pub dt: f64,
    /// Newton updates per state; entry 0 belongs to the steady solve.
    pub iterations: Vec<usize>,
    /// Final scaled residual per state.
    pub residuals: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j].values
    }
}

/// A network and scenario resolved for repeated simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    system: System,
    dt: f64,
    steps: usize,
    boundary: Vec<BoundaryValues>,
    index: Arc<VariableIndex>,
}

impl Simulator {
    pub fn new(network: Network, scenario: &Scenario) -> Result<Self> {
        Self::with_settings(network, scenario, NewtonSettings::default())
    }

    pub fn with_settings(network: Network, scenario: &Scenario, settings: NewtonSettings) -> Result<Self> {
        let steps = scenario.steps()?;
        let schedule = BoundarySchedule::resolve(&network, &scenario.boundary)?;
        let system = System::new(network, settings)?;
        let dt = scenario.dt;
        let boundary = (0..=steps).map(|j| schedule.at(j as f64 * dt)).collect();
        let index = Arc::new(system.index().clone());
        Ok(Simulator { system, dt, steps, boundary, index })
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn index(&self) -> &VariableIndex {
        &self.index
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn boundary(&self, j: usize) -> &BoundaryValues {
        &self.boundary[j]
    }

    pub fn constant_control(&self, u: f64) -> ControlVector {
        ControlVector::constant(self.steps + 1, self.index.n_compressors(), u)
    }

    fn check_control(&self, control: &ControlVector) -> Result<()> {
        let expected = (self.steps + 1) * self.index.n_compressors();
        if control.len() != expected || control.compressors() != self.index.n_compressors() {
            return Err(Error::DimensionMismatch { expected, got: control.len() });
        }
        Ok(())
    }

    /// Steady initial state followed by `M` implicit steps.
    pub fn simulate(&self, control: &ControlVector) -> Result<Trajectory> {
        self.check_control(control)?;
        let first = self
            .system
            .steady_state(&self.boundary[0], control.at(0), self.dt)
            .map_err(|e| Error::StepFailed { step: 0, source: Box::new(e) })?;
        let mut states = Vec::with_capacity(self.steps + 1);
        let mut iterations = Vec::with_capacity(self.steps + 1);
        let mut residuals = Vec::with_capacity(self.steps + 1);
        iterations.push(first.iterations);
        residuals.push(first.residual);
        states.push(SystemState { values: first.state, index: self.index.clone() });
        for n in 1..=self.steps {
            let prev = &states[n - 1].values;
            let out = self
                .system
                .newton_solve_step(prev, control.at(n), &self.boundary[n], self.dt)
                .map_err(|e| Error::StepFailed { step: n, source: Box::new(e) })?;
            iterations.push(out.iterations);
            residuals.push(out.residual);
            states.push(SystemState { values: out.state, index: self.index.clone() });
        }
        Ok(Trajectory { states, control: control.clone(), dt: self.dt, iterations, residuals })
    }

    /// Pressure of `node` at every time level, Pa.
    pub fn pressure_series(&self, trajectory: &Trajectory, node: usize) -> Vec<f64> {
        trajectory.states.iter().map(|s| self.system.node_pressure(&s.values, node)).collect()
    }
}

/// One-shot convenience wrapper around [`Simulator`].
pub fn simulate(network: &Network, scenario: &Scenario, control: &ControlVector) -> Result<Trajectory> {
    Simulator::new(network.clone(), scenario)?.simulate(control)
}
