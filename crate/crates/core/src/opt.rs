//! Optimal compressor control under lower pressure bounds.
//!
//! The cost is the trapezoidal integral of the compressor cost rate. Pressure
//! bounds and the control bounds `0 <= u <= u_max` are folded into a log
//! barrier
//!
//! ```text
//! phi_mu(u) = J(u)/T - mu sum_j ln m_j - mu sum_j (ln u_j + ln(u_max - u_j))
//! ```
//!
//! with margins `m_j` and controls in bar. Each barrier problem is minimized
//! with L-BFGS and a backtracking Armijo search, then `mu` is reduced.
//!
//! By default `u_0` is not a decision variable. It fixes the steady initial
//! state and stays at the cheapest constant lift that is feasible over the
//! horizon; its control-bound terms are dropped.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{self, Partials, TrajectoryFunctional};
use crate::compressor::cost_integrand_gradient;
use crate::model::Network;
use crate::sim::{ControlVector, Scenario, Simulator, Trajectory};
use crate::{Error, Result, BAR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub mu0: f64,
    /// `mu <- mu_factor * mu` after each barrier problem.
    pub mu_factor: f64,
    pub mu_min: f64,
    /// Gradient max-norm of the barrier objective ending an inner solve.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub lbfgs_memory: usize,
    /// Allowed bound violation of the result, bar.
    pub feasibility_tol_bar: f64,
    /// Let the optimizer move `u_0`. The initial state is the steady state
    /// under `u_0`, so a free `u_0` buys linepack at no cost before `t = 0`.
    /// When false `u_0` is held at the smallest feasible constant lift.
    pub free_initial_control: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            mu0: 100.0,
            mu_factor: 0.2,
            mu_min: 1e-4,
            tol: 1e-6,
            max_outer: 30,
            max_inner: 200,
            lbfgs_memory: 50,
            feasibility_tol_bar: 1e-3,
            free_initial_control: false,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !(self.mu_min > 0.0) {
            return Err(Error::invalid("mu0 and mu_min must be positive"));
        }
        if !(self.mu_factor > 0.0 && self.mu_factor < 1.0) {
            return Err(Error::invalid("mu_factor must lie in (0, 1)"));
        }
        if !(self.tol > 0.0) || self.max_inner == 0 || self.max_outer == 0 || self.lbfgs_memory == 0 {
            return Err(Error::invalid("tolerance and iteration limits must be positive"));
        }
        Ok(())
    }
}

/// Composite trapezoidal rule on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + (values[0] + values[n - 1]) / 2.0),
    }
}

fn trapezoid_weight(j: usize, points: usize) -> f64 {
    if j == 0 || j + 1 == points {
        0.5
    } else {
        1.0
    }
}

/// Compressor cost rate at state `y` with lifts `u`, and its partials with
/// respect to `(p_in, q, u)` per compressor. The outlet pressure is taken
/// as `p_in + u`, which the compressor equation enforces.
fn cost_rate(sim: &Simulator, y: &[f64], u: &[f64]) -> Result<(f64, Vec<[f64; 3]>)> {
    let sys = sim.system();
    let net = sys.network();
    let idx = sys.index();
    let kappa = net.gas.constants.kappa;
    let mut total = 0.0;
    let mut partials = Vec::with_capacity(u.len());
    for (c, comp) in net.gas.compressors.iter().enumerate() {
        let from = net.node_index(&comp.from_node).expect("validated");
        let p_in = y[idx.node(from)];
        let q = y[idx.compressor(c)];
        let p_out = p_in + u[c];
        let area = comp.area();
        let tag = |e: Error| match e {
            Error::Decompression(_) => Error::Decompression(comp.id.clone()),
            Error::ReverseFlow(_) => Error::ReverseFlow(comp.id.clone()),
            e => e,
        };
        total += crate::compressor::cost_integrand(p_in, p_out, q, area, kappa, &comp.cost).map_err(tag)?;
        let g = cost_integrand_gradient(p_in, p_out, q, area, kappa, &comp.cost).map_err(tag)?;
        partials.push([g[0] + g[1], g[2], g[1]]);
    }
    Ok((total, partials))
}

/// Trapezoidal compressor cost `dt sum_j w_j sum_c rate_c(t_j)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompressorCost;

impl TrajectoryFunctional for CompressorCost {
    fn value(&self, sim: &Simulator, trajectory: &Trajectory) -> Result<f64> {
        let rates = trajectory
            .states
            .iter()
            .enumerate()
            .map(|(j, s)| Ok(cost_rate(sim, &s.values, trajectory.control.at(j))?.0))
            .collect::<Result<Vec<f64>>>()?;
        Ok(trapezoid(&rates, trajectory.dt))
    }

    fn partials(&self, sim: &Simulator, trajectory: &Trajectory) -> Result<Partials> {
        let idx = sim.index();
        let net = sim.system().network();
        let points = trajectory.states.len();
        let nc = idx.n_compressors();
        let mut state = vec![vec![0.0; idx.len()]; points];
        let mut control = vec![0.0; points * nc];
        for (j, s) in trajectory.states.iter().enumerate() {
            let w = trapezoid_weight(j, points) * trajectory.dt;
            let (_, parts) = cost_rate(sim, &s.values, trajectory.control.at(j))?;
            for (c, g) in parts.iter().enumerate() {
                let from = net.node_index(&net.gas.compressors[c].from_node).expect("validated");
                state[j][idx.node(from)] += w * g[0];
                state[j][idx.compressor(c)] += w * g[1];
                control[j * nc + c] += w * g[2];
            }
        }
        Ok(Partials { state, control })
    }
}

/// Objective, pressure bounds and control bounds of one scenario.
#[derive(Debug, Clone)]
pub struct OptimalControlProblem {
    pub simulator: Simulator,
    /// `(node index, minimum pressure in Pa)`.
    pub bounds: Vec<(usize, f64)>,
    /// Pa
    pub u_max: f64,
    pub settings: OptimizerSettings,
}

/// One line of the optimizer log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub outer: usize,
    pub mu: f64,
    /// True objective `J`.
    pub objective: f64,
    pub barrier: f64,
    pub min_margin_bar: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub control: ControlVector,
    pub trajectory: Trajectory,
    pub objective: f64,
    /// Smallest margin to every pressure bound over all time points, bar.
    pub min_margin_bar: f64,
    /// Margin per time point, bar (minimum over bounds).
    pub margins_bar: Vec<f64>,
    pub log: Vec<IterationRecord>,
    /// True objective at the end of each barrier problem.
    pub outer_objectives: Vec<f64>,
    /// Final `mu`.
    pub mu: f64,
    /// Gradient max-norm of the final barrier objective.
    pub grad_norm: f64,
    /// Whether the final inner solve met `tol`.
    pub converged: bool,
}

struct BarrierEval {
    value: f64,
    objective: f64,
    min_margin_bar: f64,
    /// Gradient in bar.
    grad: Vec<f64>,
}

impl OptimalControlProblem {
    pub fn new(network: Network, scenario: &Scenario) -> Result<Self> {
        scenario.optimizer.validate()?;
        if !(scenario.u_max > 0.0) {
            return Err(Error::invalid("u_max must be positive"));
        }
        let mut bounds = Vec::new();
        for b in &scenario.pressure_bounds {
            let node = network
                .node_index(&b.node)
                .ok_or_else(|| Error::invalid(alloc::format!("pressure bound at unknown node {}", b.node)))?;
            if !(b.min > 0.0) {
                return Err(Error::invalid("pressure bounds must be positive"));
            }
            bounds.push((node, b.min));
        }
        let simulator = Simulator::new(network, scenario)?;
        if simulator.index().n_compressors() == 0 {
            return Err(Error::invalid("nothing to optimize: the network has no compressor"));
        }
        Ok(OptimalControlProblem { simulator, bounds, u_max: scenario.u_max, settings: scenario.optimizer })
    }

    fn horizon(&self) -> f64 {
        self.simulator.dt() * self.simulator.steps() as f64
    }

    /// Trapezoidal compressor cost of a run.
    pub fn objective(&self, trajectory: &Trajectory) -> Result<f64> {
        CompressorCost.value(&self.simulator, trajectory)
    }

    /// Margin (bar) to the tightest bound at every time point.
    pub fn margins_bar(&self, trajectory: &Trajectory) -> Vec<f64> {
        let sys = self.simulator.system();
        trajectory
            .states
            .iter()
            .map(|s| {
                self.bounds
                    .iter()
                    .map(|&(node, min)| (sys.node_pressure(&s.values, node) - min) / BAR)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// `J/T - mu sum ln m - mu sum (ln u + ln(u_max - u))`, `+inf` outside
    /// the strictly feasible set or when the simulation fails.
    pub fn barrier_objective(&self, control: &ControlVector, mu: f64) -> Result<f64> {
        Ok(self.evaluate(control, mu, false)?.map_or(f64::INFINITY, |e| e.value))
    }

    /// Barrier value and its gradient with respect to the control in bar,
    /// `None` outside the strictly feasible set.
    pub fn barrier_gradient(&self, control: &ControlVector, mu: f64) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(self.evaluate(control, mu, true)?.map(|e| (e.value, e.grad)))
    }

    /// Number of leading control entries held fixed (the `u_0` block).
    fn pinned(&self) -> usize {
        if self.settings.free_initial_control {
            0
        } else {
            self.simulator.index().n_compressors()
        }
    }

    fn control_barrier(&self, control: &ControlVector) -> Option<f64> {
        let umax = self.u_max / BAR;
        let mut s = 0.0;
        for &u in &control.values()[self.pinned()..] {
            let x = u / BAR;
            if !(x > 0.0 && x < umax) {
                return None;
            }
            s += libm::log(x) + libm::log(umax - x);
        }
        Some(s)
    }

    fn evaluate(&self, control: &ControlVector, mu: f64, want_grad: bool) -> Result<Option<BarrierEval>> {
        let Some(ubar) = self.control_barrier(control) else {
            return Ok(None);
        };
        let traj = match self.simulator.simulate(control) {
            Ok(t) => t,
            Err(Error::DimensionMismatch { expected, got }) => return Err(Error::DimensionMismatch { expected, got }),
            Err(_) => return Ok(None),
        };
        let sys = self.simulator.system();
        let idx = self.simulator.index();
        let t = self.horizon();
        let objective = match self.objective(&traj) {
            Ok(v) => v,
            Err(_) => return Ok(None),
        };
        let mut margin_log = 0.0;
        let mut min_margin = f64::INFINITY;
        for s in &traj.states {
            for &(node, min) in &self.bounds {
                let m = (sys.node_pressure(&s.values, node) - min) / BAR;
                if !(m > 0.0) {
                    return Ok(None);
                }
                min_margin = min_margin.min(m);
                margin_log += libm::log(m);
            }
        }
        let value = objective / t - mu * margin_log - mu * ubar;
        if !want_grad {
            return Ok(Some(BarrierEval { value, objective, min_margin_bar: min_margin, grad: Vec::new() }));
        }
        let mut partials = CompressorCost.partials(&self.simulator, &traj)?;
        for v in partials.state.iter_mut().flatten() {
            *v /= t;
        }
        for v in &mut partials.control {
            *v /= t;
        }
        for (j, s) in traj.states.iter().enumerate() {
            for &(node, min) in &self.bounds {
                let p = sys.node_pressure(&s.values, node);
                partials.state[j][idx.node(node)] -= mu / (p - min);
            }
        }
        let adj = adjoint::adjoint_sweep(&self.simulator, &traj, &partials.state)?;
        let g = adjoint::total_gradient(&self.simulator, &traj, &adj, &partials.control)?;
        let umax = self.u_max / BAR;
        let pinned = self.pinned();
        let grad = g
            .iter()
            .zip(control.values())
            .enumerate()
            .map(|(k, (gj, u))| {
                let x = u / BAR;
                if k < pinned {
                    gj * BAR
                } else {
                    gj * BAR - mu / x + mu / (umax - x)
                }
            })
            .collect();
        Ok(Some(BarrierEval { value, objective, min_margin_bar: min_margin, grad }))
    }

    /// Armijo backtracking along `d` from `x` (bar), starting at the largest
    /// step that keeps 0.5 % of the distance to the control box.
    fn line_search(
        &self,
        x: &[f64],
        cur: &BarrierEval,
        d: &[f64],
        mu: f64,
        umax: f64,
    ) -> Result<Option<(Vec<f64>, f64)>> {
        let slope: f64 = d.iter().zip(&cur.grad).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            return Ok(None);
        }
        let mut alpha: f64 = 1.0;
        for (xi, di) in x.iter().zip(d) {
            if *di < 0.0 {
                alpha = alpha.min(-0.995 * xi / di);
            } else if *di > 0.0 {
                alpha = alpha.min(0.995 * (umax - xi) / di);
            }
        }
        let compressors = self.simulator.index().n_compressors();
        for _ in 0..40 {
            let trial_x: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
            let trial = ControlVector::new(trial_x.iter().map(|v| v * BAR).collect(), compressors)?;
            if let Some(e) = self.evaluate(&trial, mu, false)? {
                if e.value <= cur.value + 1e-4 * alpha * slope {
                    return Ok(Some((trial_x, alpha)));
                }
            }
            alpha *= 0.5;
        }
        Ok(None)
    }

    /// Smallest constant on the 0.5 bar grid, zero included, that keeps
    /// every margin positive over the whole horizon.
    pub fn initial_control(&self) -> Result<f64> {
        self.smallest_feasible_constant(0, None)
    }

    fn smallest_feasible_constant(&self, first: usize, u0: Option<f64>) -> Result<f64> {
        let umax_bar = self.u_max / BAR;
        let nc = self.simulator.index().n_compressors();
        for k in first.. {
            let u = 0.5 * k as f64;
            if u >= umax_bar {
                break;
            }
            let mut c = self.simulator.constant_control(u * BAR);
            if let Some(u0) = u0 {
                c.values_mut()[..nc].iter_mut().for_each(|v| *v = u0);
            }
            if let Ok(t) = self.simulator.simulate(&c) {
                if self.margins_bar(&t).iter().all(|&m| m > 0.0) {
                    return Ok(u * BAR);
                }
            }
        }
        Err(Error::NoFeasibleStart { u_max_bar: umax_bar })
    }

    /// Strictly feasible starting control: the smallest positive constant
    /// on the 0.5 bar grid. Unless `u_0` is free it is held at
    /// [`Self::initial_control`].
    pub fn feasible_start(&self) -> Result<ControlVector> {
        let nc = self.simulator.index().n_compressors();
        let u0 = if self.settings.free_initial_control { None } else { Some(self.initial_control()?) };
        let u = self.smallest_feasible_constant(1, u0)?;
        let mut c = self.simulator.constant_control(u);
        if let Some(u0) = u0 {
            c.values_mut()[..nc].iter_mut().for_each(|v| *v = u0);
        }
        Ok(c)
    }

    pub fn optimize(&self) -> Result<OptimizationResult> {
        let s = self.settings;
        s.validate()?;
        let mut control = self.feasible_start()?;
        let n = control.len();
        let pinned = if s.free_initial_control { 0 } else { control.compressors() };
        let masked = |mut g: Vec<f64>| {
            g[..pinned].iter_mut().for_each(|v| *v = 0.0);
            g
        };
        let umax = self.u_max / BAR;
        let mut mu = s.mu0;
        let mut log = Vec::new();
        let mut outer_objectives = Vec::new();
        let mut iter = 0;
        let mut converged = false;
        let mut last_grad = f64::INFINITY;
        // curvature pairs carry over between barrier problems
        let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

        for outer in 0..s.max_outer {
            let mut cur = self.evaluate(&control, mu, true)?.ok_or(Error::NoFeasibleStart { u_max_bar: umax })?;
            cur.grad = masked(cur.grad);
            let mut inner_ok = false;
            let mut stalled = false;
            for _ in 0..s.max_inner {
                let gnorm = cur.grad.iter().fold(0.0f64, |m, g| m.max(libm::fabs(*g)));
                if gnorm < s.tol {
                    inner_ok = true;
                    break;
                }
                let x: Vec<f64> = control.values().iter().map(|u| u / BAR).collect();
                let mut accepted = self.line_search(&x, &cur, &lbfgs_direction(&cur.grad, &mem), mu, umax)?;
                if accepted.is_none() && !mem.is_empty() {
                    mem.clear();
                    accepted = self.line_search(&x, &cur, &lbfgs_direction(&cur.grad, &mem), mu, umax)?;
                }
                let Some((trial_x, alpha)) = accepted else {
                    stalled = true;
                    break;
                };
                let trial = ControlVector::new(trial_x.iter().map(|v| v * BAR).collect(), control.compressors())?;
                let mut next = self
                    .evaluate(&trial, mu, true)?
                    .ok_or(Error::Inadmissible("accepted line-search point became infeasible".into()))?;
                next.grad = masked(next.grad);
                let sv: Vec<f64> = trial_x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
                let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
                if sy > 1e-12 * norm2(&sv) * norm2(&yv) && sy > 0.0 {
                    if mem.len() == s.lbfgs_memory {
                        mem.pop_front();
                    }
                    mem.push_back((sv, yv, 1.0 / sy));
                }
                control = trial;
                cur = next;
                iter += 1;
                log.push(IterationRecord {
                    iter,
                    outer,
                    mu,
                    objective: cur.objective,
                    barrier: cur.value,
                    min_margin_bar: cur.min_margin_bar,
                    grad_norm: cur.grad.iter().fold(0.0f64, |m, g| m.max(libm::fabs(*g))),
                    step: alpha,
                });
            }
            last_grad = cur.grad.iter().fold(0.0f64, |m, g| m.max(libm::fabs(*g)));
            outer_objectives.push(cur.objective);
            if mu <= s.mu_min * (1.0 + 1e-12) {
                converged = inner_ok;
                // a failed search close to the tolerance is numerical noise
                if stalled && last_grad > 100.0 * s.tol {
                    return Err(Error::InnerStall {
                        outer,
                        mu,
                        grad_norm: last_grad,
                        iterate: control.values().to_vec(),
                    });
                }
                break;
            }
            mu = (mu * s.mu_factor).max(s.mu_min);
        }
        debug_assert_eq!(control.len(), n);
        let trajectory = self.simulator.simulate(&control)?;
        let objective = self.objective(&trajectory)?;
        let margins_bar = self.margins_bar(&trajectory);
        let min_margin_bar = margins_bar.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(OptimizationResult {
            control,
            trajectory,
            objective,
            min_margin_bar,
            margins_bar,
            log,
            outer_objectives,
            mu,
            grad_norm: last_grad,
            converged,
        })
    }
}

fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Two-loop recursion. Without history the steepest-descent direction is
/// scaled to move at most 1 bar.
fn lbfgs_direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * s.iter().zip(&q).map(|(x, z)| x * z).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = match mem.back() {
        Some((s, y, _)) => {
            let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
            sy / y.iter().map(|v| v * v).sum::<f64>()
        }
        None => 1.0 / g.iter().fold(1.0f64, |m, v| m.max(libm::fabs(*v))),
    };
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * y.iter().zip(&q).map(|(x, z)| x * z).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Convenience wrapper building the problem from a network and scenario.
pub fn optimize(network: &Network, scenario: &Scenario) -> Result<OptimizationResult> {
    OptimalControlProblem::new(network.clone(), scenario)?.optimize()
}
