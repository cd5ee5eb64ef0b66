use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::boundary::BoundaryValues;
use super::index::VariableIndex;
use crate::gas::{self, Level};
use crate::model::{nodal_admittance, validate_network, Admittance, BusKind, GasNodeKind, Network};
use crate::power::{self, PowerQuantity, PowerState};
use crate::sparse::{CscMatrix, SparseLu, Triplets};
use crate::{Error, Result};

/// Damped Newton settings shared by step and steady solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Max-norm of the scaled residual.
    pub tol: f64,
    /// Newton updates per solve.
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Drop `d lambda / d q` from the Jacobian.
    pub frozen_friction: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { tol: 1e-9, max_iter: 50, max_halvings: 30, frozen_friction: false }
    }
}

/// Result of a damped Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub state: Vec<f64>,
    pub iterations: usize,
    /// Final scaled residual max-norm.
    pub residual: f64,
}

/// The three partial derivatives of one step equation `E_n(y_{n-1}, y_n, u_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepJacobian {
    pub next: CscMatrix,
    pub prev: CscMatrix,
    /// `N_y x n_compressors`.
    pub control: CscMatrix,
}

#[derive(Debug, Clone, Copy)]
enum ArcRef {
    Pipe(usize),
    Compressor(usize),
}

/// A validated network with its resolved indexing, ready for assembly.
#[derive(Debug, Clone)]
pub struct System {
    network: Network,
    index: VariableIndex,
    pipe_nodes: Vec<(usize, usize)>,
    compressor_nodes: Vec<(usize, usize)>,
    /// `(gas node, bus, plant)` index triples.
    plant_links: Vec<(usize, usize, usize)>,
    incident: Vec<Vec<ArcRef>>,
    /// Mean cross section of the incident arcs; divides the balance rows.
    node_area: Vec<f64>,
    /// Cross section of the single arc at a flow-boundary node.
    outflow_area: Vec<f64>,
    admittance: Admittance,
    settings: NewtonSettings,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)))
}

impl System {
    pub fn new(network: Network, settings: NewtonSettings) -> Result<Self> {
        validate_network(&network).into_result()?;
        if !(settings.tol > 0.0) {
            return Err(Error::invalid("Newton tolerance must be positive"));
        }
        let node = |id: &str| network.node_index(id).expect("validated endpoint");
        let pipe_nodes: Vec<_> = network.gas.pipes.iter().map(|p| (node(&p.from_node), node(&p.to_node))).collect();
        let compressor_nodes: Vec<_> =
            network.gas.compressors.iter().map(|c| (node(&c.from_node), node(&c.to_node))).collect();
        let plant_links = network
            .plants
            .iter()
            .enumerate()
            .map(|(k, pl)| (node(&pl.gas_node), network.bus_index(&pl.bus).expect("validated bus"), k))
            .collect();
        let n = network.gas.nodes.len();
        let mut incident = vec![Vec::new(); n];
        for (e, &(a, b)) in pipe_nodes.iter().enumerate() {
            incident[a].push(ArcRef::Pipe(e));
            incident[b].push(ArcRef::Pipe(e));
        }
        for (c, &(a, b)) in compressor_nodes.iter().enumerate() {
            incident[a].push(ArcRef::Compressor(c));
            incident[b].push(ArcRef::Compressor(c));
        }
        let area = |arc: &ArcRef| match *arc {
            ArcRef::Pipe(e) => network.gas.pipes[e].area(),
            ArcRef::Compressor(c) => network.gas.compressors[c].area(),
        };
        let node_area: Vec<f64> =
            incident.iter().map(|arcs| arcs.iter().map(area).sum::<f64>() / arcs.len() as f64).collect();
        let outflow_area = network
            .gas
            .nodes
            .iter()
            .zip(&incident)
            .map(|(nd, arcs)| if nd.kind == GasNodeKind::FlowBoundary { area(&arcs[0]) } else { 0.0 })
            .collect();
        let admittance = nodal_admittance(&network.power)?;
        Ok(System {
            index: VariableIndex::new(&network),
            network,
            pipe_nodes,
            compressor_nodes,
            plant_links,
            incident,
            node_area,
            outflow_area,
            admittance,
            settings,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn index(&self) -> &VariableIndex {
        &self.index
    }

    pub fn settings(&self) -> &NewtonSettings {
        &self.settings
    }

    pub fn set_settings(&mut self, settings: NewtonSettings) {
        self.settings = settings;
    }

    pub fn admittance(&self) -> &Admittance {
        &self.admittance
    }

    fn kappa(&self) -> f64 {
        self.network.gas.constants.kappa
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.index.len() {
            return Err(Error::DimensionMismatch { expected: self.index.len(), got: y.len() });
        }
        Ok(())
    }

    fn check_inputs(&self, y: &[f64], u: &[f64], bc: &BoundaryValues) -> Result<()> {
        self.check_len(y)?;
        if u.len() != self.index.n_compressors() {
            return Err(Error::DimensionMismatch { expected: self.index.n_compressors(), got: u.len() });
        }
        if bc.node.len() != self.index.n_nodes() {
            return Err(Error::DimensionMismatch { expected: self.index.n_nodes(), got: bc.node.len() });
        }
        if bc.bus.len() != self.index.n_busses() {
            return Err(Error::DimensionMismatch { expected: self.index.n_busses(), got: bc.bus.len() });
        }
        Ok(())
    }

    /// Scale applied to the momentum rows of pipe `e`.
    fn momentum_scale(&self, e: usize, dt: f64) -> f64 {
        self.network.gas.pipes[e].dx() / (dt * self.kappa())
    }

    /// Residual of the step equations; `sink` receives Jacobian entries
    /// `(level, row, column, value)` when `want_jacobian` is set.
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        prev: &[f64],
        next: &[f64],
        u: &[f64],
        bc: &BoundaryValues,
        dt: f64,
        want_jacobian: bool,
        sink: &mut dyn FnMut(Level, usize, usize, f64),
    ) -> Result<Vec<f64>> {
        self.check_inputs(next, u, bc)?;
        self.check_len(prev)?;
        if !(dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        let idx = &self.index;
        let consts = &self.network.gas.constants;
        let kappa = consts.kappa;
        let nb = idx.n_busses();
        let mut res = vec![0.0; idx.len()];

        for i in 0..idx.n_nodes() {
            let p = next[idx.node(i)];
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Inadmissible(format!("node {}: pressure {p}", self.network.gas.nodes[i].id)));
            }
        }
        for k in 0..nb {
            let v = next[idx.voltage(k)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Inadmissible(format!("bus {}: voltage {v}", self.network.power.busses[k].id)));
            }
        }

        // pipes: box scheme and end pressure coupling
        for (e, pipe) in self.network.gas.pipes.iter().enumerate() {
            let range = idx.pipe_range(e);
            let off = range.start;
            let cells = pipe.cell_count;
            let ms = self.momentum_scale(e, dt);
            {
                let rows = &mut res[off..off + 2 * cells];
                let mut local = |lv: Level, r: usize, c: usize, v: f64| {
                    let s = if r % 2 == 1 { ms } else { 1.0 };
                    sink(lv, off + r, off + c, s * v);
                };
                gas::box_scheme_eval(
                    &prev[range.clone()],
                    &next[range.clone()],
                    pipe,
                    consts,
                    dt,
                    self.settings.frozen_friction,
                    rows,
                    if want_jacobian { Some(&mut local as &mut dyn FnMut(Level, usize, usize, f64)) } else { None },
                )?;
                for r in rows.iter_mut().skip(1).step_by(2) {
                    *r *= ms;
                }
            }
            let (from, to) = self.pipe_nodes[e];
            for (row, point, node) in [(off + 2 * cells, cells, to), (off + 2 * cells + 1, 0, from)] {
                let rho = next[off + 2 * point];
                res[row] = (consts.pressure(rho) - next[idx.node(node)]) / kappa;
                if want_jacobian {
                    sink(Level::Next, row, off + 2 * point, consts.dpressure(rho) / kappa);
                    sink(Level::Next, row, idx.node(node), -1.0 / kappa);
                }
            }
        }

        // gas nodes
        for (i, nd) in self.network.gas.nodes.iter().enumerate() {
            let row = idx.node(i);
            if nd.kind == GasNodeKind::PressureBoundary {
                res[row] = (next[idx.node(i)] - bc.node[i]) / kappa;
                if want_jacobian {
                    sink(Level::Next, row, idx.node(i), 1.0 / kappa);
                }
                continue;
            }
            let na = self.node_area[i];
            let mut balance = 0.0;
            for arc in &self.incident[i] {
                let (col, area, from, to) = match *arc {
                    ArcRef::Pipe(e) => {
                        let r = idx.pipe_range(e);
                        let (from, to) = self.pipe_nodes[e];
                        // inflow at the to end is q_K, outflow at the from end is q_0
                        let col = if to == i { r.end - 1 } else { r.start + 1 };
                        (col, self.network.gas.pipes[e].area(), from, to)
                    }
                    ArcRef::Compressor(c) => {
                        let (from, to) = self.compressor_nodes[c];
                        (idx.compressor(c), self.network.gas.compressors[c].area(), from, to)
                    }
                };
                let sign = if to == i { 1.0 } else { -1.0 };
                debug_assert!(from == i || to == i);
                balance += sign * area * next[col];
                if want_jacobian {
                    sink(Level::Next, row, col, sign * area / na);
                }
            }
            for &(node, bus, k) in &self.plant_links {
                if node != i {
                    continue;
                }
                let plant = &self.network.plants[k];
                let p = next[idx.real_power(bus)];
                let rho0 = self.network.gas.constants.reference_density;
                balance -= power::plant_gas_offtake(plant, p) * rho0;
                if want_jacobian {
                    sink(
                        Level::Next,
                        row,
                        idx.real_power(bus),
                        -power::plant_gas_offtake_derivative(plant, p) * rho0 / na,
                    );
                }
            }
            if nd.kind == GasNodeKind::FlowBoundary {
                balance -= bc.node[i] * self.outflow_area[i];
            }
            res[row] = balance / na;
        }

        // compressors: p_to - p_from - u
        for (c, &(from, to)) in self.compressor_nodes.iter().enumerate() {
            let row = idx.compressor(c);
            res[row] = (next[idx.node(to)] - next[idx.node(from)] - u[c]) / kappa;
            if want_jacobian {
                sink(Level::Next, row, idx.node(to), 1.0 / kappa);
                sink(Level::Next, row, idx.node(from), -1.0 / kappa);
            }
        }

        // powerflow
        if nb > 0 {
            let v = &next[idx.voltage(0)..idx.voltage(0) + nb];
            let phi = &next[idx.phase(0)..idx.phase(0) + nb];
            let (pc, qc) = power::computed_injections(v, phi, &self.admittance);
            for k in 0..nb {
                res[idx.voltage(k)] = next[idx.real_power(k)] - pc[k];
                res[idx.phase(k)] = next[idx.reactive_power(k)] - qc[k];
            }
            if want_jacobian {
                power::write_powerflow_jacobian(v, phi, &self.admittance, |r, var, val| {
                    let row = if r % 2 == 0 { idx.voltage(r / 2) } else { idx.phase(r / 2) };
                    let col = match var.quantity {
                        PowerQuantity::Voltage => idx.voltage(var.bus),
                        PowerQuantity::Phase => idx.phase(var.bus),
                        PowerQuantity::Real => idx.real_power(var.bus),
                        PowerQuantity::Reactive => idx.reactive_power(var.bus),
                    };
                    sink(Level::Next, row, col, val);
                });
            }
            for (k, bus) in self.network.power.busses.iter().enumerate() {
                let sp = bc.bus[k];
                let (a, b) = match bus.kind {
                    BusKind::Slack => (idx.voltage(k), idx.phase(k)),
                    BusKind::Generator => (idx.real_power(k), idx.voltage(k)),
                    BusKind::Load => (idx.real_power(k), idx.reactive_power(k)),
                };
                res[idx.real_power(k)] = next[a] - sp.first;
                res[idx.reactive_power(k)] = next[b] - sp.second;
                if want_jacobian {
                    sink(Level::Next, idx.real_power(k), a, 1.0);
                    sink(Level::Next, idx.reactive_power(k), b, 1.0);
                }
            }
        }
        Ok(res)
    }

    /// Scaled residual of the step from `prev` to `next` under control `u`
    /// (one entry per compressor, Pa) and boundary values at the new time.
    pub fn step_residual(
        &self,
        prev: &[f64],
        next: &[f64],
        u: &[f64],
        bc: &BoundaryValues,
        dt: f64,
    ) -> Result<Vec<f64>> {
        self.evaluate(prev, next, u, bc, dt, false, &mut |_, _, _, _| {})
    }

    /// Partial derivatives of [`System::step_residual`].
    pub fn step_jacobian(
        &self,
        prev: &[f64],
        next: &[f64],
        u: &[f64],
        bc: &BoundaryValues,
        dt: f64,
    ) -> Result<StepJacobian> {
        let n = self.index.len();
        let mut jn = Triplets::with_capacity(n, n, 8 * n);
        let mut jp = Triplets::with_capacity(n, n, 2 * n);
        self.evaluate(prev, next, u, bc, dt, true, &mut |lv, r, c, v| match lv {
            Level::Next => jn.push(r, c, v),
            Level::Prev => jp.push(r, c, v),
        })?;
        Ok(StepJacobian { next: jn.to_csc(), prev: jp.to_csc(), control: self.control_jacobian() })
    }

    /// `dE/du`: `-1/kappa` in each compressor row.
    pub fn control_jacobian(&self) -> CscMatrix {
        let nc = self.index.n_compressors();
        let mut t = Triplets::new(self.index.len(), nc);
        for c in 0..nc {
            t.push(self.index.compressor(c), c, -1.0 / self.kappa());
        }
        t.to_csc()
    }

    /// Residual of the time-derivative-free equations `E(y, y, u)`.
    pub fn steady_residual(&self, y: &[f64], u: &[f64], bc: &BoundaryValues, dt: f64) -> Result<Vec<f64>> {
        self.step_residual(y, y, u, bc, dt)
    }

    /// Jacobian of [`System::steady_residual`], the sum of both step blocks.
    pub fn steady_jacobian(&self, y: &[f64], u: &[f64], bc: &BoundaryValues, dt: f64) -> Result<CscMatrix> {
        let n = self.index.len();
        let mut t = Triplets::with_capacity(n, n, 10 * n);
        self.evaluate(y, y, u, bc, dt, true, &mut |_, r, c, v| t.push(r, c, v))?;
        Ok(t.to_csc())
    }

    fn damped_newton(
        &self,
        mut y: Vec<f64>,
        residual: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
        jacobian: &dyn Fn(&[f64]) -> Result<CscMatrix>,
    ) -> Result<NewtonOutcome> {
        let s = &self.settings;
        let mut r = residual(&y)?;
        let mut rn = max_norm(&r);
        for iteration in 0..=s.max_iter {
            if rn < s.tol {
                return Ok(NewtonOutcome { state: y, iterations: iteration, residual: rn });
            }
            if iteration == s.max_iter {
                break;
            }
            let lu = SparseLu::factor(&jacobian(&y)?)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let dy = lu.solve(&rhs)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=s.max_halvings {
                let trial: Vec<f64> = y.iter().zip(&dy).map(|(a, d)| a + alpha * d).collect();
                match residual(&trial) {
                    Ok(rt) => {
                        let n = max_norm(&rt);
                        if n < rn {
                            y = trial;
                            r = rt;
                            rn = n;
                            accepted = true;
                            break;
                        }
                    }
                    Err(Error::Inadmissible(_)) => {}
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::MaxIterationsExceeded { iterations: iteration, residual: rn });
            }
        }
        Err(Error::MaxIterationsExceeded { iterations: s.max_iter, residual: rn })
    }

    /// Solves one implicit step starting from `prev` as initial guess.
    pub fn newton_solve_step(&self, prev: &[f64], u: &[f64], bc: &BoundaryValues, dt: f64) -> Result<NewtonOutcome> {
        self.check_inputs(prev, u, bc)?;
        self.damped_newton(prev.to_vec(), &|y| self.step_residual(prev, y, u, bc, dt), &|y| {
            Ok(self.step_jacobian(prev, y, u, bc, dt)?.next)
        })
    }

    /// Time-independent solution for boundary values `bc` and control `u`.
    ///
    /// The initial guess combines a standalone powerflow solve, flows from a
    /// linear conductance model of the gas network and pressures from the
    /// quadratic pressure-drop law along a spanning tree.
    pub fn steady_state(&self, bc: &BoundaryValues, u: &[f64], dt: f64) -> Result<NewtonOutcome> {
        let guess = self.initial_guess(bc, u)?;
        self.damped_newton(guess, &|y| self.steady_residual(y, u, bc, dt), &|y| self.steady_jacobian(y, u, bc, dt))
    }

    fn initial_guess(&self, bc: &BoundaryValues, u: &[f64]) -> Result<Vec<f64>> {
        let dummy = vec![0.0; self.index.len()];
        self.check_inputs(&dummy, u, bc)?;
        let idx = &self.index;
        let net = &self.network;
        let consts = &net.gas.constants;
        let mut y = vec![0.0; idx.len()];

        let nb = idx.n_busses();
        let ps = if nb > 0 {
            power::solve_powerflow(&net.power, &self.admittance, &bc.bus, None, 1e-12, 50)?
        } else {
            PowerState::flat(0)
        };
        for k in 0..nb {
            y[idx.voltage(k)] = ps.v[k];
            y[idx.phase(k)] = ps.phi[k];
            y[idx.real_power(k)] = ps.p[k];
            y[idx.reactive_power(k)] = ps.q[k];
        }

        // demand (kg/s) drawn at each node
        let n = idx.n_nodes();
        let mut demand = vec![0.0; n];
        for &(node, bus, k) in &self.plant_links {
            demand[node] += power::plant_gas_offtake(&net.plants[k], ps.p[bus]) * consts.reference_density;
        }
        for (i, nd) in net.gas.nodes.iter().enumerate() {
            if nd.kind == GasNodeKind::FlowBoundary {
                demand[i] += bc.node[i] * self.outflow_area[i];
            }
        }

        // linear conductance model: mass flow = c (pi_from - pi_to)
        let fixed: Vec<bool> = net.gas.nodes.iter().map(|nd| nd.kind == GasNodeKind::PressureBoundary).collect();
        let mut col = vec![usize::MAX; n];
        let mut m = 0;
        for i in 0..n {
            if !fixed[i] {
                col[i] = m;
                m += 1;
            }
        }
        let arcs: Vec<(usize, usize, f64)> = self
            .pipe_nodes
            .iter()
            .zip(&net.gas.pipes)
            .map(|(&(a, b), p)| (a, b, 1.0 / p.length))
            .chain(self.compressor_nodes.iter().map(|&(a, b)| (a, b, 1.0)))
            .collect();
        let mut potential = vec![0.0; n];
        if m > 0 {
            let mut t = Triplets::new(m, m);
            for &(a, b, c) in &arcs {
                for (x, other) in [(a, b), (b, a)] {
                    if !fixed[x] {
                        t.push(col[x], col[x], c);
                        if !fixed[other] {
                            t.push(col[x], col[other], -c);
                        }
                    }
                }
            }
            let rhs: Vec<f64> = (0..n).filter(|&i| !fixed[i]).map(|i| -demand[i]).collect();
            let sol = SparseLu::factor(&t.to_csc())?.solve(&rhs)?;
            for i in 0..n {
                if !fixed[i] {
                    potential[i] = sol[col[i]];
                }
            }
        }
        let mass_flow: Vec<f64> = arcs.iter().map(|&(a, b, c)| c * (potential[a] - potential[b])).collect();
        let np = net.gas.pipes.len();

        // pressures by tree traversal from the pressure boundaries
        let mut pressure: Vec<Option<f64>> = (0..n).map(|i| if fixed[i] { Some(bc.node[i]) } else { None }).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| fixed[i]).collect();
        while let Some(a) = stack.pop() {
            let pa = pressure[a].expect("visited");
            for arc in &self.incident[a] {
                let (other, pb) = match *arc {
                    ArcRef::Pipe(e) => {
                        let pipe = &net.gas.pipes[e];
                        let (from, to) = self.pipe_nodes[e];
                        let q = mass_flow[e] / pipe.area();
                        let lambda = gas::friction_factor(q, pipe.diameter, pipe.roughness, consts.eta)?;
                        let drop = lambda * pipe.length * consts.kappa * q * libm::fabs(q) / pipe.diameter;
                        let (other, sq) = if from == a { (to, pa * pa - drop) } else { (from, pa * pa + drop) };
                        (other, libm::sqrt(sq.max(0.04 * pa * pa)))
                    }
                    ArcRef::Compressor(c) => {
                        let (from, to) = self.compressor_nodes[c];
                        if from == a {
                            (to, pa + u[c])
                        } else {
                            (from, (pa - u[c]).max(0.2 * pa))
                        }
                    }
                };
                if pressure[other].is_none() {
                    pressure[other] = Some(pb);
                    stack.push(other);
                }
            }
        }
        let pressure: Vec<f64> = pressure.into_iter().map(|p| p.expect("connected network")).collect();
        for i in 0..n {
            y[idx.node(i)] = pressure[i];
        }
        for (e, pipe) in net.gas.pipes.iter().enumerate() {
            let (from, to) = self.pipe_nodes[e];
            let (p0, p1) = (pressure[from], pressure[to]);
            let q = mass_flow[e] / pipe.area();
            let off = idx.pipe_range(e).start;
            let k = pipe.cell_count;
            for j in 0..=k {
                let s = j as f64 / k as f64;
                let p = libm::sqrt(p0 * p0 + (p1 * p1 - p0 * p0) * s);
                y[off + 2 * j] = consts.density(p);
                y[off + 2 * j + 1] = q;
            }
        }
        for (c, comp) in net.gas.compressors.iter().enumerate() {
            y[idx.compressor(c)] = mass_flow[np + c] / comp.area();
        }
        Ok(y)
    }

    /// Pressure of gas node `node`, Pa.
    pub fn node_pressure(&self, y: &[f64], node: usize) -> f64 {
        y[self.index.node(node)]
    }

    /// Net mass flow (kg/s) from node `node` into its incident arcs.
    pub fn node_supply(&self, y: &[f64], node: usize) -> f64 {
        let idx = &self.index;
        self.incident[node]
            .iter()
            .map(|arc| match *arc {
                ArcRef::Pipe(e) => {
                    let r = idx.pipe_range(e);
                    let (from, _) = self.pipe_nodes[e];
                    let a = self.network.gas.pipes[e].area();
                    if from == node {
                        a * y[r.start + 1]
                    } else {
                        -a * y[r.end - 1]
                    }
                }
                ArcRef::Compressor(c) => {
                    let (from, _) = self.compressor_nodes[c];
                    let a = self.network.gas.compressors[c].area();
                    let q = y[idx.compressor(c)];
                    if from == node {
                        a * q
                    } else {
                        -a * q
                    }
                }
            })
            .sum()
    }

    /// Mean cross section of the arcs at `node`, m².
    pub fn node_area(&self, node: usize) -> f64 {
        self.node_area[node]
    }

    /// Gas held in all pipes (trapezoidal rule), kg.
    pub fn stored_mass(&self, y: &[f64]) -> f64 {
        self.network
            .gas
            .pipes
            .iter()
            .enumerate()
            .map(|(e, p)| {
                let r = self.index.pipe_range(e);
                let rho = &y[r];
                let s: f64 = (0..p.cell_count).map(|j| (rho[2 * j] + rho[2 * j + 2]) / 2.0).sum();
                p.area() * p.dx() * s
            })
            .sum()
    }

    /// Total gas offtake of all plants, kg/s.
    pub fn plant_offtake(&self, y: &[f64]) -> f64 {
        let rho0 = self.network.gas.constants.reference_density;
        self.plant_links
            .iter()
            .map(|&(_, bus, k)| power::plant_gas_offtake(&self.network.plants[k], y[self.index.real_power(bus)]) * rho0)
            .sum()
    }

    /// Network mass balance defect of one step per unit pipe volume, kg/m³:
    /// stored-mass change minus `dt` times (supply at pressure boundaries
    /// minus prescribed outflows minus plant offtake).
    pub fn mass_balance_error(&self, prev: &[f64], next: &[f64], bc: &BoundaryValues, dt: f64) -> f64 {
        let mut net_in = -self.plant_offtake(next);
        for (i, nd) in self.network.gas.nodes.iter().enumerate() {
            match nd.kind {
                GasNodeKind::PressureBoundary => net_in += self.node_supply(next, i),
                GasNodeKind::FlowBoundary => net_in -= bc.node[i] * self.outflow_area[i],
                _ => {}
            }
        }
        let volume: f64 = self.network.gas.pipes.iter().map(|p| p.area() * p.length).sum();
        libm::fabs(self.stored_mass(next) - self.stored_mass(prev) - dt * net_in) / volume
    }
}
