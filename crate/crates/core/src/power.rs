//! AC powerflow in polar form.
//!
//! For every bus `k` the computed injections are
//!
//! ```text
//! P_k = sum_j |V_k||V_j| (G_kj cos(phi_k - phi_j) + B_kj sin(phi_k - phi_j))
//! Q_k = sum_j |V_k||V_j| (G_kj sin(phi_k - phi_j) - B_kj cos(phi_k - phi_j))
//! ```
//!
//! and the residual pair is `(P_k - P_k^computed, Q_k - Q_k^computed)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{Admittance, BusKind, GasPowerPlant, PowerGrid};
use crate::sparse::{SparseLu, Triplets};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerState {
    /// Voltage magnitude, p.u.
    pub v: Vec<f64>,
    /// Phase, rad.
    pub phi: Vec<f64>,
    /// Real power injection, p.u.
    pub p: Vec<f64>,
    /// Reactive power injection, p.u.
    pub q: Vec<f64>,
}

impl PowerState {
    /// All voltages 1 p.u., all phases and injections zero.
    pub fn flat(n: usize) -> Self {
        PowerState { v: vec![1.0; n], phi: vec![0.0; n], p: vec![0.0; n], q: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        for len in [self.v.len(), self.phi.len(), self.p.len(), self.q.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PowerQuantity {
    Voltage,
    Phase,
    Real,
    Reactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PowerVar {
    pub bus: usize,
    pub quantity: PowerQuantity,
}

/// Injections computed from voltages and phases.
pub fn computed_injections(v: &[f64], phi: &[f64], adm: &Admittance) -> (Vec<f64>, Vec<f64>) {
    let n = adm.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for k in 0..n {
        for &(j, g, b) in adm.row(k) {
            let (s, c) = libm::sincos(phi[k] - phi[j]);
            let vv = v[k] * v[j];
            p[k] += vv * (g * c + b * s);
            q[k] += vv * (g * s - b * c);
        }
    }
    (p, q)
}

/// Residual entries `2k` (real) and `2k + 1` (reactive) for every bus `k`.
pub fn powerflow_residual(state: &PowerState, adm: &Admittance) -> Result<Vec<f64>> {
    state.check(adm.len())?;
    let (pc, qc) = computed_injections(&state.v, &state.phi, adm);
    let mut out = Vec::with_capacity(2 * adm.len());
    for k in 0..adm.len() {
        out.push(state.p[k] - pc[k]);
        out.push(state.q[k] - qc[k]);
    }
    Ok(out)
}

/// Writes every nonzero derivative of [`powerflow_residual`] as
/// `(row, variable, value)`.
pub(crate) fn write_powerflow_jacobian(
    v: &[f64],
    phi: &[f64],
    adm: &Admittance,
    mut sink: impl FnMut(usize, PowerVar, f64),
) {
    use PowerQuantity::*;
    for k in 0..adm.len() {
        let (rp, rq) = (2 * k, 2 * k + 1);
        let mut dp_dvk = 0.0;
        let mut dq_dvk = 0.0;
        let mut dp_dphik = 0.0;
        let mut dq_dphik = 0.0;
        for &(j, g, b) in adm.row(k) {
            let (s, c) = libm::sincos(phi[k] - phi[j]);
            let a = g * c + b * s;
            let bq = g * s - b * c;
            dp_dvk += v[j] * a;
            dq_dvk += v[j] * bq;
            if j == k {
                dp_dvk += v[k] * g;
                dq_dvk -= v[k] * b;
                continue;
            }
            let vv = v[k] * v[j];
            dp_dphik += vv * (-g * s + b * c);
            dq_dphik += vv * a;
            sink(rp, PowerVar { bus: j, quantity: Voltage }, -v[k] * a);
            sink(rq, PowerVar { bus: j, quantity: Voltage }, -v[k] * bq);
            sink(rp, PowerVar { bus: j, quantity: Phase }, -vv * (g * s - b * c));
            sink(rq, PowerVar { bus: j, quantity: Phase }, vv * a);
        }
        sink(rp, PowerVar { bus: k, quantity: Voltage }, -dp_dvk);
        sink(rq, PowerVar { bus: k, quantity: Voltage }, -dq_dvk);
        sink(rp, PowerVar { bus: k, quantity: Phase }, -dp_dphik);
        sink(rq, PowerVar { bus: k, quantity: Phase }, -dq_dphik);
        sink(rp, PowerVar { bus: k, quantity: Real }, 1.0);
        sink(rq, PowerVar { bus: k, quantity: Reactive }, 1.0);
    }
}

/// Unknowns of the powerflow problem: phase at every non-slack bus, voltage
/// at load busses, both injections at the slack, reactive power at generators.
pub fn free_variables(grid: &PowerGrid) -> Vec<PowerVar> {
    use PowerQuantity::*;
    let mut out = Vec::new();
    for (bus, b) in grid.busses.iter().enumerate() {
        let list: &[PowerQuantity] = match b.kind {
            BusKind::Slack => &[Real, Reactive],
            BusKind::Generator => &[Phase, Reactive],
            BusKind::Load => &[Voltage, Phase],
        };
        out.extend(list.iter().map(|&quantity| PowerVar { bus, quantity }));
    }
    out
}

/// Derivatives of the residual with respect to the listed variables, as
/// `(row, index into free, value)`.
pub fn powerflow_jacobian(state: &PowerState, adm: &Admittance, free: &[PowerVar]) -> Result<Vec<(usize, usize, f64)>> {
    state.check(adm.len())?;
    let mut out = Vec::new();
    write_powerflow_jacobian(&state.v, &state.phi, adm, |row, var, val| {
        if let Some(col) = free.iter().position(|f| *f == var) {
            out.push((row, col, val));
        }
    });
    Ok(out)
}

/// The two prescribed values of a bus: `(V, phi)` at the slack, `(P, V)` at
/// generators and `(P, Q)` at loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusSetpoint {
    pub first: f64,
    pub second: f64,
}

/// Writes the prescribed values into `state`.
pub fn apply_setpoints(grid: &PowerGrid, setpoints: &[BusSetpoint], state: &mut PowerState) {
    for (k, (bus, sp)) in grid.busses.iter().zip(setpoints).enumerate() {
        match bus.kind {
            BusKind::Slack => {
                state.v[k] = sp.first;
                state.phi[k] = sp.second;
            }
            BusKind::Generator => {
                state.p[k] = sp.first;
                state.v[k] = sp.second;
            }
            BusKind::Load => {
                state.p[k] = sp.first;
                state.q[k] = sp.second;
            }
        }
    }
}

fn get(state: &PowerState, var: PowerVar) -> f64 {
    match var.quantity {
        PowerQuantity::Voltage => state.v[var.bus],
        PowerQuantity::Phase => state.phi[var.bus],
        PowerQuantity::Real => state.p[var.bus],
        PowerQuantity::Reactive => state.q[var.bus],
    }
}

fn set(state: &mut PowerState, var: PowerVar, value: f64) {
    match var.quantity {
        PowerQuantity::Voltage => state.v[var.bus] = value,
        PowerQuantity::Phase => state.phi[var.bus] = value,
        PowerQuantity::Real => state.p[var.bus] = value,
        PowerQuantity::Reactive => state.q[var.bus] = value,
    }
}

/// Full Newton solve of the standalone powerflow problem.
pub fn solve_powerflow(
    grid: &PowerGrid,
    adm: &Admittance,
    setpoints: &[BusSetpoint],
    initial: Option<&PowerState>,
    tol: f64,
    max_iter: usize,
) -> Result<PowerState> {
    let n = grid.busses.len();
    if setpoints.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: setpoints.len() });
    }
    let mut state = initial.cloned().unwrap_or_else(|| PowerState::flat(n));
    state.check(n)?;
    apply_setpoints(grid, setpoints, &mut state);
    let free = free_variables(grid);
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let mut res = powerflow_residual(&state, adm)?;
    for iteration in 0..=max_iter {
        let rn = norm(&res);
        if rn < tol {
            return Ok(state);
        }
        if iteration == max_iter {
            return Err(Error::MaxIterationsExceeded { iterations: max_iter, residual: rn });
        }
        let mut t = Triplets::new(2 * n, free.len());
        for (r, c, v) in powerflow_jacobian(&state, adm, &free)? {
            t.push(r, c, v);
        }
        let lu = SparseLu::factor(&t.to_csc())?;
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let step = lu.solve(&rhs)?;
        let base = state.clone();
        let mut alpha = 1.0;
        for _ in 0..30 {
            state = base.clone();
            for (var, d) in free.iter().zip(&step) {
                set(&mut state, *var, get(&base, *var) + alpha * d);
            }
            if state.v.iter().all(|&v| v > 0.0) {
                res = powerflow_residual(&state, adm)?;
                if norm(&res) < rn {
                    break;
                }
            }
            alpha *= 0.5;
        }
        if state.v.iter().any(|&v| v <= 0.0) {
            return Err(Error::Inadmissible("non-positive voltage magnitude".into()));
        }
    }
    unreachable!()
}

/// Gas offtake `a0 + a1 P + a2 P²` in m³/s at reference density.
pub fn plant_gas_offtake(plant: &GasPowerPlant, p: f64) -> f64 {
    plant.a0 + plant.a1 * p + plant.a2 * p * p
}

/// `d offtake / d P`.
pub fn plant_gas_offtake_derivative(plant: &GasPowerPlant, p: f64) -> f64 {
    plant.a1 + 2.0 * plant.a2 * p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::model::nodal_admittance;
    use proptest::prelude::*;

    fn grid() -> (PowerGrid, Admittance) {
        let g = fixture::network().power;
        let a = nodal_admittance(&g).unwrap();
        (g, a)
    }

    #[test]
    fn flat_state_row_sums() {
        let (_, adm) = grid();
        let flat = PowerState::flat(9);
        let (p, q) = computed_injections(&flat.v, &flat.phi, &adm);
        assert!(libm::fabs(p[0]) < 1e-12 && libm::fabs(q[0]) < 1e-12);
        for k in 0..9 {
            let gsum: f64 = adm.row(k).iter().map(|e| e.1).sum();
            let bsum: f64 = adm.row(k).iter().map(|e| e.2).sum();
            assert!(libm::fabs(p[k] - gsum) < 1e-12);
            assert!(libm::fabs(q[k] + bsum) < 1e-12);
        }
    }

    fn fd_check(state: &PowerState, adm: &Admittance) {
        let n = adm.len();
        let all: Vec<PowerVar> = (0..n)
            .flat_map(|bus| {
                [PowerQuantity::Voltage, PowerQuantity::Phase, PowerQuantity::Real, PowerQuantity::Reactive]
                    .map(|quantity| PowerVar { bus, quantity })
            })
            .collect();
        let jac = powerflow_jacobian(state, adm, &all).unwrap();
        let mut dense = vec![vec![0.0; all.len()]; 2 * n];
        for (r, c, v) in jac {
            dense[r][c] += v;
        }
        for (c, var) in all.iter().enumerate() {
            let h = 1e-6;
            let mut a = state.clone();
            let mut b = state.clone();
            set(&mut a, *var, get(state, *var) + h);
            set(&mut b, *var, get(state, *var) - h);
            let ra = powerflow_residual(&a, adm).unwrap();
            let rb = powerflow_residual(&b, adm).unwrap();
            for r in 0..2 * n {
                let fd = (ra[r] - rb[r]) / (2.0 * h);
                let an = dense[r][c];
                if libm::fabs(fd) > 1e-8 {
                    assert!(libm::fabs(an - fd) <= 1e-6 * libm::fabs(fd), "({r},{var:?}): {an} vs {fd}");
                } else {
                    assert!(libm::fabs(an) < 1e-7);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (_, adm) = grid();
        fd_check(&PowerState::flat(9), &adm);
        let mut s = PowerState::flat(9);
        for k in 0..9 {
            s.v[k] = 0.95 + 0.01 * k as f64;
            s.phi[k] = 0.05 * (k as f64 - 4.0);
            s.p[k] = 0.1 * k as f64;
        }
        fd_check(&s, &adm);
    }

    #[test]
    fn jacobian_structure() {
        let (g, adm) = grid();
        let free = free_variables(&g);
        let s = PowerState::flat(9);
        let jac = powerflow_jacobian(&s, &adm, &free).unwrap();
        let slack_p = free.iter().position(|v| v.bus == 0 && v.quantity == PowerQuantity::Real).unwrap();
        assert!(jac.iter().any(|&(r, c, v)| r == 0 && c == slack_p && v == 1.0));
        for (r, c, _) in jac {
            let (k, j) = (r / 2, free[c].bus);
            assert!(k == j || adm.get(k, j) != (0.0, 0.0));
        }
        assert_eq!(free.len(), 18);
    }

    fn table3() -> Vec<BusSetpoint> {
        let sp = |first, second| BusSetpoint { first, second };
        vec![
            sp(1.0, 0.0),
            sp(1.63, 1.0),
            sp(0.85, 1.0),
            sp(0.0, 0.0),
            sp(-0.9, -0.3),
            sp(0.0, 0.0),
            sp(-1.0, -0.35),
            sp(0.0, 0.0),
            sp(-1.25, -0.5),
        ]
    }

    #[test]
    fn baseline_solves_to_tight_residual() {
        let (g, adm) = grid();
        let s = solve_powerflow(&g, &adm, &table3(), None, 1e-12, 20).unwrap();
        let r = powerflow_residual(&s, &adm).unwrap();
        assert!(r.iter().all(|v| libm::fabs(*v) < 1e-10));
        // slack covers the demand the generators leave open, plus losses
        let demand = 0.9 + 1.0 + 1.25 - 1.63 - 0.85;
        assert!(s.p[0] > demand && s.p[0] < demand + 0.1, "slack {}", s.p[0]);
    }

    #[test]
    fn offtake_values() {
        let plant = fixture::network().plants[0].clone();
        assert_eq!(plant_gas_offtake(&plant, 0.0), 2.0);
        assert_eq!(plant_gas_offtake(&plant, 1.0), 17.0);
        assert_eq!(plant_gas_offtake(&plant, 0.5), 7.0);
        assert_eq!(plant_gas_offtake_derivative(&plant, 0.5), 15.0);
    }

    proptest! {
        #[test]
        fn phase_shift_leaves_residual_unchanged(shift in -3.0f64..3.0, seed in 0u64..1000) {
            let (_, adm) = grid();
            let mut s = PowerState::flat(9);
            for k in 0..9 {
                let x = ((seed as f64 + 1.0) * (k as f64 + 1.3)).sin();
                s.v[k] = 1.0 + 0.05 * x;
                s.phi[k] = 0.2 * x;
                s.p[k] = x;
                s.q[k] = -x;
            }
            let r0 = powerflow_residual(&s, &adm).unwrap();
            for k in 0..9 {
                s.phi[k] += shift;
            }
            let r1 = powerflow_residual(&s, &adm).unwrap();
            for (a, b) in r0.iter().zip(&r1) {
                prop_assert!(libm::fabs(a - b) < 1e-12);
            }
        }

        #[test]
        fn offtake_is_convex(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let plant = fixture::network().plants[0].clone();
            let mid = plant_gas_offtake(&plant, 0.5 * (a + b));
            let avg = 0.5 * (plant_gas_offtake(&plant, a) + plant_gas_offtake(&plant, b));
            prop_assert!(mid <= avg + 1e-12);
        }

        #[test]
        fn offtake_nondecreasing_for_positive_power(a in 0.0f64..3.0, d in 0.0f64..1.0) {
            let plant = fixture::network().plants[0].clone();
            prop_assert!(plant_gas_offtake(&plant, a + d) >= plant_gas_offtake(&plant, a));
        }
    }
}
