//! Gas physics on a single pipe and the implicit box scheme.
//!
//! The state on a pipe with `K` cells lives on the `K + 1` grid points
//! `x_j = j * dx`. The scheme couples neighbouring grid points through
//!
//! ```text
//! (Y'_{j-1} + Y'_j)/2 - (Y_{j-1} + Y_j)/2
//!     + dt/dx (f(Y'_j) - f(Y'_{j-1})) - dt (g(Y'_j) + g(Y'_{j-1}))/2 = 0
//! ```
//!
//! with `Y = (rho, q)`, `f = (q, p(rho) + q²/rho)` and `g = (0, S(rho, q))`,
//! giving two equations per cell.

use alloc::vec::Vec;

use crate::model::{GasConstants, Pipe};
use crate::{Error, Result};

/// Below this Reynolds number the Colebrook equation is replaced by its
/// fully rough limit. The source term still vanishes at `q = 0`.
pub const ROUGH_LIMIT_REYNOLDS: f64 = 100.0;
/// Step tolerance of the Colebrook iteration on `1/sqrt(lambda)`.
pub const COLEBROOK_TOLERANCE: f64 = 1.0e-13;
pub const COLEBROOK_MAX_ITER: usize = 100;

const LN_10: f64 = core::f64::consts::LN_10;

/// Densities and flows at the grid points of one pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeState {
    /// kg/m³
    pub rho: Vec<f64>,
    /// kg/(m²·s)
    pub q: Vec<f64>,
}

impl PipeState {
    pub fn uniform(points: usize, rho: f64, q: f64) -> Self {
        PipeState { rho: alloc::vec![rho; points], q: alloc::vec![q; points] }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

impl GasConstants {
    /// `kappa * rho^gamma`.
    pub fn pressure_of_density(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::Inadmissible(alloc::format!("negative density {rho}")));
        }
        Ok(self.pressure(rho))
    }

    /// Inverse of [`GasConstants::pressure_of_density`].
    pub fn density_of_pressure(&self, p: f64) -> Result<f64> {
        if !(p >= 0.0) {
            return Err(Error::Inadmissible(alloc::format!("negative pressure {p}")));
        }
        Ok(self.density(p))
    }

    #[inline]
    pub(crate) fn pressure(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.kappa * rho
        } else {
            self.kappa * libm::pow(rho, self.gamma)
        }
    }

    #[inline]
    pub(crate) fn density(&self, p: f64) -> f64 {
        if self.gamma == 1.0 {
            p / self.kappa
        } else {
            libm::pow(p / self.kappa, 1.0 / self.gamma)
        }
    }

    #[inline]
    pub(crate) fn dpressure(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.kappa
        } else {
            self.kappa * self.gamma * libm::pow(rho, self.gamma - 1.0)
        }
    }
}

/// Friction factor and its derivative with respect to the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Friction {
    pub lambda: f64,
    pub dlambda_dq: f64,
}

/// `1/sqrt(lambda)` in the fully rough limit.
fn rough_limit(relative_roughness: f64) -> f64 {
    -2.0 * libm::log10(relative_roughness / 3.71)
}

/// Right-hand side of the Colebrook equation written as `x = g(x)` with `x = 1/sqrt(lambda)`.
fn colebrook_map(x: f64, reynolds: f64, relative_roughness: f64) -> f64 {
    -2.0 * libm::log10(2.51 * x / reynolds + relative_roughness / 3.71)
}

/// `1/sqrt(lambda) + 2 log10(2.51/(Re sqrt(lambda)) + k/(3.71 d))`.
pub fn colebrook_residual(lambda: f64, reynolds: f64, diameter: f64, roughness: f64) -> f64 {
    let x = 1.0 / libm::sqrt(lambda);
    x - colebrook_map(x, reynolds, roughness / diameter)
}

/// Solves Colebrook for `x = 1/sqrt(lambda)` by fixed-point iteration,
/// relaxed with the local slope of the map.
fn solve_colebrook(reynolds: f64, relative_roughness: f64) -> Result<f64> {
    let mut x = if relative_roughness > 0.0 { rough_limit(relative_roughness) } else { 8.0 };
    for _ in 0..COLEBROOK_MAX_ITER {
        let arg = 2.51 * x / reynolds + relative_roughness / 3.71;
        let g = -2.0 * libm::log10(arg);
        let slope = -2.0 / LN_10 * (2.51 / reynolds) / arg;
        let next = x + (g - x) / (1.0 - slope);
        if !next.is_finite() || next <= 0.0 {
            break;
        }
        let done = libm::fabs(next - x) <= COLEBROOK_TOLERANCE * next;
        x = next;
        if done {
            return Ok(x);
        }
    }
    Err(Error::FrictionNonConvergence { reynolds })
}

/// Reynolds number `d |q| / eta`.
pub fn reynolds(q: f64, diameter: f64, eta: f64) -> f64 {
    diameter * libm::fabs(q) / eta
}

/// Darcy friction factor from the Prandtl-Colebrook formula.
///
/// Below [`ROUGH_LIMIT_REYNOLDS`] the fully rough value is returned. A
/// hydraulically smooth pipe has no rough limit; there the Colebrook value
/// at the threshold Reynolds number is used instead.
pub fn friction_factor(q: f64, diameter: f64, roughness: f64, eta: f64) -> Result<f64> {
    Ok(friction(q, diameter, roughness, eta)?.lambda)
}

/// [`friction_factor`] together with `d lambda / d q`, obtained by implicit
/// differentiation of the Colebrook equation.
pub fn friction(q: f64, diameter: f64, roughness: f64, eta: f64) -> Result<Friction> {
    if !(diameter > 0.0) || !(roughness >= 0.0) || !(eta > 0.0) {
        return Err(Error::invalid("friction needs diameter > 0, roughness >= 0, eta > 0"));
    }
    let rel = roughness / diameter;
    let re = reynolds(q, diameter, eta);
    if re < ROUGH_LIMIT_REYNOLDS {
        let x = if rel > 0.0 { rough_limit(rel) } else { solve_colebrook(ROUGH_LIMIT_REYNOLDS, 0.0)? };
        return Ok(Friction { lambda: 1.0 / (x * x), dlambda_dq: 0.0 });
    }
    let x = solve_colebrook(re, rel)?;
    let arg = 2.51 * x / re + rel / 3.71;
    let dg_dx = -2.0 / LN_10 * (2.51 / re) / arg;
    let dg_dre = 2.0 / LN_10 * (2.51 * x / (re * re)) / arg;
    let dx_dre = dg_dre / (1.0 - dg_dx);
    let dlambda_dre = -2.0 / (x * x * x) * dx_dre;
    let dre_dq = diameter / eta * q.signum();
    Ok(Friction { lambda: 1.0 / (x * x), dlambda_dq: dlambda_dre * dre_dq })
}

/// Momentum source `-lambda(q)/(2d) * q|q|/rho`.
pub fn source_term(rho: f64, q: f64, pipe: &Pipe, constants: &GasConstants) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Inadmissible(alloc::format!("density {rho} is not positive")));
    }
    let fr = friction(q, pipe.diameter, pipe.roughness, constants.eta)?;
    Ok(-fr.lambda / (2.0 * pipe.diameter) * q * libm::fabs(q) / rho)
}

/// Flux vector `(q, p(rho) + q²/rho)`.
pub fn flux(rho: f64, q: f64, constants: &GasConstants) -> Result<[f64; 2]> {
    if !(rho > 0.0) {
        return Err(Error::Inadmissible(alloc::format!("density {rho} is not positive")));
    }
    Ok([q, constants.pressure(rho) + q * q / rho])
}

/// Pointwise quantities of the scheme with their partial derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointTerms {
    /// Momentum flux `p + q²/rho`.
    pub f2: f64,
    pub df2_drho: f64,
    pub df2_dq: f64,
    pub s: f64,
    pub ds_drho: f64,
    pub ds_dq: f64,
}

pub(crate) fn point_terms(
    rho: f64,
    q: f64,
    pipe: &Pipe,
    constants: &GasConstants,
    frozen_friction: bool,
) -> Result<PointTerms> {
    if !(rho > 0.0) || !rho.is_finite() || !q.is_finite() {
        return Err(Error::Inadmissible(alloc::format!("pipe {}: density {rho}, flow {q}", pipe.id)));
    }
    let fr = friction(q, pipe.diameter, pipe.roughness, constants.eta)?;
    let dlambda = if frozen_friction { 0.0 } else { fr.dlambda_dq };
    let c = 1.0 / (2.0 * pipe.diameter);
    let qa = libm::fabs(q);
    Ok(PointTerms {
        f2: constants.pressure(rho) + q * q / rho,
        df2_drho: constants.dpressure(rho) - q * q / (rho * rho),
        df2_dq: 2.0 * q / rho,
        s: -c * fr.lambda * q * qa / rho,
        ds_drho: c * fr.lambda * q * qa / (rho * rho),
        ds_dq: -c / rho * (dlambda * q * qa + 2.0 * fr.lambda * qa),
    })
}

fn check_states(prev: &PipeState, next: &PipeState, pipe: &Pipe) -> Result<()> {
    let n = pipe.cell_count + 1;
    for len in [prev.rho.len(), prev.q.len(), next.rho.len(), next.q.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    Ok(())
}

fn interleave(state: &PipeState) -> Vec<f64> {
    state.rho.iter().zip(&state.q).flat_map(|(&r, &q)| [r, q]).collect()
}

/// Which time level a Jacobian entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Prev,
    Next,
}

/// Column of a local pipe unknown: `2j` is `rho_j`, `2j+1` is `q_j`.
pub fn local_column(point: usize, is_flow: bool) -> usize {
    2 * point + usize::from(is_flow)
}

/// Residual (and optionally Jacobian entries) of the box scheme on
/// interleaved states `[rho_0, q_0, rho_1, q_1, ...]`.
///
/// `residual` receives `2K` entries; `sink` receives
/// `(level, local row, local column, value)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn box_scheme_eval(
    prev: &[f64],
    next: &[f64],
    pipe: &Pipe,
    constants: &GasConstants,
    dt: f64,
    frozen_friction: bool,
    residual: &mut [f64],
    mut sink: Option<&mut dyn FnMut(Level, usize, usize, f64)>,
) -> Result<()> {
    let cells = pipe.cell_count;
    if prev.len() != 2 * (cells + 1) || next.len() != 2 * (cells + 1) {
        return Err(Error::DimensionMismatch { expected: 2 * (cells + 1), got: next.len().min(prev.len()) });
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    let r = dt / pipe.dx();
    let mut left = point_terms(next[0], next[1], pipe, constants, frozen_friction)?;
    for j in 1..=cells {
        let right = point_terms(next[2 * j], next[2 * j + 1], pipe, constants, frozen_friction)?;
        let (a, b) = (&left, &right);
        let (rho_a, q_a, rho_b, q_b) = (2 * j - 2, 2 * j - 1, 2 * j, 2 * j + 1);
        let (mass, mom) = (2 * (j - 1), 2 * (j - 1) + 1);
        residual[mass] =
            (next[rho_a] + next[rho_b]) / 2.0 - (prev[rho_a] + prev[rho_b]) / 2.0 + r * (next[q_b] - next[q_a]);
        residual[mom] =
            (next[q_a] + next[q_b]) / 2.0 - (prev[q_a] + prev[q_b]) / 2.0 + r * (b.f2 - a.f2) - dt * (b.s + a.s) / 2.0;
        if let Some(sink) = sink.as_mut() {
            sink(Level::Next, mass, rho_a, 0.5);
            sink(Level::Next, mass, rho_b, 0.5);
            sink(Level::Next, mass, q_a, -r);
            sink(Level::Next, mass, q_b, r);
            sink(Level::Prev, mass, rho_a, -0.5);
            sink(Level::Prev, mass, rho_b, -0.5);

            sink(Level::Next, mom, rho_a, -r * a.df2_drho - dt / 2.0 * a.ds_drho);
            sink(Level::Next, mom, rho_b, r * b.df2_drho - dt / 2.0 * b.ds_drho);
            sink(Level::Next, mom, q_a, 0.5 - r * a.df2_dq - dt / 2.0 * a.ds_dq);
            sink(Level::Next, mom, q_b, 0.5 + r * b.df2_dq - dt / 2.0 * b.ds_dq);
            sink(Level::Prev, mom, q_a, -0.5);
            sink(Level::Prev, mom, q_b, -0.5);
        }
        left = right;
    }
    Ok(())
}

/// Box scheme residual, unscaled. Entry `2(j-1)` is the mass equation and
/// entry `2(j-1)+1` the momentum equation of cell `j = 1..=K`.
pub fn box_scheme_residual(
    prev: &PipeState,
    next: &PipeState,
    pipe: &Pipe,
    constants: &GasConstants,
    dt: f64,
) -> Result<Vec<f64>> {
    check_states(prev, next, pipe)?;
    let mut out = alloc::vec![0.0; 2 * pipe.cell_count];
    box_scheme_eval(&interleave(prev), &interleave(next), pipe, constants, dt, false, &mut out, None)?;
    Ok(out)
}

/// Sparse partial derivatives of [`box_scheme_residual`] in local numbering
/// (see [`local_column`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoxJacobian {
    /// `(row, column, value)` with respect to the new time level.
    pub next: Vec<(usize, usize, f64)>,
    /// `(row, column, value)` with respect to the old time level.
    pub prev: Vec<(usize, usize, f64)>,
}

pub fn box_scheme_jacobian(
    prev: &PipeState,
    next: &PipeState,
    pipe: &Pipe,
    constants: &GasConstants,
    dt: f64,
) -> Result<BoxJacobian> {
    check_states(prev, next, pipe)?;
    let mut jac = BoxJacobian::default();
    let mut scratch = alloc::vec![0.0; 2 * pipe.cell_count];
    let mut sink = |level: Level, row: usize, col: usize, v: f64| match level {
        Level::Next => jac.next.push((row, col, v)),
        Level::Prev => jac.prev.push((row, col, v)),
    };
    box_scheme_eval(&interleave(prev), &interleave(next), pipe, constants, dt, false, &mut scratch, Some(&mut sink))?;
    Ok(jac)
}

/// Trapezoidal mass per unit cross section stored in the pipe, kg/m².
pub fn stored_mass(state: &PipeState, pipe: &Pipe) -> f64 {
    let dx = pipe.dx();
    state.rho.windows(2).map(|w| dx * (w[0] + w[1]) / 2.0).sum()
}
