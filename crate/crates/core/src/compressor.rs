//! Compressor power consumption.
//!
//! The shaft power is the isothermal compression work
//! `q A kappa ln(p_out / p_in)`, and the cost rate is a quadratic in that
//! power (in MW). The cost rises with the pressure ratio for any positive
//! flow, which is the only property the optimizer relies on.

use crate::{Error, Result};
use alloc::string::String;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorCostModel {
    /// Fixed cost rate while the compressor boosts.
    pub d0: f64,
    /// Cost per MW.
    pub d1: f64,
    /// Cost per MW².
    pub d2: f64,
}

impl Default for CompressorCostModel {
    fn default() -> Self {
        CompressorCostModel { d0: 0.0, d1: 1.0, d2: 0.01 }
    }
}

impl CompressorCostModel {
    /// Cost rate for a given shaft power in W.
    pub fn rate(&self, shaft_power_w: f64, active: bool) -> f64 {
        let mw = shaft_power_w * 1.0e-6;
        let fixed = if active { self.d0 } else { 0.0 };
        fixed + self.d1 * mw + self.d2 * mw * mw
    }

    /// `d rate / d shaft power`, per W.
    pub fn rate_derivative(&self, shaft_power_w: f64) -> f64 {
        let mw = shaft_power_w * 1.0e-6;
        (self.d1 + 2.0 * self.d2 * mw) * 1.0e-6
    }
}

fn check(p_in: f64, p_out: f64, q: f64, id: &str) -> Result<()> {
    if !(p_in > 0.0) {
        return Err(Error::Inadmissible(alloc::format!("compressor {id}: inlet pressure {p_in}")));
    }
    if p_out < p_in {
        return Err(Error::Decompression(String::from(id)));
    }
    if q < 0.0 && p_out > p_in {
        return Err(Error::ReverseFlow(String::from(id)));
    }
    Ok(())
}

/// Shaft power in W. `q` is a mass flux over `area`, `kappa` the pressure
/// law coefficient (the squared sound speed for the isothermal law).
pub fn shaft_power(p_in: f64, p_out: f64, q: f64, area: f64, kappa: f64) -> Result<f64> {
    check(p_in, p_out, q, "")?;
    Ok(q * area * kappa * libm::log(p_out / p_in))
}

/// Partial derivatives of [`shaft_power`] with respect to `(p_in, p_out, q)`.
pub fn shaft_power_gradient(p_in: f64, p_out: f64, q: f64, area: f64, kappa: f64) -> Result<[f64; 3]> {
    check(p_in, p_out, q, "")?;
    let m = area * kappa;
    Ok([-q * m / p_in, q * m / p_out, m * libm::log(p_out / p_in)])
}

/// Cost rate `d0 [p_out > p_in] + d1 P + d2 P²` with `P` the shaft power in MW.
pub fn cost_integrand(
    p_in: f64,
    p_out: f64,
    q: f64,
    area: f64,
    kappa: f64,
    model: &CompressorCostModel,
) -> Result<f64> {
    let power = shaft_power(p_in, p_out, q, area, kappa)?;
    Ok(model.rate(power, p_out > p_in))
}

/// Partial derivatives of [`cost_integrand`] with respect to `(p_in, p_out, q)`.
/// The fixed-on cost `d0` is treated as locally constant.
pub fn cost_integrand_gradient(
    p_in: f64,
    p_out: f64,
    q: f64,
    area: f64,
    kappa: f64,
    model: &CompressorCostModel,
) -> Result<[f64; 3]> {
    let power = shaft_power(p_in, p_out, q, area, kappa)?;
    let g = shaft_power_gradient(p_in, p_out, q, area, kappa)?;
    let d = model.rate_derivative(power);
    Ok([d * g[0], d * g[1], d * g[2]])
}
