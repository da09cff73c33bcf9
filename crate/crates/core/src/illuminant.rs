//! Planckian (black-body) illuminants.

use crate::error::{Error, Result};
use crate::spectrum::{IlluminantSpd, Spectrum, WavelengthGrid};

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Black-body spectral radiance at `nm` for temperature `kelvin`
/// (W·sr⁻¹·m⁻³; only ratios are used downstream).
pub fn planck_radiance(nm: f64, kelvin: f64) -> f64 {
    let l = nm * 1e-9;
    let c1 = 2.0 * PLANCK * LIGHT_SPEED * LIGHT_SPEED;
    let c2 = PLANCK * LIGHT_SPEED / BOLTZMANN;
    c1 / l.powi(5) / (c2 / (l * kelvin)).exp_m1()
}

/// Black-body SPD at `kelvin`, peak-normalized to 1 over `grid`.
pub fn planckian_spd(kelvin: f64, grid: &WavelengthGrid) -> Result<IlluminantSpd> {
    if !(kelvin > 0.0 && kelvin.is_finite()) {
        return Err(Error::Domain(format!(
            "colour temperature must be positive, got {kelvin}"
        )));
    }
    let values = grid.wavelengths().map(|nm| planck_radiance(nm, kelvin)).collect();
    Ok(IlluminantSpd::normalized(Spectrum::new(*grid, values)?))
}

/// Temperatures `min, min+step, ..., max` (inclusive).
pub fn planckian_temperatures(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || min > max {
        return Err(Error::Domain(format!(
            "invalid temperature range {min}..{max} step {step}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

pub fn planckian_series(
    min: f64,
    max: f64,
    step: f64,
    grid: &WavelengthGrid,
) -> Result<Vec<IlluminantSpd>> {
    planckian_temperatures(min, max, step)?
        .into_iter()
        .map(|t| planckian_spd(t, grid))
        .collect()
}
