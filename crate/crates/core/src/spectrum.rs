//! Wavelength grids and sampled spectra.
//!
//! Every spectral quantity in the crate lives on a [`WavelengthGrid`]; the
//! default grid is 400–700 nm in 5 nm steps (61 samples). Raw tabulated data
//! at other pitches is brought onto a grid with [`resample_spectrum`].

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An evenly spaced, inclusive wavelength grid in nanometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    start: f64,
    end: f64,
    step: f64,
}

impl WavelengthGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && step.is_finite()) || step <= 0.0 || end < start {
            return Err(Error::Domain(format!(
                "invalid wavelength grid {start}..{end} step {step}"
            )));
        }
        let n = (end - start) / step;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "grid span {start}..{end} is not a whole number of {step} nm steps"
            )));
        }
        Ok(Self { start, end, step })
    }

    /// 400–700 nm at 5 nm, 61 samples.
    pub const fn visible() -> Self {
        Self {
            start: 400.0,
            end: 700.0,
            step: 5.0,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        ((self.end - self.start) / self.step).round() as usize + 1
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count()).map(move |i| self.wavelength(i))
    }

    /// Index of the grid node at `nm`, if `nm` is (within 1e-9) a node.
    pub fn index_of(&self, nm: f64) -> Option<usize> {
        let t = (nm - self.start) / self.step;
        let i = t.round();
        if (t - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < self.count() {
            Some(i as usize)
        } else {
            None
        }
    }
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        Self::visible()
    }
}

/// A non-negative function of wavelength sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    grid: WavelengthGrid,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: WavelengthGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::Shape(format!(
                "spectrum has {} values but grid has {} nodes",
                values.len(),
                grid.count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "spectrum values must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: WavelengthGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.count()])
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn check_same_grid(&self, other: &Spectrum) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

/// A surface reflectance: every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceSpectrum(Spectrum);

impl ReflectanceSpectrum {
    pub fn new(spectrum: Spectrum) -> Result<Self> {
        if let Some(v) = spectrum.values.iter().find(|v| **v > 1.0) {
            return Err(Error::Domain(format!("reflectance value {v} exceeds 1")));
        }
        Ok(Self(spectrum))
    }

    /// Builds a reflectance from arbitrary finite values, clamping into `[0, 1]`.
    pub fn clamped(grid: WavelengthGrid, values: &[f64]) -> Result<Self> {
        let values = values
            .iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Ok(Self(Spectrum::new(grid, values)?))
    }

    pub fn constant(grid: WavelengthGrid, value: f64) -> Result<Self> {
        Self::new(Spectrum::constant(grid, value)?)
    }

    pub fn as_spectrum(&self) -> &Spectrum {
        &self.0
    }
}

impl Deref for ReflectanceSpectrum {
    type Target = Spectrum;

    fn deref(&self) -> &Spectrum {
        &self.0
    }
}

/// An illuminant spectral power distribution, peak-normalized to 1 on its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminantSpd(Spectrum);

impl IlluminantSpd {
    /// Peak-normalizes `spectrum`. An all-zero spectrum is kept as is.
    pub fn normalized(spectrum: Spectrum) -> Self {
        let peak = spectrum.max();
        if peak > 0.0 {
            let values = spectrum.values.iter().map(|v| v / peak).collect();
            Self(Spectrum {
                grid: spectrum.grid,
                values,
            })
        } else {
            Self(spectrum)
        }
    }

    /// Wraps a spectrum without rescaling it. Used for predicted SPDs and
    /// test fixtures whose scale must be preserved.
    pub fn unnormalized(spectrum: Spectrum) -> Self {
        Self(spectrum)
    }

    /// Equal-energy illuminant (all ones).
    pub fn equal_energy(grid: WavelengthGrid) -> Self {
        Self(Spectrum {
            grid,
            values: vec![1.0; grid.count()],
        })
    }

    pub fn as_spectrum(&self) -> &Spectrum {
        &self.0
    }
}

impl Deref for IlluminantSpd {
    type Target = Spectrum;

    fn deref(&self) -> &Spectrum {
        &self.0
    }
}

/// Linearly interpolates tabulated `(wavelength, value)` pairs onto `grid`.
///
/// `raw` must be sorted by wavelength and cover the whole grid. Negative
/// interpolated values are clamped to zero.
pub fn resample_spectrum(raw: &[(f64, f64)], grid: &WavelengthGrid) -> Result<Spectrum> {
    let (first, last) = match (raw.first(), raw.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => {
            return Err(Error::Coverage {
                have_start: f64::NAN,
                have_end: f64::NAN,
                need_start: grid.start(),
                need_end: grid.end(),
            })
        }
    };
    if raw.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Contract(
            "raw spectral samples must be strictly ascending in wavelength".into(),
        ));
    }
    const EPS: f64 = 1e-9;
    if first > grid.start() + EPS || last < grid.end() - EPS {
        return Err(Error::Coverage {
            have_start: first,
            have_end: last,
            need_start: grid.start(),
            need_end: grid.end(),
        });
    }
    let mut values = Vec::with_capacity(grid.count());
    let mut k = 0;
    for nm in grid.wavelengths() {
        while k + 1 < raw.len() - 1 && raw[k + 1].0 <= nm {
            k += 1;
        }
        let v = if raw.len() == 1 {
            raw[0].1
        } else {
            let (x0, y0) = raw[k];
            let (x1, y1) = raw[k + 1];
            if (nm - x0).abs() <= EPS {
                y0
            } else if (nm - x1).abs() <= EPS {
                y1
            } else {
                y0 + (y1 - y0) * (nm - x0) / (x1 - x0)
            }
        };
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite spectral value at {nm} nm")));
        }
        values.push(v.max(0.0));
    }
    Spectrum::new(*grid, values)
}
