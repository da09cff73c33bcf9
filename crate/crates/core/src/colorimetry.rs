//! Tristimulus integration, CIELAB and the CIEDE2000 colour difference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, Spectrum, WavelengthGrid};
use crate::table::SpectralTable;

/// x̄, ȳ, z̄ on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMatchingFunctions {
    pub x: Spectrum,
    pub y: Spectrum,
    pub z: Spectrum,
}

impl ColorMatchingFunctions {
    /// CIE 1931 2° standard observer.
    pub fn cie1931(grid: &WavelengthGrid) -> Result<Self> {
        let t = SpectralTable::read(data::CIE1931_CSV.as_bytes())?;
        Ok(Self {
            x: t.resample_column(0, grid)?,
            y: t.resample_column(1, grid)?,
            z: t.resample_column(2, grid)?,
        })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.x.grid()
    }

    pub fn as_array(&self) -> [&Spectrum; 3] {
        [&self.x, &self.y, &self.z]
    }
}

/// Spectral sensitivities of an `s`-channel sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSensitivities {
    pub names: Vec<String>,
    pub channels: Vec<Spectrum>,
}

impl CameraSensitivities {
    pub fn new(names: Vec<String>, channels: Vec<Spectrum>) -> Result<Self> {
        if channels.is_empty() || names.len() != channels.len() {
            return Err(Error::Shape("camera needs one name per channel".into()));
        }
        let g = *channels[0].grid();
        if channels.iter().any(|c| *c.grid() != g) {
            return Err(Error::Shape("camera channels on different grids".into()));
        }
        Ok(Self { names, channels })
    }

    /// An "XYZ camera" whose sensitivities are the colour-matching functions.
    pub fn from_cmf(cmf: &ColorMatchingFunctions) -> Self {
        Self {
            names: vec!["X".into(), "Y".into(), "Z".into()],
            channels: vec![cmf.x.clone(), cmf.y.clone(), cmf.z.clone()],
        }
    }

    pub fn from_table(table: &SpectralTable, grid: &WavelengthGrid) -> Result<Self> {
        let channels = (0..table.names.len())
            .map(|i| table.resample_column(i, grid))
            .collect::<Result<Vec<_>>>()?;
        Self::new(table.names.clone(), channels)
    }

    pub fn from_path(path: impl AsRef<Path>, grid: &WavelengthGrid) -> Result<Self> {
        Self::from_table(&SpectralTable::from_path(path)?, grid)
    }

    /// Bundled Canon EOS 5D Mark II RGB sensitivities.
    pub fn canon_5d_mark_ii(grid: &WavelengthGrid) -> Result<Self> {
        Self::from_table(&SpectralTable::read(data::CANON_5D_MK2_CSV.as_bytes())?, grid)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.channels[0].grid()
    }

    /// Multiplies every channel by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Domain(format!("camera gain must be positive, got {factor}")));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| Spectrum::new(*c.grid(), c.values().iter().map(|v| v * factor).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.names.clone(), channels)
    }

    /// Gain under which a flat white Lambertian surface lit by a unit
    /// equal-energy source reads 1 in its strongest channel.
    pub fn unit_gain(&self) -> f64 {
        let step = self.grid().step();
        let strongest = self
            .channels
            .iter()
            .map(|c| c.values().iter().sum::<f64>() * step)
            .fold(0.0f64, f64::max);
        std::f64::consts::PI / strongest
    }

    /// `s × count` matrix of sensitivities times `Δλ`.
    pub fn integration_matrix(&self) -> nalgebra::DMatrix<f64> {
        let step = self.grid().step();
        nalgebra::DMatrix::from_fn(self.len(), self.grid().count(), |c, l| {
            self.channels[c].values()[l] * step
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Xyz {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// White point (perfect reflector) of `illum`, scaled to Y = 100.
pub fn white_point(illum: &IlluminantSpd, cmf: &ColorMatchingFunctions) -> Result<Xyz> {
    let ones = ReflectanceSpectrum::constant(*illum.grid(), 1.0)?;
    reflectance_to_xyz(&ones, illum, cmf)
}

/// Tristimulus values of a reflectance under an illuminant, rectangle-rule
/// integration, normalized so the perfect reflector has Y = 100.
pub fn reflectance_to_xyz(
    r: &ReflectanceSpectrum,
    illum: &IlluminantSpd,
    cmf: &ColorMatchingFunctions,
) -> Result<Xyz> {
    r.check_same_grid(illum)?;
    r.check_same_grid(&cmf.x)?;
    let dl = r.grid().step();
    let e = illum.values();
    let norm: f64 = cmf.y.values().iter().zip(e).map(|(y, e)| y * e).sum::<f64>() * dl;
    if norm <= 0.0 {
        return Err(Error::Degenerate(
            "illuminant has no luminance under these colour-matching functions".into(),
        ));
    }
    let k = 100.0 / norm;
    let integrate = |f: &Spectrum| -> f64 {
        f.values()
            .iter()
            .zip(r.values())
            .zip(e)
            .map(|((f, r), e)| f * r * e)
            .sum::<f64>()
            * dl
            * k
    };
    Ok(Xyz::new(integrate(&cmf.x), integrate(&cmf.y), integrate(&cmf.z)))
}

/// CIELAB coordinates together with the reference white they were computed under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub white: Xyz,
}

impl Lab {
    pub fn from_xyz(xyz: Xyz, white: Xyz) -> Self {
        const EPSILON: f64 = 216.0 / 24389.0;
        const KAPPA: f64 = 24389.0 / 27.0;
        let f = |t: f64| {
            if t > EPSILON {
                t.cbrt()
            } else {
                (KAPPA * t + 16.0) / 116.0
            }
        };
        let fx = f(xyz.x / white.x);
        let fy = f(xyz.y / white.y);
        let fz = f(xyz.z / white.z);
        Self {
            l: 116.0 * fy - 16.0,
            a: 500.0 * (fx - fy),
            b: 200.0 * (fy - fz),
            white,
        }
    }
}

/// CIEDE2000 colour difference ΔE00 (kL = kC = kH = 1).
pub fn ciede2000(c1: &Lab, c2: &Lab) -> Result<f64> {
    if c1.white != c2.white {
        return Err(Error::Contract(
            "CIEDE2000 requires both colours under the same reference white".into(),
        ));
    }
    Ok(delta_e00(c1.l, c1.a, c1.b, c2.l, c2.a, c2.b))
}

pub(crate) fn delta_e00(l1: f64, a1: f64, b1: f64, l2: f64, a2: f64, b2: f64) -> f64 {
    use std::f64::consts::PI;
    let pow25_7 = 25f64.powi(7);

    let c1 = a1.hypot(b1);
    let c2 = a2.hypot(b2);
    let c_bar = 0.5 * (c1 + c2);
    let c_bar7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + pow25_7)).sqrt());
    let a1p = (1.0 + g) * a1;
    let a2p = (1.0 + g) * a2;
    let c1p = a1p.hypot(b1);
    let c2p = a2p.hypot(b2);

    let hue = |b: f64, ap: f64| {
        if b == 0.0 && ap == 0.0 {
            0.0
        } else {
            let h = b.atan2(ap);
            if h < 0.0 {
                h + 2.0 * PI
            } else {
                h
            }
        }
    };
    let h1p = hue(b1, a1p);
    let h2p = hue(b2, a2p);

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let dh_small = if c1p * c2p == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > PI {
            d - 2.0 * PI
        } else if d < -PI {
            d + 2.0 * PI
        } else {
            d
        }
    };
    let dh = 2.0 * (c1p * c2p).sqrt() * (dh_small / 2.0).sin();

    let l_bar = 0.5 * (l1 + l2);
    let cp_bar = 0.5 * (c1p + c2p);
    let hp_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= PI {
        0.5 * (h1p + h2p)
    } else if h1p + h2p < 2.0 * PI {
        0.5 * (h1p + h2p + 2.0 * PI)
    } else {
        0.5 * (h1p + h2p - 2.0 * PI)
    };

    let deg = PI / 180.0;
    let t = 1.0 - 0.17 * (hp_bar - 30.0 * deg).cos()
        + 0.24 * (2.0 * hp_bar).cos()
        + 0.32 * (3.0 * hp_bar + 6.0 * deg).cos()
        - 0.20 * (4.0 * hp_bar - 63.0 * deg).cos();
    let d_theta = 30.0 * deg * (-((hp_bar / deg - 275.0) / 25.0).powi(2)).exp();
    let cp_bar7 = cp_bar.powi(7);
    let r_c = 2.0 * (cp_bar7 / (cp_bar7 + pow25_7)).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * cp_bar;
    let s_h = 1.0 + 0.015 * cp_bar * t;
    let r_t = -(2.0 * d_theta).sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

/// ΔE00 between two reflectances viewed under `illum` by the observer `cmf`.
pub fn reflectance_delta_e00(
    reference: &ReflectanceSpectrum,
    estimate: &ReflectanceSpectrum,
    illum: &IlluminantSpd,
    cmf: &ColorMatchingFunctions,
) -> Result<f64> {
    let white = white_point(illum, cmf)?;
    let a = Lab::from_xyz(reflectance_to_xyz(reference, illum, cmf)?, white);
    let b = Lab::from_xyz(reflectance_to_xyz(estimate, illum, cmf)?, white);
    ciede2000(&a, &b)
}
