//! Discrete interreflection rendering of a uniformly coloured cavity.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::colorimetry::CameraSensitivities;
use crate::error::{Error, Result};
use crate::geometry::{Panel, VCavity};
use crate::kernel::{EigenSystem, KernelMatrix};
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, WavelengthGrid};

/// Per-wavelength facet vectors, stored wavelength-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceField {
    grid: WavelengthGrid,
    facets: usize,
    data: Vec<f64>,
}

impl IrradianceField {
    pub fn new(grid: WavelengthGrid, facets: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.count() * facets {
            return Err(Error::Shape(format!(
                "field needs {} values, got {}",
                grid.count() * facets,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("field values must be finite and non-negative".into()));
        }
        Ok(Self { grid, facets, data })
    }

    pub fn zeros(grid: WavelengthGrid, facets: usize) -> Self {
        Self {
            grid,
            facets,
            data: vec![0.0; grid.count() * facets],
        }
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn facets(&self) -> usize {
        self.facets
    }

    /// Facet vector at wavelength index `l`.
    pub fn at(&self, l: usize) -> &[f64] {
        &self.data[l * self.facets..(l + 1) * self.facets]
    }

    fn at_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.facets..(l + 1) * self.facets]
    }

    pub fn value(&self, facet: usize, l: usize) -> f64 {
        self.data[l * self.facets + facet]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            facets: self.facets,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Collimated frontal light: every facet receives `illum(λ)`.
pub fn direct_irradiance(illum: &IlluminantSpd, m: usize) -> Result<IrradianceField> {
    if m == 0 {
        return Err(Error::Domain("need at least one facet".into()));
    }
    let grid = *illum.grid();
    let data = illum
        .values()
        .iter()
        .flat_map(|&e| std::iter::repeat_n(e, m))
        .collect();
    Ok(IrradianceField {
        grid,
        facets: m,
        data,
    })
}

fn check_inputs(m: usize, r: &ReflectanceSpectrum, e0: &IrradianceField) -> Result<()> {
    if e0.facets != m {
        return Err(Error::Shape(format!(
            "kernel has {m} facets but the field has {}",
            e0.facets
        )));
    }
    if *r.grid() != e0.grid {
        return Err(Error::Shape("reflectance and field on different grids".into()));
    }
    Ok(())
}

/// Cumulated irradiance after `n` bounces: `Σ_{b=0..n} (K·r(λ))^b·E0(λ)`.
pub fn nbounce_irradiance(
    k: &KernelMatrix,
    r: &ReflectanceSpectrum,
    e0: &IrradianceField,
    n: usize,
) -> Result<IrradianceField> {
    check_inputs(k.size(), r, e0)?;
    let mut out = e0.clone();
    for (l, &rl) in r.values().iter().enumerate() {
        if rl == 0.0 || n == 0 {
            continue;
        }
        let mut term = DVector::from_column_slice(e0.at(l));
        let mut acc = term.clone();
        for _ in 0..n {
            term = k.matrix() * term * rl;
            acc += &term;
        }
        out.at_mut(l).copy_from_slice(acc.as_slice());
    }
    Ok(out)
}

/// Radiance towards the camera, `(1/π)·(R⁻¹ − K)⁻¹·E0` per wavelength, by
/// dense LU. Kept as the reference path for [`infinite_bounce_radiance_eig`].
pub fn infinite_bounce_radiance(
    k: &KernelMatrix,
    r: &ReflectanceSpectrum,
    e0: &IrradianceField,
) -> Result<IrradianceField> {
    let m = k.size();
    check_inputs(m, r, e0)?;
    let rho = k.spectral_radius();
    let mut out = IrradianceField::zeros(e0.grid, m);
    for (l, &rl) in r.values().iter().enumerate() {
        if rl == 0.0 {
            continue;
        }
        if rho * rl >= 1.0 {
            return Err(Error::Divergence {
                radius: rho * rl,
                wavelength: e0.grid.wavelength(l),
            });
        }
        let a = DMatrix::identity(m, m) / rl - k.matrix();
        let x = a
            .lu()
            .solve(&DVector::from_column_slice(e0.at(l)))
            .ok_or_else(|| Error::Numeric(format!("singular system at {} nm", e0.grid.wavelength(l))))?;
        for (o, v) in out.at_mut(l).iter_mut().zip(x.iter()) {
            *o = (v / std::f64::consts::PI).max(0.0);
        }
    }
    Ok(out)
}

/// `1/(1/r − μ)` written as `r/(1 − r·μ)`, guarded against singularity.
fn resolvent_gain(r: f64, mu: f64, wavelength: f64) -> Result<f64> {
    let denom = 1.0 - r * mu;
    if denom.abs() <= 1e-12 * r.max(1.0) {
        return Err(Error::Numeric(format!(
            "1/r coincides with kernel eigenvalue {mu} at {wavelength} nm"
        )));
    }
    if denom < 0.0 {
        return Err(Error::Divergence {
            radius: r * mu,
            wavelength,
        });
    }
    Ok(r / denom)
}

/// Same contract as [`infinite_bounce_radiance`], through `K = Q·diag(μ)·Qᵀ`.
pub fn infinite_bounce_radiance_eig(
    eig: &EigenSystem,
    r: &ReflectanceSpectrum,
    e0: &IrradianceField,
) -> Result<IrradianceField> {
    let m = eig.size();
    check_inputs(m, r, e0)?;
    let q = &eig.eigenvectors;
    let mut out = IrradianceField::zeros(e0.grid, m);
    for (l, &rl) in r.values().iter().enumerate() {
        if rl == 0.0 {
            continue;
        }
        let wl = e0.grid.wavelength(l);
        let mut w = q.tr_mul(&DVector::from_column_slice(e0.at(l)));
        for (wi, &mu) in w.iter_mut().zip(eig.eigenvalues.iter()) {
            *wi *= resolvent_gain(rl, mu, wl)?;
        }
        let x = q * w;
        for (o, v) in out.at_mut(l).iter_mut().zip(x.iter()) {
            *o = (v / std::f64::consts::PI).max(0.0);
        }
    }
    Ok(out)
}

/// Linear sensor responses, facet-major `m × s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPatch {
    pub facets: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl RenderedPatch {
    pub fn get(&self, facet: usize, channel: usize) -> f64 {
        self.data[facet * self.channels + channel]
    }

    pub fn facet(&self, facet: usize) -> &[f64] {
        &self.data[facet * self.channels..(facet + 1) * self.channels]
    }
}

/// `ρ(facet, c) = Σ_λ c(λ)·L(facet, λ)·Δλ`.
pub fn camera_response(l: &IrradianceField, cam: &CameraSensitivities) -> Result<RenderedPatch> {
    if *cam.grid() != l.grid {
        return Err(Error::Shape("camera and radiance on different grids".into()));
    }
    let s = cam.len();
    let m = l.facets;
    let step = l.grid.step();
    let mut data = vec![0.0; m * s];
    for (c, ch) in cam.channels.iter().enumerate() {
        for (li, &w) in ch.values().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (f, v) in l.at(li).iter().enumerate() {
                data[f * s + c] += w * v * step;
            }
        }
    }
    Ok(RenderedPatch {
        facets: m,
        channels: s,
        data,
    })
}

/// `n × n × s` image of one panel, row 0 adjacent to the fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelImage {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl PanelImage {
    pub fn from_patch(patch: &RenderedPatch, cavity: &VCavity, panel: Panel) -> Result<Self> {
        let n = cavity.facets_per_side;
        if patch.facets != cavity.facet_count() {
            return Err(Error::Shape(format!(
                "patch has {} facets, cavity has {}",
                patch.facets,
                cavity.facet_count()
            )));
        }
        let offset = match panel {
            Panel::A => 0,
            Panel::B => n * n,
        };
        let s = patch.channels;
        let data = patch.data[offset * s..(offset + n * n) * s].to_vec();
        Ok(Self {
            size: n,
            channels: s,
            data,
        })
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.size + col) * self.channels + channel]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with columns `facet_row, facet_col, <channel names>`.
    pub fn write_csv<W: Write>(&self, names: &[String], writer: W) -> Result<()> {
        if names.len() != self.channels {
            return Err(Error::Shape("one name per channel required".into()));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["facet_row".to_string(), "facet_col".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for row in 0..self.size {
            for col in 0..self.size {
                let mut rec = vec![row.to_string(), col.to_string()];
                rec.extend((0..self.channels).map(|c| format!("{:e}", self.get(row, col, c))));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`PanelImage::write_csv`]; returns the image and its
    /// channel names. Every facet of the square panel must appear once.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<(Self, Vec<String>)> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "facet_row" || &header[1] != "facet_col" {
            return Err(Error::Format("expected columns facet_row, facet_col, <channels>".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let s = names.len();
        let mut cells = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { row: i + 2, msg: format!("bad value in column {}", k + 1) })
            };
            let (row, col) = (parse(0)?, parse(1)?);
            if row < 0.0 || col < 0.0 || row.fract() != 0.0 || col.fract() != 0.0 {
                return Err(Error::Parse { row: i + 2, msg: "facet indices must be non-negative integers".into() });
            }
            let vals = (0..s).map(|c| parse(c + 2)).collect::<Result<Vec<_>>>()?;
            cells.push((row as usize, col as usize, vals));
        }
        let size = (cells.len() as f64).sqrt().round() as usize;
        if size == 0 || size * size != cells.len() {
            return Err(Error::Format(format!("{} facets do not form a square panel", cells.len())));
        }
        let mut data = vec![f64::NAN; size * size * s];
        for (row, col, vals) in cells {
            if row >= size || col >= size || !data[(row * size + col) * s].is_nan() {
                return Err(Error::Format(format!("facet ({row}, {col}) is out of range or repeated")));
            }
            data[(row * size + col) * s..(row * size + col + 1) * s].copy_from_slice(&vals);
        }
        Ok((Self { size, channels: s, data }, names))
    }

    /// 16-bit linear PNG; values are multiplied by `scale` and clipped to
    /// `[0, 1]`. One channel gives greyscale, three give RGB.
    pub fn write_png16(&self, path: impl AsRef<Path>, scale: f64) -> Result<()> {
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            s => return Err(Error::Shape(format!("PNG output needs 1 or 3 channels, got {s}"))),
        };
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), self.size as u32, self.size as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Sixteen);
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|v| (((v * scale).clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
            .collect();
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&bytes).map_err(png_err)?;
        w.finish().map_err(png_err)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn png_err(e: png::EncodingError) -> Error {
    Error::Format(e.to_string())
}

/// Full pipeline for one panel: direct light, infinite bounces, camera.
/// Evaluated through [`PanelRenderer`], which is algebraically identical to
/// composing [`direct_irradiance`], [`infinite_bounce_radiance_eig`] and
/// [`camera_response`].
pub fn render_panel_image(
    cavity: &VCavity,
    eig: &EigenSystem,
    r: &ReflectanceSpectrum,
    illum: &IlluminantSpd,
    cam: &CameraSensitivities,
) -> Result<PanelImage> {
    PanelRenderer::new(cavity, eig, cam)?.render(r, illum)
}

/// Precomputed factors for rendering many reflectance/illuminant pairs on
/// one geometry. With uniform direct light `Qᵀ·E0(λ) = E0(λ)·Qᵀ·1`, so the
/// camera sum can be taken in the eigenbasis before mapping back to facets.
#[derive(Debug, Clone)]
pub struct PanelRenderer {
    size: usize,
    eigenvalues: Vec<f64>,
    ones_proj: Vec<f64>,
    q_panel: DMatrix<f64>,
    cam: DMatrix<f64>,
    grid: WavelengthGrid,
}

impl PanelRenderer {
    pub fn new(cavity: &VCavity, eig: &EigenSystem, cam: &CameraSensitivities) -> Result<Self> {
        let m = cavity.facet_count();
        if eig.size() != m {
            return Err(Error::Shape("eigensystem does not match the cavity".into()));
        }
        let n2 = cavity.facets_per_side * cavity.facets_per_side;
        let q = &eig.eigenvectors;
        let ones_proj = q.row_sum().transpose().iter().copied().collect();
        Ok(Self {
            size: cavity.facets_per_side,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            ones_proj,
            q_panel: q.rows(0, n2).into_owned(),
            cam: cam.integration_matrix(),
            grid: *cam.grid(),
        })
    }

    pub fn channels(&self) -> usize {
        self.cam.nrows()
    }

    pub fn render(&self, r: &ReflectanceSpectrum, illum: &IlluminantSpd) -> Result<PanelImage> {
        if *r.grid() != self.grid || *illum.grid() != self.grid {
            return Err(Error::Shape("inputs not on the camera grid".into()));
        }
        let m = self.eigenvalues.len();
        let s = self.cam.nrows();
        let mut u = DMatrix::<f64>::zeros(m, s);
        let mut gain = vec![0.0; m];
        for (l, (&rl, &el)) in r.values().iter().zip(illum.values()).enumerate() {
            if rl == 0.0 || el == 0.0 {
                continue;
            }
            let wl = self.grid.wavelength(l);
            for (g, &mu) in gain.iter_mut().zip(&self.eigenvalues) {
                *g = resolvent_gain(rl, mu, wl)?;
            }
            for c in 0..s {
                let a = self.cam[(c, l)] * el / std::f64::consts::PI;
                if a == 0.0 {
                    continue;
                }
                let mut col = u.column_mut(c);
                for i in 0..m {
                    col[i] += a * gain[i] * self.ones_proj[i];
                }
            }
        }
        let img = &self.q_panel * u;
        let n2 = self.size * self.size;
        let mut data = Vec::with_capacity(n2 * s);
        for f in 0..n2 {
            for c in 0..s {
                data.push(img[(f, c)].max(0.0));
            }
        }
        Ok(PanelImage {
            size: self.size,
            channels: s,
            data,
        })
    }
}
