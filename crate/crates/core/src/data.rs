//! Bundled reference tables and reflectance-set ingestion.
//!
//! The CIE 1931 2° colour-matching functions, CIE D65/D50 and the 1269 Munsell
//! matte reflectances are compiled into the binary and resampled onto the
//! requested grid on first use.

use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, WavelengthGrid};
use crate::table::SpectralTable;

pub const CIE1931_CSV: &str = include_str!("../data/cie1931_2deg_xyz.csv");
pub const D65_CSV: &str = include_str!("../data/cie_d65.csv");
pub const D50_CSV: &str = include_str!("../data/cie_d50.csv");
pub const MUNSELL_CSV: &str = include_str!("../data/munsell1269.csv");
pub const MUNSELL_NOTATION_CSV: &str = include_str!("../data/munsell1269_notation.csv");
pub const CANON_5D_MK2_CSV: &str = include_str!("../data/canon_eos_5d_mark_ii.csv");

/// Values above this before clamping indicate a scaling problem in the source.
const REFLECTANCE_SANITY_LIMIT: f64 = 1.05;

/// A named reflectance sample (one Munsell chip, one fabric, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub id: String,
    pub reflectance: ReflectanceSpectrum,
}

/// Converts every value column of a spectral table into a reflectance,
/// resampled to `grid` and clamped to `[0, 1]`.
pub fn patches_from_table(table: &SpectralTable, grid: &WavelengthGrid) -> Result<Vec<Patch>> {
    let mut out = Vec::with_capacity(table.names.len());
    for (i, name) in table.names.iter().enumerate() {
        let s = table.resample_column(i, grid)?;
        let peak = table.columns[i].iter().copied().fold(f64::MIN, f64::max);
        if peak > REFLECTANCE_SANITY_LIMIT {
            warn!("reflectance {name} peaks at {peak:.3} before clamping; check source scaling");
        }
        out.push(Patch {
            id: name.clone(),
            reflectance: ReflectanceSpectrum::clamped(*grid, s.values())?,
        });
    }
    Ok(out)
}

/// Loads a Munsell-layout spectral CSV (one column per chip) onto the
/// default grid.
pub fn load_munsell(path: impl AsRef<Path>) -> Result<Vec<ReflectanceSpectrum>> {
    Ok(load_patches(path, &WavelengthGrid::visible())?
        .into_iter()
        .map(|p| p.reflectance)
        .collect())
}

pub fn load_patches(path: impl AsRef<Path>, grid: &WavelengthGrid) -> Result<Vec<Patch>> {
    patches_from_table(&SpectralTable::from_path(path)?, grid)
}

/// The bundled 1269 Munsell matte chips, ids `p0001`..`p1269`.
pub fn munsell_patches(grid: &WavelengthGrid) -> Result<Vec<Patch>> {
    patches_from_table(&SpectralTable::read(MUNSELL_CSV.as_bytes())?, grid)
}

/// Munsell notation of a bundled chip id.
#[derive(Debug, Clone, PartialEq)]
pub struct MunsellNotation {
    pub id: String,
    pub hue: String,
    pub value: f64,
    pub chroma: f64,
}

impl std::fmt::Display for MunsellNotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}/{}", self.hue, self.value, self.chroma)
    }
}

pub fn munsell_notations() -> Vec<MunsellNotation> {
    MUNSELL_NOTATION_CSV
        .lines()
        .skip(1)
        .filter_map(|line| {
            let mut it = line.split(',');
            Some(MunsellNotation {
                id: it.next()?.to_owned(),
                hue: it.next()?.to_owned(),
                value: it.next()?.parse().ok()?,
                chroma: it.next()?.parse().ok()?,
            })
        })
        .collect()
}

/// Resolves a patch selector: a bundled id (`p0123`) or a Munsell notation
/// such as `5YR 4/6`.
pub fn find_munsell_patch(selector: &str, grid: &WavelengthGrid) -> Result<Patch> {
    let id = if selector.starts_with('p') && selector[1..].chars().all(|c| c.is_ascii_digit()) {
        selector.to_owned()
    } else {
        let (hue, rest) = selector
            .trim()
            .split_once(' ')
            .ok_or_else(|| Error::Config(format!("unrecognized patch selector {selector:?}")))?;
        let (v, c) = rest
            .split_once('/')
            .ok_or_else(|| Error::Config(format!("unrecognized patch selector {selector:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad value in {selector:?}")))?;
        let c: f64 = c.trim().parse().map_err(|_| Error::Config(format!("bad chroma in {selector:?}")))?;
        munsell_notations()
            .into_iter()
            .find(|n| n.hue == hue && n.value == v && n.chroma == c)
            .map(|n| n.id)
            .ok_or_else(|| Error::Config(format!("no bundled Munsell chip {selector:?}")))?
    };
    munsell_patches(grid)?
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::Config(format!("no bundled Munsell chip {id:?}")))
}

pub fn d65(grid: &WavelengthGrid) -> Result<IlluminantSpd> {
    bundled_illuminant(D65_CSV, grid)
}

pub fn d50(grid: &WavelengthGrid) -> Result<IlluminantSpd> {
    bundled_illuminant(D50_CSV, grid)
}

fn bundled_illuminant(csv: &str, grid: &WavelengthGrid) -> Result<IlluminantSpd> {
    let t = SpectralTable::read(csv.as_bytes())?;
    Ok(IlluminantSpd::normalized(t.resample_column(0, grid)?))
}
