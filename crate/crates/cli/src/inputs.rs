//! Parsing of illuminant, camera and patch specifications.

use std::path::Path;

use interspec::colorimetry::{CameraSensitivities, ColorMatchingFunctions};
use interspec::data::{self, Patch};
use interspec::dataset::NamedIlluminant;
use interspec::spectrum::{IlluminantSpd, ReflectanceSpectrum, WavelengthGrid};
use interspec::table::SpectralTable;

use crate::args::CameraArgs;
use crate::error::{CliError, CliResult};

fn number(s: &str, what: &str) -> CliResult<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad {what} {s:?}")))
}

/// One term of an illuminant list; `planck:<min>:<max>:<step>` expands to a series.
fn illuminant_term(term: &str, grid: &WavelengthGrid) -> CliResult<Vec<NamedIlluminant>> {
    let lower = term.trim().to_ascii_lowercase();
    let named = |id: &str, spd: IlluminantSpd| NamedIlluminant { id: id.into(), kelvin: None, spd };
    Ok(match lower.as_str() {
        "d65" => vec![named("d65", data::d65(grid)?)],
        "d50" => vec![named("d50", data::d50(grid)?)],
        "e" | "equal" => vec![named("e", IlluminantSpd::equal_energy(*grid))],
        _ => match lower.strip_prefix("planck:") {
            Some(rest) => {
                let parts: Vec<&str> = rest.split(':').collect();
                match parts.as_slice() {
                    [k] => vec![NamedIlluminant::planckian(number(k, "temperature")?, grid)?],
                    [a, b, s] => NamedIlluminant::planckian_series(
                        number(a, "temperature")?,
                        number(b, "temperature")?,
                        number(s, "temperature step")?,
                        grid,
                    )?,
                    _ => return Err(CliError::Config(format!("bad planckian spec {term:?}"))),
                }
            }
            None => {
                let path = Path::new(term.trim());
                if !path.exists() {
                    return Err(CliError::Config(format!("unknown illuminant {term:?}")));
                }
                let table = SpectralTable::from_path(path)?;
                let spd = IlluminantSpd::normalized(table.resample_column(0, grid)?);
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                vec![named(&id, spd)]
            }
        },
    })
}

pub fn illuminants(spec: &str, grid: &WavelengthGrid) -> CliResult<Vec<NamedIlluminant>> {
    let mut out = Vec::new();
    for term in spec.split(',').filter(|t| !t.trim().is_empty()) {
        out.extend(illuminant_term(term, grid)?);
    }
    if out.is_empty() {
        return Err(CliError::Config("no illuminants given".into()));
    }
    Ok(out)
}

pub fn illuminant(spec: &str, grid: &WavelengthGrid) -> CliResult<NamedIlluminant> {
    let mut all = illuminants(spec, grid)?;
    if all.len() != 1 {
        return Err(CliError::Config(format!("{spec:?} names {} illuminants, expected one", all.len())));
    }
    Ok(all.remove(0))
}

/// Camera with its exposure gain applied; returns the gain used.
pub fn camera(args: &CameraArgs, grid: &WavelengthGrid) -> CliResult<(String, CameraSensitivities, f64)> {
    let (id, cam) = match args.camera.to_ascii_lowercase().as_str() {
        "xyz" => ("xyz".to_string(), CameraSensitivities::from_cmf(&ColorMatchingFunctions::cie1931(grid)?)),
        "canon5d2" | "canon" => ("canon5d2".to_string(), CameraSensitivities::canon_5d_mark_ii(grid)?),
        _ => {
            let path = Path::new(&args.camera);
            if !path.exists() {
                return Err(CliError::Config(format!("unknown camera {:?}", args.camera)));
            }
            (args.camera.clone(), CameraSensitivities::from_path(path, grid)?)
        }
    };
    let gain = match args.gain {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(CliError::Config(format!("gain must be positive, got {g}"))),
        None => cam.unit_gain(),
    };
    Ok((id, cam.clone(), gain))
}

pub fn patches(spec: &str, grid: &WavelengthGrid) -> CliResult<Vec<Patch>> {
    if spec.eq_ignore_ascii_case("munsell") {
        return Ok(data::munsell_patches(grid)?);
    }
    Ok(data::load_patches(spec, grid)?)
}

pub fn reflectance_file(path: &Path, grid: &WavelengthGrid) -> CliResult<ReflectanceSpectrum> {
    let table = SpectralTable::from_path(path)?;
    let s = table.resample_column(0, grid)?;
    Ok(ReflectanceSpectrum::new(s)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planckian_series_expands() {
        let g = WavelengthGrid::visible();
        let l = illuminants("planck:4000:15000:500", &g).unwrap();
        assert_eq!(l.len(), 23);
        let l = illuminants("d65, planck:6500", &g).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].id, "d65");
        assert!(illuminants("nope", &g).is_err());
        assert!(illuminant("planck:4000:5000:500", &g).is_err());
    }

    #[test]
    fn camera_gain_defaults_to_unit_white() {
        let g = WavelengthGrid::visible();
        let (id, cam, gain) = camera(&CameraArgs { camera: "xyz".into(), gain: None }, &g).unwrap();
        assert_eq!(id, "xyz");
        assert_eq!(gain, cam.unit_gain());
        assert!(camera(&CameraArgs { camera: "xyz".into(), gain: Some(-1.0) }, &g).is_err());
    }
}
