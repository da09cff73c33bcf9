//! Illuminants that make a white surface a flat-surface metamer of a coloured one.

use nalgebra::{DMatrix, DVector};

use crate::colorimetry::CameraSensitivities;
use crate::error::{Error, Result};
use crate::nnls::ldp;
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, Spectrum};

/// Minimum-norm `E' ≥ 0` with `C·E' = C·(r ⊙ illum)`: a perfect white
/// surface under `E'` reads the same as `r` under `illum` when flat.
pub fn construct_metameric_light(
    r: &ReflectanceSpectrum,
    illum: &IlluminantSpd,
    cam: &CameraSensitivities,
) -> Result<IlluminantSpd> {
    let grid = *cam.grid();
    if *r.grid() != grid || *illum.grid() != grid {
        return Err(Error::Shape("reflectance, illuminant and camera must share a grid".into()));
    }
    let n = grid.count();
    let s = cam.len();
    if s >= n {
        return Err(Error::Contract(format!(
            "{s} channels over {n} wavelengths leave no metameric freedom"
        )));
    }
    if r.values().iter().all(|v| *v == 1.0) {
        return Ok(IlluminantSpd::unnormalized(illum.as_spectrum().clone()));
    }
    let c = cam.integration_matrix();
    let scale = c.amax();
    if scale == 0.0 {
        return Err(Error::Degenerate("camera has no sensitivity".into()));
    }
    let c = c / scale;
    let stimulus = DVector::from_iterator(
        n,
        r.values().iter().zip(illum.values()).map(|(a, b)| a * b),
    );
    let target = &c * &stimulus;

    let mut g = DMatrix::zeros(2 * s + n, n);
    let mut h = DVector::zeros(2 * s + n);
    g.view_mut((0, 0), (s, n)).copy_from(&c);
    g.view_mut((s, 0), (s, n)).copy_from(&(-&c));
    g.view_mut((2 * s, 0), (n, n)).fill_with_identity();
    h.rows_mut(0, s).copy_from(&target);
    h.rows_mut(s, s).copy_from(&(-&target));
    let rough = ldp(&g, &h)?;

    let peak = rough.amax();
    let active: Vec<usize> = (0..n).filter(|&j| rough[j] > 1e-9 * peak).collect();
    let polished = polish(&c, &target, &active, n);
    let e = match polished {
        Some(x) if x.iter().all(|v| *v >= 0.0) => x,
        _ => rough.map(|v| v.max(0.0)),
    };
    let residual = (&c * &e - &target).amax() / target.amax().max(f64::MIN_POSITIVE);
    if residual > 1e-6 {
        return Err(Error::Infeasible(format!(
            "best non-negative light misses the target by {residual:e}"
        )));
    }
    Ok(IlluminantSpd::unnormalized(Spectrum::new(grid, e.iter().copied().collect())?))
}

/// Minimum-norm solution of `C_A·x_A = t` supported on `active`.
fn polish(c: &DMatrix<f64>, t: &DVector<f64>, active: &[usize], n: usize) -> Option<DVector<f64>> {
    if active.len() < c.nrows() {
        return None;
    }
    let ca = c.select_columns(active);
    let gram = &ca * ca.transpose();
    let y = gram.cholesky()?.solve(t);
    let xa = ca.tr_mul(&y);
    let mut x = DVector::zeros(n);
    for (k, &j) in active.iter().enumerate() {
        x[j] = xa[k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorimetry::ColorMatchingFunctions;
    use crate::spectrum::WavelengthGrid;

    fn xyz_camera() -> CameraSensitivities {
        CameraSensitivities::from_cmf(&ColorMatchingFunctions::cie1931(&WavelengthGrid::visible()).unwrap())
    }

    fn response(cam: &CameraSensitivities, spectrum: &[f64]) -> DVector<f64> {
        cam.integration_matrix() * DVector::from_column_slice(spectrum)
    }

    #[test]
    fn white_surface_reproduces_original_light() {
        let g = WavelengthGrid::visible();
        let cam = xyz_camera();
        let white = ReflectanceSpectrum::constant(g, 1.0).unwrap();
        let illum = crate::data::d65(&g).unwrap();
        let e = construct_metameric_light(&white, &illum, &cam).unwrap();
        assert_eq!(e.values(), illum.values());
        let a = response(&cam, e.values());
        let b = response(&cam, illum.values());
        assert!((a - &b).amax() <= 1e-8 * b.amax());
        assert!(e.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn too_many_channels_is_rejected() {
        let g = WavelengthGrid::new(400.0, 410.0, 5.0).unwrap();
        let ch = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            Spectrum::new(g, v).unwrap()
        };
        let cam = CameraSensitivities::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![ch(0), ch(1), ch(2)],
        )
        .unwrap();
        let r = ReflectanceSpectrum::constant(g, 0.5).unwrap();
        let e = IlluminantSpd::equal_energy(g);
        assert!(matches!(
            construct_metameric_light(&r, &e, &cam),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn solution_is_no_longer_than_the_trivial_one() {
        let g = WavelengthGrid::visible();
        let cam = xyz_camera();
        let r = ReflectanceSpectrum::clamped(
            g,
            &(0..61).map(|i| 0.05 + 0.4 * (i as f64 / 60.0).powi(2)).collect::<Vec<_>>(),
        )
        .unwrap();
        let illum = IlluminantSpd::equal_energy(g);
        let e = construct_metameric_light(&r, &illum, &cam).unwrap();
        let trivial: Vec<f64> = r.values().iter().zip(illum.values()).map(|(a, b)| a * b).collect();
        let a = response(&cam, e.values());
        let b = response(&cam, &trivial);
        assert!((a - &b).amax() <= 1e-6 * b.amax());
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm(e.values()) <= norm(&trivial) + 1e-12);
    }
}
