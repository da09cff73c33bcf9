//! Spectral error metrics and aggregate statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

/// Root-mean-square difference of two spectra on the same grid.
pub fn rmse(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    a.check_same_grid(b)?;
    rmse_values(a.values(), b.values())
}

pub fn rmse_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// How the correlation behind the Pearson distance is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PearsonMode {
    /// 1 − Pearson correlation of mean-centred vectors.
    #[default]
    Centered,
    /// 1 − cosine similarity of the raw vectors.
    Uncentered,
}

/// Pearson distance `1 − corr(a, b)`, in `[0, 2]`.
pub fn pearson_distance(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    a.check_same_grid(b)?;
    pearson_distance_values(a.values(), b.values(), PearsonMode::Centered)
}

pub fn pearson_distance_values(a: &[f64], b: &[f64], mode: PearsonMode) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape("pearson distance needs equal non-empty lengths".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = match mode {
        PearsonMode::Centered => (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n),
        PearsonMode::Uncentered => (0.0, 0.0),
    };
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Relative cutoff: a constant vector leaves only rounding noise after centring.
    let scale_a: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    let scale_b: f64 = b.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    if saa <= 1e-24 * scale_a || sbb <= 1e-24 * scale_b || saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate(
            "correlation undefined for a constant vector".into(),
        ));
    }
    let r = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - r)
}

/// Average, maximum and nearest-rank 95th percentile of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg: f64,
    pub max: f64,
    pub p95: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            avg: values.iter().sum::<f64>() / values.len() as f64,
            max: *sorted.last().expect("non-empty"),
            p95: nearest_rank(&sorted, 95.0),
            count: values.len(),
        })
    }
}

/// Nearest-rank percentile of an ascending-sorted, non-empty slice.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::WavelengthGrid;

    fn spec(f: impl Fn(usize) -> f64) -> Spectrum {
        Spectrum::new(WavelengthGrid::visible(), (0..61).map(f).collect()).unwrap()
    }

    #[test]
    fn rmse_basics() {
        let x = spec(|i| i as f64 / 100.0);
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        let z = spec(|_| 0.0);
        let c = spec(|_| 0.3);
        assert!((rmse(&z, &c).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rmse_rejects_grid_mismatch() {
        let a = spec(|_| 0.0);
        let b = Spectrum::constant(WavelengthGrid::new(400.0, 700.0, 10.0).unwrap(), 0.0).unwrap();
        assert!(matches!(rmse(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = spec(|i| ((i as f64) / 7.0).sin() + 1.5);
        assert!(pearson_distance(&x, &x).unwrap().abs() < 1e-15);
        let y = spec(|i| 3.0 * (((i as f64) / 7.0).sin() + 1.5) + 0.2);
        assert!(pearson_distance(&x, &y).unwrap().abs() < 1e-12);
        let neg: Vec<f64> = x.values().iter().map(|v| -v).collect();
        let d = pearson_distance_values(x.values(), &neg, PearsonMode::Centered).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_is_degenerate() {
        let x = spec(|i| i as f64);
        let c = spec(|_| 0.4);
        assert!(matches!(pearson_distance(&x, &c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn uncentered_variant_is_cosine() {
        let d = pearson_distance_values(&[1.0, 0.0], &[0.0, 1.0], PearsonMode::Uncentered).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95.0), 19.0);
        assert_eq!(nearest_rank(&v, 100.0), 20.0);
        assert_eq!(nearest_rank(&[3.0], 95.0), 3.0);
        let s = Summary::of(&[0.1, 0.3, 0.2]).unwrap();
        assert_eq!(s.max, 0.3);
        assert_eq!(s.p95, 0.3);
        assert!((s.avg - 0.2).abs() < 1e-15);
        assert!(Summary::of(&[]).is_none());
    }
}
