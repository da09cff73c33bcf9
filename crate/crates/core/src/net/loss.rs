//! Reflectance, illuminant and consistency losses with their gradients.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::colorimetry::ColorMatchingFunctions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reflectance: f64,
    pub illuminant: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reflectance: 1.0,
            illuminant: 1.0,
            consistency: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.reflectance, self.illuminant, self.consistency];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reflectance: f64,
    pub illuminant: f64,
    pub consistency: f64,
    pub total: f64,
}

/// Per-wavelength `Σ_f f(λ)²` over the three colour-matching functions.
pub fn consistency_weights(cmf: &ColorMatchingFunctions) -> Vec<f64> {
    (0..cmf.x.len())
        .map(|l| cmf.as_array().iter().map(|f| f.values()[l].powi(2)).sum())
        .collect()
}

/// Loss of one prediction. `e_hat = None` means the illuminant branch is
/// absent and `E` stands in for `Ê` in the consistency term.
pub fn loss(
    r_hat: &[f64],
    e_hat: Option<&[f64]>,
    r: &[f64],
    e: &[f64],
    cmf: &ColorMatchingFunctions,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let n = r.len();
    if r_hat.len() != n || e.len() != n || e_hat.is_some_and(|v| v.len() != n) || cmf.x.len() != n {
        return Err(Error::Shape("loss inputs must share one length".into()));
    }
    let eh = e_hat.unwrap_or(e);
    let l_r = 0.5 * r.iter().zip(r_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let l_e = match e_hat {
        Some(eh) => 0.5 * e.iter().zip(eh).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
        None => 0.0,
    };
    let l_s = 0.5
        * cmf
            .as_array()
            .iter()
            .map(|f| {
                (0..n)
                    .map(|l| {
                        let fv = f.values()[l];
                        (fv * r[l] * e[l] - fv * r_hat[l] * eh[l]).powi(2)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>();
    Ok(LossBreakdown {
        reflectance: l_r,
        illuminant: l_e,
        consistency: l_s,
        total: weights.reflectance * l_r + weights.illuminant * l_e + weights.consistency * l_s,
    })
}

/// Batch-averaged loss over sample-major `[B][n]` buffers, with gradients
/// with respect to `r_hat` and (when present) `e_hat`.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<T: Scalar>(
    r_hat: &[T],
    e_hat: Option<&[T]>,
    r: &[T],
    e: &[T],
    f2: &[f64],
    weights: &LossWeights,
    grad_r: &mut [T],
    grad_e: Option<&mut [T]>,
) -> LossBreakdown {
    let n = f2.len();
    let batch = r.len() / n;
    let inv_b = 1.0 / batch as f64;
    let (mut l_r, mut l_e, mut l_s) = (0.0, 0.0, 0.0);
    let mut ge_buf = grad_e;
    for i in 0..batch * n {
        let l = i % n;
        let (rh, rt, et) = (r_hat[i].to_f64(), r[i].to_f64(), e[i].to_f64());
        let eh = e_hat.map_or(et, |v| v[i].to_f64());
        let dr = rh - rt;
        let ds = rh * eh - rt * et;
        l_r += 0.5 * dr * dr;
        l_s += 0.5 * f2[l] * ds * ds;
        grad_r[i] = T::from_f64(inv_b * (weights.reflectance * dr + weights.consistency * f2[l] * ds * eh));
        if let Some(ge) = ge_buf.as_deref_mut() {
            let de = eh - et;
            l_e += 0.5 * de * de;
            ge[i] = T::from_f64(inv_b * (weights.illuminant * de + weights.consistency * f2[l] * ds * rh));
        }
    }
    let (l_r, l_e, l_s) = (l_r * inv_b, l_e * inv_b, l_s * inv_b);
    LossBreakdown {
        reflectance: l_r,
        illuminant: l_e,
        consistency: l_s,
        total: weights.reflectance * l_r + weights.illuminant * l_e + weights.consistency * l_s,
    }
}
