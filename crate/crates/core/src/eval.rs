//! Test-split scoring of a trained checkpoint.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{reflectance_delta_e00, ColorMatchingFunctions};
use crate::data;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{pearson_distance_values, rmse_values, PearsonMode, Summary};
use crate::net::{Checkpoint, Prediction};
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub patch_id: String,
    pub illuminant_id: String,
    pub angle_deg: f64,
    pub rmse: f64,
    pub pd: f64,
    pub de00: f64,
    pub spd_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleMetrics>,
    pub rmse: Summary,
    pub pd: Summary,
    pub de00: Summary,
    pub spd_rmse: Option<Summary>,
}

/// Pearson distance, with a constant vector scoring 0 against itself and 1 otherwise.
fn pd_or_flat(a: &[f64], b: &[f64]) -> Result<f64> {
    match pearson_distance_values(a, b, PearsonMode::Centered) {
        Err(Error::Degenerate(_)) => Ok(if a == b { 0.0 } else { 1.0 }),
        other => other,
    }
}

/// Scores one prediction against sample `i` of `dataset`; ΔE00 under D65.
pub fn score_sample(
    dataset: &Dataset,
    i: usize,
    prediction: &Prediction,
    d65: &IlluminantSpd,
    cmf: &ColorMatchingFunctions,
) -> Result<SampleMetrics> {
    let sample = dataset.sample(i)?;
    let est = prediction.reflectance.as_spectrum().values();
    let truth = sample.target_reflectance.as_spectrum().values();
    let spd_rmse = match &prediction.spd {
        Some(e) => Some(rmse_values(e.as_spectrum().values(), sample.target_spd.as_spectrum().values())?),
        None => None,
    };
    Ok(SampleMetrics {
        index: i,
        patch_id: sample.patch_id,
        illuminant_id: sample.illuminant_id,
        angle_deg: sample.angle_deg,
        rmse: rmse_values(est, truth)?,
        pd: pd_or_flat(est, truth)?,
        de00: reflectance_delta_e00(&sample.target_reflectance, &prediction.reflectance, d65, cmf)?,
        spd_rmse,
    })
}

impl EvalReport {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> Result<Self> {
        let col = |f: fn(&SampleMetrics) -> f64| {
            Summary::of(&samples.iter().map(f).collect::<Vec<_>>())
                .ok_or_else(|| Error::Split("evaluation split is empty".into()))
        };
        let spd: Option<Vec<f64>> = samples.iter().map(|s| s.spd_rmse).collect();
        Ok(Self {
            rmse: col(|s| s.rmse)?,
            pd: col(|s| s.pd)?,
            de00: col(|s| s.de00)?,
            spd_rmse: spd.and_then(|v| Summary::of(&v)),
            samples,
        })
    }

    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,patch,illuminant,angle_deg,rmse,pd,de00,spd_rmse")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{:e},{}",
                s.index,
                s.patch_id,
                s.illuminant_id,
                s.angle_deg,
                s.rmse,
                s.pd,
                s.de00,
                s.spd_rmse.map(|v| format!("{v:e}")).unwrap_or_default()
            )?;
        }
        Ok(())
    }

    /// One row per metric with average, maximum and 95th percentile.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,avg,max,p95,count")?;
        let rows = [("rmse", Some(self.rmse)), ("pd", Some(self.pd)), ("de00", Some(self.de00)), ("spd_rmse", self.spd_rmse)];
        for (name, s) in rows {
            if let Some(s) = s {
                writeln!(w, "{name},{:e},{:e},{:e},{}", s.avg, s.max, s.p95, s.count)?;
            }
        }
        Ok(())
    }
}

const EVAL_CHUNK: usize = 256;

/// Predicts every sample of `dataset` and scores it.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset, cmf: &ColorMatchingFunctions) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Split("evaluation split is empty".into()));
    }
    if checkpoint.grid != dataset.manifest.grid {
        return Err(Error::Shape("checkpoint and dataset grids differ".into()));
    }
    let d65 = data::d65(&dataset.manifest.grid)?;
    let len = dataset.image_len();
    let chunks: Vec<Vec<usize>> = (0..dataset.len()).collect::<Vec<_>>().chunks(EVAL_CHUNK).map(<[usize]>::to_vec).collect();
    let scored: Vec<Vec<SampleMetrics>> = chunks
        .par_iter()
        .map(|idx| {
            let mut images = Vec::with_capacity(idx.len() * len);
            for &i in idx {
                images.extend_from_slice(dataset.image(i));
            }
            let preds = checkpoint.predict_batch(&images)?;
            idx.iter()
                .zip(&preds)
                .map(|(&i, p)| score_sample(dataset, i, p, &d65, cmf))
                .collect()
        })
        .collect::<Result<_>>()?;
    EvalReport::from_samples(scored.into_iter().flatten().collect())
}

/// Scores ground truth as its own prediction; every metric is zero.
pub fn oracle_predictions(dataset: &Dataset) -> Result<Vec<Prediction>> {
    (0..dataset.len())
        .map(|i| {
            let s = dataset.sample(i)?;
            Ok(Prediction {
                reflectance: ReflectanceSpectrum::clamped(
                    dataset.manifest.grid,
                    s.target_reflectance.as_spectrum().values(),
                )?,
                spd: Some(s.target_spd),
            })
        })
        .collect()
}
