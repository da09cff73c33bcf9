//! Standard corpora, the angle study and the metamer demonstration.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::colorimetry::{CameraSensitivities, ColorMatchingFunctions};
use crate::data::{self, Patch};
use crate::dataset::{generate_dataset, split_and_normalize, Dataset, GenerationConfig, NamedIlluminant, NormalizationMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::geometry::build_v_cavity;
use crate::kernel::{cached_kernel, eigendecompose, KernelConfig, KernelMatrix};
use crate::metamer::construct_metameric_light;
use crate::metrics::Summary;
use crate::net::{train, NetworkConfig, TrainConfig, TrainOutputs};
use crate::render::{PanelImage, PanelRenderer};
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, WavelengthGrid};

/// CIE D65 as a named illuminant.
pub fn d65_light(grid: &WavelengthGrid) -> Result<NamedIlluminant> {
    Ok(NamedIlluminant { id: "d65".into(), kelvin: None, spd: data::d65(grid)? })
}

/// Blackbody lights from 4000 K to 15000 K in 500 K steps (23 SPDs).
pub fn planckian_lights(grid: &WavelengthGrid) -> Result<Vec<NamedIlluminant>> {
    NamedIlluminant::planckian_series(4000.0, 15000.0, 500.0, grid)
}

/// How a corpus is rendered and divided.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub generation: GenerationConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub normalization: NormalizationMode,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            train_fraction: 0.9,
            split_seed: 0,
            normalization: NormalizationMode::Dataset,
        }
    }
}

/// Renders and splits `patches × lights × angles`.
pub fn build_corpus(
    patches: &[Patch],
    lights: &[NamedIlluminant],
    angles: &[f64],
    camera: &CameraSensitivities,
    cfg: &CorpusConfig,
) -> Result<(Dataset, Dataset)> {
    let ds = generate_dataset(patches, lights, angles, camera, &cfg.generation)?;
    split_and_normalize(&ds, cfg.train_fraction, cfg.split_seed, cfg.normalization)
}

/// One row of the angle study: train on `train_angles`, test at `test_angle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub train_angles: Vec<f64>,
    pub test_angle: f64,
}

impl AngleRow {
    pub fn same(angle: f64) -> Self {
        Self { train_angles: vec![angle], test_angle: angle }
    }

    fn train_label(&self) -> String {
        self.train_angles.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleResult {
    pub row: AngleRow,
    pub rmse: Summary,
    pub pd: Summary,
    pub de00: Summary,
    pub spd_rmse: Option<Summary>,
}

impl AngleResult {
    fn from_report(row: AngleRow, r: &EvalReport) -> Self {
        Self { row, rmse: r.rmse, pd: r.pd, de00: r.de00, spd_rmse: r.spd_rmse }
    }
}

/// Inputs shared by every angle-study row.
pub struct AngleStudy<'a> {
    pub patches: &'a [Patch],
    pub lights: &'a [NamedIlluminant],
    pub camera: &'a CameraSensitivities,
    pub cmf: &'a ColorMatchingFunctions,
    pub corpus: CorpusConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl AngleStudy<'_> {
    /// Trains one model per distinct training-angle set and scores it at
    /// each requested test angle. Test patches are the held-out side of the
    /// same patch split.
    pub fn run(&self, rows: &[AngleRow]) -> Result<Vec<AngleResult>> {
        if rows.iter().any(|r| r.train_angles.is_empty()) {
            return Err(Error::Config("every angle row needs a training angle".into()));
        }
        let mut models = HashMap::new();
        let mut tests: HashMap<u64, Dataset> = HashMap::new();
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let key = row.train_label();
            if !models.contains_key(&key) {
                let (tr, _) = build_corpus(self.patches, self.lights, &row.train_angles, self.camera, &self.corpus)?;
                let res = train(&tr, None, &self.network, &self.train, self.cmf, &TrainOutputs::default(), None)?;
                models.insert(key.clone(), res.checkpoint);
            }
            let ck = &models[&key];
            let test = match tests.entry(row.test_angle.to_bits()) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let (_, te) = build_corpus(self.patches, self.lights, &[row.test_angle], self.camera, &self.corpus)?;
                    e.insert(te)
                }
            };
            let mut test = test.clone();
            test.manifest.normalizer = ck.normalizer.clone();
            out.push(AngleResult::from_report(row.clone(), &evaluate(ck, &test, self.cmf)?));
        }
        Ok(out)
    }
}

/// CSV table: one row per (training angles, test angle).
pub fn write_angle_table<W: Write>(results: &[AngleResult], mut w: W) -> Result<()> {
    writeln!(w, "train_angles,test_angle,rmse_avg,rmse_max,rmse_p95,pd_avg,pd_max,pd_p95,de00_avg,de00_max,de00_p95,spd_rmse_avg")?;
    for r in results {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{}",
            r.row.train_label(),
            r.row.test_angle,
            r.rmse.avg,
            r.rmse.max,
            r.rmse.p95,
            r.pd.avg,
            r.pd.max,
            r.pd.p95,
            r.de00.avg,
            r.de00.max,
            r.de00.p95,
            r.spd_rmse.map(|s| format!("{:.6}", s.avg)).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Flat and folded renders of a surface and its white metamer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetamerDemo {
    pub metameric_light: IlluminantSpd,
    pub flat_original: PanelImage,
    pub flat_metamer: PanelImage,
    pub folded_original: PanelImage,
    pub folded_metamer: PanelImage,
    /// Per facet and channel `|a − b| / max(|a|, |b|)` of the folded pair.
    pub folded_difference: PanelImage,
    pub flat_max_rel_diff: f64,
    pub folded_max_rel_diff: f64,
}

fn relative_difference(a: &PanelImage, b: &PanelImage) -> PanelImage {
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.abs().max(y.abs());
            if d == 0.0 { 0.0 } else { (x - y).abs() / d }
        })
        .collect();
    PanelImage { size: a.size, channels: a.channels, data }
}

/// `r` under `illum` against a white surface under the light that matches it
/// on a flat plate, both flat and folded to `angle_deg`. The camera is used
/// as given, exposure included.
pub fn metamer_demo(
    r: &ReflectanceSpectrum,
    illum: &IlluminantSpd,
    camera: &CameraSensitivities,
    angle_deg: f64,
    facets_per_side: usize,
    kernel: &KernelConfig,
    cache_dir: Option<&std::path::Path>,
) -> Result<MetamerDemo> {
    let grid = *camera.grid();
    let cam = camera;
    let light = construct_metameric_light(r, illum, camera)?;
    let white = ReflectanceSpectrum::constant(grid, 1.0)?;

    let flat = build_v_cavity(180.0, 1.0, facets_per_side)?;
    let flat_eig = eigendecompose(&KernelMatrix::zeros(flat.facet_count()))?;
    let flat_r = PanelRenderer::new(&flat, &flat_eig, cam)?;
    let folded = build_v_cavity(angle_deg, 1.0, facets_per_side)?;
    let k = cached_kernel(&folded, kernel, cache_dir)?;
    let folded_r = PanelRenderer::new(&folded, &eigendecompose(&k)?, cam)?;

    let flat_original = flat_r.render(r, illum)?;
    let flat_metamer = flat_r.render(&white, &light)?;
    let folded_original = folded_r.render(r, illum)?;
    let folded_metamer = folded_r.render(&white, &light)?;
    let flat_diff = relative_difference(&flat_original, &flat_metamer);
    let folded_difference = relative_difference(&folded_original, &folded_metamer);
    Ok(MetamerDemo {
        metameric_light: light,
        flat_max_rel_diff: flat_diff.max(),
        folded_max_rel_diff: folded_difference.max(),
        flat_original,
        flat_metamer,
        folded_original,
        folded_metamer,
        folded_difference,
    })
}
