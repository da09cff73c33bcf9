//! Rendered training corpora: generation, splitting, normalization, noise
//! augmentation and a checksummed binary container.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorimetry::CameraSensitivities;
use crate::data::Patch;
use crate::error::{Error, Result};
use crate::geometry::build_v_cavity;
use crate::kernel::{cached_kernel, eigendecompose, KernelConfig, KernelProvenance};
use crate::render::PanelRenderer;
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, Spectrum, WavelengthGrid};

/// An illuminant with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedIlluminant {
    pub id: String,
    pub kelvin: Option<f64>,
    pub spd: IlluminantSpd,
}

impl NamedIlluminant {
    pub fn planckian(kelvin: f64, grid: &WavelengthGrid) -> Result<Self> {
        Ok(Self {
            id: format!("planck{kelvin}"),
            kelvin: Some(kelvin),
            spd: crate::illuminant::planckian_spd(kelvin, grid)?,
        })
    }

    pub fn planckian_series(min: f64, max: f64, step: f64, grid: &WavelengthGrid) -> Result<Vec<Self>> {
        crate::illuminant::planckian_temperatures(min, max, step)?
            .into_iter()
            .map(|t| Self::planckian(t, grid))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminantMeta {
    pub id: String,
    pub kelvin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Photon count corresponding to a unit signal.
    pub poisson_peak: f64,
    pub gaussian_variances: [f64; 5],
    pub gaussian_probability: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            poisson_peak: 1e4,
            gaussian_variances: [1e-5, 5e-5, 1e-4, 5e-4, 1e-3],
            gaussian_probability: 0.5,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.poisson_peak > 0.0 && self.poisson_peak.is_finite()) {
            return Err(Error::Config("poisson peak must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gaussian_probability) {
            return Err(Error::Config("gaussian probability must lie in [0, 1]".into()));
        }
        let v = &self.gaussian_variances;
        if v.iter().any(|x| !(*x >= 0.0)) || v.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("gaussian variances must be non-negative and ascending".into()));
        }
        Ok(())
    }
}

/// Poisson shot noise at `cfg.poisson_peak`, then with probability
/// `cfg.gaussian_probability` additive Gaussian noise of a randomly chosen
/// variance, clamped at zero. Operates on the linear signal.
pub fn augment_noise<R: Rng + ?Sized>(image: &mut [f32], rng: &mut R, cfg: &NoiseConfig) -> Result<()> {
    if image.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Contract("noise augmentation needs a non-negative image".into()));
    }
    let peak = cfg.poisson_peak;
    for v in image.iter_mut() {
        let lambda = f64::from(*v) * peak;
        if lambda > 0.0 {
            let counts: f64 = Poisson::new(lambda)
                .map_err(|e| Error::Numeric(e.to_string()))?
                .sample(rng);
            *v = (counts / peak) as f32;
        }
    }
    if rng.random::<f64>() < cfg.gaussian_probability {
        let var = cfg.gaussian_variances[rng.random_range(0..cfg.gaussian_variances.len())];
        let normal = Normal::new(0.0, var.sqrt()).map_err(|e| Error::Numeric(e.to_string()))?;
        for v in image.iter_mut() {
            *v = (f64::from(*v) + normal.sample(rng)).max(0.0) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormalizationMode {
    /// Per-channel statistics over the whole training split.
    #[default]
    Dataset,
    /// Each image standardized by its own per-channel statistics.
    PerImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormalizationMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn channel_stats<'a>(images: impl Iterator<Item = &'a [f32]>, s: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut count = 0usize;
    let mut sum = vec![0.0f64; s];
    let mut sq = vec![0.0f64; s];
    let images: Vec<&[f32]> = images.collect();
    for img in &images {
        for px in img.chunks_exact(s) {
            for c in 0..s {
                sum[c] += f64::from(px[c]);
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no pixels to compute statistics from".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
    for img in &images {
        for px in img.chunks_exact(s) {
            for c in 0..s {
                let d = f64::from(px[c]) - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let std: Vec<f64> = sq.iter().map(|v| (v / count as f64).sqrt()).collect();
    for (c, sd) in std.iter().enumerate() {
        if !(*sd > 1e-12 * mean[c].abs().max(1e-300)) {
            return Err(Error::Degenerate(format!("channel {c} has zero variance")));
        }
    }
    Ok((mean, std))
}

impl Normalizer {
    pub fn compute(train: &Dataset, mode: NormalizationMode) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Degenerate("empty training split".into()));
        }
        let (mean, std) = channel_stats((0..train.len()).map(|i| train.image(i)), train.channels())?;
        Ok(Self { mode, mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, image: &[f32]) -> Result<Vec<f32>> {
        let s = self.channels();
        let (mean, std) = match self.mode {
            NormalizationMode::Dataset => (self.mean.clone(), self.std.clone()),
            NormalizationMode::PerImage => channel_stats(std::iter::once(image), s)?,
        };
        Ok(image
            .chunks_exact(s)
            .flat_map(|px| (0..s).map(|c| ((f64::from(px[c]) - mean[c]) / std[c]) as f32).collect::<Vec<_>>())
            .collect())
    }

    /// In-place variant of [`Normalizer::apply`] for dataset mode, in `f64`.
    pub fn apply_f64(&self, image: &mut [f64]) {
        let s = self.channels();
        for px in image.chunks_exact_mut(s) {
            for c in 0..s {
                px[c] = (px[c] - self.mean[c]) / self.std[c];
            }
        }
    }

    pub fn invert_f64(&self, image: &mut [f64]) {
        let s = self.channels();
        for px in image.chunks_exact_mut(s) {
            for c in 0..s {
                px[c] = px[c] * self.std[c] + self.mean[c];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRole {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub role: SplitRole,
    pub seed: u64,
    pub train_fraction: f64,
    pub train_patches: Vec<String>,
    pub test_patches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub provenance: KernelProvenance,
    pub symmetry_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub grid: WavelengthGrid,
    pub camera_id: String,
    pub channel_names: Vec<String>,
    pub camera_gain: f64,
    pub facets_per_side: usize,
    pub angles: Vec<f64>,
    pub illuminants: Vec<IlluminantMeta>,
    pub patch_ids: Vec<String>,
    pub split: Option<SplitInfo>,
    pub normalizer: Option<Normalizer>,
    pub seed: u64,
    pub kernels: Vec<KernelRecord>,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub patch: u32,
    pub illuminant: u32,
    pub angle: u32,
}

/// An owned sample with targets on the dataset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Vec<f32>,
    pub target_reflectance: ReflectanceSpectrum,
    pub target_spd: IlluminantSpd,
    pub patch_id: String,
    pub illuminant_id: String,
    pub kelvin: Option<f64>,
    pub angle_deg: f64,
}

/// Clean renders plus targets, stored contiguously in `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    images: Vec<f32>,
    reflectances: Vec<f32>,
    spds: Vec<f32>,
    meta: Vec<SampleMeta>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.manifest.channel_names.len()
    }

    pub fn image_len(&self) -> usize {
        self.manifest.facets_per_side * self.manifest.facets_per_side * self.channels()
    }

    pub fn spectrum_len(&self) -> usize {
        self.manifest.grid.count()
    }

    /// `n × n × s` image, row-major with interleaved channels.
    pub fn image(&self, i: usize) -> &[f32] {
        let k = self.image_len();
        &self.images[i * k..(i + 1) * k]
    }

    pub fn reflectance(&self, i: usize) -> &[f32] {
        let k = self.spectrum_len();
        &self.reflectances[i * k..(i + 1) * k]
    }

    pub fn spd(&self, i: usize) -> &[f32] {
        let k = self.spectrum_len();
        &self.spds[i * k..(i + 1) * k]
    }

    pub fn meta(&self, i: usize) -> SampleMeta {
        self.meta[i]
    }

    pub fn patch_id(&self, i: usize) -> &str {
        &self.manifest.patch_ids[self.meta[i].patch as usize]
    }

    pub fn sample(&self, i: usize) -> Result<Sample> {
        let m = self.meta[i];
        let grid = self.manifest.grid;
        let widen = |v: &[f32]| v.iter().map(|x| f64::from(*x)).collect::<Vec<_>>();
        let illum = &self.manifest.illuminants[m.illuminant as usize];
        Ok(Sample {
            image: self.image(i).to_vec(),
            target_reflectance: ReflectanceSpectrum::clamped(grid, &widen(self.reflectance(i)))?,
            target_spd: IlluminantSpd::unnormalized(Spectrum::new(grid, widen(self.spd(i)))?),
            patch_id: self.patch_id(i).to_string(),
            illuminant_id: illum.id.clone(),
            kelvin: illum.kelvin,
            angle_deg: self.manifest.angles[m.angle as usize],
        })
    }

    /// A dataset holding the samples at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let (ki, ks) = (self.image_len(), self.spectrum_len());
        let mut out = Self {
            manifest: self.manifest.clone(),
            images: Vec::with_capacity(indices.len() * ki),
            reflectances: Vec::with_capacity(indices.len() * ks),
            spds: Vec::with_capacity(indices.len() * ks),
            meta: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            out.images.extend_from_slice(self.image(i));
            out.reflectances.extend_from_slice(self.reflectance(i));
            out.spds.extend_from_slice(self.spd(i));
            out.meta.push(self.meta[i]);
        }
        out
    }

    /// Indices of the samples whose patch is in `patches`.
    pub fn indices_of_patches(&self, patches: &BTreeSet<&str>) -> Vec<usize> {
        (0..self.len()).filter(|&i| patches.contains(self.patch_id(i))).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let grid = self.manifest.grid;
        let mut out = Vec::with_capacity(
            64 + manifest.len() + 4 * (self.images.len() + self.reflectances.len() + self.spds.len()),
        );
        out.write_all(DATASET_MAGIC)?;
        out.write_all(&DATASET_VERSION.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in [grid.start(), grid.end(), grid.step()] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&(self.manifest.facets_per_side as u32).to_le_bytes())?;
        out.write_all(&(self.channels() as u32).to_le_bytes())?;
        out.write_all(&(manifest.len() as u64).to_le_bytes())?;
        out.write_all(&manifest)?;
        for i in 0..self.len() {
            for v in self.image(i).iter().chain(self.reflectance(i)).chain(self.spd(i)) {
                out.write_all(&v.to_le_bytes())?;
            }
            let m = self.meta[i];
            for v in [m.patch, m.illuminant, m.angle] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        let crc = CRC64.checksum(&out);
        out.write_all(&crc.to_le_bytes())?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8).ok() != Some(&DATASET_MAGIC[..]) {
            return Err(Error::Format("not a dataset file".into()));
        }
        let version = r.u32().map_err(|_| Error::Checksum)?;
        if version != DATASET_VERSION {
            return Err(Error::Version {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        if bytes.len() < 8 + 4 + 8 {
            return Err(Error::Checksum);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
        if CRC64.checksum(body) != stored {
            return Err(Error::Checksum);
        }
        let mut r = Cursor { bytes: body, pos: 12 };
        let count = r.u64()? as usize;
        let grid = WavelengthGrid::new(r.f64()?, r.f64()?, r.f64()?)?;
        let n = r.u32()? as usize;
        let s = r.u32()? as usize;
        let mlen = r.u64()? as usize;
        let manifest: DatasetManifest = serde_json::from_slice(r.take(mlen)?)?;
        if manifest.grid != grid || manifest.facets_per_side != n || manifest.channel_names.len() != s {
            return Err(Error::Format("header disagrees with manifest".into()));
        }
        let (ki, ks) = (n * n * s, grid.count());
        let mut ds = Self {
            manifest,
            images: Vec::with_capacity(count * ki),
            reflectances: Vec::with_capacity(count * ks),
            spds: Vec::with_capacity(count * ks),
            meta: Vec::with_capacity(count),
        };
        for _ in 0..count {
            for _ in 0..ki {
                ds.images.push(r.f32()?);
            }
            for _ in 0..ks {
                ds.reflectances.push(r.f32()?);
            }
            for _ in 0..ks {
                ds.spds.push(r.f32()?);
            }
            ds.meta.push(SampleMeta {
                patch: r.u32()?,
                illuminant: r.u32()?,
                angle: r.u32()?,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after records".into()));
        }
        Ok(ds)
    }
}

const DATASET_MAGIC: &[u8; 8] = b"IRDATASE";
const DATASET_VERSION: u32 = 1;
const CRC64: crc::Crc<u64> = crc::Crc::<u64>::new(&crc::CRC_64_ECMA_182);

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|e| *e <= self.bytes.len()).ok_or(Error::Checksum)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub facets_per_side: usize,
    pub kernel: KernelConfig,
    pub cache_dir: Option<PathBuf>,
    pub camera_id: String,
    /// Multiplier on the camera sensitivities; `None` picks
    /// [`CameraSensitivities::unit_gain`].
    pub camera_gain: Option<f64>,
    pub seed: u64,
    pub noise: NoiseConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            facets_per_side: 10,
            kernel: KernelConfig::default(),
            cache_dir: None,
            camera_id: "camera".into(),
            camera_gain: None,
            seed: 0,
            noise: NoiseConfig::default(),
        }
    }
}

/// One clean sample per (angle, illuminant, patch), in that nesting order.
pub fn generate_dataset(
    patches: &[Patch],
    illuminants: &[NamedIlluminant],
    angles: &[f64],
    camera: &CameraSensitivities,
    cfg: &GenerationConfig,
) -> Result<Dataset> {
    if patches.is_empty() || illuminants.is_empty() || angles.is_empty() {
        return Err(Error::Config("need at least one patch, illuminant and angle".into()));
    }
    cfg.noise.validate()?;
    let grid = *camera.grid();
    for p in patches {
        if *p.reflectance.grid() != grid {
            return Err(Error::Shape(format!("patch {} is not on the camera grid", p.id)));
        }
    }
    for il in illuminants {
        if *il.spd.grid() != grid {
            return Err(Error::Shape(format!("illuminant {} is not on the camera grid", il.id)));
        }
    }
    let gain = cfg.camera_gain.unwrap_or_else(|| camera.unit_gain());
    let cam = camera.scaled(gain)?;
    let n = cfg.facets_per_side;

    let mut renderers = Vec::with_capacity(angles.len());
    let mut kernels = Vec::with_capacity(angles.len());
    for &angle in angles {
        let cavity = build_v_cavity(angle, 1.0, n)?;
        let k = cached_kernel(&cavity, &cfg.kernel, cfg.cache_dir.as_deref())?;
        kernels.push(KernelRecord {
            provenance: k.provenance,
            symmetry_residual: k.symmetry_residual,
        });
        let eig = eigendecompose(&k)?;
        renderers.push(PanelRenderer::new(&cavity, &eig, &cam)?);
    }

    let jobs: Vec<SampleMeta> = (0..angles.len())
        .flat_map(|a| {
            (0..illuminants.len()).flat_map(move |l| {
                (0..patches.len()).map(move |p| SampleMeta {
                    patch: p as u32,
                    illuminant: l as u32,
                    angle: a as u32,
                })
            })
        })
        .collect();
    let images: Vec<Vec<f32>> = jobs
        .par_iter()
        .map(|m| {
            let img = renderers[m.angle as usize].render(
                &patches[m.patch as usize].reflectance,
                &illuminants[m.illuminant as usize].spd,
            )?;
            Ok(img.data.iter().map(|v| *v as f32).collect())
        })
        .collect::<Result<_>>()?;

    let narrow = |v: &[f64]| v.iter().map(|x| *x as f32).collect::<Vec<_>>();
    let refl: Vec<Vec<f32>> = patches.iter().map(|p| narrow(p.reflectance.values())).collect();
    let spd: Vec<Vec<f32>> = illuminants.iter().map(|l| narrow(l.spd.values())).collect();
    let mut ds = Dataset {
        manifest: DatasetManifest {
            grid,
            camera_id: cfg.camera_id.clone(),
            channel_names: cam.names.clone(),
            camera_gain: gain,
            facets_per_side: n,
            angles: angles.to_vec(),
            illuminants: illuminants
                .iter()
                .map(|l| IlluminantMeta {
                    id: l.id.clone(),
                    kelvin: l.kelvin,
                })
                .collect(),
            patch_ids: patches.iter().map(|p| p.id.clone()).collect(),
            split: None,
            normalizer: None,
            seed: cfg.seed,
            kernels,
            noise: cfg.noise.clone(),
        },
        images: images.concat(),
        reflectances: Vec::with_capacity(jobs.len() * grid.count()),
        spds: Vec::with_capacity(jobs.len() * grid.count()),
        meta: jobs,
    };
    for m in &ds.meta {
        ds.reflectances.extend_from_slice(&refl[m.patch as usize]);
        ds.spds.extend_from_slice(&spd[m.illuminant as usize]);
    }
    Ok(ds)
}

/// Patch-disjoint split: `⌊fraction·P⌋` patches (at least one on each side)
/// go to training, chosen by a seeded shuffle of the sorted patch ids.
pub fn split_by_patch(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let present: BTreeSet<&str> = (0..dataset.len()).map(|i| dataset.patch_id(i)).collect();
    let total = present.len();
    if total < 2 {
        return Err(Error::Split(format!("need at least 2 patches to split, have {total}")));
    }
    let mut ids: Vec<&str> = present.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let ntrain = ((train_fraction * total as f64).floor() as usize).clamp(1, total - 1);
    let mut train_ids: Vec<String> = ids[..ntrain].iter().map(|s| s.to_string()).collect();
    let mut test_ids: Vec<String> = ids[ntrain..].iter().map(|s| s.to_string()).collect();
    train_ids.sort();
    test_ids.sort();
    let membership: HashMap<&str, bool> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| (*id, k < ntrain))
        .collect();
    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| membership[dataset.patch_id(i)]);
    let info = |role| SplitInfo {
        role,
        seed,
        train_fraction,
        train_patches: train_ids.clone(),
        test_patches: test_ids.clone(),
    };
    let mut train = dataset.subset(&train_idx);
    let mut test = dataset.subset(&test_idx);
    train.manifest.split = Some(info(SplitRole::Train));
    test.manifest.split = Some(info(SplitRole::Test));
    Ok((train, test))
}

/// [`split_by_patch`] with training-split normalizer statistics attached to
/// both halves.
pub fn split_and_normalize(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
    mode: NormalizationMode,
) -> Result<(Dataset, Dataset)> {
    let (mut train, mut test) = split_by_patch(dataset, train_fraction, seed)?;
    let norm = Normalizer::compute(&train, mode)?;
    train.manifest.normalizer = Some(norm.clone());
    test.manifest.normalizer = Some(norm);
    Ok((train, test))
}
