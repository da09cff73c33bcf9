//! SGD training loop, checkpoints, inference and the consistency ablation.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{consistency_weights, LossBreakdown, LossWeights};
use super::model::{init_network, ForwardCache, NetworkConfig, NetworkParams};
use crate::colorimetry::ColorMatchingFunctions;
use crate::dataset::{augment_noise, Dataset, NoiseConfig, Normalizer};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, Spectrum, WavelengthGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Batch-time augmentation; `None` trains on clean renders.
    pub noise: Option<NoiseConfig>,
    /// Evaluate on the test split every this many epochs (0 = only at the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            decay_every: 20,
            decay_factor: 0.1,
            momentum: 0.9,
            batch_size: 50,
            epochs: 60,
            seed: 0,
            weights: LossWeights::default(),
            noise: Some(NoiseConfig::default()),
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    /// `lr0 · decay_factor^⌊epoch / decay_every⌋`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let stage = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.lr0 * self.decay_factor.powi(stage as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.decay_factor > 0.0) {
            return Err(Error::Config("decay factor must be positive".into()));
        }
        self.weights.validate()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
pub fn sgd_step(params: &mut [Vec<f32>], velocity: &mut [Vec<f32>], grads: &[Vec<f32>], lr: f64, momentum: f64) {
    let (lr, mu) = (lr as f32, momentum as f32);
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub test: Option<EvalReport>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,loss_r,loss_e,loss_s,loss_total,test_rmse,test_pd,test_de00,test_spd_rmse";

    pub fn csv_row(&self) -> String {
        let t = self.test.as_ref();
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
            self.epoch,
            self.lr,
            self.loss.reflectance,
            self.loss.illuminant,
            self.loss.consistency,
            self.loss.total,
            f(t.map(|r| r.rmse.avg)),
            f(t.map(|r| r.pd.avg)),
            f(t.map(|r| r.de00.avg)),
            f(t.and_then(|r| r.spd_rmse.map(|s| s.avg))),
        )
    }
}

/// Trained weights plus everything needed to resume or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub normalizer: Option<Normalizer>,
    pub grid: WavelengthGrid,
    /// Completed epochs. Batch RNG streams derive from `(train.seed, epoch,
    /// batch)`, so this with the seed is the full RNG state.
    pub epoch: usize,
    pub params: NetworkParams<f32>,
    pub velocity: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    network: NetworkConfig,
    train: TrainConfig,
    normalizer: Option<Normalizer>,
    grid: WavelengthGrid,
    epoch: usize,
    config_hash: String,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"IRCHECKP";
const CHECKPOINT_VERSION: u32 = 1;
const CRC64: crc::Crc<u64> = crc::Crc::<u64>::new(&crc::CRC_64_ECMA_182);

/// Network and optimizer outputs of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub reflectance: ReflectanceSpectrum,
    pub spd: Option<IlluminantSpd>,
}

impl Checkpoint {
    /// SHA-256 over the network and training configuration.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(&(&self.network, &self.train)).expect("plain data serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// SHA-256 over the serialized checkpoint.
    pub fn hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_bytes()?)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&CheckpointHeader {
            network: self.network,
            train: self.train.clone(),
            normalizer: self.normalizer.clone(),
            grid: self.grid,
            epoch: self.epoch,
            config_hash: self.config_hash(),
        })?;
        let mut out = Vec::new();
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for t in self.params.tensors.iter().chain(&self.velocity) {
            for v in t {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        let crc = CRC64.checksum(&out);
        out.write_all(&crc.to_le_bytes())?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        if CRC64.checksum(body) != u64::from_le_bytes(trailer.try_into().expect("8 bytes")) {
            return Err(Error::Checksum);
        }
        let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header: CheckpointHeader = serde_json::from_slice(
            body.get(20..20 + hlen).ok_or(Error::Checksum)?,
        )?;
        header.network.validate()?;
        let mut pos = 20 + hlen;
        let mut read_tensor = |len: usize| -> Result<Vec<f32>> {
            let raw = body.get(pos..pos + 4 * len).ok_or(Error::Checksum)?;
            pos += 4 * len;
            Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
        };
        let net = header.network;
        let tensors = (0..net.tensor_count())
            .map(|i| read_tensor(net.tensor_len(i)))
            .collect::<Result<Vec<_>>>()?;
        let velocity = (0..net.tensor_count())
            .map(|i| read_tensor(net.tensor_len(i)))
            .collect::<Result<Vec<_>>>()?;
        if pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after tensors".into()));
        }
        let ck = Self {
            network: net,
            train: header.train,
            normalizer: header.normalizer,
            grid: header.grid,
            epoch: header.epoch,
            params: NetworkParams { config: net, tensors },
            velocity,
        };
        if ck.config_hash() != header.config_hash {
            return Err(Error::Checkpoint("configuration hash mismatch".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    fn normalizer(&self) -> Result<&Normalizer> {
        self.normalizer
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no normalizer".into()))
    }

    /// Raw network outputs for linear, un-normalized images `[B][H][W][C]`.
    pub fn raw_outputs(&self, images: &[f32]) -> Result<(Vec<f32>, Option<Vec<f32>>)> {
        let norm = self.normalizer()?;
        let len = self.network.image_len();
        if images.is_empty() || images.len() % len != 0 {
            return Err(Error::Shape(format!("expected a multiple of {len} image values")));
        }
        let mut x = Vec::with_capacity(images.len());
        for img in images.chunks_exact(len) {
            x.extend(norm.apply(img)?);
        }
        let mut cache = ForwardCache::default();
        let out = self.params.forward(&x, &mut cache)?;
        Ok((out.reflectance, out.spd))
    }

    /// Predictions for a batch of linear images, reflectance clamped to
    /// `[0, 1]` and SPD to `≥ 0`.
    pub fn predict_batch(&self, images: &[f32]) -> Result<Vec<Prediction>> {
        let (r, e) = self.raw_outputs(images)?;
        let n = self.network.outputs;
        if n != self.grid.count() {
            return Err(Error::Checkpoint("output width does not match the grid".into()));
        }
        r.chunks_exact(n)
            .enumerate()
            .map(|(i, row)| {
                let vals: Vec<f64> = row.iter().map(|v| f64::from(*v)).collect();
                let spd = match &e {
                    Some(e) => {
                        let s: Vec<f64> = e[i * n..(i + 1) * n].iter().map(|v| f64::from(*v).max(0.0)).collect();
                        Some(IlluminantSpd::unnormalized(Spectrum::new(self.grid, s)?))
                    }
                    None => None,
                };
                Ok(Prediction {
                    reflectance: ReflectanceSpectrum::clamped(self.grid, &vals)?,
                    spd,
                })
            })
            .collect()
    }

    pub fn predict(&self, image: &[f32]) -> Result<Prediction> {
        Ok(self.predict_batch(image)?.remove(0))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Filesystem side effects of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub log_csv: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

fn batch_rng(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rng
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    rng.set_stream(epoch as u64);
    rng
}

/// Trains from scratch, or continues `resume` up to `cfg.epochs`.
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    network: &NetworkConfig,
    cfg: &TrainConfig,
    cmf: &ColorMatchingFunctions,
    outputs: &TrainOutputs,
    resume: Option<Checkpoint>,
) -> Result<TrainResult> {
    cfg.validate()?;
    network.validate()?;
    let normalizer = train_set
        .manifest
        .normalizer
        .clone()
        .ok_or_else(|| Error::Config("training split has no normalizer".into()))?;
    if train_set.manifest.split.is_none() {
        return Err(Error::Config("training data carries no split assignment".into()));
    }
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let grid = train_set.manifest.grid;
    let n_out = grid.count();
    if network.outputs != n_out || network.image_len() != train_set.image_len() {
        return Err(Error::Shape("network shape does not match the dataset".into()));
    }
    let f2 = consistency_weights(cmf);

    let (mut params, mut velocity, start) = match resume {
        Some(ck) => {
            if ck.network != *network {
                return Err(Error::Checkpoint("resume checkpoint has a different network".into()));
            }
            (ck.params, ck.velocity, ck.epoch)
        }
        None => {
            let p = init_network::<f32>(network, cfg.seed)?;
            let v = p.zeros_like();
            (p, v, 0)
        }
    };
    let mut log = match &outputs.log_csv {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = std::io::BufWriter::new(f);
            writeln!(w, "{}", EpochLog::CSV_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let snapshot = |params: &NetworkParams<f32>, velocity: &Vec<Vec<f32>>, epoch: usize| Checkpoint {
        network: *network,
        train: cfg.clone(),
        normalizer: Some(normalizer.clone()),
        grid,
        epoch,
        params: params.clone(),
        velocity: velocity.clone(),
    };

    let len = train_set.image_len();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cache = ForwardCache::default();
    let mut history = Vec::new();
    let (mut xb, mut rb, mut eb) = (Vec::new(), Vec::new(), Vec::new());
    let mut raw = vec![0.0f32; len];
    for epoch in start..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
        let mut sum = LossBreakdown::default();
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut rng = batch_rng(cfg.seed, epoch, bi);
            xb.clear();
            rb.clear();
            eb.clear();
            for &i in chunk {
                raw.copy_from_slice(train_set.image(i));
                if let Some(noise) = &cfg.noise {
                    augment_noise(&mut raw, &mut rng, noise)?;
                }
                xb.extend(normalizer.apply(&raw)?);
                rb.extend_from_slice(train_set.reflectance(i));
                eb.extend_from_slice(train_set.spd(i));
            }
            let (lb, grads) = params.loss_and_gradients(&xb, &rb, &eb, &f2, &cfg.weights, &mut cache)?;
            if !lb.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                if let Some(dir) = &outputs.checkpoint_dir {
                    snapshot(&params, &velocity, epoch).save(dir.join("diverged.ckpt"))?;
                }
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {bi} (loss {})",
                    lb.total
                )));
            }
            sgd_step(&mut params.tensors, &mut velocity, &grads, lr, cfg.momentum);
            sum.reflectance += lb.reflectance;
            sum.illuminant += lb.illuminant;
            sum.consistency += lb.consistency;
            sum.total += lb.total;
            batches += 1;
        }
        let k = batches.max(1) as f64;
        let loss = LossBreakdown {
            reflectance: sum.reflectance / k,
            illuminant: sum.illuminant / k,
            consistency: sum.consistency / k,
            total: sum.total / k,
        };
        let done = epoch + 1;
        let want_eval = done == cfg.epochs || (cfg.eval_every > 0 && done % cfg.eval_every == 0);
        let test = match (test_set, want_eval) {
            (Some(ts), true) => Some(evaluate(&snapshot(&params, &velocity, done), ts, cmf)?),
            _ => None,
        };
        let entry = EpochLog { epoch, lr, loss, test };
        log::info!("{}", entry.csv_row());
        if let Some(w) = log.as_mut() {
            writeln!(w, "{}", entry.csv_row())?;
            w.flush()?;
        }
        history.push(entry);
        if let (Some(dir), true) = (&outputs.checkpoint_dir, outputs.checkpoint_every > 0) {
            if done % outputs.checkpoint_every == 0 {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                snapshot(&params, &velocity, done).save(dir.join(format!("epoch{done:04}.ckpt")))?;
            }
        }
    }
    Ok(TrainResult {
        checkpoint: snapshot(&params, &velocity, cfg.epochs.max(start)),
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub with_consistency: EvalReport,
    pub without_consistency: EvalReport,
}

/// Relative improvement `(without − with)/without · 100` of mean test errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub rmse_pct: f64,
    pub pd_pct: f64,
    pub de00_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub per_seed: Vec<Improvement>,
    pub mean: Improvement,
    pub mean_with: [f64; 3],
    pub mean_without: [f64; 3],
}

fn pct(without: f64, with: f64) -> f64 {
    if without == 0.0 { 0.0 } else { (without - with) / without * 100.0 }
}

/// Trains each seed twice, identical except `w_S ∈ {consistency, 0}`.
#[allow(clippy::too_many_arguments)]
pub fn ablate_consistency(
    train_set: &Dataset,
    test_set: &Dataset,
    network: &NetworkConfig,
    base: &TrainConfig,
    cmf: &ColorMatchingFunctions,
    seeds: &[u64],
    consistency: f64,
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        let run = |w_s: f64| -> Result<EvalReport> {
            let cfg = TrainConfig {
                seed,
                weights: LossWeights { consistency: w_s, ..base.weights },
                eval_every: 0,
                ..base.clone()
            };
            let res = train(train_set, None, network, &cfg, cmf, &TrainOutputs::default(), None)?;
            evaluate(&res.checkpoint, test_set, cmf)
        };
        runs.push(AblationRun {
            seed,
            with_consistency: run(consistency)?,
            without_consistency: run(0.0)?,
        });
    }
    let per_seed: Vec<Improvement> = runs
        .iter()
        .map(|r| Improvement {
            rmse_pct: pct(r.without_consistency.rmse.avg, r.with_consistency.rmse.avg),
            pd_pct: pct(r.without_consistency.pd.avg, r.with_consistency.pd.avg),
            de00_pct: pct(r.without_consistency.de00.avg, r.with_consistency.de00.avg),
        })
        .collect();
    let k = runs.len() as f64;
    let mean_of = |f: &dyn Fn(&EvalReport) -> f64, with: bool| {
        runs.iter()
            .map(|r| f(if with { &r.with_consistency } else { &r.without_consistency }))
            .sum::<f64>()
            / k
    };
    let metrics: [&dyn Fn(&EvalReport) -> f64; 3] = [&|r| r.rmse.avg, &|r| r.pd.avg, &|r| r.de00.avg];
    let mean_with = metrics.map(|f| mean_of(f, true));
    let mean_without = metrics.map(|f| mean_of(f, false));
    Ok(AblationReport {
        mean: Improvement {
            rmse_pct: pct(mean_without[0], mean_with[0]),
            pd_pct: pct(mean_without[1], mean_with[1]),
            de00_pct: pct(mean_without[2], mean_with[2]),
        },
        runs,
        per_seed,
        mean_with,
        mean_without,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_by_factor_ten() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(0), 1e-4);
        assert_eq!(c.learning_rate(19), 1e-4);
        assert!((c.learning_rate(25) - 1e-5).abs() < 1e-20);
        assert!((c.learning_rate(45) - 1e-6).abs() < 1e-21);
    }

    #[test]
    fn zero_momentum_is_plain_gradient_descent() {
        let mut p = vec![vec![1.0f32, -2.0, 0.5]];
        let mut v = vec![vec![0.3f32, 0.1, -0.2]];
        let g = vec![vec![0.5f32, -1.0, 2.0]];
        sgd_step(&mut p, &mut v, &g, 0.1, 0.0);
        let want = [1.0f32 - 0.1 * 0.5, -2.0 + 0.1, 0.5 - 0.1 * 2.0];
        assert_eq!(p[0], want);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = vec![vec![0.0f32]];
        let mut v = vec![vec![0.0f32]];
        let g = vec![vec![1.0f32]];
        sgd_step(&mut p, &mut v, &g, 1.0, 0.9);
        sgd_step(&mut p, &mut v, &g, 1.0, 0.9);
        assert!((p[0][0] + 2.9).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lr0: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
    }
}
