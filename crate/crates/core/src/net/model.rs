//! Two-branch convolutional network: shared trunk, reflectance head and an
//! optional illuminant head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{pool2_backward, pool2_forward, relu_backward, relu_forward, Conv2d, Linear, PoolKind};
use super::loss::{batch_loss, LossBreakdown, LossWeights};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub pool: PoolKind,
    pub spd_branch: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_size: 10,
            in_channels: 3,
            c1: 32,
            c2: 32,
            c3: 128,
            hidden: 200,
            outputs: 61,
            pool: PoolKind::Max,
            spd_branch: true,
        }
    }
}

pub const CONV1_W: usize = 0;
pub const CONV1_B: usize = 1;
pub const CONV2_W: usize = 2;
pub const CONV2_B: usize = 3;
pub const CONV3_W: usize = 4;
pub const CONV3_B: usize = 5;
pub const R1_W: usize = 6;
pub const R1_B: usize = 7;
pub const R2_W: usize = 8;
pub const R2_B: usize = 9;
pub const E1_W: usize = 10;
pub const E1_B: usize = 11;
pub const E2_W: usize = 12;
pub const E2_B: usize = 13;

const TENSOR_NAMES: [&str; 14] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "refl.fc1.weight",
    "refl.fc1.bias",
    "refl.fc2.weight",
    "refl.fc2.bias",
    "spd.fc1.weight",
    "spd.fc1.bias",
    "spd.fc2.weight",
    "spd.fc2.bias",
];

impl NetworkConfig {
    pub fn conv1(&self) -> Conv2d {
        Conv2d { in_channels: self.in_channels, out_channels: self.c1, kernel: 5, stride: 1, pad: 2 }
    }

    pub fn conv2(&self) -> Conv2d {
        Conv2d { in_channels: self.c1, out_channels: self.c2, kernel: 5, stride: 1, pad: 2 }
    }

    pub fn conv3(&self) -> Conv2d {
        Conv2d { in_channels: self.c2, out_channels: self.c3, kernel: 3, stride: 3, pad: 0 }
    }

    pub fn fc1(&self) -> Linear {
        Linear { inputs: self.c3, outputs: self.hidden }
    }

    pub fn fc2(&self) -> Linear {
        Linear { inputs: self.hidden, outputs: self.outputs }
    }

    pub fn image_len(&self) -> usize {
        self.input_size * self.input_size * self.in_channels
    }

    /// `(name, [height, width, channels])` after each stage.
    pub fn shape_trace(&self) -> Result<Vec<(&'static str, [usize; 3])>> {
        let s = self.input_size;
        let (h1, w1) = self.conv1().output_size(s, s).ok_or_else(|| bad("conv1"))?;
        let (h2, w2) = self.conv2().output_size(h1, w1).ok_or_else(|| bad("conv2"))?;
        let (h3, w3) = (h2 / 2, w2 / 2);
        let (h4, w4) = self.conv3().output_size(h3, w3).ok_or_else(|| bad("conv3"))?;
        Ok(vec![
            ("input", [s, s, self.in_channels]),
            ("conv1", [h1, w1, self.c1]),
            ("conv2", [h2, w2, self.c2]),
            ("pool", [h3, w3, self.c2]),
            ("conv3", [h4, w4, self.c3]),
            ("fc1", [1, 1, self.hidden]),
            ("fc2", [1, 1, self.outputs]),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_size, self.in_channels, self.c1, self.c2, self.c3, self.hidden, self.outputs];
        if dims.contains(&0) {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let trace = self.shape_trace()?;
        let conv2 = trace[2].1;
        if conv2[0] % 2 != 0 || conv2[1] % 2 != 0 {
            return Err(Error::Config("pooling needs an even feature map".into()));
        }
        if trace[4].1[..2] != [1, 1] {
            return Err(Error::Config(format!(
                "conv3 must reduce the map to 1×1, got {}×{}",
                trace[4].1[0], trace[4].1[1]
            )));
        }
        Ok(())
    }

    pub fn tensor_count(&self) -> usize {
        if self.spd_branch { 14 } else { 10 }
    }

    pub fn tensor_name(&self, i: usize) -> &'static str {
        TENSOR_NAMES[i]
    }

    pub fn tensor_len(&self, i: usize) -> usize {
        let head = |j: usize| match j {
            0 => self.fc1().weight_len(),
            1 => self.hidden,
            2 => self.fc2().weight_len(),
            _ => self.outputs,
        };
        match i {
            CONV1_W => self.conv1().weight_len(),
            CONV1_B => self.c1,
            CONV2_W => self.conv2().weight_len(),
            CONV2_B => self.c2,
            CONV3_W => self.conv3().weight_len(),
            CONV3_B => self.c3,
            6..=9 => head(i - 6),
            _ => head(i - 10),
        }
    }

    /// `(fan_in, fan_out)` of weight tensors.
    fn fans(&self, i: usize) -> (usize, usize) {
        match i {
            CONV1_W => self.conv1().fans(),
            CONV2_W => self.conv2().fans(),
            CONV3_W => self.conv3().fans(),
            R1_W | E1_W => (self.c3, self.hidden),
            _ => (self.hidden, self.outputs),
        }
    }

    pub fn parameter_count(&self) -> usize {
        (0..self.tensor_count()).map(|i| self.tensor_len(i)).sum()
    }
}

fn bad(layer: &str) -> Error {
    Error::Config(format!("{layer} kernel exceeds its padded input"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub config: NetworkConfig,
    pub tensors: Vec<Vec<T>>,
}

/// Xavier-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
pub fn init_network<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<NetworkParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = (0..config.tensor_count())
        .map(|i| {
            let len = config.tensor_len(i);
            if i % 2 == 1 {
                vec![T::ZERO; len]
            } else {
                let (fi, fo) = config.fans(i);
                let a = (6.0 / (fi + fo) as f64).sqrt();
                (0..len).map(|_| T::from_f64(rng.random_range(-a..a))).collect()
            }
        })
        .collect();
    Ok(NetworkParams { config: *config, tensors })
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.tensors.iter().map(|t| vec![T::ZERO; t.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|v| U::from_f64(v.to_f64())).collect())
                .collect(),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.tensors.len() != self.config.tensor_count() {
            return Err(Error::Shape("tensor count does not match the config".into()));
        }
        for (i, t) in self.tensors.iter().enumerate() {
            if t.len() != self.config.tensor_len(i) {
                return Err(Error::Shape(format!("{} has the wrong size", self.config.tensor_name(i))));
            }
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    batch: usize,
    x: Vec<T>,
    cols1: Vec<T>,
    a1: Vec<T>,
    cols2: Vec<T>,
    a2: Vec<T>,
    pooled: Vec<T>,
    argmax: Vec<u32>,
    cols3: Vec<T>,
    a3: Vec<T>,
    h_r: Vec<T>,
    out_r: Vec<T>,
    h_e: Vec<T>,
    out_e: Vec<T>,
}

/// Sample-major outputs `[B][outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs<T> {
    pub reflectance: Vec<T>,
    pub spd: Option<Vec<T>>,
}

fn transpose<T: Scalar>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

impl<T: Scalar> NetworkParams<T> {
    /// `images` are sample-major `[B][H][W][C]` normalized inputs.
    pub fn forward(&self, images: &[T], cache: &mut ForwardCache<T>) -> Result<Outputs<T>> {
        let cfg = &self.config;
        let len = cfg.image_len();
        if images.is_empty() || images.len() % len != 0 {
            return Err(Error::Shape(format!(
                "batch buffer of {} values is not a multiple of the {len}-value image",
                images.len()
            )));
        }
        let b = images.len() / len;
        let s = cfg.input_size;
        let ch = cfg.in_channels;
        cache.batch = b;
        cache.x.clear();
        cache.x.resize(len * b, T::ZERO);
        for (bi, img) in images.chunks_exact(len).enumerate() {
            for (p, px) in img.chunks_exact(ch).enumerate() {
                for (c, v) in px.iter().enumerate() {
                    cache.x[(c * b + bi) * s * s + p] = *v;
                }
            }
        }
        let t = &self.tensors;
        let (h1, w1) = cfg.conv1().forward(&cache.x, b, s, s, &t[CONV1_W], &t[CONV1_B], &mut cache.cols1, &mut cache.a1);
        relu_forward(&mut cache.a1);
        let (h2, w2) = cfg.conv2().forward(&cache.a1, b, h1, w1, &t[CONV2_W], &t[CONV2_B], &mut cache.cols2, &mut cache.a2);
        relu_forward(&mut cache.a2);
        let (h3, w3) = pool2_forward(cfg.pool, &cache.a2, cfg.c2 * b, h2, w2, &mut cache.pooled, &mut cache.argmax);
        cfg.conv3().forward(&cache.pooled, b, h3, w3, &t[CONV3_W], &t[CONV3_B], &mut cache.cols3, &mut cache.a3);
        relu_forward(&mut cache.a3);

        cfg.fc1().forward(&cache.a3, b, &t[R1_W], &t[R1_B], &mut cache.h_r);
        relu_forward(&mut cache.h_r);
        cfg.fc2().forward(&cache.h_r, b, &t[R2_W], &t[R2_B], &mut cache.out_r);
        let spd = if cfg.spd_branch {
            cfg.fc1().forward(&cache.a3, b, &t[E1_W], &t[E1_B], &mut cache.h_e);
            relu_forward(&mut cache.h_e);
            cfg.fc2().forward(&cache.h_e, b, &t[E2_W], &t[E2_B], &mut cache.out_e);
            Some(transpose(&cache.out_e, cfg.outputs, b))
        } else {
            None
        };
        Ok(Outputs {
            reflectance: transpose(&cache.out_r, cfg.outputs, b),
            spd,
        })
    }

    /// Parameter gradients from sample-major output gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_r: &[T], grad_e: Option<&[T]>) -> Vec<Vec<T>> {
        let cfg = &self.config;
        let b = cache.batch;
        let s = cfg.input_size;
        let t = &self.tensors;
        let mut g = self.zeros_like();
        let (fc1, fc2) = (cfg.fc1(), cfg.fc2());

        let d_out_r = transpose(grad_r, b, cfg.outputs);
        let mut d_h = Vec::new();
        {
            let (w, rest) = g.split_at_mut(R2_B);
            fc2.backward(&cache.h_r, &d_out_r, b, &t[R2_W], &mut w[R2_W], &mut rest[0], Some(&mut d_h));
        }
        relu_backward(&cache.h_r, &mut d_h);
        let mut d_a3 = Vec::new();
        {
            let (w, rest) = g.split_at_mut(R1_B);
            fc1.backward(&cache.a3, &d_h, b, &t[R1_W], &mut w[R1_W], &mut rest[0], Some(&mut d_a3));
        }
        if let (true, Some(ge)) = (cfg.spd_branch, grad_e) {
            let d_out_e = transpose(ge, b, cfg.outputs);
            let mut d_he = Vec::new();
            {
                let (w, rest) = g.split_at_mut(E2_B);
                fc2.backward(&cache.h_e, &d_out_e, b, &t[E2_W], &mut w[E2_W], &mut rest[0], Some(&mut d_he));
            }
            relu_backward(&cache.h_e, &mut d_he);
            let mut d_a3e = Vec::new();
            {
                let (w, rest) = g.split_at_mut(E1_B);
                fc1.backward(&cache.a3, &d_he, b, &t[E1_W], &mut w[E1_W], &mut rest[0], Some(&mut d_a3e));
            }
            for (a, e) in d_a3.iter_mut().zip(&d_a3e) {
                *a += *e;
            }
        }
        relu_backward(&cache.a3, &mut d_a3);

        let (h2, w2) = (s, s);
        let (h3, w3) = (h2 / 2, w2 / 2);
        let mut d_pooled = Vec::new();
        {
            let (w, rest) = g.split_at_mut(CONV3_B);
            cfg.conv3().backward(&cache.cols3, &d_a3, b, h3, w3, &t[CONV3_W], &mut w[CONV3_W], &mut rest[0], Some(&mut d_pooled));
        }
        let mut d_a2 = Vec::new();
        pool2_backward(cfg.pool, &d_pooled, &cache.argmax, cfg.c2 * b, h2, w2, &mut d_a2);
        relu_backward(&cache.a2, &mut d_a2);
        let mut d_a1 = Vec::new();
        {
            let (w, rest) = g.split_at_mut(CONV2_B);
            cfg.conv2().backward(&cache.cols2, &d_a2, b, s, s, &t[CONV2_W], &mut w[CONV2_W], &mut rest[0], Some(&mut d_a1));
        }
        relu_backward(&cache.a1, &mut d_a1);
        {
            let (w, rest) = g.split_at_mut(CONV1_B);
            cfg.conv1().backward(&cache.cols1, &d_a1, b, s, s, &t[CONV1_W], &mut w[CONV1_W], &mut rest[0], None);
        }
        g
    }

    /// Forward, loss and backward for one batch. Without an illuminant head
    /// the target `E` replaces `Ê` in the consistency term.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_gradients(
        &self,
        images: &[T],
        r: &[T],
        e: &[T],
        f2: &[f64],
        weights: &LossWeights,
        cache: &mut ForwardCache<T>,
    ) -> Result<(LossBreakdown, Vec<Vec<T>>)> {
        let out = self.forward(images, cache)?;
        if r.len() != out.reflectance.len() || e.len() != r.len() || f2.len() != self.config.outputs {
            return Err(Error::Shape("targets do not match the batch".into()));
        }
        let mut gr = vec![T::ZERO; r.len()];
        let mut ge = out.spd.as_ref().map(|v| vec![T::ZERO; v.len()]);
        let lb = batch_loss(&out.reflectance, out.spd.as_deref(), r, e, f2, weights, &mut gr, ge.as_deref_mut());
        let grads = self.backward(cache, &gr, ge.as_deref());
        Ok((lb, grads))
    }
}
