//! Layer kernels. Activations are stored channel-major as `[C][B][H][W]`,
//! so a convolution over a whole batch is a single GEMM.

use serde::{Deserialize, Serialize};

use super::scalar::{matmul, MatRef, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let span = |x: usize| {
            let padded = x + 2 * self.pad;
            (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
        };
        Some((span(h)?, span(w)?))
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.patch_len()
    }

    pub fn fans(&self) -> (usize, usize) {
        let k2 = self.kernel * self.kernel;
        (self.in_channels * k2, self.out_channels * k2)
    }

    fn im2col<T: Scalar>(&self, x: &[T], batch: usize, h: usize, w: usize, cols: &mut Vec<T>) -> (usize, usize) {
        let (ho, wo) = self.output_size(h, w).expect("kernel larger than padded input");
        let n = batch * ho * wo;
        cols.clear();
        cols.resize(self.patch_len() * n, T::ZERO);
        let k = self.kernel;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * n..][..n];
                    for b in 0..batch {
                        let plane = &x[(c * batch + b) * h * w..][..h * w];
                        for oy in 0..ho {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src = &plane[iy as usize * w..][..w];
                            let dst = &mut row[(b * ho + oy) * wo..][..wo];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *d = src[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        (ho, wo)
    }

    fn col2im<T: Scalar>(&self, dcols: &[T], batch: usize, h: usize, w: usize, dx: &mut Vec<T>) {
        let (ho, wo) = self.output_size(h, w).expect("kernel larger than padded input");
        let n = batch * ho * wo;
        dx.clear();
        dx.resize(self.in_channels * batch * h * w, T::ZERO);
        let k = self.kernel;
        for c in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &dcols[((c * k + ky) * k + kx) * n..][..n];
                    for b in 0..batch {
                        let plane = &mut dx[(c * batch + b) * h * w..][..h * w];
                        for oy in 0..ho {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src = &row[(b * ho + oy) * wo..][..wo];
                            for (ox, g) in src.iter().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    plane[iy as usize * w + ix as usize] += *g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Returns the output spatial size; `cols` keeps the unfolded input for
    /// the backward pass.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar>(
        &self,
        x: &[T],
        batch: usize,
        h: usize,
        w: usize,
        weight: &[T],
        bias: &[T],
        cols: &mut Vec<T>,
        out: &mut Vec<T>,
    ) -> (usize, usize) {
        assert_eq!(x.len(), self.in_channels * batch * h * w, "conv input size");
        let (ho, wo) = self.im2col(x, batch, h, w, cols);
        let n = batch * ho * wo;
        out.clear();
        out.reserve(self.out_channels * n);
        for &b in bias {
            out.extend(std::iter::repeat_n(b, n));
        }
        matmul(
            MatRef::new(weight, self.out_channels, self.patch_len()),
            MatRef::new(cols, self.patch_len(), n),
            T::ONE,
            out,
        );
        (ho, wo)
    }

    /// Writes weight and bias gradients; fills `dx` when given.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        cols: &[T],
        dout: &[T],
        batch: usize,
        h: usize,
        w: usize,
        weight: &[T],
        dweight: &mut [T],
        dbias: &mut [T],
        dx: Option<&mut Vec<T>>,
    ) {
        let n = dout.len() / self.out_channels;
        matmul(
            MatRef::new(dout, self.out_channels, n),
            MatRef::new(cols, self.patch_len(), n).t(),
            T::ZERO,
            dweight,
        );
        for (db, row) in dbias.iter_mut().zip(dout.chunks_exact(n)) {
            *db = row.iter().fold(T::ZERO, |a, v| a + *v);
        }
        if let Some(dx) = dx {
            let mut dcols = vec![T::ZERO; self.patch_len() * n];
            matmul(
                MatRef::new(weight, self.out_channels, self.patch_len()).t(),
                MatRef::new(dout, self.out_channels, n),
                T::ZERO,
                &mut dcols,
            );
            self.col2im(&dcols, batch, h, w, dx);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PoolKind {
    #[default]
    Max,
    Average,
}

/// 2×2 pooling with stride 2 over `planes` planes of `h × w`.
pub fn pool2_forward<T: Scalar>(
    kind: PoolKind,
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    out: &mut Vec<T>,
    argmax: &mut Vec<u32>,
) -> (usize, usize) {
    let (ho, wo) = (h / 2, w / 2);
    out.clear();
    argmax.clear();
    let quarter = T::from_f64(0.25);
    for p in 0..planes {
        let plane = &x[p * h * w..][..h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let idx = [
                    2 * oy * w + 2 * ox,
                    2 * oy * w + 2 * ox + 1,
                    (2 * oy + 1) * w + 2 * ox,
                    (2 * oy + 1) * w + 2 * ox + 1,
                ];
                match kind {
                    PoolKind::Max => {
                        let best = idx
                            .iter()
                            .copied()
                            .reduce(|a, b| if plane[b] > plane[a] { b } else { a })
                            .expect("four candidates");
                        out.push(plane[best]);
                        argmax.push(best as u32);
                    }
                    PoolKind::Average => {
                        let s = idx.iter().fold(T::ZERO, |a, &i| a + plane[i]);
                        out.push(s * quarter);
                    }
                }
            }
        }
    }
    (ho, wo)
}

pub fn pool2_backward<T: Scalar>(
    kind: PoolKind,
    dout: &[T],
    argmax: &[u32],
    planes: usize,
    h: usize,
    w: usize,
    dx: &mut Vec<T>,
) {
    let (ho, wo) = (h / 2, w / 2);
    dx.clear();
    dx.resize(planes * h * w, T::ZERO);
    let quarter = T::from_f64(0.25);
    for p in 0..planes {
        let plane = &mut dx[p * h * w..][..h * w];
        for o in 0..ho * wo {
            let g = dout[p * ho * wo + o];
            match kind {
                PoolKind::Max => plane[argmax[p * ho * wo + o] as usize] += g,
                PoolKind::Average => {
                    let (oy, ox) = (o / wo, o % wo);
                    for (dy, dxx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        plane[(2 * oy + dy) * w + 2 * ox + dxx] += g * quarter;
                    }
                }
            }
        }
    }
}

pub fn relu_forward<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// Zeroes gradient entries whose forward output was not positive.
pub fn relu_backward<T: Scalar>(output: &[T], grad: &mut [T]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if !(*y > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

/// Fully connected layer on feature-major `[in][B]` activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn forward<T: Scalar>(&self, x: &[T], batch: usize, weight: &[T], bias: &[T], out: &mut Vec<T>) {
        assert_eq!(x.len(), self.inputs * batch, "linear input size");
        out.clear();
        for &b in bias {
            out.extend(std::iter::repeat_n(b, batch));
        }
        matmul(
            MatRef::new(weight, self.outputs, self.inputs),
            MatRef::new(x, self.inputs, batch),
            T::ONE,
            out,
        );
    }

    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        x: &[T],
        dy: &[T],
        batch: usize,
        weight: &[T],
        dweight: &mut [T],
        dbias: &mut [T],
        dx: Option<&mut Vec<T>>,
    ) {
        matmul(
            MatRef::new(dy, self.outputs, batch),
            MatRef::new(x, self.inputs, batch).t(),
            T::ZERO,
            dweight,
        );
        for (db, row) in dbias.iter_mut().zip(dy.chunks_exact(batch)) {
            *db = row.iter().fold(T::ZERO, |a, v| a + *v);
        }
        if let Some(dx) = dx {
            dx.clear();
            dx.resize(self.inputs * batch, T::ZERO);
            matmul(
                MatRef::new(weight, self.outputs, self.inputs).t(),
                MatRef::new(dy, self.outputs, batch),
                T::ZERO,
                dx,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Scalar objective `Σ g ⊙ f(·)` used to probe a layer's Jacobian.
    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn assert_close(analytic: f64, numeric: f64, what: &str) {
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(
            (analytic - numeric).abs() / scale < 1e-4,
            "{what}: analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn conv_direct_oracle() {
        let conv = Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, pad: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (b, h, w) = (2, 4, 5);
        let x = random(2 * b * h * w, &mut rng);
        let wt = random(conv.weight_len(), &mut rng);
        let bias = random(3, &mut rng);
        let (mut cols, mut out) = (Vec::new(), Vec::new());
        let (ho, wo) = conv.forward(&x, b, h, w, &wt, &bias, &mut cols, &mut out);
        assert_eq!((ho, wo), (4, 5));
        for co in 0..3 {
            for bi in 0..b {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = bias[co];
                        for ci in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = oy as isize + ky as isize - 1;
                                    let ix = ox as isize + kx as isize - 1;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        s += wt[((co * 2 + ci) * 3 + ky) * 3 + kx]
                                            * x[((ci * b + bi) * h + iy as usize) * w + ix as usize];
                                    }
                                }
                            }
                        }
                        let got = out[((co * b + bi) * ho + oy) * wo + ox];
                        assert!((got - s).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for conv in [
            Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, pad: 1 },
            Conv2d { in_channels: 2, out_channels: 2, kernel: 3, stride: 3, pad: 0 },
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let (b, h, w) = (2, 6, 6);
            let x = random(2 * b * h * w, &mut rng);
            let wt = random(conv.weight_len(), &mut rng);
            let bias = random(conv.out_channels, &mut rng);
            let (mut cols, mut out) = (Vec::new(), Vec::new());
            conv.forward(&x, b, h, w, &wt, &bias, &mut cols, &mut out);
            let g = random(out.len(), &mut rng);
            let mut dw = vec![0.0; wt.len()];
            let mut db = vec![0.0; bias.len()];
            let mut dx = Vec::new();
            conv.backward(&cols, &g, b, h, w, &wt, &mut dw, &mut db, Some(&mut dx));
            let f = |x: &[f64], wt: &[f64], bias: &[f64]| {
                let (mut c, mut o) = (Vec::new(), Vec::new());
                conv.forward(x, b, h, w, wt, bias, &mut c, &mut o);
                dot(&o, &g)
            };
            let eps = 1e-5;
            for i in 0..wt.len() {
                let (mut p, mut m) = (wt.clone(), wt.clone());
                p[i] += eps;
                m[i] -= eps;
                assert_close(dw[i], (f(&x, &p, &bias) - f(&x, &m, &bias)) / (2.0 * eps), "conv weight");
            }
            for i in 0..bias.len() {
                let (mut p, mut m) = (bias.clone(), bias.clone());
                p[i] += eps;
                m[i] -= eps;
                assert_close(db[i], (f(&x, &wt, &p) - f(&x, &wt, &m)) / (2.0 * eps), "conv bias");
            }
            for i in 0..x.len() {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += eps;
                m[i] -= eps;
                assert_close(dx[i], (f(&p, &wt, &bias) - f(&m, &wt, &bias)) / (2.0 * eps), "conv input");
            }
        }
    }

    #[test]
    fn pool_gradients_match_finite_differences() {
        for kind in [PoolKind::Max, PoolKind::Average] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (planes, h, w) = (3, 4, 6);
            let x = random(planes * h * w, &mut rng);
            let (mut out, mut arg) = (Vec::new(), Vec::new());
            pool2_forward(kind, &x, planes, h, w, &mut out, &mut arg);
            assert_eq!(out.len(), planes * 2 * 3);
            let g = random(out.len(), &mut rng);
            let mut dx = Vec::new();
            pool2_backward(kind, &g, &arg, planes, h, w, &mut dx);
            let f = |x: &[f64]| {
                let (mut o, mut a) = (Vec::new(), Vec::new());
                pool2_forward(kind, x, planes, h, w, &mut o, &mut a);
                dot(&o, &g)
            };
            let eps = 1e-5;
            for i in 0..x.len() {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += eps;
                m[i] -= eps;
                assert_close(dx[i], (f(&p) - f(&m)) / (2.0 * eps), "pool input");
            }
        }
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(40, &mut rng);
        let g = random(40, &mut rng);
        let mut y = x.clone();
        relu_forward(&mut y);
        let mut d = g.clone();
        relu_backward(&y, &mut d);
        let f = |x: &[f64]| {
            let mut y = x.to_vec();
            relu_forward(&mut y);
            dot(&y, &g)
        };
        let eps = 1e-6;
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += eps;
            m[i] -= eps;
            assert_close(d[i], (f(&p) - f(&m)) / (2.0 * eps), "relu");
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let lin = Linear { inputs: 5, outputs: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = 3;
        let x = random(5 * b, &mut rng);
        let wt = random(lin.weight_len(), &mut rng);
        let bias = random(4, &mut rng);
        let mut out = Vec::new();
        lin.forward(&x, b, &wt, &bias, &mut out);
        let g = random(out.len(), &mut rng);
        let (mut dw, mut db, mut dx) = (vec![0.0; 20], vec![0.0; 4], Vec::new());
        lin.backward(&x, &g, b, &wt, &mut dw, &mut db, Some(&mut dx));
        let f = |x: &[f64], wt: &[f64], bias: &[f64]| {
            let mut o = Vec::new();
            lin.forward(x, b, wt, bias, &mut o);
            dot(&o, &g)
        };
        let eps = 1e-5;
        for i in 0..wt.len() {
            let (mut p, mut m) = (wt.clone(), wt.clone());
            p[i] += eps;
            m[i] -= eps;
            assert_close(dw[i], (f(&x, &p, &bias) - f(&x, &m, &bias)) / (2.0 * eps), "linear weight");
        }
        for i in 0..4 {
            let (mut p, mut m) = (bias.clone(), bias.clone());
            p[i] += eps;
            m[i] -= eps;
            assert_close(db[i], (f(&x, &wt, &p) - f(&x, &wt, &m)) / (2.0 * eps), "linear bias");
        }
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += eps;
            m[i] -= eps;
            assert_close(dx[i], (f(&p, &wt, &bias) - f(&m, &wt, &bias)) / (2.0 * eps), "linear input");
        }
    }
}
