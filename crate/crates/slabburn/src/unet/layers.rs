//! Layer primitives with explicit forward caches and hand-derived
//! backward passes.
//!
//! Everything operates on `(N, C, H, W)` f64 tensors. Convolutions use
//! 'same' zero padding (asymmetric for even kernels, extra pad at the
//! bottom/right) and are evaluated as im2col + matrix multiply, with the
//! batch dimension fanned out across threads.

use ndarray::{s, Array1, Array2, Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type Tensor4 = Array4<f64>;

/// 'same' padding amounts `(before, after)` for a kernel size.
pub fn same_pads(k: usize) -> (usize, usize) {
    let before = (k - 1) / 2;
    (before, k - 1 - before)
}

/// Convolution weights: `(out_channels, in_channels, kh, kw)` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array4::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    fn kernel(&self) -> (usize, usize) {
        let (_, _, kh, kw) = self.weight.dim();
        (kh, kw)
    }

    /// Lowers one sample into a `(C*kh*kw, H*W)` patch matrix.
    fn im2col(&self, x: &ndarray::ArrayView3<'_, f64>) -> Array2<f64> {
        let (c_in, h, w) = x.dim();
        let (kh, kw) = self.kernel();
        let (pad_t, _) = same_pads(kh);
        let (pad_l, _) = same_pads(kw);
        let x_slice = x.to_slice().map(|s| s.to_vec());
        let x_flat: Vec<f64> = match x_slice {
            Some(s) => s,
            None => x.iter().copied().collect(),
        };
        let mut col = Array2::<f64>::zeros((c_in * kh * kw, h * w));
        for c in 0..c_in {
            for kr in 0..kh {
                for kc in 0..kw {
                    let row = (c * kh + kr) * kw + kc;
                    let col_row = col.row_mut(row).into_slice().expect("row is contiguous");
                    for out_r in 0..h {
                        let in_r = out_r as isize + kr as isize - pad_t as isize;
                        if in_r < 0 || in_r >= h as isize {
                            continue;
                        }
                        // The valid out_c range maps to a contiguous input
                        // span on this row; copy it in one shot.
                        let out_lo = pad_l.saturating_sub(kc);
                        let out_hi = (w + pad_l).saturating_sub(kc).min(w);
                        if out_lo >= out_hi {
                            continue;
                        }
                        let in_lo = out_lo + kc - pad_l;
                        let src_base = (c * h + in_r as usize) * w;
                        let src = &x_flat[src_base + in_lo..src_base + in_lo + (out_hi - out_lo)];
                        let dst = &mut col_row[out_r * w + out_lo..out_r * w + out_hi];
                        dst.copy_from_slice(src);
                    }
                }
            }
        }
        col
    }

    /// Scatters a patch-matrix gradient back onto an input-shaped tensor.
    fn col2im(&self, gcol: &Array2<f64>, c_in: usize, h: usize, w: usize) -> ndarray::Array3<f64> {
        let (kh, kw) = self.kernel();
        let (pad_t, _) = same_pads(kh);
        let (pad_l, _) = same_pads(kw);
        let mut gx = ndarray::Array3::<f64>::zeros((c_in, h, w));
        let gx_flat = gx.as_slice_mut().expect("gx is standard layout");
        for c in 0..c_in {
            for kr in 0..kh {
                for kc in 0..kw {
                    let row = (c * kh + kr) * kw + kc;
                    let gcol_row = gcol.row(row);
                    let gcol_row = gcol_row.to_slice().expect("gcol row is contiguous");
                    for out_r in 0..h {
                        let in_r = out_r as isize + kr as isize - pad_t as isize;
                        if in_r < 0 || in_r >= h as isize {
                            continue;
                        }
                        let out_lo = pad_l.saturating_sub(kc);
                        let out_hi = (w + pad_l).saturating_sub(kc).min(w);
                        if out_lo >= out_hi {
                            continue;
                        }
                        let in_lo = out_lo + kc - pad_l;
                        let dst_base = (c * h + in_r as usize) * w;
                        let dst = &mut gx_flat[dst_base + in_lo..dst_base + in_lo + (out_hi - out_lo)];
                        let src = &gcol_row[out_r * w + out_lo..out_r * w + out_hi];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
        gx
    }

    /// Stride-1 'same' convolution.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let (n, c_in, h, w) = x.dim();
        let (o, wc_in, _, _) = self.weight.dim();
        if c_in != wc_in {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {wc_in} input channels, got {c_in}"
            )));
        }
        let ckk = self.weight.len() / o;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((o, ckk))
            .expect("conv weight is standard layout");
        let per_sample: Vec<Array2<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let col = self.im2col(&x.index_axis(Axis(0), i));
                let mut out = w2.dot(&col);
                for (mut row, &b) in out.outer_iter_mut().zip(self.bias.iter()) {
                    row.mapv_inplace(|v| v + b);
                }
                out
            })
            .collect();
        let mut y = Array4::<f64>::zeros((n, o, h, w));
        for (i, out) in per_sample.into_iter().enumerate() {
            let reshaped = out
                .into_shape_with_order((o, h, w))
                .expect("matmul output is standard layout");
            y.index_axis_mut(Axis(0), i).assign(&reshaped);
        }
        Ok(y)
    }

    /// Gradients w.r.t. input, weight, and bias.
    pub fn backward(
        &self,
        x: &Tensor4,
        grad_out: &Tensor4,
    ) -> (Tensor4, Array4<f64>, Array1<f64>) {
        let (n, c_in, h, w) = x.dim();
        let (o, _, kh, kw) = self.weight.dim();
        let ckk = c_in * kh * kw;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((o, ckk))
            .expect("conv weight is standard layout");

        let per_sample: Vec<(ndarray::Array3<f64>, Array2<f64>, Array1<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let col = self.im2col(&x.index_axis(Axis(0), i));
                let gout2 = grad_out
                    .index_axis(Axis(0), i)
                    .into_shape_with_order((o, h * w))
                    .expect("grad is standard layout");
                let gw2 = gout2.dot(&col.t());
                let gb = gout2.sum_axis(Axis(1));
                let gcol = w2.t().dot(&gout2);
                let gx = self.col2im(&gcol, c_in, h, w);
                (gx, gw2, gb)
            })
            .collect();

        let mut gx = Array4::<f64>::zeros((n, c_in, h, w));
        let mut gw2_total = Array2::<f64>::zeros((o, ckk));
        let mut gb_total = Array1::<f64>::zeros(o);
        for (i, (gx_i, gw2, gb)) in per_sample.into_iter().enumerate() {
            gx.index_axis_mut(Axis(0), i).assign(&gx_i);
            gw2_total += &gw2;
            gb_total += &gb;
        }
        let gw = gw2_total
            .into_shape_with_order((o, c_in, kh, kw))
            .expect("weight gradient reshape");
        (gx, gw, gb_total)
    }
}

/// Batch normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

pub const BN_EPS: f64 = 1e-5;
/// Fraction of the batch statistic blended into the running statistic.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor4,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

impl BnParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
            running_mean: Array1::zeros(self.running_mean.raw_dim()),
            running_var: Array1::zeros(self.running_var.raw_dim()),
        }
    }

    /// Normalizes with batch statistics, returning the cache backward needs.
    pub fn forward_train(&self, x: &Tensor4) -> (Tensor4, BnCache) {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut mean = Array1::<f64>::zeros(c);
        let mut var = Array1::<f64>::zeros(c);
        for ch in 0..c {
            let plane = x.slice(s![.., ch, .., ..]);
            let mu = plane.sum() / m;
            let v = plane.fold(0.0, |acc, &x| acc + (x - mu) * (x - mu)) / m;
            mean[ch] = mu;
            var[ch] = v;
        }
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut xhat = x.clone();
        for ch in 0..c {
            let mu = mean[ch];
            let is = inv_std[ch];
            xhat.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mu) * is);
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let g = self.gamma[ch];
            let b = self.beta[ch];
            y.slice_mut(s![.., ch, .., ..]).mapv_inplace(|v| v * g + b);
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    /// Normalizes with frozen running statistics (eval and MC modes).
    pub fn forward_eval(&self, x: &Tensor4) -> Tensor4 {
        let (_, c, _, _) = x.dim();
        let mut y = x.clone();
        for ch in 0..c {
            let mu = self.running_mean[ch];
            let is = 1.0 / (self.running_var[ch] + BN_EPS).sqrt();
            let g = self.gamma[ch];
            let b = self.beta[ch];
            y.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mu) * is * g + b);
        }
        y
    }

    /// Gradient through the batch-statistic normalization.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor4) -> (Tensor4, Array1<f64>, Array1<f64>) {
        let (n, c, h, w) = grad_out.dim();
        let m = (n * h * w) as f64;
        let mut gx = Tensor4::zeros(grad_out.raw_dim());
        let mut ggamma = Array1::<f64>::zeros(c);
        let mut gbeta = Array1::<f64>::zeros(c);
        for ch in 0..c {
            let gout = grad_out.slice(s![.., ch, .., ..]);
            let xhat = cache.xhat.slice(s![.., ch, .., ..]);
            let sum_g = gout.sum();
            let sum_gx = gout
                .iter()
                .zip(xhat.iter())
                .fold(0.0, |acc, (&g, &xh)| acc + g * xh);
            ggamma[ch] = sum_gx;
            gbeta[ch] = sum_g;
            let gamma = self.gamma[ch];
            let inv_std = cache.inv_std[ch];
            // gx = gamma * inv_std / m * (m*g - sum(g) - xhat * sum(g*xhat))
            let scale = gamma * inv_std / m;
            let mut dst = gx.slice_mut(s![.., ch, .., ..]);
            ndarray::Zip::from(&mut dst)
                .and(&gout)
                .and(&xhat)
                .for_each(|d, &g, &xh| {
                    *d = scale * (m * g - sum_g - xh * sum_gx);
                });
        }
        (gx, ggamma, gbeta)
    }

    /// Blends batch statistics into the running statistics.
    pub fn update_running(&mut self, cache: &BnCache, momentum: f64) {
        for ch in 0..self.running_mean.len() {
            self.running_mean[ch] =
                (1.0 - momentum) * self.running_mean[ch] + momentum * cache.batch_mean[ch];
            self.running_var[ch] =
                (1.0 - momentum) * self.running_var[ch] + momentum * cache.batch_var[ch];
        }
    }
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.mapv(|v| v.max(0.0))
}

/// ReLU gradient, masked by the forward output.
pub fn relu_backward(out: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let mut gx = grad_out.clone();
    ndarray::Zip::from(&mut gx).and(out).for_each(|g, &y| {
        if y <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

/// 2x2 max pooling with stride 2; the cache records which corner won.
pub fn maxpool2(x: &Tensor4) -> (Tensor4, Array4<u8>) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor4::zeros((n, c, oh, ow));
    let mut arg = Array4::<u8>::zeros((n, c, oh, ow));
    for i in 0..n {
        for ch in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_k = 0u8;
                    for k in 0..4u8 {
                        let rr = 2 * r + (k / 2) as usize;
                        let cc = 2 * col + (k % 2) as usize;
                        let v = x[[i, ch, rr, cc]];
                        if v > best {
                            best = v;
                            best_k = k;
                        }
                    }
                    y[[i, ch, r, col]] = best;
                    arg[[i, ch, r, col]] = best_k;
                }
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward(arg: &Array4<u8>, grad_out: &Tensor4) -> Tensor4 {
    let (n, c, oh, ow) = grad_out.dim();
    let mut gx = Tensor4::zeros((n, c, oh * 2, ow * 2));
    for i in 0..n {
        for ch in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let k = arg[[i, ch, r, col]];
                    let rr = 2 * r + (k / 2) as usize;
                    let cc = 2 * col + (k % 2) as usize;
                    gx[[i, ch, rr, cc]] += grad_out[[i, ch, r, col]];
                }
            }
        }
    }
    gx
}

/// 2x nearest-neighbor upsampling.
pub fn upsample2(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.dim();
    let mut y = Tensor4::zeros((n, c, h * 2, w * 2));
    for i in 0..n {
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    let v = x[[i, ch, r, col]];
                    y[[i, ch, 2 * r, 2 * col]] = v;
                    y[[i, ch, 2 * r, 2 * col + 1]] = v;
                    y[[i, ch, 2 * r + 1, 2 * col]] = v;
                    y[[i, ch, 2 * r + 1, 2 * col + 1]] = v;
                }
            }
        }
    }
    y
}

/// Upsampling gradient: each input cell collects its four children.
pub fn upsample2_backward(grad_out: &Tensor4) -> Tensor4 {
    let (n, c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Tensor4::zeros((n, c, h, w));
    for i in 0..n {
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    gx[[i, ch, r, col]] = grad_out[[i, ch, 2 * r, 2 * col]]
                        + grad_out[[i, ch, 2 * r, 2 * col + 1]]
                        + grad_out[[i, ch, 2 * r + 1, 2 * col]]
                        + grad_out[[i, ch, 2 * r + 1, 2 * col + 1]];
                }
            }
        }
    }
    gx
}

/// Channel-axis concatenation `[a, b]`.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching non-channel dims")
}

/// Splits a concatenation gradient back into the two operands' shapes.
pub fn split_channels(grad: &Tensor4, a_channels: usize) -> (Tensor4, Tensor4) {
    let ga = grad.slice(s![.., ..a_channels, .., ..]).to_owned();
    let gb = grad.slice(s![.., a_channels.., .., ..]).to_owned();
    (ga, gb)
}

/// Inverted dropout: kept activations are scaled by `1/(1-p)` so the
/// expectation is unchanged; the mask doubles as the backward gradient
/// filter.
pub fn dropout(x: &Tensor4, p: f64, rng: &mut ChaCha8Rng) -> (Tensor4, Tensor4) {
    debug_assert!((0.0..1.0).contains(&p));
    if p == 0.0 {
        return (x.clone(), Tensor4::ones(x.raw_dim()));
    }
    let keep = 1.0 - p;
    let mut mask = Tensor4::zeros(x.raw_dim());
    for v in mask.iter_mut() {
        if rng.gen::<f64>() >= p {
            *v = 1.0 / keep;
        }
    }
    (x * &mask, mask)
}
