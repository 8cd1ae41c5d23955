//! The segmentation network: a contracting/expanding fully-convolutional
//! net with skip connections, dropout-based Monte-Carlo uncertainty, and a
//! from-scratch backward pass.
//!
//! The contraction path is `depth` repetitions of two 3x3 'same'
//! convolutions, each followed by batch normalization and ReLU, then a 2x2
//! max pool; feature channels double per level. A double-conv bottleneck
//! sits at the bottom. The expansion path mirrors it: 2x nearest-neighbor
//! upsampling followed by a 2x2 'same' convolution that halves the
//! channels, concatenation with the matching contraction feature map, and
//! another double conv. A final 1x1 convolution maps to one logit channel,
//! so the output has the input's height and width.
//!
//! Dropout sits after selected double-conv blocks (by default everywhere
//! except the first encoder block and the last decoder block). In `train`
//! forward passes batch statistics drive the normalization and dropout is
//! live; in `eval` passes running statistics are used and dropout is off;
//! in `mc` passes running statistics are used *with* dropout live, so the
//! spread over repeated samples is pure model uncertainty.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod train;

use ndarray::{Array1, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::img::{BinaryMask, ImageFrame, ProbabilityMap, UncertaintyMap};
use crate::synth::split_seed;

pub use adam::{adam_step, AdamState};
pub use layers::{BnParams, ConvParams, Tensor4};
pub use loss::bce_with_logits;
pub use train::{random_split, train, EpochStats, Sample, TrainConfig, TrainOutcome};

use layers::{
    concat_channels, dropout, maxpool2, maxpool2_backward, relu, relu_backward, split_channels,
    upsample2, upsample2_backward, BnCache,
};

/// Number of Monte-Carlo forward passes used by default.
pub const DEFAULT_MC_SAMPLES: usize = 20;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UNetConfig {
    /// Contraction levels.
    pub depth: usize,
    /// Feature channels at the first level; doubles per level.
    pub base_channels: usize,
    /// 3 for RGB input, 1 for grayscale.
    pub in_channels: usize,
    /// Height the network is trained at; must divide by `2^depth`.
    pub input_h: usize,
    /// Width the network is trained at; must divide by `2^depth`.
    pub input_w: usize,
    /// Dropout probability in `[0, 1)`.
    pub dropout_p: f64,
    /// Per-block dropout switches ordered `[enc_1..enc_depth, bottleneck,
    /// dec_depth..dec_1]`; `None` applies the default placement (everywhere
    /// except the first encoder block and the last decoder block).
    pub dropout_sites: Option<Vec<bool>>,
    /// Seed for weight initialization and derived training streams.
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            base_channels: 64,
            in_channels: 3,
            input_h: 800,
            input_w: 800,
            dropout_p: 0.5,
            dropout_sites: None,
            seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn block_count(&self) -> usize {
        2 * self.depth + 1
    }

    /// Resolved per-block dropout switches.
    pub fn resolved_dropout_sites(&self) -> Vec<bool> {
        match &self.dropout_sites {
            Some(sites) => sites.clone(),
            None => {
                let mut sites = vec![true; self.block_count()];
                sites[0] = false; // first encoder block
                let last = self.block_count() - 1;
                sites[last] = false; // last decoder block
                sites
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 {
            return Err(Error::InvalidDimensions(
                "depth and base_channels must be at least 1".into(),
            ));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                got: self.in_channels,
            });
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidDimensions(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if let Some(sites) = &self.dropout_sites {
            if sites.len() != self.block_count() {
                return Err(Error::InvalidDimensions(format!(
                    "{} dropout sites for {} blocks",
                    sites.len(),
                    self.block_count()
                )));
            }
        }
        self.check_divisible(self.input_h, self.input_w)
    }

    fn check_divisible(&self, h: usize, w: usize) -> Result<()> {
        let factor = 1usize << self.depth;
        if h % factor != 0 || w % factor != 0 || h / factor == 0 || w / factor == 0 {
            return Err(Error::NotDivisible { h, w, factor });
        }
        Ok(())
    }
}

/// One double-conv block's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub conv1: ConvParams,
    pub bn1: BnParams,
    pub conv2: ConvParams,
    pub bn2: BnParams,
}

impl BlockParams {
    fn zeros_like(&self) -> Self {
        Self {
            conv1: self.conv1.zeros_like(),
            bn1: self.bn1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            bn2: self.bn2.zeros_like(),
        }
    }
}

/// All learnable weights plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetParams {
    pub config: UNetConfig,
    pub encoder: Vec<BlockParams>,
    pub bottleneck: BlockParams,
    /// 2x2 'same' convolutions after each upsampling, deepest first.
    pub upconvs: Vec<ConvParams>,
    /// Decoder double-conv blocks, deepest first.
    pub decoder: Vec<BlockParams>,
    /// Final 1x1 convolution to a single logit channel.
    pub output: ConvParams,
}

fn he_uniform(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
    let fan_in = (shape.1 * shape.2 * shape.3) as f64;
    let limit = (6.0 / fan_in).sqrt();
    Array4::from_shape_fn(shape, |_| rng.gen_range(-limit..limit))
}

fn new_conv(rng: &mut ChaCha8Rng, c_out: usize, c_in: usize, k: usize) -> ConvParams {
    ConvParams {
        weight: he_uniform(rng, (c_out, c_in, k, k)),
        bias: Array1::zeros(c_out),
    }
}

fn new_block(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> BlockParams {
    BlockParams {
        conv1: new_conv(rng, c_out, c_in, 3),
        bn1: BnParams::new(c_out),
        conv2: new_conv(rng, c_out, c_out, 3),
        bn2: BnParams::new(c_out),
    }
}

/// Builds seeded initial parameters for a configuration.
pub fn build_unet(config: &UNetConfig) -> Result<UNetParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, 0x494E4954));
    let base = config.base_channels;
    let mut encoder = Vec::with_capacity(config.depth);
    for i in 0..config.depth {
        let c_in = if i == 0 {
            config.in_channels
        } else {
            base << (i - 1)
        };
        encoder.push(new_block(&mut rng, c_in, base << i));
    }
    let bottleneck = new_block(&mut rng, base << (config.depth - 1), base << config.depth);
    let mut upconvs = Vec::with_capacity(config.depth);
    let mut decoder = Vec::with_capacity(config.depth);
    for j in 0..config.depth {
        let level = config.depth - 1 - j; // skip level this decoder block joins
        let c_skip = base << level;
        upconvs.push(new_conv(&mut rng, c_skip, c_skip * 2, 2));
        decoder.push(new_block(&mut rng, c_skip * 2, c_skip));
    }
    let output = new_conv(&mut rng, 1, base, 1);
    Ok(UNetParams {
        config: config.clone(),
        encoder,
        bottleneck,
        upconvs,
        decoder,
        output,
    })
}

impl UNetParams {
    /// Same-shaped parameter holder with every array zeroed; used for
    /// gradients and optimizer moments.
    pub fn zeros_like(&self) -> UNetParams {
        UNetParams {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(BlockParams::zeros_like).collect(),
            bottleneck: self.bottleneck.zeros_like(),
            upconvs: self.upconvs.iter().map(ConvParams::zeros_like).collect(),
            decoder: self.decoder.iter().map(BlockParams::zeros_like).collect(),
            output: self.output.zeros_like(),
        }
    }

    /// Flat views of the trainable arrays in canonical order.
    pub fn trainable_slices(&self) -> Vec<&[f64]> {
        fn push_conv<'a>(v: &mut Vec<&'a [f64]>, c: &'a ConvParams) {
            v.push(c.weight.as_slice().unwrap());
            v.push(c.bias.as_slice().unwrap());
        }
        fn push_block<'a>(v: &mut Vec<&'a [f64]>, b: &'a BlockParams) {
            push_conv(v, &b.conv1);
            v.push(b.bn1.gamma.as_slice().unwrap());
            v.push(b.bn1.beta.as_slice().unwrap());
            push_conv(v, &b.conv2);
            v.push(b.bn2.gamma.as_slice().unwrap());
            v.push(b.bn2.beta.as_slice().unwrap());
        }
        let mut v = Vec::new();
        for b in &self.encoder {
            push_block(&mut v, b);
        }
        push_block(&mut v, &self.bottleneck);
        for c in &self.upconvs {
            push_conv(&mut v, c);
        }
        for b in &self.decoder {
            push_block(&mut v, b);
        }
        push_conv(&mut v, &self.output);
        v
    }

    /// Mutable flat views of the trainable arrays, same order as
    /// [`Self::trainable_slices`].
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [f64]> {
        fn push_conv<'a>(v: &mut Vec<&'a mut [f64]>, c: &'a mut ConvParams) {
            v.push(c.weight.as_slice_mut().unwrap());
            v.push(c.bias.as_slice_mut().unwrap());
        }
        fn push_block<'a>(v: &mut Vec<&'a mut [f64]>, b: &'a mut BlockParams) {
            push_conv(v, &mut b.conv1);
            v.push(b.bn1.gamma.as_slice_mut().unwrap());
            v.push(b.bn1.beta.as_slice_mut().unwrap());
            push_conv(v, &mut b.conv2);
            v.push(b.bn2.gamma.as_slice_mut().unwrap());
            v.push(b.bn2.beta.as_slice_mut().unwrap());
        }
        let mut v = Vec::new();
        for b in &mut self.encoder {
            push_block(&mut v, b);
        }
        push_block(&mut v, &mut self.bottleneck);
        for c in &mut self.upconvs {
            push_conv(&mut v, c);
        }
        for b in &mut self.decoder {
            push_block(&mut v, b);
        }
        push_conv(&mut v, &mut self.output);
        v
    }

    /// Flat views of the batch-norm running statistics in canonical order.
    pub fn running_slices(&self) -> Vec<&[f64]> {
        fn push_block<'a>(v: &mut Vec<&'a [f64]>, b: &'a BlockParams) {
            v.push(b.bn1.running_mean.as_slice().unwrap());
            v.push(b.bn1.running_var.as_slice().unwrap());
            v.push(b.bn2.running_mean.as_slice().unwrap());
            v.push(b.bn2.running_var.as_slice().unwrap());
        }
        let mut v = Vec::new();
        for b in &self.encoder {
            push_block(&mut v, b);
        }
        push_block(&mut v, &self.bottleneck);
        for b in &self.decoder {
            push_block(&mut v, b);
        }
        v
    }

    pub fn running_slices_mut(&mut self) -> Vec<&mut [f64]> {
        fn push_block<'a>(v: &mut Vec<&'a mut [f64]>, b: &'a mut BlockParams) {
            v.push(b.bn1.running_mean.as_slice_mut().unwrap());
            v.push(b.bn1.running_var.as_slice_mut().unwrap());
            v.push(b.bn2.running_mean.as_slice_mut().unwrap());
            v.push(b.bn2.running_var.as_slice_mut().unwrap());
        }
        let mut v = Vec::new();
        for b in &mut self.encoder {
            push_block(&mut v, b);
        }
        push_block(&mut v, &mut self.bottleneck);
        for b in &mut self.decoder {
            push_block(&mut v, b);
        }
        v
    }

    /// Total trainable parameter count.
    pub fn num_trainable(&self) -> usize {
        self.trainable_slices().iter().map(|s| s.len()).sum()
    }

    fn bn_blocks_mut(&mut self) -> Vec<&mut BlockParams> {
        let mut v: Vec<&mut BlockParams> = Vec::new();
        for b in &mut self.encoder {
            v.push(b);
        }
        v.push(&mut self.bottleneck);
        for b in &mut self.decoder {
            v.push(b);
        }
        v
    }
}

/// Per-block forward cache.
#[derive(Debug, Clone)]
struct BlockCache {
    x: Tensor4,
    bn1: BnCache,
    relu1: Tensor4,
    bn2: BnCache,
    out: Tensor4,
}

struct EncCache {
    block: BlockCache,
    drop_mask: Option<Tensor4>,
    pool_arg: Array4<u8>,
}

struct DecCache {
    up: Tensor4,
    block: BlockCache,
    drop_mask: Option<Tensor4>,
}

/// Everything the backward pass needs from one training forward.
pub struct TrainCache {
    enc: Vec<EncCache>,
    bottleneck: (BlockCache, Option<Tensor4>),
    dec: Vec<DecCache>,
    final_in: Tensor4,
}

fn block_forward_train(p: &BlockParams, x: &Tensor4) -> Result<(Tensor4, BlockCache)> {
    let y1 = p.conv1.forward(x)?;
    let (y2, bn1) = p.bn1.forward_train(&y1);
    let r1 = relu(&y2);
    let y3 = p.conv2.forward(&r1)?;
    let (y4, bn2) = p.bn2.forward_train(&y3);
    let out = relu(&y4);
    Ok((
        out.clone(),
        BlockCache {
            x: x.clone(),
            bn1,
            relu1: r1,
            bn2,
            out,
        },
    ))
}

fn block_forward_frozen(p: &BlockParams, x: &Tensor4) -> Result<Tensor4> {
    let y = p.conv1.forward(x)?;
    let y = relu(&p.bn1.forward_eval(&y));
    let y = p.conv2.forward(&y)?;
    Ok(relu(&p.bn2.forward_eval(&y)))
}

fn block_backward(p: &BlockParams, c: &BlockCache, grad_out: &Tensor4) -> (Tensor4, BlockParams) {
    let g = relu_backward(&c.out, grad_out);
    let (g, ggamma2, gbeta2) = p.bn2.backward(&c.bn2, &g);
    let (g, gw2, gb2) = p.conv2.backward(&c.relu1, &g);
    let g = relu_backward(&c.relu1, &g);
    let (g, ggamma1, gbeta1) = p.bn1.backward(&c.bn1, &g);
    let (gx, gw1, gb1) = p.conv1.backward(&c.x, &g);
    let c1 = ggamma1.len();
    let c2 = ggamma2.len();
    let grads = BlockParams {
        conv1: ConvParams {
            weight: gw1,
            bias: gb1,
        },
        bn1: BnParams {
            gamma: ggamma1,
            beta: gbeta1,
            running_mean: Array1::zeros(c1),
            running_var: Array1::zeros(c1),
        },
        conv2: ConvParams {
            weight: gw2,
            bias: gb2,
        },
        bn2: BnParams {
            gamma: ggamma2,
            beta: gbeta2,
            running_mean: Array1::zeros(c2),
            running_var: Array1::zeros(c2),
        },
    };
    (gx, grads)
}

fn check_input(params: &UNetParams, batch: &Tensor4) -> Result<()> {
    let (_, c, h, w) = batch.dim();
    if c != params.config.in_channels {
        return Err(Error::ChannelMismatch {
            expected: params.config.in_channels,
            got: c,
        });
    }
    params.config.check_divisible(h, w)
}

/// Training-mode forward: batch statistics, live dropout, full cache.
pub fn forward_train(
    params: &UNetParams,
    batch: &Tensor4,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor4, TrainCache)> {
    check_input(params, batch)?;
    let sites = params.config.resolved_dropout_sites();
    let p = params.config.dropout_p;
    let depth = params.config.depth;
    let mut next_site = sites.into_iter();
    let mut apply_dropout = |x: Tensor4, rng: &mut ChaCha8Rng| -> (Tensor4, Option<Tensor4>) {
        if next_site.next().expect("site per block") && p > 0.0 {
            let (y, mask) = dropout(&x, p, rng);
            (y, Some(mask))
        } else {
            (x, None)
        }
    };

    let mut enc_caches = Vec::with_capacity(depth);
    let mut skips = Vec::with_capacity(depth);
    let mut cur = batch.clone();
    for i in 0..depth {
        let (y, block) = block_forward_train(&params.encoder[i], &cur)?;
        let (y, drop_mask) = apply_dropout(y, rng);
        let (pooled, pool_arg) = maxpool2(&y);
        skips.push(y);
        enc_caches.push(EncCache {
            block,
            drop_mask,
            pool_arg,
        });
        cur = pooled;
    }

    let (y, bott_block) = block_forward_train(&params.bottleneck, &cur)?;
    let (y, bott_mask) = apply_dropout(y, rng);
    cur = y;

    let mut dec_caches = Vec::with_capacity(depth);
    for j in 0..depth {
        let up = upsample2(&cur);
        let upc = params.upconvs[j].forward(&up)?;
        let cat = concat_channels(&upc, &skips[depth - 1 - j]);
        let (y, block) = block_forward_train(&params.decoder[j], &cat)?;
        let (y, drop_mask) = apply_dropout(y, rng);
        dec_caches.push(DecCache {
            up,
            block,
            drop_mask,
        });
        cur = y;
    }

    let logits = params.output.forward(&cur)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivations);
    }
    Ok((
        logits,
        TrainCache {
            enc: enc_caches,
            bottleneck: (bott_block, bott_mask),
            dec: dec_caches,
            final_in: cur,
        },
    ))
}

/// Deterministic inference: running statistics, no dropout.
pub fn forward_eval(params: &UNetParams, batch: &Tensor4) -> Result<Tensor4> {
    forward_frozen(params, batch, None)
}

/// Monte-Carlo inference: running statistics with live dropout, so repeated
/// calls with different streams sample the model's uncertainty.
pub fn forward_mc(params: &UNetParams, batch: &Tensor4, rng: &mut ChaCha8Rng) -> Result<Tensor4> {
    forward_frozen(params, batch, Some(rng))
}

fn forward_frozen(
    params: &UNetParams,
    batch: &Tensor4,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor4> {
    check_input(params, batch)?;
    let sites = params.config.resolved_dropout_sites();
    let p = params.config.dropout_p;
    let depth = params.config.depth;
    let mut next_site = sites.into_iter();
    let mut apply_dropout = |x: Tensor4| -> Tensor4 {
        let on = next_site.next().expect("site per block");
        match (&mut rng, on && p > 0.0) {
            (Some(rng), true) => dropout(&x, p, rng).0,
            _ => x,
        }
    };

    let mut skips = Vec::with_capacity(depth);
    let mut cur = batch.clone();
    for i in 0..depth {
        let y = block_forward_frozen(&params.encoder[i], &cur)?;
        let y = apply_dropout(y);
        let (pooled, _) = maxpool2(&y);
        skips.push(y);
        cur = pooled;
    }
    let y = block_forward_frozen(&params.bottleneck, &cur)?;
    cur = apply_dropout(y);
    for j in 0..depth {
        let up = upsample2(&cur);
        let upc = params.upconvs[j].forward(&up)?;
        let cat = concat_channels(&upc, &skips[depth - 1 - j]);
        let y = block_forward_frozen(&params.decoder[j], &cat)?;
        cur = apply_dropout(y);
    }
    let logits = params.output.forward(&cur)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivations);
    }
    Ok(logits)
}

/// Backpropagates a logit gradient through a cached training forward.
pub fn backward(params: &UNetParams, cache: &TrainCache, grad_logits: &Tensor4) -> UNetParams {
    let depth = params.config.depth;
    let mut grads = params.zeros_like();

    let (mut gcur, gw, gb) = params.output.backward(&cache.final_in, grad_logits);
    grads.output = ConvParams {
        weight: gw,
        bias: gb,
    };

    let mut skip_grads: Vec<Option<Tensor4>> = (0..depth).map(|_| None).collect();
    for j in (0..depth).rev() {
        let dc = &cache.dec[j];
        if let Some(mask) = &dc.drop_mask {
            gcur = gcur * mask;
        }
        let (gcat, bg) = block_backward(&params.decoder[j], &dc.block, &gcur);
        grads.decoder[j] = bg;
        let (gupc, gskip) = split_channels(&gcat, params.upconvs[j].out_channels());
        skip_grads[depth - 1 - j] = Some(gskip);
        let (gup, guw, gub) = params.upconvs[j].backward(&dc.up, &gupc);
        grads.upconvs[j] = ConvParams {
            weight: guw,
            bias: gub,
        };
        gcur = upsample2_backward(&gup);
    }

    if let Some(mask) = &cache.bottleneck.1 {
        gcur = gcur * mask;
    }
    let (g, bg) = block_backward(&params.bottleneck, &cache.bottleneck.0, &gcur);
    grads.bottleneck = bg;
    gcur = g;

    for i in (0..depth).rev() {
        let ec = &cache.enc[i];
        let mut gy = maxpool2_backward(&ec.pool_arg, &gcur);
        if let Some(gskip) = skip_grads[i].take() {
            gy += &gskip;
        }
        if let Some(mask) = &ec.drop_mask {
            gy = gy * mask;
        }
        let (gx, bg) = block_backward(&params.encoder[i], &ec.block, &gy);
        grads.encoder[i] = bg;
        gcur = gx;
    }
    grads
}

/// Blends the batch statistics recorded in a training cache into the
/// parameters' running statistics.
pub fn commit_running_stats(params: &mut UNetParams, cache: &TrainCache, momentum: f64) {
    let mut caches: Vec<(&BnCache, &BnCache)> = Vec::new();
    for ec in &cache.enc {
        caches.push((&ec.block.bn1, &ec.block.bn2));
    }
    caches.push((&cache.bottleneck.0.bn1, &cache.bottleneck.0.bn2));
    for dc in &cache.dec {
        caches.push((&dc.block.bn1, &dc.block.bn2));
    }
    for (block, (c1, c2)) in params.bn_blocks_mut().into_iter().zip(caches) {
        block.bn1.update_running(c1, momentum);
        block.bn2.update_running(c2, momentum);
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stacks frames into an `(N, C, H, W)` batch tensor.
pub fn frames_to_tensor(frames: &[&ImageFrame]) -> Result<Tensor4> {
    let first = frames.first().ok_or(Error::EmptyDataset)?;
    let (c, h, w) = first.pixels.dim();
    let mut t = Tensor4::zeros((frames.len(), c, h, w));
    for (i, f) in frames.iter().enumerate() {
        if f.pixels.dim() != (c, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} is {:?}, expected {:?}",
                f.pixels.dim(),
                (c, h, w)
            )));
        }
        t.index_axis_mut(Axis(0), i).assign(&f.pixels);
    }
    Ok(t)
}

/// Stacks masks into an `(N, 1, H, W)` target tensor of 0/1 values.
pub fn masks_to_tensor(masks: &[&BinaryMask]) -> Result<Tensor4> {
    let first = masks.first().ok_or(Error::EmptyDataset)?;
    let (h, w) = first.values.dim();
    let mut t = Tensor4::zeros((masks.len(), 1, h, w));
    for (i, m) in masks.iter().enumerate() {
        if m.values.dim() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "mask {i} is {:?}, expected {:?}",
                m.values.dim(),
                (h, w)
            )));
        }
        for ((r, c), &v) in m.values.indexed_iter() {
            t[[i, 0, r, c]] = v as f64;
        }
    }
    Ok(t)
}

/// Monte-Carlo prediction: the mean sigmoid over `samples` dropout-live
/// forward passes, its 0.5-threshold mask, and the binary entropy of the
/// mean as the uncertainty map.
///
/// Sample streams are derived from `seed` by index, so the mean is
/// independent of evaluation order and the whole call is reproducible.
pub fn predict_mc(
    params: &UNetParams,
    frame: &ImageFrame,
    samples: usize,
    seed: u64,
) -> Result<(ProbabilityMap, BinaryMask, UncertaintyMap)> {
    if samples == 0 {
        return Err(Error::InvalidDimensions("samples must be >= 1".into()));
    }
    let batch = frames_to_tensor(&[frame])?;
    let (_, _, h, w) = batch.dim();
    let per_sample: Vec<Result<ndarray::Array2<f64>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0x4D430000 + i as u64));
            let logits = forward_mc(params, &batch, &mut rng)?;
            Ok(logits
                .index_axis(Axis(0), 0)
                .index_axis(Axis(0), 0)
                .mapv(sigmoid))
        })
        .collect();
    let mut mean = ndarray::Array2::<f64>::zeros((h, w));
    for s in per_sample {
        mean += &s?;
    }
    mean.mapv_inplace(|v| v / samples as f64);
    let prob = ProbabilityMap::new(mean.mapv(|v| v.clamp(0.0, 1.0)))?;
    let mask = prob.to_mask();
    let uncertainty = prob.entropy();
    Ok((prob, mask, uncertainty))
}
