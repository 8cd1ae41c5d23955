//! The training loop: seeded shuffling, per-sample augmentation,
//! mini-batch Adam updates, per-epoch validation, and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::loss::bce_with_logits;
use super::{
    backward, build_unet, commit_running_stats, forward_eval, forward_train, frames_to_tensor,
    masks_to_tensor, sigmoid, UNetConfig, UNetParams,
};
use crate::augment::Augmenter;
use crate::error::{Error, Result};
use crate::img::{BinaryMask, ImageFrame};
use crate::synth::split_seed;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before training stops.
    pub patience: usize,
    /// Fraction of the batch statistic blended into the batch-norm running
    /// statistics after each step; 0 freezes them.
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 100,
            patience: 20,
            bn_momentum: 0.1,
        }
    }
}

/// One image/mask training pair, already at the network input size.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: ImageFrame,
    pub mask: BinaryMask,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean pixel accuracy over the validation set (deterministic eval
    /// forward, 0.5 threshold).
    pub val_accuracy: f64,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: UNetParams,
    pub history: Vec<EpochStats>,
    /// 1-based epoch index the returned parameters come from.
    pub best_epoch: usize,
}

fn validation_accuracy(params: &UNetParams, val_set: &[Sample]) -> Result<f64> {
    if val_set.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for sample in val_set {
        let batch = frames_to_tensor(&[&sample.image])?;
        let logits = forward_eval(params, &batch)?;
        let mut correct = 0usize;
        for ((_, _, r, c), &z) in logits.indexed_iter() {
            let pred = u8::from(sigmoid(z) >= 0.5);
            if pred == sample.mask.values[[r, c]] {
                correct += 1;
            }
        }
        total += correct as f64 / sample.mask.values.len() as f64;
    }
    Ok(total / val_set.len() as f64)
}

/// Splits samples into seeded random train/validation sets.
pub fn random_split(mut samples: Vec<Sample>, val_fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, 0x53504C49));
    samples.shuffle(&mut rng);
    let val_len = ((samples.len() as f64 * val_fraction).round() as usize).min(samples.len());
    let val = samples.split_off(samples.len() - val_len);
    (samples, val)
}

/// Trains a network from scratch.
///
/// Every epoch the training set is reshuffled from a stream derived from
/// the network seed, each drawn sample passes through the augmenter, and
/// batches step Adam. Validation accuracy decides the best parameters and
/// early stopping: `patience` consecutive epochs without strict improvement
/// halt the run. With an empty validation set the negated train loss plays
/// the metric's role.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    unet_config: &UNetConfig,
    train_config: &TrainConfig,
    augmenter: &Augmenter,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_config.batch_size == 0 || train_config.patience == 0 {
        return Err(Error::Config(
            "batch_size and patience must be at least 1".into(),
        ));
    }
    let mut params = build_unet(unet_config)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(unet_config.seed, 0x54524E));

    let mut history = Vec::new();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut stale_epochs = 0usize;

    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=train_config.max_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks(train_config.batch_size) {
            let mut images = Vec::with_capacity(chunk.len());
            let mut masks = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let sample = &train_set[i];
                let (image, mask) = augmenter.apply(&sample.image, &sample.mask, &mut rng)?;
                images.push(image);
                masks.push(mask);
            }
            let batch = frames_to_tensor(&images.iter().collect::<Vec<_>>())?;
            let targets = masks_to_tensor(&masks.iter().collect::<Vec<_>>())?;
            let (logits, cache) = forward_train(&params, &batch, &mut rng)?;
            let (loss, grad_logits) = bce_with_logits(&logits, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let grads = backward(&params, &cache, &grad_logits);
            commit_running_stats(&mut params, &cache, train_config.bn_momentum);
            adam_step(&mut params, &grads, &mut state, train_config);
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let val_accuracy = validation_accuracy(&params, val_set)?;
        let metric = if val_accuracy.is_nan() {
            -train_loss
        } else {
            val_accuracy
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        });

        if metric > best_metric {
            best_metric = metric;
            best_epoch = epoch;
            best_params = params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= train_config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn toy_samples(n: usize, size: usize, seed: u64) -> Vec<Sample> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                // Bright lower slab of varying height on dark background.
                let h = size / 2 + rng.gen_range(0..size / 4);
                let mask = BinaryMask::new(Array2::from_shape_fn((size, size), |(r, _)| {
                    u8::from(size - r <= h)
                }))
                .unwrap();
                let pixels = Array3::from_shape_fn((1, size, size), |(_, r, c)| {
                    let fuel = mask.values[[r, c]] == 1;
                    let base: f64 = if fuel { 0.9 } else { 0.15 };
                    (base + 0.02 * (((r * 31 + c * 17 + i) % 11) as f64 / 11.0 - 0.5))
                        .clamp(0.0, 1.0)
                });
                Sample {
                    image: ImageFrame::new(pixels, i as f64, format!("t{i}")).unwrap(),
                    mask,
                }
            })
            .collect()
    }

    fn tiny_config(seed: u64) -> UNetConfig {
        UNetConfig {
            depth: 2,
            base_channels: 4,
            in_channels: 1,
            input_h: 16,
            input_w: 16,
            dropout_p: 0.25,
            dropout_sites: None,
            seed,
        }
    }

    #[test]
    fn smoke_training_reduces_loss() {
        let samples = toy_samples(10, 16, 3);
        let cfg = tiny_config(7);
        let tcfg = TrainConfig {
            batch_size: 5,
            max_epochs: 20,
            patience: 20,
            ..Default::default()
        };
        let out = train(&samples, &samples, &cfg, &tcfg, &Augmenter::none()).unwrap();
        let first = out.history.first().unwrap().train_loss;
        let last = out.history.last().unwrap().train_loss;
        assert!(
            last < first,
            "loss did not decrease: {first} -> {last}"
        );
    }

    #[test]
    fn frozen_metric_with_patience_one_stops_after_two_epochs() {
        let samples = toy_samples(4, 16, 5);
        let cfg = UNetConfig {
            dropout_p: 0.0,
            ..tiny_config(1)
        };
        // Learning rate zero freezes the parameters, so validation accuracy
        // is constant by construction.
        let tcfg = TrainConfig {
            batch_size: 2,
            learning_rate: 0.0,
            bn_momentum: 0.0,
            max_epochs: 50,
            patience: 1,
            ..Default::default()
        };
        let out = train(&samples, &samples, &cfg, &tcfg, &Augmenter::none()).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn identical_seeds_give_identical_history() {
        let samples = toy_samples(6, 16, 9);
        let cfg = tiny_config(11);
        let tcfg = TrainConfig {
            batch_size: 3,
            max_epochs: 3,
            patience: 5,
            ..Default::default()
        };
        let a = train(&samples, &samples, &cfg, &tcfg, &Augmenter::default()).unwrap();
        let b = train(&samples, &samples, &cfg, &tcfg, &Augmenter::default()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn empty_train_set_errors() {
        let cfg = tiny_config(0);
        assert!(matches!(
            train(&[], &[], &cfg, &TrainConfig::default(), &Augmenter::none()),
            Err(Error::EmptyDataset)
        ));
    }
}
