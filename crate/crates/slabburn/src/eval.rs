//! Comparison metrics and cross-validation study drivers.
//!
//! Metrics: per-column spatial profile error, relative regression-rate
//! error, and confusion-matrix pixel accuracy. Drivers: leave-one-flux-out
//! cross-validation, the single-flux transfer study, and its grayscale
//! variant, all deterministic under a fixed seed.

use std::collections::BTreeMap;

use crate::augment::Augmenter;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::img::{BinaryMask, Interp, UncertaintyMap};
use crate::rate::{self, RateOptions, RateResult};
use crate::synth::split_seed;
use crate::unet::{self, predict_mc, Sample, TrainConfig, TrainOutcome, UNetConfig};

/// Pixel counts of a binary prediction against truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    /// Truth fuel, predicted fuel.
    pub n1: usize,
    /// Truth fuel, predicted noise.
    pub n2: usize,
    /// Truth noise, predicted fuel.
    pub n3: usize,
    /// Truth noise, predicted noise.
    pub n4: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.n1 + self.n2 + self.n3 + self.n4
    }

    /// Ratio of correctly classified pixels.
    pub fn accuracy(&self) -> f64 {
        (self.n1 + self.n4) as f64 / self.total() as f64
    }
}

/// Counts per-pixel agreement between predicted and truth masks.
pub fn pixel_accuracy(pred: &BinaryMask, truth: &BinaryMask) -> Result<(ConfusionMatrix, f64)> {
    if pred.values.dim() != truth.values.dim() {
        let (eh, ew) = truth.values.dim();
        let (gh, gw) = pred.values.dim();
        return Err(Error::DimensionMismatch {
            expected_h: eh,
            expected_w: ew,
            got_h: gh,
            got_w: gw,
        });
    }
    let mut cm = ConfusionMatrix {
        n1: 0,
        n2: 0,
        n3: 0,
        n4: 0,
    };
    for (&p, &t) in pred.values.iter().zip(truth.values.iter()) {
        match (t, p) {
            (1, 1) => cm.n1 += 1,
            (1, 0) => cm.n2 += 1,
            (0, 1) => cm.n3 += 1,
            (0, 0) => cm.n4 += 1,
            _ => unreachable!("masks are binary"),
        }
    }
    let e = cm.accuracy();
    Ok((cm, e))
}

/// Spatial profile error with its exclusion tally.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpatialError {
    /// `(sum_columns |h - h_truth| / h_truth) / width`.
    pub error: f64,
    /// Columns skipped because the truth height was zero.
    pub excluded_columns: usize,
}

/// Total absolute spatial error between two height profiles.
///
/// Columns where the truth height is zero would divide by zero; they are
/// excluded from the sum and counted, while the normalization stays the
/// full image width.
pub fn spatial_error(pred_heights: &[f64], truth_heights: &[f64], width: usize) -> Result<SpatialError> {
    if pred_heights.len() != truth_heights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted vs {} truth columns",
            pred_heights.len(),
            truth_heights.len()
        )));
    }
    let mut sum = 0.0;
    let mut excluded = 0usize;
    for (&h, &ht) in pred_heights.iter().zip(truth_heights) {
        if ht > 0.0 {
            sum += (h - ht).abs() / ht;
        } else {
            excluded += 1;
        }
    }
    if excluded == pred_heights.len() {
        return Err(Error::AllColumnsExcluded);
    }
    Ok(SpatialError {
        error: sum / width as f64,
        excluded_columns: excluded,
    })
}

/// Spatial error between the profiles of two masks.
pub fn mask_spatial_error(pred: &BinaryMask, truth: &BinaryMask) -> Result<SpatialError> {
    let p = rate::extract_profile(pred);
    let t = rate::extract_profile(truth);
    spatial_error(&p.heights_px, &t.heights_px, truth.width())
}

/// Relative absolute regression-rate error.
pub fn rate_error(rate_pred: f64, rate_truth: f64) -> Result<f64> {
    if rate_truth == 0.0 {
        return Err(Error::ZeroTruthRate);
    }
    Ok((rate_pred - rate_truth).abs() / rate_truth.abs())
}

/// One cross-validation fold: train on some fluxes, test on one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FoldSpec {
    pub train_fluxes: Vec<String>,
    pub test_flux: String,
    pub color_mode: ColorMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    #[default]
    Rgb,
    Grayscale,
}

impl FoldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_fluxes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.train_fluxes.contains(&self.test_flux) {
            return Err(Error::Config(format!(
                "test flux {} also in the training set",
                self.test_flux
            )));
        }
        Ok(())
    }
}

/// Accuracy of one test frame inside a fold report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameEval {
    pub label: String,
    pub time_s: f64,
    pub accuracy: f64,
    pub spatial_error: f64,
    /// Mean entropy within +-3 rows of the predicted profile.
    pub profile_uncertainty: f64,
}

/// Outcome of one trained fold.
pub struct FoldReport {
    pub spec: FoldSpec,
    pub outcome: TrainOutcome,
    /// Test-frame metrics ordered by burn time.
    pub frames: Vec<FrameEval>,
    /// Per-frame mean masks and uncertainty maps at native resolution,
    /// ordered by burn time.
    pub masks: Vec<BinaryMask>,
    pub uncertainty: Vec<UncertaintyMap>,
    /// Rate measurement for the test flux, when the pipeline succeeded.
    pub rate: Option<RateResult>,
}

/// Collects a sequence into resized network samples.
fn sequence_samples(
    dataset: &Dataset,
    flux: &str,
    config: &UNetConfig,
    color: ColorMode,
) -> Result<Vec<Sample>> {
    let seq = dataset
        .sequences
        .get(flux)
        .ok_or_else(|| Error::EmptyFlux { label: flux.into() })?;
    if seq.frames.is_empty() {
        return Err(Error::EmptyFlux { label: flux.into() });
    }
    let truths = seq
        .truth_masks
        .as_ref()
        .ok_or_else(|| Error::Config(format!("flux {flux} has no truth masks")))?;
    seq.frames
        .iter()
        .zip(truths)
        .map(|(frame, mask)| {
            let frame = match color {
                ColorMode::Rgb => frame.clone(),
                ColorMode::Grayscale => frame.to_grayscale()?,
            };
            Ok(Sample {
                image: frame.resized(config.input_h, config.input_w, Interp::Bilinear)?,
                mask: mask.resized(config.input_h, config.input_w)?,
            })
        })
        .collect()
}

/// Mean entropy over pixels within +-3 rows of the predicted profile,
/// the per-frame scalar used by the study tables.
pub fn profile_uncertainty(mask: &BinaryMask, u: &UncertaintyMap) -> f64 {
    let profile = rate::extract_profile(mask);
    let (h, w) = mask.values.dim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..w {
        if !profile.valid[c] {
            continue;
        }
        let top_row = h - profile.heights_px[c] as usize;
        let lo = top_row.saturating_sub(3);
        let hi = (top_row + 3).min(h - 1);
        for r in lo..=hi {
            sum += u.u[[r, c]];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Trains one fold and evaluates every frame of the held-out flux.
///
/// Training samples come from the training fluxes, resized to the network
/// input; the held-out flux serves as the early-stopping validation set,
/// mirroring the stop criterion of the transfer studies. Predictions are
/// resized back to native resolution with nearest-neighbor before any
/// metric is computed.
pub fn run_fold(
    dataset: &Dataset,
    spec: &FoldSpec,
    unet_config: &UNetConfig,
    train_config: &TrainConfig,
    augmenter: &Augmenter,
    mc_samples: usize,
) -> Result<FoldReport> {
    spec.validate()?;
    let mut unet_config = unet_config.clone();
    unet_config.in_channels = match spec.color_mode {
        ColorMode::Rgb => 3,
        ColorMode::Grayscale => 1,
    };
    // Per-fold derived seed keeps folds independent but reproducible.
    unet_config.seed = split_seed(
        unet_config.seed,
        spec.test_flux.bytes().map(u64::from).sum::<u64>() | 0xF01D,
    );

    let mut train_set = Vec::new();
    for flux in &spec.train_fluxes {
        train_set.extend(sequence_samples(dataset, flux, &unet_config, spec.color_mode)?);
    }
    let val_set = sequence_samples(dataset, &spec.test_flux, &unet_config, spec.color_mode)?;
    let outcome = unet::train(&train_set, &val_set, &unet_config, train_config, augmenter)?;

    evaluate_model(dataset, spec, &outcome, mc_samples)
}

/// Runs MC prediction for every frame of the fold's test flux and collects
/// metrics (and the rate pipeline) at native resolution.
pub fn evaluate_model(
    dataset: &Dataset,
    spec: &FoldSpec,
    outcome: &TrainOutcome,
    mc_samples: usize,
) -> Result<FoldReport> {
    let seq = &dataset.sequences[&spec.test_flux];
    let truths = seq
        .truth_masks
        .as_ref()
        .ok_or_else(|| Error::Config(format!("flux {} has no truth masks", spec.test_flux)))?;
    let config = &outcome.params.config;
    let mut frames = Vec::new();
    let mut masks = Vec::new();
    let mut umaps = Vec::new();
    for (frame, truth) in seq.frames.iter().zip(truths) {
        let input = match spec.color_mode {
            ColorMode::Rgb => frame.clone(),
            ColorMode::Grayscale => frame.to_grayscale()?,
        };
        let input = input.resized(config.input_h, config.input_w, Interp::Bilinear)?;
        let frame_seed = split_seed(
            config.seed,
            0x50524544 ^ frame.label.bytes().map(u64::from).sum::<u64>(),
        );
        let (_, mask, u) = predict_mc(&outcome.params, &input, mc_samples, frame_seed)?;
        let mask = mask.resized(truth.height(), truth.width())?;
        let u = u.resized(truth.height(), truth.width())?;
        let (_, accuracy) = pixel_accuracy(&mask, truth)?;
        let sp = mask_spatial_error(&mask, truth)?;
        frames.push(FrameEval {
            label: frame.label.clone(),
            time_s: frame.time_s,
            accuracy,
            spatial_error: sp.error,
            profile_uncertainty: profile_uncertainty(&mask, &u),
        });
        masks.push(mask);
        umaps.push(u);
    }
    let times = seq.times();
    let rate = rate::rate_uncertainty(
        &masks,
        &umaps,
        &times,
        seq.mm_per_px,
        &RateOptions::default(),
    )
    .ok();
    Ok(FoldReport {
        spec: spec.clone(),
        outcome: TrainOutcome {
            params: outcome.params.clone(),
            history: outcome.history.clone(),
            best_epoch: outcome.best_epoch,
        },
        frames,
        masks,
        uncertainty: umaps,
        rate,
    })
}

/// Leave-one-flux-out cross-validation: one fold per flux, each trained on
/// the remaining fluxes and tested on the held-out one.
pub fn run_loocv(
    dataset: &Dataset,
    unet_config: &UNetConfig,
    train_config: &TrainConfig,
    augmenter: &Augmenter,
    mc_samples: usize,
) -> Result<Vec<FoldReport>> {
    let labels = dataset.flux_labels();
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for label in &labels {
        if dataset.sequences[label].frames.is_empty() {
            return Err(Error::EmptyFlux {
                label: label.clone(),
            });
        }
    }
    labels
        .iter()
        .map(|test| {
            let spec = FoldSpec {
                train_fluxes: labels.iter().filter(|l| *l != test).cloned().collect(),
                test_flux: test.clone(),
                color_mode: ColorMode::Rgb,
            };
            run_fold(dataset, &spec, unet_config, train_config, augmenter, mc_samples)
        })
        .collect()
}

/// One cell of a transfer study: a model evaluated on one flux.
pub struct StudyCell {
    pub train_label: String,
    pub test_flux: String,
    pub frames: Vec<FrameEval>,
    pub rate: Option<RateResult>,
    pub rate_err: Option<f64>,
}

/// Results of the single-flux (or grayscale) transfer study.
pub struct StudyResults {
    pub mode: ColorMode,
    pub cells: Vec<StudyCell>,
}

/// Trains one model per flux (plus an all-flux model in grayscale mode)
/// and evaluates each on every flux.
///
/// Single-flux models validate on the union of the remaining fluxes, the
/// stop criterion the transfer studies prescribe.
pub fn run_flux_study(
    dataset: &Dataset,
    mode: ColorMode,
    unet_config: &UNetConfig,
    train_config: &TrainConfig,
    augmenter: &Augmenter,
    mc_samples: usize,
    truth_rates: &BTreeMap<String, f64>,
) -> Result<StudyResults> {
    let labels = dataset.flux_labels();
    let mut cells = Vec::new();

    let mut models: Vec<(String, TrainOutcome)> = Vec::new();
    for train_flux in &labels {
        let mut cfg = unet_config.clone();
        cfg.in_channels = match mode {
            ColorMode::Rgb => 3,
            ColorMode::Grayscale => 1,
        };
        cfg.seed = split_seed(
            cfg.seed,
            0x535444 ^ train_flux.bytes().map(u64::from).sum::<u64>(),
        );
        let train_set = sequence_samples(dataset, train_flux, &cfg, mode)?;
        let mut val_set = Vec::new();
        for other in labels.iter().filter(|l| *l != train_flux) {
            val_set.extend(sequence_samples(dataset, other, &cfg, mode)?);
        }
        let outcome = unet::train(&train_set, &val_set, &cfg, train_config, augmenter)?;
        models.push((train_flux.clone(), outcome));
    }
    if mode == ColorMode::Grayscale {
        // The grayscale study adds a model trained on all fluxes.
        let mut cfg = unet_config.clone();
        cfg.in_channels = 1;
        cfg.seed = split_seed(cfg.seed, 0x414C4C);
        let mut train_set = Vec::new();
        for flux in &labels {
            train_set.extend(sequence_samples(dataset, flux, &cfg, mode)?);
        }
        let outcome = unet::train(&train_set, &[], &cfg, train_config, augmenter)?;
        models.push(("all".into(), outcome));
    }

    for (train_label, outcome) in &models {
        for test_flux in &labels {
            let spec = FoldSpec {
                train_fluxes: vec![format!("model:{train_label}")],
                test_flux: test_flux.clone(),
                color_mode: mode,
            };
            // evaluate_model does not revalidate train/test disjointness;
            // transfer cells intentionally include train == test.
            let report = evaluate_model(dataset, &spec, outcome, mc_samples)?;
            let rate_err = match (&report.rate, truth_rates.get(test_flux)) {
                (Some(r), Some(&t)) if t != 0.0 => Some(rate_error(r.rate_mm_s, t)?),
                _ => None,
            };
            cells.push(StudyCell {
                train_label: train_label.clone(),
                test_flux: test_flux.clone(),
                frames: report.frames,
                rate: report.rate,
                rate_err,
            });
        }
    }
    Ok(StudyResults { mode, cells })
}
