//! Subcommand implementations: thin orchestration over the library.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use slabburn::classic;
use slabburn::config::RunConfig;
use slabburn::dataset::{Dataset, Manifest, TruthRates};
use slabburn::eval::{self, ColorMode};
use slabburn::img::{self, Interp, UncertaintyMap};
use slabburn::rate;
use slabburn::report::{self, Csv, Plot, Series};
use slabburn::synth;
use slabburn::unet::{self, checkpoint::Checkpoint, Sample};

use crate::{SegmentMethod, StudyMode};

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    })
}

/// Writes the resolved-configuration echo every subcommand must leave
/// behind.
fn write_run_json(out: &Path, subcommand: &str, args: serde_json::Value, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let echo = serde_json::json!({
        "subcommand": subcommand,
        "args": args,
        "config": cfg,
    });
    std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&echo)?)?;
    Ok(())
}

pub fn synth(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    write_run_json(
        &out,
        "synth",
        serde_json::json!({ "out": out, "seed": seed }),
        &cfg,
    )?;
    synth::generate_benchmark(&cfg.synth, &out)?;
    let total = cfg.synth.total_frames();
    println!("wrote {total} frames with ground truth to {}", out.display());
    Ok(())
}

pub fn segment(
    dataset: PathBuf,
    method: SegmentMethod,
    out: PathBuf,
    flux: Option<String>,
    config: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let method_name = match method {
        SegmentMethod::Threshold => "threshold",
        SegmentMethod::Tlis => "tlis",
        SegmentMethod::Spatial => "spatial",
    };
    write_run_json(
        &out,
        "segment",
        serde_json::json!({ "dataset": dataset, "method": method_name, "flux": flux }),
        &cfg,
    )?;
    let ds = Dataset::load(&dataset)?;
    let masks_dir = out.join("masks");
    std::fs::create_dir_all(&masks_dir)?;
    let mut thresholds = Csv::new("flux_label,label,time_s,threshold,between_class_variance");

    for (label, seq) in &ds.sequences {
        if flux.as_ref().is_some_and(|f| f != label) {
            continue;
        }
        let mut masks = Vec::with_capacity(seq.frames.len());
        for frame in &seq.frames {
            let (mask, otsu) = match method {
                SegmentMethod::Threshold | SegmentMethod::Tlis => {
                    classic::threshold_segment(frame, &cfg.segment)?
                }
                SegmentMethod::Spatial => {
                    let (small, otsu) = classic::spatial_segment(frame, &cfg.segment)?;
                    // Back to native resolution so all mask directories
                    // share the manifest's dimensions.
                    (small.resized(frame.height(), frame.width())?, otsu)
                }
            };
            thresholds.row(&[
                label.clone(),
                frame.label.clone(),
                report::num(frame.time_s),
                report::num(otsu.threshold),
                report::num(otsu.between_class_variance),
            ]);
            masks.push(mask);
        }
        if method == SegmentMethod::Tlis {
            masks = classic::tlis(&masks)?;
        }
        for (frame, mask) in seq.frames.iter().zip(&masks) {
            img::save_mask(mask, masks_dir.join(format!("{}.png", frame.label)))?;
        }
    }
    thresholds.write(out.join("thresholds.csv"))?;
    println!("wrote {method_name} masks to {}", masks_dir.display());
    Ok(())
}

fn parse_flux_list(raw: &Option<String>) -> Option<Vec<String>> {
    raw.as_ref()
        .map(|s| s.split(',').map(|f| f.trim().to_string()).collect())
}

fn dataset_samples(
    ds: &Dataset,
    fluxes: &[String],
    cfg: &RunConfig,
    grayscale: bool,
) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for label in fluxes {
        let seq = ds
            .sequences
            .get(label)
            .with_context(|| format!("flux {label} not in dataset"))?;
        let truths = seq
            .truth_masks
            .as_ref()
            .with_context(|| format!("flux {label} has no truth masks to train against"))?;
        for (frame, mask) in seq.frames.iter().zip(truths) {
            let frame = if grayscale {
                frame.to_grayscale()?
            } else {
                frame.clone()
            };
            samples.push(Sample {
                image: frame.resized(cfg.unet.input_h, cfg.unet.input_w, Interp::Bilinear)?,
                mask: mask.resized(cfg.unet.input_h, cfg.unet.input_w)?,
            });
        }
    }
    Ok(samples)
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    dataset: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    fluxes: Option<String>,
    val_fluxes: Option<String>,
    grayscale: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.unet.seed = cfg.seed;
    if grayscale {
        cfg.unet.in_channels = 1;
    }
    write_run_json(
        &out,
        "train",
        serde_json::json!({
            "dataset": dataset,
            "fluxes": fluxes,
            "val_fluxes": val_fluxes,
            "grayscale": grayscale,
        }),
        &cfg,
    )?;
    let ds = Dataset::load(&dataset)?;
    let train_fluxes = parse_flux_list(&fluxes).unwrap_or_else(|| ds.flux_labels());

    let (train_set, val_set) = match parse_flux_list(&val_fluxes) {
        Some(val) => {
            let train_set = dataset_samples(&ds, &train_fluxes, &cfg, grayscale)?;
            let val_set = dataset_samples(&ds, &val, &cfg, grayscale)?;
            (train_set, val_set)
        }
        None => {
            let all = dataset_samples(&ds, &train_fluxes, &cfg, grayscale)?;
            unet::random_split(all, 0.2, cfg.seed)
        }
    };
    println!(
        "training on {} frames, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let outcome = unet::train(&train_set, &val_set, &cfg.unet, &cfg.train, &cfg.augment)?;

    let mut history = Csv::new("epoch,train_loss,val_accuracy");
    for e in &outcome.history {
        history.row(&[
            e.epoch.to_string(),
            report::num(e.train_loss),
            report::num(e.val_accuracy),
        ]);
    }
    history.write(out.join("history.csv"))?;
    let cp = Checkpoint {
        params: outcome.params,
        train_config: Some(cfg.train.clone()),
        history: outcome.history.clone(),
        best_epoch: outcome.best_epoch,
        adam: None,
    };
    unet::checkpoint::save(&cp, out.join("checkpoint.sbck"))?;
    println!(
        "saved checkpoint from epoch {} of {}",
        cp.best_epoch,
        outcome.history.len()
    );
    Ok(())
}

/// Uncertainty maps are stored as 16-bit PNGs scaled so full range equals
/// the entropy maximum ln 2.
fn save_uncertainty(u: &UncertaintyMap, path: &Path) -> Result<()> {
    let (h, w) = u.u.dim();
    let mut img16 = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    let scale = 65535.0 / std::f64::consts::LN_2;
    for ((r, c), &v) in u.u.indexed_iter() {
        img16.put_pixel(c as u32, r as u32, image::Luma([(v * scale).round() as u16]));
    }
    img16.save(path)?;
    Ok(())
}

fn load_uncertainty(path: &Path) -> Result<UncertaintyMap> {
    let img16 = image::open(path)
        .with_context(|| format!("loading {}", path.display()))?
        .into_luma16();
    let (w, h) = img16.dimensions();
    let scale = std::f64::consts::LN_2 / 65535.0;
    let mut u = ndarray::Array2::<f64>::zeros((h as usize, w as usize));
    for (x, y, p) in img16.enumerate_pixels() {
        u[[y as usize, x as usize]] = p.0[0] as f64 * scale;
    }
    Ok(UncertaintyMap { u })
}

pub fn predict(
    checkpoint: PathBuf,
    dataset: PathBuf,
    out: PathBuf,
    samples: usize,
    flux: Option<String>,
    seed: Option<u64>,
) -> Result<()> {
    let cp = unet::checkpoint::load(&checkpoint)?;
    let mut cfg = RunConfig::default();
    cfg.unet = cp.params.config.clone();
    cfg.mc_samples = samples;
    if let Some(t) = &cp.train_config {
        cfg.train = t.clone();
    }
    let seed_base = seed.unwrap_or(cp.params.config.seed);
    cfg.seed = seed_base;
    write_run_json(
        &out,
        "predict",
        serde_json::json!({
            "checkpoint": checkpoint,
            "dataset": dataset,
            "samples": samples,
            "flux": flux,
        }),
        &cfg,
    )?;
    let ds = Dataset::load(&dataset)?;
    let masks_dir = out.join("masks");
    let unc_dir = out.join("uncertainty");
    std::fs::create_dir_all(&masks_dir)?;
    std::fs::create_dir_all(&unc_dir)?;
    let grayscale = cp.params.config.in_channels == 1;
    let mut csv = Csv::new("flux_label,label,time_s,mean_uncertainty,fuel_fraction");

    for (label, seq) in &ds.sequences {
        if flux.as_ref().is_some_and(|f| f != label) {
            continue;
        }
        for frame in &seq.frames {
            let input = if grayscale {
                frame.to_grayscale()?
            } else {
                frame.clone()
            };
            let input = input.resized(cfg.unet.input_h, cfg.unet.input_w, Interp::Bilinear)?;
            let frame_seed = slabburn::derive_seed(
                seed_base,
                0x50524544 ^ frame.label.bytes().map(u64::from).sum::<u64>(),
            );
            let (_, mask, u) = unet::predict_mc(&cp.params, &input, samples, frame_seed)?;
            let mask = mask.resized(frame.height(), frame.width())?;
            let u = u.resized(frame.height(), frame.width())?;
            img::save_mask(&mask, masks_dir.join(format!("{}.png", frame.label)))?;
            save_uncertainty(&u, &unc_dir.join(format!("{}.png", frame.label)))?;
            csv.row(&[
                label.clone(),
                frame.label.clone(),
                report::num(frame.time_s),
                report::num(u.mean()),
                report::num(mask.fuel_fraction()),
            ]);
        }
    }
    csv.write(out.join("predict.csv"))?;
    println!("wrote predictions to {}", out.display());
    Ok(())
}

pub fn rate(
    masks: PathBuf,
    manifest: PathBuf,
    out: PathBuf,
    flux: Option<String>,
    uncertainty: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&config)?;
    write_run_json(
        &out,
        "rate",
        serde_json::json!({
            "masks": masks,
            "manifest": manifest,
            "flux": flux,
            "uncertainty": uncertainty,
        }),
        &cfg,
    )?;
    let manifest = Manifest::read(&manifest)?;
    let mut rate_rows = Vec::new();
    for label in manifest.flux_labels() {
        if flux.as_ref().is_some_and(|f| *f != label) {
            continue;
        }
        let entries = manifest.flux_entries(&label);
        let mut seq_masks = Vec::with_capacity(entries.len());
        let mut times = Vec::with_capacity(entries.len());
        let mut labels = Vec::with_capacity(entries.len());
        let mut umaps = Vec::new();
        for e in &entries {
            let mask = img::load_mask(masks.join(format!("{}.png", e.label)))?;
            if mask.values.dim() != (e.height, e.width) {
                bail!(
                    "mask {} is {}x{}, manifest says {}x{}",
                    e.label,
                    mask.height(),
                    mask.width(),
                    e.height,
                    e.width
                );
            }
            seq_masks.push(mask);
            times.push(e.time_s);
            labels.push(e.label.clone());
            if let Some(dir) = &uncertainty {
                umaps.push(load_uncertainty(&dir.join(format!("{}.png", e.label)))?);
            }
        }
        let mm_per_px = entries[0].mm_per_px;
        let series =
            rate::enforce_monotonic(&rate::HeightSeries::from_masks(&seq_masks, &times, mm_per_px)?);
        report::write_heights_csv(
            out.join(format!("heights_{label}.csv")),
            &label,
            &labels,
            &series,
        )?;
        let result = if uncertainty.is_some() {
            rate::rate_uncertainty(&seq_masks, &umaps, &times, mm_per_px, &cfg.rate)?
        } else {
            rate::rate_from_masks(&seq_masks, &times, mm_per_px, &cfg.rate)?
        };
        let (t, mean_h) = rate::aggregate_heights(&series, cfg.rate.aggregation)?;
        report::height_fit_plot(&label, &t, &mean_h, &result)
            .write(out.join(format!("height_fit_{label}.svg")))?;
        println!(
            "flux {label}: rate {:.4} mm/s in [{:.4}, {:.4}]",
            result.rate_mm_s, result.rate_lower, result.rate_upper
        );
        rate_rows.push((label, result));
    }
    report::write_rate_csv(out.join("rate.csv"), &rate_rows)?;
    Ok(())
}

pub fn eval(pred: PathBuf, dataset: PathBuf, out: PathBuf, flux: Option<String>) -> Result<()> {
    let cfg = RunConfig::default();
    write_run_json(
        &out,
        "eval",
        serde_json::json!({ "pred": pred, "dataset": dataset, "flux": flux }),
        &cfg,
    )?;
    let ds = Dataset::load(&dataset)?;
    let mut csv = Csv::new("flux_label,label,time_s,accuracy,spatial_error,excluded_columns");
    let mut acc_plot = Plot::new("Pixel accuracy over burn time", "time [s]", "accuracy");
    let mut sp_plot = Plot::new(
        "Spatial error over burn time",
        "time [s]",
        "log10 spatial error",
    )
    .log_y();
    let mut rows = 0usize;
    for (label, seq) in &ds.sequences {
        if flux.as_ref().is_some_and(|f| f != label) {
            continue;
        }
        let truths = seq
            .truth_masks
            .as_ref()
            .with_context(|| format!("flux {label} has no truth masks"))?;
        let mut acc_points = Vec::new();
        let mut sp_points = Vec::new();
        for (frame, truth) in seq.frames.iter().zip(truths) {
            let mask = img::load_mask(pred.join(format!("{}.png", frame.label)))?;
            let (_, accuracy) = eval::pixel_accuracy(&mask, truth)?;
            let sp = eval::mask_spatial_error(&mask, truth)?;
            csv.row(&[
                label.clone(),
                frame.label.clone(),
                report::num(frame.time_s),
                report::num(accuracy),
                report::num(sp.error),
                sp.excluded_columns.to_string(),
            ]);
            acc_points.push((frame.time_s, accuracy));
            sp_points.push((frame.time_s, sp.error.max(1e-9)));
            rows += 1;
        }
        acc_plot = acc_plot.with(Series::line(label.clone(), acc_points));
        sp_plot = sp_plot.with(Series::line(label.clone(), sp_points));
    }
    if rows == 0 {
        bail!("no frames evaluated");
    }
    csv.write(out.join("eval.csv"))?;
    acc_plot.write(out.join("eval_accuracy.svg"))?;
    sp_plot.write(out.join("eval_spatial.svg"))?;
    println!("evaluated {rows} frames");
    Ok(())
}

pub fn loocv(
    dataset: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.unet.seed = cfg.seed;
    write_run_json(
        &out,
        "loocv",
        serde_json::json!({ "dataset": dataset }),
        &cfg,
    )?;
    let ds = Dataset::load(&dataset)?;
    let folds = eval::run_loocv(&ds, &cfg.unet, &cfg.train, &cfg.augment, cfg.mc_samples)?;
    report::write_loocv_report(&out, &folds)?;
    for fold in &folds {
        let cp = Checkpoint {
            params: fold.outcome.params.clone(),
            train_config: Some(cfg.train.clone()),
            history: fold.outcome.history.clone(),
            best_epoch: fold.outcome.best_epoch,
            adam: None,
        };
        unet::checkpoint::save(&cp, out.join(format!("fold_{}.sbck", fold.spec.test_flux)))?;
        let acc: f64 =
            fold.frames.iter().map(|f| f.accuracy).sum::<f64>() / fold.frames.len() as f64;
        println!(
            "fold {}: mean held-out accuracy {:.4}",
            fold.spec.test_flux, acc
        );
    }
    Ok(())
}

pub fn study(
    mode: StudyMode,
    dataset: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.unet.seed = cfg.seed;
    let mode_name = match mode {
        StudyMode::Flux => "flux",
        StudyMode::Grayscale => "grayscale",
    };
    write_run_json(
        &out,
        "study",
        serde_json::json!({ "dataset": dataset, "mode": mode_name }),
        &cfg,
    )?;
    let ds = Dataset::load(&dataset)?;
    let color = match mode {
        StudyMode::Flux => ColorMode::Rgb,
        StudyMode::Grayscale => ColorMode::Grayscale,
    };
    let truth_rates = TruthRates::read(ds.root.join("truth_rate.csv"))
        .map(|t| t.rates)
        .unwrap_or_default();
    let results = eval::run_flux_study(
        &ds,
        color,
        &cfg.unet,
        &cfg.train,
        &cfg.augment,
        cfg.mc_samples,
        &truth_rates,
    )?;
    let flux_values: BTreeMap<String, f64> = ds
        .sequences
        .iter()
        .map(|(label, seq)| (label.clone(), seq.flux_kg_m2s))
        .collect();
    report::write_study_report(&out, &results, &flux_values, &truth_rates)?;
    println!("wrote study tables and plots to {}", out.display());
    Ok(())
}
