//! Command-line entry point for the slab-burner regression-rate pipeline.

mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "slabburn",
    version,
    about = "Fuel regression-rate measurement from slab-burner image sequences",
    long_about = "Measures solid-fuel regression rate from time-stamped burn image \
sequences: synthetic data generation, classical and neural segmentation, \
height-profile tracking, cubic rate fitting with uncertainty bars, and \
evaluation studies. Every subcommand writes a run.json echoing the resolved \
configuration so results can be reproduced from the output directory alone."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SegmentMethod {
    /// Global Otsu intensity threshold.
    Threshold,
    /// Threshold, then subtract the last frame's mask from every mask.
    Tlis,
    /// Downsample, sliding mean filter, then threshold.
    Spatial,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyMode {
    /// One RGB model per flux, evaluated across all fluxes.
    Flux,
    /// Grayscale variant, plus an all-flux grayscale model.
    Grayscale,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic four-flux benchmark dataset with ground truth.
    Synth {
        /// Scenario configuration file (key = value sections).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Segment a dataset with a classical method, writing one mask PNG per
    /// frame plus a CSV of per-frame thresholds.
    Segment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        method: SegmentMethod,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one flux label.
        #[arg(long)]
        flux: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a segmentation network and save a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated flux labels to train on (default: all).
        #[arg(long)]
        fluxes: Option<String>,
        /// Comma-separated flux labels used for validation / early
        /// stopping. Without this, a seeded 80/20 random split of the
        /// training frames is used.
        #[arg(long)]
        val_fluxes: Option<String>,
        /// Convert frames to grayscale and train a 1-channel network.
        #[arg(long)]
        grayscale: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict masks and uncertainty maps with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Monte-Carlo samples per frame.
        #[arg(long, default_value_t = slabburn::unet::DEFAULT_MC_SAMPLES)]
        samples: usize,
        #[arg(long)]
        flux: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit height-time cubics from a directory of masks and report
    /// regression rates.
    Rate {
        /// Directory of `<label>.png` masks at native resolution.
        #[arg(long)]
        masks: PathBuf,
        /// Dataset manifest describing times and scales.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        flux: Option<String>,
        /// Directory of 16-bit uncertainty PNGs (from `predict`); enables
        /// rate error bars.
        #[arg(long)]
        uncertainty: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare predicted masks against a dataset's ground truth.
    Eval {
        /// Directory of predicted `<label>.png` masks.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        flux: Option<String>,
    },
    /// Leave-one-flux-out cross-validation over the dataset.
    Loocv {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Single-flux transfer study (RGB or grayscale).
    Study {
        #[arg(long, value_enum)]
        mode: StudyMode,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { config, out, seed } => commands::synth(config, out, seed),
        Command::Segment {
            dataset,
            method,
            out,
            flux,
            config,
        } => commands::segment(dataset, method, out, flux, config),
        Command::Train {
            dataset,
            out,
            config,
            fluxes,
            val_fluxes,
            grayscale,
            seed,
        } => commands::train(dataset, out, config, fluxes, val_fluxes, grayscale, seed),
        Command::Predict {
            checkpoint,
            dataset,
            out,
            samples,
            flux,
            seed,
        } => commands::predict(checkpoint, dataset, out, samples, flux, seed),
        Command::Rate {
            masks,
            manifest,
            out,
            flux,
            uncertainty,
            config,
        } => commands::rate(masks, manifest, out, flux, uncertainty, config),
        Command::Eval {
            pred,
            dataset,
            out,
            flux,
        } => commands::eval(pred, dataset, out, flux),
        Command::Loocv {
            dataset,
            out,
            config,
            seed,
        } => commands::loocv(dataset, out, config, seed),
        Command::Study {
            mode,
            dataset,
            out,
            config,
            seed,
        } => commands::study(mode, dataset, out, config, seed),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
