//! Plain-text run configuration: `key = value` pairs under `[section]`
//! headers, with unknown sections and keys rejected so typos surface
//! instead of silently falling back to defaults.
//!
//! ```text
//! seed = 7
//! mc_samples = 20
//!
//! [unet]
//! depth = 4
//! base_channels = 8
//!
//! [train]
//! batch_size = 5
//! learning_rate = 0.001
//! ```
//!
//! Every knob has a default; a config file only states deviations. The
//! fully resolved configuration is echoed to `run.json` by the CLI so any
//! run can be reproduced from its output directory alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::augment::Augmenter;
use crate::classic::SegmentOptions;
use crate::error::{Error, Result};
use crate::rate::{Aggregation, RateOptions, RateReport};
use crate::synth::{BenchmarkConfig, FlameGhost, Saturation, SootNoise, WaxNoise};
use crate::unet::{TrainConfig, UNetConfig, DEFAULT_MC_SAMPLES};

/// Fully resolved configuration of one CLI run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mc_samples: usize,
    pub unet: UNetConfig,
    pub train: TrainConfig,
    pub augment: Augmenter,
    pub segment: SegmentOptions,
    pub rate: RateOptions,
    pub synth: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mc_samples: DEFAULT_MC_SAMPLES,
            unet: UNetConfig::default(),
            train: TrainConfig::default(),
            augment: Augmenter::default(),
            segment: SegmentOptions::default(),
            rate: RateOptions::default(),
            synth: BenchmarkConfig::default(),
        }
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    sections.entry(current.clone()).or_default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section", i + 1)))?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let section = sections.get_mut(&current).unwrap();
        if section.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key {key:?}",
                i + 1
            )));
        }
    }
    Ok(sections)
}

/// Tracks which keys a section consumed so leftovers can be rejected.
struct SectionReader<'a> {
    name: &'a str,
    entries: BTreeMap<String, String>,
}

impl<'a> SectionReader<'a> {
    fn new(name: &'a str, sections: &mut Sections) -> Self {
        Self {
            name,
            entries: sections.remove(name).unwrap_or_default(),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(raw) = self.entries.remove(key) {
            *slot = raw.parse().map_err(|_| {
                Error::Config(format!("[{}] {key}: cannot parse {raw:?}", self.name))
            })?;
        }
        Ok(())
    }

    fn parse_with<T>(
        &mut self,
        key: &str,
        slot: &mut T,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<()> {
        if let Some(raw) = self.entries.remove(key) {
            *slot = f(&raw).ok_or_else(|| {
                Error::Config(format!("[{}] {key}: cannot parse {raw:?}", self.name))
            })?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Config(format!(
                "[{}] unknown key {key:?}",
                self.name
            )));
        }
        Ok(())
    }
}

fn parse_list(raw: &str, n: usize) -> Option<Vec<f64>> {
    let items: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()?;
    (items.len() == n).then_some(items)
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(PathBuf::from(path)));
        }
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut sections = parse_sections(text)?;

        let mut global = SectionReader::new("", &mut sections);
        global.parse("seed", &mut cfg.seed)?;
        global.parse("mc_samples", &mut cfg.mc_samples)?;
        global.finish()?;

        let mut unet = SectionReader::new("unet", &mut sections);
        unet.parse("depth", &mut cfg.unet.depth)?;
        unet.parse("base_channels", &mut cfg.unet.base_channels)?;
        unet.parse("in_channels", &mut cfg.unet.in_channels)?;
        unet.parse("input_h", &mut cfg.unet.input_h)?;
        unet.parse("input_w", &mut cfg.unet.input_w)?;
        unet.parse("dropout_p", &mut cfg.unet.dropout_p)?;
        unet.parse_with("dropout_sites", &mut cfg.unet.dropout_sites, |raw| {
            raw.split(',')
                .map(|s| match s.trim() {
                    "1" | "true" | "on" => Some(true),
                    "0" | "false" | "off" => Some(false),
                    _ => None,
                })
                .collect::<Option<Vec<bool>>>()
                .map(Some)
        })?;
        unet.finish()?;

        let mut train = SectionReader::new("train", &mut sections);
        train.parse("batch_size", &mut cfg.train.batch_size)?;
        train.parse("learning_rate", &mut cfg.train.learning_rate)?;
        train.parse("beta1", &mut cfg.train.beta1)?;
        train.parse("beta2", &mut cfg.train.beta2)?;
        train.parse("epsilon", &mut cfg.train.epsilon)?;
        train.parse("max_epochs", &mut cfg.train.max_epochs)?;
        train.parse("patience", &mut cfg.train.patience)?;
        train.parse("bn_momentum", &mut cfg.train.bn_momentum)?;
        train.finish()?;

        let mut augment = SectionReader::new("augment", &mut sections);
        augment.parse("hflip_p", &mut cfg.augment.hflip_p)?;
        augment.parse("vflip_p", &mut cfg.augment.vflip_p)?;
        let mut rotate = cfg
            .augment
            .rotate_deg
            .map(|(lo, hi)| format!("{lo},{hi}"))
            .unwrap_or_else(|| "off".into());
        augment.parse_with("rotate_deg", &mut rotate, |raw| Some(raw.to_string()))?;
        cfg.augment.rotate_deg = if rotate == "off" {
            None
        } else {
            let items = parse_list(&rotate, 2)
                .ok_or_else(|| Error::Config(format!("[augment] rotate_deg: {rotate:?}")))?;
            Some((items[0], items[1]))
        };
        augment.finish()?;

        let mut segment = SectionReader::new("segment", &mut sections);
        segment.parse("invert", &mut cfg.segment.invert)?;
        segment.parse("downsample", &mut cfg.segment.downsample)?;
        segment.parse("window", &mut cfg.segment.window)?;
        segment.finish()?;

        let mut rate = SectionReader::new("rate", &mut sections);
        rate.parse_with("aggregation", &mut cfg.rate.aggregation, |raw| match raw {
            "common_columns" => Some(Aggregation::CommonColumns),
            "carry_forward" => Some(Aggregation::CarryForward),
            _ => None,
        })?;
        rate.parse_with("report", &mut cfg.rate.report, |raw| match raw {
            "time_averaged" => Some(RateReport::TimeAveraged),
            "mid_burn" => Some(RateReport::MidBurn),
            _ => None,
        })?;
        rate.finish()?;

        let mut synth = SectionReader::new("synth", &mut sections);
        synth.parse("width", &mut cfg.synth.width_px)?;
        synth.parse("height", &mut cfg.synth.height_px)?;
        synth.parse("dt_s", &mut cfg.synth.dt_s)?;
        synth.parse("mm_per_px", &mut cfg.synth.mm_per_px)?;
        synth.parse("initial_fill", &mut cfg.synth.initial_fill)?;
        synth.parse("undulation_px", &mut cfg.synth.undulation_px)?;
        synth.parse("texture", &mut cfg.synth.texture)?;
        let n = cfg.synth.fluxes.len();
        let mut frames: Option<Vec<f64>> = None;
        synth.parse_with("frames", &mut frames, |raw| {
            parse_list(raw, n).map(Some)
        })?;
        if let Some(frames) = frames {
            for (spec, &f) in cfg.synth.fluxes.iter_mut().zip(&frames) {
                spec.frames = f as usize;
            }
        }
        let mut rates: Option<Vec<f64>> = None;
        synth.parse_with("rates_mm_s", &mut rates, |raw| {
            parse_list(raw, n).map(Some)
        })?;
        if let Some(rates) = rates {
            for (spec, &r) in cfg.synth.fluxes.iter_mut().zip(&rates) {
                spec.rate_mm_s = r;
            }
        }
        let mut wax: Option<Vec<f64>> = None;
        synth.parse_with("wax_count", &mut wax, |raw| parse_list(raw, n).map(Some))?;
        if let Some(wax) = wax {
            for (spec, &count) in cfg.synth.fluxes.iter_mut().zip(&wax) {
                spec.noise.wax = (count > 0.0).then(|| WaxNoise {
                    count: count as usize,
                    ..spec.noise.wax.unwrap_or(WaxNoise {
                        count: 0,
                        radius_px: (2.0, 6.0),
                        brightness: 0.85,
                    })
                });
            }
        }
        let mut soot: Option<Vec<f64>> = None;
        synth.parse_with("soot_density", &mut soot, |raw| parse_list(raw, n).map(Some))?;
        if let Some(soot) = soot {
            for (spec, &density) in cfg.synth.fluxes.iter_mut().zip(&soot) {
                spec.noise.soot = (density > 0.0).then(|| SootNoise {
                    density,
                    ..spec.noise.soot.unwrap_or(SootNoise {
                        density: 0.0,
                        darkness: 0.6,
                    })
                });
            }
        }
        let mut flame: Option<Vec<f64>> = None;
        synth.parse_with("flame_amplitude", &mut flame, |raw| {
            parse_list(raw, n).map(Some)
        })?;
        if let Some(flame) = flame {
            for (spec, &amplitude) in cfg.synth.fluxes.iter_mut().zip(&flame) {
                spec.noise.flame = (amplitude > 0.0).then(|| FlameGhost {
                    amplitude,
                    ..spec.noise.flame.unwrap_or(FlameGhost {
                        amplitude: 0.0,
                        standoff_px: 7.0,
                        thickness_px: 5.0,
                    })
                });
            }
        }
        let mut gain: Option<Vec<f64>> = None;
        synth.parse_with("saturation_gain", &mut gain, |raw| {
            parse_list(raw, n).map(Some)
        })?;
        if let Some(gain) = gain {
            for (spec, &g) in cfg.synth.fluxes.iter_mut().zip(&gain) {
                spec.noise.saturation =
                    (g > 1.0).then_some(Saturation { gain: g, clip: 1.0 });
            }
        }
        synth.finish()?;

        if let Some(name) = sections.keys().find(|k| !k.is_empty()) {
            return Err(Error::Config(format!("unknown section [{name}]")));
        }
        cfg.synth.seed = cfg.seed;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let cfg = RunConfig::from_text("").unwrap();
        assert_eq!(cfg.mc_samples, 20);
        assert_eq!(cfg.train.batch_size, 5);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.train.patience, 20);
        assert_eq!(cfg.unet.dropout_p, 0.5);
    }

    #[test]
    fn sections_override_defaults() {
        let text = "
seed = 9
mc_samples = 8

[unet]
depth = 2
base_channels = 4
input_h = 64
input_w = 64

[train]
max_epochs = 3

[augment]
rotate_deg = -20, 20

[synth]
frames = 5,5,5,5
";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mc_samples, 8);
        assert_eq!(cfg.unet.depth, 2);
        assert_eq!(cfg.unet.input_h, 64);
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.augment.rotate_deg, Some((-20.0, 20.0)));
        assert!(cfg.synth.fluxes.iter().all(|f| f.frames == 5));
        assert_eq!(cfg.synth.seed, 9);
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(matches!(
            RunConfig::from_text("[unet]\ndeepness = 4\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("[nonsense]\nx = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("stray_key = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("[train]\nbatch_size = five\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_text("[train]\nbatch_size = 1\nbatch_size = 2\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rotate_off_disables_rotation() {
        let cfg = RunConfig::from_text("[augment]\nrotate_deg = off\n").unwrap();
        assert_eq!(cfg.augment.rotate_deg, None);
    }

    #[test]
    fn synth_noise_lists() {
        let text = "[synth]\nsaturation_gain = 1,1,1,3\nwax_count = 0,5,0,0\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert!(cfg.synth.fluxes[0].noise.saturation.is_none());
        assert_eq!(cfg.synth.fluxes[3].noise.saturation.unwrap().gain, 3.0);
        assert!(cfg.synth.fluxes[0].noise.wax.is_none());
        assert_eq!(cfg.synth.fluxes[1].noise.wax.unwrap().count, 5);
    }
}
