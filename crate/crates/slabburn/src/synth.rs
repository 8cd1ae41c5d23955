//! Synthetic slab-burner sequences with analytically known fuel profiles.
//!
//! Rendered frames carry the four noise phenomena of the real apparatus —
//! molten wax splashing on the glass, soot pitting, flame ghosting above
//! the fuel surface, and over-saturation from flash gain — each
//! individually switchable so a segmentation method can be stressed against
//! one failure mode at a time. Truth masks are exact sub-profile
//! indicators; noise never touches them.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Manifest, ManifestEntry, TruthRates};
use crate::error::{Error, Result};
use crate::img::{self, BinaryMask, ImageFrame};

/// Bright wax splotches that accumulate on the chamber glass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WaxNoise {
    /// Total blobs deposited over the burn.
    pub count: usize,
    /// Blob radius range in pixels.
    pub radius_px: (f64, f64),
    /// Peak blob intensity.
    pub brightness: f64,
}

/// Dark soot specks that accumulate on the background.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SootNoise {
    /// Fraction of pixels specked by the end of the burn.
    pub density: f64,
    /// Multiplicative darkening at a speck center, in `[0, 1]`.
    pub darkness: f64,
}

/// Translucent flame plume hovering above the fuel profile.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlameGhost {
    /// Peak added intensity.
    pub amplitude: f64,
    /// Rows between the fuel surface and the plume's brightest band.
    pub standoff_px: f64,
    /// Vertical extent of the plume band in pixels.
    pub thickness_px: f64,
}

/// Global exposure gain with clipping, the over-saturation mechanism.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Saturation {
    pub gain: f64,
    /// Clip level; 1.0 reproduces sensor saturation.
    pub clip: f64,
}

/// Independent noise layer switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseConfig {
    pub wax: Option<WaxNoise>,
    pub soot: Option<SootNoise>,
    pub flame: Option<FlameGhost>,
    pub saturation: Option<Saturation>,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Initial per-column fuel height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    /// Uniform slab surface.
    Flat { height_px: f64 },
    /// Gentle sinusoidal undulation across the slab.
    Sine {
        base_px: f64,
        amplitude_px: f64,
        period_px: f64,
    },
}

impl ProfileShape {
    pub fn height_at(&self, column: usize) -> f64 {
        match *self {
            ProfileShape::Flat { height_px } => height_px,
            ProfileShape::Sine {
                base_px,
                amplitude_px,
                period_px,
            } => {
                base_px
                    + amplitude_px
                        * (2.0 * std::f64::consts::PI * column as f64 / period_px).sin()
            }
        }
    }
}

/// Full description of one synthetic burn.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BurnScenario {
    pub width_px: usize,
    pub height_px: usize,
    /// Strictly increasing capture times.
    pub frame_times_s: Vec<f64>,
    pub initial_profile: ProfileShape,
    /// Uniform regression rate in mm/s; px/s is this over `mm_per_px`.
    pub rate_mm_s: f64,
    pub mm_per_px: f64,
    pub flux_label: String,
    pub flux_kg_m2s: f64,
    /// Mean intensity of the flash-lit fuel surface.
    pub fuel_level: f64,
    /// Mean intensity of the dark chamber background.
    pub background_level: f64,
    /// Relative per-pixel texture amplitude on both classes (not one of the
    /// four noise phenomena; set 0 for perfectly two-tone frames).
    pub texture: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl BurnScenario {
    /// A clean constant-rate burn whose per-frame height drop is an exact
    /// integer pixel count, so the rendered heights carry no quantization
    /// error. Useful as an end-to-end oracle.
    pub fn noise_free(
        width_px: usize,
        height_px: usize,
        frames: usize,
        initial_height_px: usize,
        drop_px_per_frame: usize,
        dt_s: f64,
        mm_per_px: f64,
    ) -> Self {
        Self {
            width_px,
            height_px,
            frame_times_s: (0..frames).map(|i| i as f64 * dt_s).collect(),
            initial_profile: ProfileShape::Flat {
                height_px: initial_height_px as f64,
            },
            rate_mm_s: drop_px_per_frame as f64 / dt_s * mm_per_px,
            mm_per_px,
            flux_label: "A".into(),
            flux_kg_m2s: 5.91,
            fuel_level: 0.9,
            background_level: 0.15,
            texture: 0.0,
            noise: NoiseConfig::none(),
            seed: 0,
        }
    }

    pub fn rate_px_s(&self) -> f64 {
        self.rate_mm_s / self.mm_per_px
    }

    fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 || self.frame_times_s.is_empty() {
            return Err(Error::InvalidDimensions("empty scenario".into()));
        }
        for i in 1..self.frame_times_s.len() {
            if self.frame_times_s[i] <= self.frame_times_s[i - 1] {
                return Err(Error::NonIncreasingTimes { index: i });
            }
        }
        for c in 0..self.width_px {
            let h = self.initial_profile.height_at(c);
            if h < 0.0 || h > self.height_px as f64 {
                return Err(Error::InvalidDimensions(format!(
                    "initial profile {h} px outside [0, {}]",
                    self.height_px
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`generate_sequence`].
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub frames: Vec<ImageFrame>,
    pub truth_masks: Vec<BinaryMask>,
    /// Programmed regression rate, mm/s.
    pub rate_mm_s: f64,
    /// Column-frames where the analytic profile went below zero and was
    /// clamped; nonzero values mean the burn window outlasted the fuel.
    pub underflow_count: usize,
}

const FUEL_RGB: [f64; 3] = [1.05, 1.02, 0.94];
const BG_RGB: [f64; 3] = [0.85, 0.97, 1.10];
const WAX_RGB: [f64; 3] = [1.0, 0.97, 0.90];
const FLAME_RGB: [f64; 3] = [1.0, 0.82, 0.52];

struct WaxBlob {
    birth_s: f64,
    row: f64,
    col: f64,
    radius: f64,
}

struct SootSpeck {
    birth_s: f64,
    row: usize,
    col: usize,
}

/// Derives an independent stream seed from a base seed and a salt
/// (splitmix64 finalizer).
pub fn split_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over seed ^ salt.
    let mut z = (seed ^ salt).wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Renders a full synthetic burn: per frame, the truth mask is the exact
/// indicator of pixels at or below the analytic fuel profile, and the frame
/// is the two-tone fuel/background image with the enabled noise layers
/// applied in order (wax, soot, flame ghost, gain + clip).
pub fn generate_sequence(scenario: &BurnScenario) -> Result<GeneratedSequence> {
    scenario.validate()?;
    let (h, w) = (scenario.height_px, scenario.width_px);
    let t0 = scenario.frame_times_s[0];
    let t_end = *scenario.frame_times_s.last().unwrap();
    let rate_px = scenario.rate_px_s();

    // Sequence-level event lists; deposits accumulate over the burn so the
    // last frame carries the maximum glass noise.
    let mut ev_rng = ChaCha8Rng::seed_from_u64(split_seed(scenario.seed, 0x57415845));
    let wax_blobs: Vec<WaxBlob> = match scenario.noise.wax {
        Some(wax) => (0..wax.count)
            .map(|_| WaxBlob {
                birth_s: ev_rng.gen_range(t0..=t_end),
                row: ev_rng.gen_range(0.0..h as f64),
                col: ev_rng.gen_range(0.0..w as f64),
                radius: ev_rng.gen_range(wax.radius_px.0..=wax.radius_px.1),
            })
            .collect(),
        None => Vec::new(),
    };
    let mut soot_rng = ChaCha8Rng::seed_from_u64(split_seed(scenario.seed, 0x534F4F54));
    let soot_specks: Vec<SootSpeck> = match scenario.noise.soot {
        Some(soot) => {
            let n = (soot.density * (h * w) as f64).round() as usize;
            (0..n)
                .map(|_| SootSpeck {
                    birth_s: soot_rng.gen_range(t0..=t_end),
                    row: soot_rng.gen_range(0..h),
                    col: soot_rng.gen_range(0..w),
                })
                .collect()
        }
        None => Vec::new(),
    };

    let mut frames = Vec::with_capacity(scenario.frame_times_s.len());
    let mut truth_masks = Vec::with_capacity(scenario.frame_times_s.len());
    let mut underflow_count = 0usize;

    for (fi, &t) in scenario.frame_times_s.iter().enumerate() {
        // Per-frame stream: texture and plume flicker are independent of
        // frame evaluation order.
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(scenario.seed, 0xF0000 + fi as u64));

        // Analytic truth profile, clamped at the chamber floor.
        let burn = rate_px * (t - t0);
        let mut fuel_rows = vec![0usize; w];
        for (c, rows) in fuel_rows.iter_mut().enumerate() {
            let height = scenario.initial_profile.height_at(c) - burn;
            if height < 0.0 {
                underflow_count += 1;
            }
            *rows = (height.max(0.0).round() as usize).min(h);
        }
        let mask = BinaryMask {
            values: Array2::from_shape_fn((h, w), |(r, c)| u8::from(h - r <= fuel_rows[c])),
        };

        // Base two-tone render with optional texture.
        let mut px = Array3::<f64>::zeros((3, h, w));
        for r in 0..h {
            for c in 0..w {
                let fuel = mask.values[[r, c]] == 1;
                let (level, tint) = if fuel {
                    (scenario.fuel_level, FUEL_RGB)
                } else {
                    (scenario.background_level, BG_RGB)
                };
                let tex = if scenario.texture > 0.0 {
                    1.0 + scenario.texture * rng.gen_range(-1.0..1.0)
                } else {
                    1.0
                };
                for ch in 0..3 {
                    px[[ch, r, c]] = level * tint[ch] * tex;
                }
            }
        }

        // Wax blobs born by this frame, rendered anywhere.
        if let Some(wax) = scenario.noise.wax {
            for blob in wax_blobs.iter().filter(|b| b.birth_s <= t) {
                let r_lo = (blob.row - blob.radius).floor().max(0.0) as usize;
                let r_hi = ((blob.row + blob.radius).ceil() as usize).min(h - 1);
                let c_lo = (blob.col - blob.radius).floor().max(0.0) as usize;
                let c_hi = ((blob.col + blob.radius).ceil() as usize).min(w - 1);
                for r in r_lo..=r_hi {
                    for c in c_lo..=c_hi {
                        let d2 =
                            (r as f64 - blob.row).powi(2) + (c as f64 - blob.col).powi(2);
                        let falloff = 1.0 - d2 / (blob.radius * blob.radius);
                        if falloff > 0.0 {
                            for ch in 0..3 {
                                let target = wax.brightness * WAX_RGB[ch];
                                let v = px[[ch, r, c]];
                                px[[ch, r, c]] = v + (target - v) * falloff;
                            }
                        }
                    }
                }
            }
        }

        // Soot specks born by this frame, background only.
        if let Some(soot) = scenario.noise.soot {
            for speck in soot_specks.iter().filter(|s| s.birth_s <= t) {
                if mask.values[[speck.row, speck.col]] == 0 {
                    for ch in 0..3 {
                        px[[ch, speck.row, speck.col]] *= 1.0 - soot.darkness;
                    }
                }
            }
        }

        // Flame ghost: a bright band hovering above the fuel surface with a
        // standoff gap, brightest over a plume center that wanders per
        // frame.
        if let Some(flame) = scenario.noise.flame {
            let plume_center = w as f64 * (0.35 + 0.3 * rng.gen::<f64>());
            let plume_width = w as f64 * 0.35;
            let flicker = 0.8 + 0.2 * rng.gen::<f64>();
            for c in 0..w {
                let surface_row = h - fuel_rows[c]; // first background row
                let lateral = (-((c as f64 - plume_center) / plume_width).powi(2)).exp();
                if lateral < 1e-3 {
                    continue;
                }
                for r in 0..surface_row.min(h) {
                    let above = (surface_row - r) as f64;
                    let band =
                        (-(((above - flame.standoff_px) / flame.thickness_px).powi(2))).exp();
                    let add = flame.amplitude * flicker * lateral * band;
                    if add > 1e-4 {
                        for ch in 0..3 {
                            px[[ch, r, c]] += add * FLAME_RGB[ch];
                        }
                    }
                }
            }
        }

        // Exposure gain and clipping, then the [0, 1] invariant clamp.
        let (gain, clip) = match scenario.noise.saturation {
            Some(s) => (s.gain, s.clip),
            None => (1.0, 1.0),
        };
        px.mapv_inplace(|v| (v * gain).min(clip).clamp(0.0, 1.0));

        let mut frame = ImageFrame::new(px, t, format!("{}{}", scenario.flux_label, fi + 1))?;
        frame.flux_kg_m2s = Some(scenario.flux_kg_m2s);
        frames.push(frame);
        truth_masks.push(mask);
    }

    Ok(GeneratedSequence {
        frames,
        truth_masks,
        rate_mm_s: scenario.rate_mm_s,
        underflow_count,
    })
}

/// Per-flux settings of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluxSpec {
    pub flux_label: String,
    pub flux_kg_m2s: f64,
    pub frames: usize,
    pub rate_mm_s: f64,
    pub noise: NoiseConfig,
}

/// Configuration of the four-flux benchmark dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchmarkConfig {
    pub width_px: usize,
    pub height_px: usize,
    pub dt_s: f64,
    pub mm_per_px: f64,
    /// Initial flat profile height as a fraction of the image height.
    pub initial_fill: f64,
    /// Sinusoidal undulation amplitude in pixels.
    pub undulation_px: f64,
    pub texture: f64,
    pub fluxes: Vec<FluxSpec>,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    /// Four sequences mirroring the real dataset's frame counts and noise
    /// distribution: A is mildly noisy, B carries heavy wax and soot, C has
    /// strong flame traces, and D is over-saturated.
    fn default() -> Self {
        let wax = |count, lo: f64, hi: f64| WaxNoise {
            count,
            radius_px: (lo, hi),
            brightness: 0.85,
        };
        let soot = |density| SootNoise {
            density,
            darkness: 0.6,
        };
        let flame = |amplitude| FlameGhost {
            amplitude,
            standoff_px: 7.0,
            thickness_px: 5.0,
        };
        Self {
            width_px: 480,
            height_px: 160,
            dt_s: 0.25,
            mm_per_px: 0.25,
            initial_fill: 0.70,
            undulation_px: 3.0,
            texture: 0.03,
            seed: 20200614,
            fluxes: vec![
                FluxSpec {
                    flux_label: "A".into(),
                    flux_kg_m2s: 5.91,
                    frames: 37,
                    rate_mm_s: 0.8,
                    noise: NoiseConfig {
                        wax: Some(wax(4, 2.0, 5.0)),
                        soot: Some(soot(0.001)),
                        flame: Some(flame(0.12)),
                        saturation: None,
                    },
                },
                FluxSpec {
                    flux_label: "B".into(),
                    flux_kg_m2s: 9.58,
                    frames: 36,
                    rate_mm_s: 1.0,
                    noise: NoiseConfig {
                        wax: Some(wax(26, 3.0, 9.0)),
                        soot: Some(soot(0.006)),
                        flame: Some(flame(0.15)),
                        saturation: None,
                    },
                },
                FluxSpec {
                    flux_label: "C".into(),
                    flux_kg_m2s: 18.59,
                    frames: 39,
                    rate_mm_s: 1.2,
                    noise: NoiseConfig {
                        wax: Some(wax(6, 2.0, 6.0)),
                        soot: Some(soot(0.002)),
                        flame: Some(flame(0.40)),
                        saturation: None,
                    },
                },
                FluxSpec {
                    flux_label: "D".into(),
                    flux_kg_m2s: 22.19,
                    frames: 38,
                    rate_mm_s: 1.35,
                    noise: NoiseConfig {
                        wax: Some(wax(10, 3.0, 7.0)),
                        soot: Some(soot(0.003)),
                        flame: Some(flame(0.35)),
                        saturation: Some(Saturation {
                            gain: 2.2,
                            clip: 1.0,
                        }),
                    },
                },
            ],
        }
    }
}

impl BenchmarkConfig {
    pub fn scenario(&self, spec: &FluxSpec, flux_index: usize) -> BurnScenario {
        BurnScenario {
            width_px: self.width_px,
            height_px: self.height_px,
            frame_times_s: (0..spec.frames).map(|i| i as f64 * self.dt_s).collect(),
            initial_profile: ProfileShape::Sine {
                base_px: self.initial_fill * self.height_px as f64,
                amplitude_px: self.undulation_px,
                period_px: self.width_px as f64 / 1.7,
            },
            rate_mm_s: spec.rate_mm_s,
            mm_per_px: self.mm_per_px,
            flux_label: spec.flux_label.clone(),
            flux_kg_m2s: spec.flux_kg_m2s,
            fuel_level: 0.9,
            background_level: 0.15,
            texture: self.texture,
            noise: spec.noise,
            seed: split_seed(self.seed, 0xB000 + flux_index as u64),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.fluxes.iter().map(|f| f.frames).sum()
    }
}

/// Generates the benchmark in memory: label -> generated sequence.
pub fn generate_benchmark_sequences(
    config: &BenchmarkConfig,
) -> Result<BTreeMap<String, GeneratedSequence>> {
    let mut out = BTreeMap::new();
    for (i, spec) in config.fluxes.iter().enumerate() {
        let scenario = config.scenario(spec, i);
        out.insert(spec.flux_label.clone(), generate_sequence(&scenario)?);
    }
    Ok(out)
}

/// Generates the benchmark and writes it in the standard dataset layout:
/// per-flux frame directories, `truth/` masks, `manifest.csv`, and
/// `truth_rate.csv`.
pub fn generate_benchmark(config: &BenchmarkConfig, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let truth_dir = out_dir.join("truth");
    std::fs::create_dir_all(&truth_dir)?;

    let sequences = generate_benchmark_sequences(config)?;
    let mut manifest = Manifest::default();
    let mut truth_rates = TruthRates::default();
    for spec in &config.fluxes {
        let seq = &sequences[&spec.flux_label];
        let flux_dir = out_dir.join(format!("flux_{}", spec.flux_label));
        std::fs::create_dir_all(&flux_dir)?;
        truth_rates
            .rates
            .insert(spec.flux_label.clone(), spec.rate_mm_s);
        for (frame, mask) in seq.frames.iter().zip(&seq.truth_masks) {
            let rel = format!("flux_{}/{}.png", spec.flux_label, frame.label);
            img::save_frame(frame, out_dir.join(&rel))?;
            img::save_mask(mask, truth_dir.join(format!("{}.png", frame.label)))?;
            manifest.entries.push(ManifestEntry {
                label: frame.label.clone(),
                flux_label: spec.flux_label.clone(),
                flux_kg_m2s: spec.flux_kg_m2s,
                time_s: frame.time_s,
                width: config.width_px,
                height: config.height_px,
                mm_per_px: config.mm_per_px,
                path: rel.into(),
            });
        }
    }
    manifest.write(out_dir.join("manifest.csv"))?;
    truth_rates.write(out_dir.join("truth_rate.csv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::{threshold_segment, SegmentOptions};
    use crate::rate::{rate_from_masks, RateOptions};

    #[test]
    fn noise_free_threshold_reproduces_truth_and_rate() {
        let scenario = BurnScenario::noise_free(60, 100, 12, 80, 2, 0.25, 0.25);
        let seq = generate_sequence(&scenario).unwrap();
        assert_eq!(seq.underflow_count, 0);
        let mut masks = Vec::new();
        for (frame, truth) in seq.frames.iter().zip(&seq.truth_masks) {
            let (mask, _) = threshold_segment(frame, &SegmentOptions::default()).unwrap();
            assert_eq!(&mask, truth, "threshold mask differs from truth");
            masks.push(mask);
        }
        let times = scenario.frame_times_s.clone();
        let r = rate_from_masks(&masks, &times, 0.25, &RateOptions::default()).unwrap();
        // 2 px per 0.25 s at 0.25 mm/px = 2 mm/s.
        assert!(
            (r.rate_mm_s - seq.rate_mm_s).abs() / seq.rate_mm_s < 1e-3,
            "rate {} vs programmed {}",
            r.rate_mm_s,
            seq.rate_mm_s
        );
    }

    #[test]
    fn zero_rate_gives_identical_frames_and_zero_pipeline_rate() {
        let mut scenario = BurnScenario::noise_free(40, 60, 6, 30, 0, 0.5, 1.0);
        scenario.rate_mm_s = 0.0;
        let seq = generate_sequence(&scenario).unwrap();
        for f in &seq.frames[1..] {
            assert_eq!(f.pixels, seq.frames[0].pixels);
        }
        let times = scenario.frame_times_s.clone();
        let r = rate_from_masks(&seq.truth_masks, &times, 1.0, &RateOptions::default()).unwrap();
        assert!(r.rate_mm_s.abs() < 1e-9);
    }

    #[test]
    fn saturation_clips_background() {
        let mut scenario = BurnScenario::noise_free(50, 80, 4, 40, 1, 0.5, 1.0);
        scenario.background_level = 0.35;
        scenario.noise.saturation = Some(Saturation {
            gain: 3.5,
            clip: 1.0,
        });
        let seq = generate_sequence(&scenario).unwrap();
        let frame = &seq.frames[0];
        let mask = &seq.truth_masks[0];
        let mut clipped = 0usize;
        let mut background = 0usize;
        for ((_, r, c), &v) in frame.pixels.indexed_iter() {
            if mask.values[[r, c]] == 0 {
                background += 1;
                if v >= 1.0 {
                    clipped += 1;
                }
            }
        }
        assert!(
            clipped as f64 > 0.3 * background as f64,
            "only {clipped}/{background} background samples clipped"
        );
    }

    #[test]
    fn truth_heights_never_increase() {
        let config = BenchmarkConfig {
            width_px: 60,
            height_px: 48,
            initial_fill: 0.6,
            fluxes: BenchmarkConfig::default()
                .fluxes
                .into_iter()
                .map(|mut f| {
                    f.frames = 6;
                    f
                })
                .collect(),
            ..Default::default()
        };
        for seq in generate_benchmark_sequences(&config).unwrap().values() {
            let mut prev: Option<Vec<f64>> = None;
            for mask in &seq.truth_masks {
                let profile = crate::rate::extract_profile(mask);
                if let Some(p) = prev {
                    for (a, b) in p.iter().zip(&profile.heights_px) {
                        assert!(b <= a, "truth height increased");
                    }
                }
                prev = Some(profile.heights_px);
            }
        }
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let config = BenchmarkConfig::default();
        let mut spec = config.fluxes[1].clone();
        spec.frames = 4;
        let scenario = BurnScenario {
            width_px: 64,
            height_px: 48,
            initial_profile: ProfileShape::Flat { height_px: 30.0 },
            ..config.scenario(&spec, 1)
        };
        let a = generate_sequence(&scenario).unwrap();
        let b = generate_sequence(&scenario).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.pixels, y.pixels);
        }
        for (x, y) in a.truth_masks.iter().zip(&b.truth_masks) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn benchmark_layout_counts_and_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = BenchmarkConfig {
            width_px: 48,
            height_px: 32,
            ..Default::default()
        };
        for f in &mut config.fluxes {
            f.frames = 3;
        }
        generate_benchmark(&config, dir.path()).unwrap();
        let ds = crate::dataset::Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.total_frames(), 12);
        assert_eq!(ds.flux_labels(), vec!["A", "B", "C", "D"]);
        for seq in ds.sequences.values() {
            let truths = seq.truth_masks.as_ref().expect("truth masks attached");
            assert_eq!(truths.len(), seq.frames.len());
            for (f, m) in seq.frames.iter().zip(truths) {
                assert_eq!((m.height(), m.width()), (f.height(), f.width()));
            }
        }
        let rates = TruthRates::read(dir.path().join("truth_rate.csv")).unwrap();
        assert_eq!(rates.rates.len(), 4);
    }

    #[test]
    fn default_benchmark_has_paper_counts() {
        let config = BenchmarkConfig::default();
        assert_eq!(config.total_frames(), 150);
        let counts: Vec<usize> = config.fluxes.iter().map(|f| f.frames).collect();
        assert_eq!(counts, vec![37, 36, 39, 38]);
    }
}
