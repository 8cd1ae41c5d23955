//! On-disk dataset layout and the plain-text manifest.
//!
//! A dataset directory holds one subdirectory per oxidizer flux with frames
//! named `<letter><index>.png` (A1..A37, B1..), a `manifest.csv` describing
//! every frame, and optionally a `truth/` directory of ground-truth masks
//! plus a `truth_rate.csv` of programmed regression rates (synthetic data
//! only).
//!
//! `manifest.csv` columns:
//! `label,flux_label,flux_kg_m2s,time_s,width,height,mm_per_px,path`
//! where `path` is relative to the dataset root.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::img::{self, BinaryMask, ImageFrame};

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub label: String,
    /// Single-letter sequence tag, e.g. "A".
    pub flux_label: String,
    pub flux_kg_m2s: f64,
    pub time_s: f64,
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    pub path: PathBuf,
}

/// Parsed manifest, ordered as written.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: &str =
    "label,flux_label,flux_kg_m2s,time_s,width,height,mm_per_px,path";

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if i == 0 {
                if line != MANIFEST_HEADER {
                    return Err(Error::Manifest {
                        line: 1,
                        msg: format!("expected header {MANIFEST_HEADER:?}"),
                    });
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Manifest {
                    line: i + 1,
                    msg: format!("expected 8 fields, got {}", fields.len()),
                });
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Manifest {
                    line: i + 1,
                    msg: format!("bad {what}: {s:?}"),
                })
            };
            entries.push(ManifestEntry {
                label: fields[0].to_string(),
                flux_label: fields[1].to_string(),
                flux_kg_m2s: num(fields[2], "flux")?,
                time_s: num(fields[3], "time_s")?,
                width: num(fields[4], "width")? as usize,
                height: num(fields[5], "height")? as usize,
                mm_per_px: num(fields[6], "mm_per_px")?,
                path: PathBuf::from(fields[7]),
            });
        }
        Ok(Self { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.label,
                e.flux_label,
                e.flux_kg_m2s,
                e.time_s,
                e.width,
                e.height,
                e.mm_per_px,
                e.path.display()
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv())?;
        Ok(())
    }

    /// Entries of one flux, ordered by time.
    pub fn flux_entries(&self, flux_label: &str) -> Vec<&ManifestEntry> {
        let mut out: Vec<&ManifestEntry> = self
            .entries
            .iter()
            .filter(|e| e.flux_label == flux_label)
            .collect();
        out.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).unwrap());
        out
    }

    /// Distinct flux labels in first-appearance order.
    pub fn flux_labels(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for e in &self.entries {
            if !seen.contains(&e.flux_label) {
                seen.push(e.flux_label.clone());
            }
        }
        seen
    }
}

/// A time-ordered sequence of frames from one flux, with optional ground
/// truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub flux_label: String,
    pub flux_kg_m2s: f64,
    pub mm_per_px: f64,
    pub frames: Vec<ImageFrame>,
    pub truth_masks: Option<Vec<BinaryMask>>,
}

impl Sequence {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time_s).collect()
    }
}

/// A dataset loaded into memory, keyed by flux label.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub root: PathBuf,
    pub sequences: BTreeMap<String, Sequence>,
}

impl Dataset {
    /// Loads every sequence listed in `<root>/manifest.csv`, validating
    /// frame dimensions against the manifest. Truth masks are attached when
    /// a `truth/` directory exists.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = Manifest::read(root.join("manifest.csv"))?;
        if manifest.entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let truth_dir = root.join("truth");
        let mut sequences = BTreeMap::new();
        for flux in manifest.flux_labels() {
            let entries = manifest.flux_entries(&flux);
            let mut frames = Vec::with_capacity(entries.len());
            let mut truths = Vec::new();
            for e in &entries {
                let mut frame = img::load_frame(root.join(&e.path))?;
                if frame.height() != e.height || frame.width() != e.width {
                    return Err(Error::DimensionMismatch {
                        expected_h: e.height,
                        expected_w: e.width,
                        got_h: frame.height(),
                        got_w: frame.width(),
                    });
                }
                frame.time_s = e.time_s;
                frame.label = e.label.clone();
                frame.flux_kg_m2s = Some(e.flux_kg_m2s);
                frames.push(frame);
                let tpath = truth_dir.join(format!("{}.png", e.label));
                if tpath.exists() {
                    let mask = img::load_mask(&tpath)?;
                    if mask.values.dim() != (e.height, e.width) {
                        return Err(Error::DimensionMismatch {
                            expected_h: e.height,
                            expected_w: e.width,
                            got_h: mask.height(),
                            got_w: mask.width(),
                        });
                    }
                    truths.push(mask);
                }
            }
            let truth_masks = if truths.len() == frames.len() && !truths.is_empty() {
                Some(truths)
            } else {
                None
            };
            let first = &entries[0];
            sequences.insert(
                flux.clone(),
                Sequence {
                    flux_label: flux.clone(),
                    flux_kg_m2s: first.flux_kg_m2s,
                    mm_per_px: first.mm_per_px,
                    frames,
                    truth_masks,
                },
            );
        }
        Ok(Self { root, sequences })
    }

    pub fn flux_labels(&self) -> Vec<String> {
        self.sequences.keys().cloned().collect()
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.values().map(|s| s.frames.len()).sum()
    }
}

/// Programmed per-flux regression rates (`truth_rate.csv`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthRates {
    /// flux label -> rate in mm/s.
    pub rates: BTreeMap<String, f64>,
}

pub const TRUTH_RATE_HEADER: &str = "flux_label,rate_mm_s";

impl TruthRates {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut rates = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || i == 0 {
                continue;
            }
            let (label, rate) = line.split_once(',').ok_or_else(|| Error::Manifest {
                line: i + 1,
                msg: "expected `flux_label,rate_mm_s`".into(),
            })?;
            let rate = rate.parse::<f64>().map_err(|_| Error::Manifest {
                line: i + 1,
                msg: format!("bad rate: {rate:?}"),
            })?;
            rates.insert(label.to_string(), rate);
        }
        Ok(Self { rates })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from(TRUTH_RATE_HEADER);
        out.push('\n');
        for (label, rate) in &self.rates {
            let _ = writeln!(out, "{label},{rate}");
        }
        std::fs::write(path.as_ref(), out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            entries: vec![ManifestEntry {
                label: "A1".into(),
                flux_label: "A".into(),
                flux_kg_m2s: 5.91,
                time_s: 0.25,
                width: 480,
                height: 128,
                mm_per_px: 0.25,
                path: PathBuf::from("flux_A/A1.png"),
            }],
        };
        let parsed = Manifest::parse(&m.to_csv()).unwrap();
        assert_eq!(parsed.entries, m.entries);
    }

    #[test]
    fn manifest_rejects_bad_rows() {
        let bad = format!("{MANIFEST_HEADER}\nA1,A,5.91,0.25,480\n");
        assert!(matches!(
            Manifest::parse(&bad),
            Err(Error::Manifest { line: 2, .. })
        ));
        assert!(matches!(
            Manifest::parse("not,a,header\n"),
            Err(Error::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn flux_entries_are_time_ordered() {
        let rows = [("A2", "A", 0.5), ("A1", "A", 0.25), ("B1", "B", 0.25)];
        let m = Manifest {
            entries: rows
                .iter()
                .map(|(l, f, t)| ManifestEntry {
                    label: (*l).into(),
                    flux_label: (*f).into(),
                    flux_kg_m2s: 5.91,
                    time_s: *t,
                    width: 4,
                    height: 4,
                    mm_per_px: 1.0,
                    path: PathBuf::from(format!("{l}.png")),
                })
                .collect(),
        };
        let a = m.flux_entries("A");
        assert_eq!(a[0].label, "A1");
        assert_eq!(a[1].label, "A2");
        assert_eq!(m.flux_labels(), vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn truth_rates_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth_rate.csv");
        let mut rates = TruthRates::default();
        rates.rates.insert("A".into(), 0.8);
        rates.rates.insert("D".into(), 1.3);
        rates.write(&path).unwrap();
        assert_eq!(TruthRates::read(&path).unwrap(), rates);
    }
}
