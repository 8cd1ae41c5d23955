//! Fuel-height tracking and regression-rate estimation.
//!
//! Masks become per-column height profiles, the physical only-recede rule
//! prunes contradictory samples, a cubic is fitted to the aggregated
//! height-time curve, and its derivative is the regression rate. Error
//! bars come from re-running the same pipeline on uncertainty-widened and
//! uncertainty-eroded mask variants.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::img::{BinaryMask, UncertaintyMap};

/// Per-frame, per-column fuel heights with validity flags.
///
/// Heights are measured in pixels from the chamber floor (the bottom image
/// row) up to the topmost fuel pixel. `valid[[f, c]]` is false where a
/// column had no fuel or was neglected by the monotonic constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightSeries {
    pub times_s: Vec<f64>,
    /// `(frames, columns)` heights in pixels.
    pub heights_px: Array2<f64>,
    pub valid: Array2<bool>,
    pub mm_per_px: f64,
}

impl HeightSeries {
    /// Builds a series from per-frame profiles, checking that times are
    /// strictly increasing.
    pub fn new(
        times_s: Vec<f64>,
        heights_px: Array2<f64>,
        valid: Array2<bool>,
        mm_per_px: f64,
    ) -> Result<Self> {
        for i in 1..times_s.len() {
            if times_s[i] <= times_s[i - 1] {
                return Err(Error::NonIncreasingTimes { index: i });
            }
        }
        if times_s.len() != heights_px.nrows() || heights_px.dim() != valid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} times, {:?} heights, {:?} flags",
                times_s.len(),
                heights_px.dim(),
                valid.dim()
            )));
        }
        Ok(Self {
            times_s,
            heights_px,
            valid,
            mm_per_px,
        })
    }

    /// Assembles a series by extracting profiles from a mask sequence.
    pub fn from_masks(
        masks: &[BinaryMask],
        times_s: &[f64],
        mm_per_px: f64,
    ) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::EmptySequence);
        }
        if masks.len() != times_s.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} masks vs {} times",
                masks.len(),
                times_s.len()
            )));
        }
        let w = masks[0].width();
        let mut heights = Array2::<f64>::zeros((masks.len(), w));
        let mut valid = Array2::from_elem((masks.len(), w), false);
        for (f, mask) in masks.iter().enumerate() {
            if mask.width() != w {
                return Err(Error::DimensionMismatch {
                    expected_h: masks[0].height(),
                    expected_w: w,
                    got_h: mask.height(),
                    got_w: mask.width(),
                });
            }
            let profile = extract_profile(mask);
            for c in 0..w {
                heights[[f, c]] = profile.heights_px[c];
                valid[[f, c]] = profile.valid[c];
            }
        }
        Self::new(times_s.to_vec(), heights, valid, mm_per_px)
    }
}

/// Per-column heights extracted from one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnProfile {
    pub heights_px: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Scans each column top-down for the first fuel pixel; the height is the
/// number of rows from that pixel to the bottom of the image. Columns with
/// no fuel get height 0 and are marked invalid.
pub fn extract_profile(mask: &BinaryMask) -> ColumnProfile {
    let (h, w) = mask.values.dim();
    let mut heights = vec![0.0; w];
    let mut valid = vec![false; w];
    for c in 0..w {
        for r in 0..h {
            if mask.values[[r, c]] == 1 {
                heights[c] = (h - r) as f64;
                valid[c] = true;
                break;
            }
        }
    }
    ColumnProfile {
        heights_px: heights,
        valid,
    }
}

/// Applies the physical constraint that fuel height can only regress or
/// remain constant.
///
/// Per column, frames are scanned in time order keeping a running minimum
/// of retained heights; any frame whose height exceeds the last retained
/// height is flagged invalid for that column. Idempotent, and never raises
/// a retained height.
pub fn enforce_monotonic(series: &HeightSeries) -> HeightSeries {
    let (frames, cols) = series.heights_px.dim();
    let mut valid = series.valid.clone();
    for c in 0..cols {
        let mut floor = f64::INFINITY;
        for f in 0..frames {
            if !valid[[f, c]] {
                continue;
            }
            let h = series.heights_px[[f, c]];
            if h > floor {
                valid[[f, c]] = false;
            } else {
                floor = h;
            }
        }
    }
    HeightSeries {
        times_s: series.times_s.clone(),
        heights_px: series.heights_px.clone(),
        valid,
        mm_per_px: series.mm_per_px,
    }
}

/// How per-column heights are collapsed to one height per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over the columns that are valid in every frame, so each frame
    /// averages the same set of columns.
    CommonColumns,
    /// Mean over all columns valid at the first frame, carrying the last
    /// retained height forward over neglected frames. More tolerant of
    /// scattered monotonicity violations in noisy masks.
    CarryForward,
}

/// Collapses a (monotonic-enforced) series to one mean height per frame.
pub fn aggregate_heights(series: &HeightSeries, how: Aggregation) -> Result<(Vec<f64>, Vec<f64>)> {
    let (frames, cols) = series.heights_px.dim();
    match how {
        Aggregation::CommonColumns => {
            let common: Vec<usize> = (0..cols)
                .filter(|&c| (0..frames).all(|f| series.valid[[f, c]]))
                .collect();
            if common.is_empty() {
                return Err(Error::NoCommonColumns);
            }
            let means = (0..frames)
                .map(|f| {
                    common.iter().map(|&c| series.heights_px[[f, c]]).sum::<f64>()
                        / common.len() as f64
                })
                .collect();
            Ok((series.times_s.clone(), means))
        }
        Aggregation::CarryForward => {
            let usable: Vec<usize> = (0..cols).filter(|&c| series.valid[[0, c]]).collect();
            if usable.is_empty() {
                return Err(Error::NoCommonColumns);
            }
            let mut last: Vec<f64> = usable
                .iter()
                .map(|&c| series.heights_px[[0, c]])
                .collect();
            let mut means = Vec::with_capacity(frames);
            for f in 0..frames {
                for (i, &c) in usable.iter().enumerate() {
                    if series.valid[[f, c]] {
                        last[i] = series.heights_px[[f, c]];
                    }
                }
                means.push(last.iter().sum::<f64>() / last.len() as f64);
            }
            Ok((series.times_s.clone(), means))
        }
    }
}

/// Ordinary least-squares cubic fit `h(t) = a0 + a1 t + a2 t^2 + a3 t^3`.
///
/// Needs at least four points with four distinct times; solved through a
/// rank-revealing SVD of the Vandermonde design matrix.
pub fn fit_cubic(times: &[f64], heights: &[f64]) -> Result<[f64; 4]> {
    if times.len() != heights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} times vs {} heights",
            times.len(),
            heights.len()
        )));
    }
    if times.len() < 4 {
        return Err(Error::NotEnoughPoints {
            needed: 4,
            got: times.len(),
        });
    }
    if times.iter().chain(heights.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidDimensions("non-finite fit input".into()));
    }
    let mut distinct: Vec<f64> = times.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::RankDeficientFit);
    }

    let n = times.len();
    let design = nalgebra::DMatrix::from_fn(n, 4, |r, c| times[r].powi(c as i32));
    let rhs = nalgebra::DVector::from_row_slice(heights);
    let svd = design.svd(true, true);
    let sv_max = svd.singular_values.max();
    if svd.singular_values.min() < sv_max * 1e-12 {
        return Err(Error::RankDeficientFit);
    }
    let coeffs = svd
        .solve(&rhs, sv_max * 1e-14)
        .map_err(|e| Error::InvalidDimensions(e.to_string()))?;
    Ok([coeffs[0], coeffs[1], coeffs[2], coeffs[3]])
}

/// Evaluates the cubic at `t`.
pub fn cubic_value(coeffs: &[f64; 4], t: f64) -> f64 {
    coeffs
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc.mul_add(t, c))
}

/// Evaluates the cubic's derivative at `t`.
pub fn cubic_derivative(coeffs: &[f64; 4], t: f64) -> f64 {
    (3.0 * coeffs[3]).mul_add(t * t, (2.0 * coeffs[2]).mul_add(t, coeffs[1]))
}

/// A fitted regression-rate measurement.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateResult {
    /// Coefficients of the height-time cubic, lowest order first.
    pub cubic_coeffs: [f64; 4],
    /// Reported regression rate in mm/s (time-averaged derivative over the
    /// burn window, clamped at zero).
    pub rate_mm_s: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
    /// Samples of the instantaneous rate over the burn window.
    pub per_time_rate: Vec<(f64, f64)>,
}

/// Which scalar is reported from the fitted rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateReport {
    /// Time average of the derivative over the window, equivalently the
    /// endpoint slope of the fitted cubic.
    #[default]
    TimeAveraged,
    /// Instantaneous derivative at the window midpoint.
    MidBurn,
}

/// Differentiates a fitted cubic into a regression rate.
///
/// The instantaneous rate is `-dh/dt * mm_per_px`, positive while fuel
/// recedes. The bounds are initialized to the rate itself; use
/// [`rate_uncertainty`] to widen them from uncertainty maps.
pub fn regression_rate(
    coeffs: &[f64; 4],
    t_start: f64,
    t_end: f64,
    mm_per_px: f64,
    report: RateReport,
) -> Result<RateResult> {
    if t_end <= t_start {
        return Err(Error::NonIncreasingTimes { index: 1 });
    }
    let rate = match report {
        RateReport::TimeAveraged => {
            (cubic_value(coeffs, t_start) - cubic_value(coeffs, t_end)) * mm_per_px
                / (t_end - t_start)
        }
        RateReport::MidBurn => {
            -cubic_derivative(coeffs, 0.5 * (t_start + t_end)) * mm_per_px
        }
    }
    .max(0.0);
    let samples = 50;
    let per_time_rate = (0..=samples)
        .map(|i| {
            let t = t_start + (t_end - t_start) * i as f64 / samples as f64;
            (t, -cubic_derivative(coeffs, t) * mm_per_px)
        })
        .collect();
    Ok(RateResult {
        cubic_coeffs: *coeffs,
        rate_mm_s: rate,
        rate_lower: rate,
        rate_upper: rate,
        per_time_rate,
    })
}

/// Options for the mask-to-rate pipeline.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RateOptions {
    pub aggregation: Aggregation,
    pub report: RateReport,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::CarryForward,
            report: RateReport::TimeAveraged,
        }
    }
}

/// Full pipeline: masks -> profiles -> monotonic constraint -> aggregated
/// cubic fit -> rate.
pub fn rate_from_masks(
    masks: &[BinaryMask],
    times_s: &[f64],
    mm_per_px: f64,
    opts: &RateOptions,
) -> Result<RateResult> {
    let series = HeightSeries::from_masks(masks, times_s, mm_per_px)?;
    let series = enforce_monotonic(&series);
    let (t, h) = aggregate_heights(&series, opts.aggregation)?;
    let coeffs = fit_cubic(&t, &h)?;
    regression_rate(
        &coeffs,
        *t.first().unwrap(),
        *t.last().unwrap(),
        mm_per_px,
        opts.report,
    )
}

/// Derives symmetric rate error bars from per-frame uncertainty maps.
///
/// Each frame gets a threshold `tau = mean(u)`; pixels with `u > tau`
/// (strict, ties stay background) form an uncertainty mask that is OR-ed
/// onto the mean mask for the upper variant and AND-NOT-ed for the lower
/// variant. Both variants run through the full rate pipeline and the
/// largest deviation from the mean rate becomes a symmetric error bar.
pub fn rate_uncertainty(
    mean_masks: &[BinaryMask],
    uncertainty: &[UncertaintyMap],
    times_s: &[f64],
    mm_per_px: f64,
    opts: &RateOptions,
) -> Result<RateResult> {
    if mean_masks.len() != uncertainty.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} masks vs {} uncertainty maps",
            mean_masks.len(),
            uncertainty.len()
        )));
    }
    let mut upper = Vec::with_capacity(mean_masks.len());
    let mut lower = Vec::with_capacity(mean_masks.len());
    for (mask, umap) in mean_masks.iter().zip(uncertainty) {
        if mask.values.dim() != umap.u.dim() {
            let (eh, ew) = mask.values.dim();
            let (gh, gw) = umap.u.dim();
            return Err(Error::DimensionMismatch {
                expected_h: eh,
                expected_w: ew,
                got_h: gh,
                got_w: gw,
            });
        }
        let tau = umap.mean();
        let umask = umap.u.mapv(|v| u8::from(v > tau));
        let up = ndarray::Zip::from(&mask.values)
            .and(&umask)
            .map_collect(|&m, &u| m | u);
        let lo = ndarray::Zip::from(&mask.values)
            .and(&umask)
            .map_collect(|&m, &u| m & (1 - u));
        upper.push(BinaryMask { values: up });
        lower.push(BinaryMask { values: lo });
    }
    let base = rate_from_masks(mean_masks, times_s, mm_per_px, opts)?;
    let up_rate = rate_from_masks(&upper, times_s, mm_per_px, opts)?;
    let lo_rate = rate_from_masks(&lower, times_s, mm_per_px, opts)?;
    let bar = (up_rate.rate_mm_s - base.rate_mm_s)
        .abs()
        .max((lo_rate.rate_mm_s - base.rate_mm_s).abs());
    Ok(RateResult {
        rate_lower: base.rate_mm_s - bar,
        rate_upper: base.rate_mm_s + bar,
        ..base
    })
}

/// Convenience: heights as a column-major `Array1` for plotting.
pub fn fitted_curve(coeffs: &[f64; 4], times: &[f64]) -> Array1<f64> {
    Array1::from_iter(times.iter().map(|&t| cubic_value(coeffs, t)))
}
