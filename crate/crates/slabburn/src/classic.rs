//! Baseline segmentation methods: Otsu intensity thresholding,
//! threshold-last-image-subtraction, and the sliding mean-filter pipeline.
//!
//! All three emit strictly binary masks. They are the reference points the
//! U-Net is judged against: thresholding has no noise rejection, TLIS
//! removes accumulated glass noise at the cost of data, and the mean filter
//! suppresses small noise clusters while smearing the fuel boundary.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::img::{BinaryMask, ImageFrame};

/// Number of histogram levels used when quantizing intensities.
pub const OTSU_LEVELS: usize = 256;

/// Default side length of the square sliding mean filter.
pub const SPATIAL_WINDOW: usize = 30;

/// An Otsu threshold and the between-class variance it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuResult {
    /// Optimal threshold as an intensity in `[0, 1]` (a multiple of 1/255).
    pub threshold: f64,
    /// Between-class variance at that threshold, in intensity^2 units.
    pub between_class_variance: f64,
}

/// Options for the threshold-based segmenters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SegmentOptions {
    /// When false (default), pixels at or above the threshold are fuel:
    /// the flash saturates the fuel surface, so fuel is the bright class.
    /// Set true for datasets where fuel is dark.
    pub invert: bool,
    /// Downsampling factor applied before the mean filter (0.5 halves each
    /// dimension).
    pub downsample: f64,
    /// Side length of the square mean-filter window.
    pub window: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            invert: false,
            downsample: 0.5,
            window: SPATIAL_WINDOW,
        }
    }
}

/// Quantizes an intensity in `[0, 1]` to one of 256 levels.
#[inline]
fn quantize(v: f64) -> usize {
    ((v * 255.0).round() as usize).min(OTSU_LEVELS - 1)
}

/// Picks the threshold that maximizes the between-class variance of the
/// 256-level intensity histogram.
///
/// A candidate level `k` splits pixels into `bin < k` (background) and
/// `bin >= k` (foreground). Ties are broken toward the lowest maximizing
/// level so the result is deterministic. A constant image has zero variance
/// at every split and is rejected.
pub fn otsu_threshold(gray: &ImageFrame) -> Result<OtsuResult> {
    if gray.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            got: gray.channels(),
        });
    }
    otsu_from_plane(&gray.plane())
}

fn otsu_from_plane(plane: &ndarray::ArrayView2<'_, f64>) -> Result<OtsuResult> {
    let mut hist = [0u64; OTSU_LEVELS];
    for &v in plane.iter() {
        hist[quantize(v)] += 1;
    }
    let total = plane.len() as f64;
    let mean_total: f64 = hist
        .iter()
        .enumerate()
        .map(|(k, &n)| (k as f64 / 255.0) * n as f64)
        .sum::<f64>()
        / total;

    let mut best_k = 0usize;
    let mut best_var = 0.0f64;
    let mut w0 = 0.0f64; // background probability mass
    let mut sum0 = 0.0f64; // background intensity mass
    for k in 1..OTSU_LEVELS {
        let level = (k - 1) as f64 / 255.0;
        w0 += hist[k - 1] as f64 / total;
        sum0 += level * hist[k - 1] as f64 / total;
        let w1 = 1.0 - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (mean_total - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_k = k;
        }
    }
    if best_var <= 0.0 {
        return Err(Error::DegenerateHistogram);
    }
    Ok(OtsuResult {
        threshold: best_k as f64 / 255.0,
        between_class_variance: best_var,
    })
}

/// Segments one frame by global Otsu thresholding.
///
/// RGB input is converted to grayscale first; pixels at or above the
/// threshold become fuel (or below, with `invert`).
pub fn threshold_segment(frame: &ImageFrame, opts: &SegmentOptions) -> Result<(BinaryMask, OtsuResult)> {
    let gray_owned;
    let gray = if frame.channels() == 3 {
        gray_owned = frame.to_grayscale()?;
        &gray_owned
    } else {
        frame
    };
    let otsu = otsu_threshold(gray)?;
    let mask = binarize(&gray.plane(), otsu.threshold, opts.invert);
    Ok((mask, otsu))
}

fn binarize(plane: &ndarray::ArrayView2<'_, f64>, threshold: f64, invert: bool) -> BinaryMask {
    BinaryMask {
        values: plane.mapv(|v| {
            let bright = v >= threshold;
            u8::from(bright != invert)
        }),
    }
}

/// Threshold-last-image-subtraction.
///
/// The last mask of a time-ordered sequence is assumed to carry the maximum
/// accumulated glass noise and is subtracted from every mask, clamping at
/// zero. The last output is therefore all-zero, and no pixel ever flips
/// from background to fuel.
pub fn tlis(masks: &[BinaryMask]) -> Result<Vec<BinaryMask>> {
    let last = masks.last().ok_or(Error::EmptySequence)?;
    let (h, w) = last.values.dim();
    for m in masks {
        if m.values.dim() != (h, w) {
            return Err(Error::DimensionMismatch {
                expected_h: h,
                expected_w: w,
                got_h: m.values.nrows(),
                got_w: m.values.ncols(),
            });
        }
    }
    if masks.len() < 2 {
        return Err(Error::EmptySequence);
    }
    Ok(masks
        .iter()
        .map(|m| BinaryMask {
            values: ndarray::Zip::from(&m.values)
                .and(&last.values)
                .map_collect(|&a, &b| a.saturating_sub(b)),
        })
        .collect())
}

/// Sliding square mean filter with replicate edge padding; output has the
/// same dimensions as the input.
///
/// Computed separably with per-row and per-column prefix sums, which keeps
/// the accumulated rounding far below the 1e-12 tolerance the direct
/// convolution oracle is compared at.
pub fn mean_filter(plane: &ndarray::ArrayView2<'_, f64>, window: usize) -> Result<Array2<f64>> {
    let (h, w) = plane.dim();
    if window == 0 {
        return Err(Error::InvalidDimensions("mean filter window 0".into()));
    }
    if h < window || w < window {
        return Err(Error::ImageTooSmall { h, w, window });
    }
    // 'same' alignment for an even window: the window for output i spans
    // [i - pad_lo, i + pad_hi] in input coordinates.
    let pad_lo = (window - 1) / 2;
    let pad_hi = window - 1 - pad_lo;

    let clamp = |i: isize, len: usize| -> usize { i.clamp(0, len as isize - 1) as usize };

    // Horizontal pass.
    let mut horiz = Array2::<f64>::zeros((h, w));
    let mut prefix = vec![0.0f64; w + window + 1];
    for r in 0..h {
        prefix[0] = 0.0;
        for (j, p) in (-(pad_lo as isize)..(w + pad_hi) as isize).enumerate() {
            prefix[j + 1] = prefix[j] + plane[[r, clamp(p, w)]];
        }
        for c in 0..w {
            horiz[[r, c]] = prefix[c + window] - prefix[c];
        }
    }
    // Vertical pass over the horizontal sums.
    let mut out = Array2::<f64>::zeros((h, w));
    let norm = (window * window) as f64;
    let mut col_prefix = vec![0.0f64; h + window + 1];
    for c in 0..w {
        col_prefix[0] = 0.0;
        for (j, p) in (-(pad_lo as isize)..(h + pad_hi) as isize).enumerate() {
            col_prefix[j + 1] = col_prefix[j] + horiz[[clamp(p, h), c]];
        }
        for r in 0..h {
            out[[r, c]] = (col_prefix[r + window] - col_prefix[r]) / norm;
        }
    }
    Ok(out)
}

/// Mean-filter segmentation: grayscale, 50% bilinear downsample, sliding
/// mean, then Otsu binarization. The output mask is at the downsampled
/// resolution; callers resize as needed.
pub fn spatial_segment(frame: &ImageFrame, opts: &SegmentOptions) -> Result<(BinaryMask, OtsuResult)> {
    let gray_owned;
    let gray = if frame.channels() == 3 {
        gray_owned = frame.to_grayscale()?;
        &gray_owned
    } else {
        frame
    };
    let th = ((gray.height() as f64 * opts.downsample).round() as usize).max(1);
    let tw = ((gray.width() as f64 * opts.downsample).round() as usize).max(1);
    let small = gray.resized(th, tw, crate::img::Interp::Bilinear)?;
    let filtered = mean_filter(&small.plane(), opts.window)?;
    let otsu = otsu_from_plane(&filtered.view())?;
    let mask = binarize(&filtered.view(), otsu.threshold, opts.invert);
    Ok((mask, otsu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive 256-level oracle: recompute class statistics from the raw
    /// pixel list at every split, independent of the histogram path.
    pub(crate) fn otsu_oracle(pixels: &[f64]) -> Option<(usize, f64)> {
        let bins: Vec<usize> = pixels.iter().map(|&v| quantize(v)).collect();
        let n = bins.len() as f64;
        let mut best: Option<(usize, f64)> = None;
        for k in 0..OTSU_LEVELS {
            let lo: Vec<f64> = bins
                .iter()
                .filter(|&&b| b < k)
                .map(|&b| b as f64 / 255.0)
                .collect();
            let hi: Vec<f64> = bins
                .iter()
                .filter(|&&b| b >= k)
                .map(|&b| b as f64 / 255.0)
                .collect();
            if lo.is_empty() || hi.is_empty() {
                continue;
            }
            let w0 = lo.len() as f64 / n;
            let w1 = hi.len() as f64 / n;
            let mu0 = lo.iter().sum::<f64>() / lo.len() as f64;
            let mu1 = hi.iter().sum::<f64>() / hi.len() as f64;
            let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
            if var > best.map_or(0.0, |(_, v)| v) {
                best = Some((k, var));
            }
        }
        best
    }

    fn gray_frame(values: Array2<f64>) -> ImageFrame {
        ImageFrame::new(values.insert_axis(ndarray::Axis(0)), 0.0, "t").unwrap()
    }

    fn random_gray(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageFrame {
        gray_frame(Array2::from_shape_fn((h, w), |_| {
            rng.gen_range(0u8..=255) as f64 / 255.0
        }))
    }

    #[test]
    fn otsu_separates_two_populations() {
        let vals = Array2::from_shape_fn((4, 4), |(r, _)| if r < 2 { 0.0 } else { 1.0 });
        let res = otsu_threshold(&gray_frame(vals)).unwrap();
        // Lowest tie-breaking level is 1.
        assert_eq!(res.threshold, 1.0 / 255.0);
        assert!(res.threshold > 0.0 && res.threshold < 1.0);
    }

    #[test]
    fn otsu_rejects_constant_image() {
        let res = otsu_threshold(&gray_frame(Array2::from_elem((8, 8), 0.5)));
        assert!(matches!(res, Err(Error::DegenerateHistogram)));
    }

    #[test]
    fn otsu_matches_bruteforce_oracle() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = random_gray(&mut rng, 32, 32);
            let res = otsu_threshold(&frame).unwrap();
            let pixels: Vec<f64> = frame.plane().iter().copied().collect();
            let (k, var) = otsu_oracle(&pixels).unwrap();
            assert_eq!(res.threshold, k as f64 / 255.0, "seed {seed}");
            assert!((res.between_class_variance - var).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn threshold_segment_picks_bright_class() {
        let vals = Array2::from_shape_fn((2, 4), |(_, c)| if c % 2 == 0 { 0.1 } else { 0.9 });
        let (mask, _) = threshold_segment(&gray_frame(vals), &SegmentOptions::default()).unwrap();
        for ((_, c), &v) in mask.values.indexed_iter() {
            assert_eq!(v, u8::from(c % 2 == 1));
        }
    }

    #[test]
    fn threshold_segment_invert_flag() {
        let vals = Array2::from_shape_fn((2, 4), |(_, c)| if c % 2 == 0 { 0.1 } else { 0.9 });
        let opts = SegmentOptions {
            invert: true,
            ..Default::default()
        };
        let (mask, _) = threshold_segment(&gray_frame(vals), &opts).unwrap();
        for ((_, c), &v) in mask.values.indexed_iter() {
            assert_eq!(v, u8::from(c % 2 == 0));
        }
    }

    #[test]
    fn threshold_segment_rgb_converts_first() {
        let pixels = Array3::from_shape_fn((3, 2, 2), |(ch, _, c)| {
            if ch == 1 && c == 1 {
                1.0
            } else {
                0.0
            }
        });
        let frame = ImageFrame::new(pixels, 0.0, "rgb").unwrap();
        let (mask, _) = threshold_segment(&frame, &SegmentOptions::default()).unwrap();
        assert_eq!(mask.values[[0, 1]], 1);
        assert_eq!(mask.values[[0, 0]], 0);
    }

    fn mask_of(rows: &[&[u8]]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::new(Array2::from_shape_fn((h, w), |(r, c)| rows[r][c])).unwrap()
    }

    #[test]
    fn tlis_zero_last_is_identity() {
        let seq = vec![mask_of(&[&[1, 0], &[1, 1]]), mask_of(&[&[0, 0], &[0, 0]])];
        let out = tlis(&seq).unwrap();
        assert_eq!(out[0], seq[0]);
        assert_eq!(out[1], seq[1]);
    }

    #[test]
    fn tlis_removes_last_mask_everywhere() {
        let seq = vec![
            mask_of(&[&[1, 1], &[0, 1]]),
            mask_of(&[&[1, 0], &[1, 1]]),
            mask_of(&[&[0, 1], &[1, 0]]),
        ];
        let out = tlis(&seq).unwrap();
        // Wherever the last mask is 1, every output must be 0.
        for m in &out {
            assert_eq!(m.values[[0, 1]], 0);
            assert_eq!(m.values[[1, 0]], 0);
        }
        // Self-subtraction: the last output is all-zero.
        assert!(out[2].values.iter().all(|&v| v == 0));
        // Outputs stay binary.
        assert!(out.iter().all(|m| m.values.iter().all(|&v| v <= 1)));
    }

    #[test]
    fn tlis_errors() {
        assert!(matches!(tlis(&[]), Err(Error::EmptySequence)));
        let seq = vec![mask_of(&[&[1, 0]]), mask_of(&[&[1], &[0]])];
        assert!(matches!(tlis(&seq), Err(Error::DimensionMismatch { .. })));
    }

    /// Direct O(k^2) sliding-window oracle with replicate padding.
    pub(crate) fn mean_filter_oracle(plane: &Array2<f64>, window: usize) -> Array2<f64> {
        let (h, w) = plane.dim();
        let pad_lo = (window - 1) / 2;
        let mut out = Array2::<f64>::zeros((h, w));
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for dr in 0..window {
                    for dc in 0..window {
                        let rr = (r as isize + dr as isize - pad_lo as isize)
                            .clamp(0, h as isize - 1) as usize;
                        let cc = (c as isize + dc as isize - pad_lo as isize)
                            .clamp(0, w as isize - 1) as usize;
                        acc += plane[[rr, cc]];
                    }
                }
                out[[r, c]] = acc / (window * window) as f64;
            }
        }
        out
    }

    #[test]
    fn mean_filter_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &window in &[3usize, 4, 30] {
            let plane = Array2::from_shape_fn((35, 41), |_| rng.gen::<f64>());
            let fast = mean_filter(&plane.view(), window).unwrap();
            let slow = mean_filter_oracle(&plane, window);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12, "window {window}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mean_filter_dilutes_single_speck() {
        let mut plane = Array2::<f64>::zeros((90, 90));
        plane[[45, 45]] = 1.0;
        let out = mean_filter(&plane.view(), 30).unwrap();
        let norm = 1.0 / 900.0;
        assert!((out[[45, 45]] - norm).abs() < 1e-12);
        assert!(out.iter().all(|&v| v <= norm + 1e-12));
    }

    #[test]
    fn spatial_segment_constant_image_is_degenerate() {
        let frame = gray_frame(Array2::from_elem((120, 120), 0.4));
        assert!(matches!(
            spatial_segment(&frame, &SegmentOptions::default()),
            Err(Error::DegenerateHistogram)
        ));
    }

    #[test]
    fn spatial_segment_too_small_after_downsampling() {
        let frame = gray_frame(Array2::from_shape_fn((40, 40), |(r, c)| {
            ((r * c) % 7) as f64 / 7.0
        }));
        assert!(matches!(
            spatial_segment(&frame, &SegmentOptions::default()),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn spatial_segment_output_resolution_is_downsampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = random_gray(&mut rng, 120, 160);
        let (mask, _) = spatial_segment(&frame, &SegmentOptions::default()).unwrap();
        assert_eq!(mask.values.dim(), (60, 80));
        assert!(mask.values.iter().all(|&v| v <= 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tlis_is_idempotent_and_never_adds_fuel(seed in 0u64..5000, n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq: Vec<BinaryMask> = (0..n)
                .map(|_| BinaryMask::new(Array2::from_shape_fn((6, 7), |_| rng.gen_range(0u8..=1))).unwrap())
                .collect();
            let once = tlis(&seq).unwrap();
            let twice = tlis(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            for (orig, sub) in seq.iter().zip(&once) {
                for (&a, &b) in orig.values.iter().zip(sub.values.iter()) {
                    prop_assert!(b <= a, "0 -> 1 flip");
                }
            }
        }

        #[test]
        fn mean_filter_commutes_with_constant_shift(seed in 0u64..5000, shift in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plane = Array2::from_shape_fn((12, 15), |_| rng.gen_range(0.0..0.5));
            let shifted = plane.mapv(|v| v + shift);
            let a = mean_filter(&plane.view(), 5).unwrap();
            let b = mean_filter(&shifted.view(), 5).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((y - x - shift).abs() < 1e-12);
            }
        }
    }
}
