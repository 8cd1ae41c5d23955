//! Paired image/mask augmentation: random flips and rotation.
//!
//! The same geometric transform is applied to the image and its mask —
//! bilinear resampling with reflected borders for the image, nearest for
//! the mask so it stays binary.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::img::{BinaryMask, ImageFrame};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Augmenter {
    pub hflip_p: f64,
    pub vflip_p: f64,
    /// Rotation range in degrees, sampled uniformly; `None` disables
    /// rotation.
    pub rotate_deg: Option<(f64, f64)>,
}

impl Default for Augmenter {
    /// Flips at 50% each and a full-circle rotation.
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            vflip_p: 0.5,
            rotate_deg: Some((-180.0, 180.0)),
        }
    }
}

impl Augmenter {
    /// Pass-through augmenter.
    pub fn none() -> Self {
        Self {
            hflip_p: 0.0,
            vflip_p: 0.0,
            rotate_deg: None,
        }
    }

    /// Draws one random transform and applies it to both the image and the
    /// mask. The RNG is always advanced the same number of times per call,
    /// so sample order stays reproducible regardless of which transforms
    /// fire.
    pub fn apply(
        &self,
        image: &ImageFrame,
        mask: &BinaryMask,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ImageFrame, BinaryMask)> {
        let do_h = rng.gen::<f64>() < self.hflip_p;
        let do_v = rng.gen::<f64>() < self.vflip_p;
        let angle = match self.rotate_deg {
            Some((lo, hi)) => {
                let a = rng.gen_range(lo..hi);
                Some(a)
            }
            None => None,
        };

        let mut img = image.clone();
        let mut msk = mask.clone();
        if do_h {
            img.pixels.invert_axis(ndarray::Axis(2));
            msk.values.invert_axis(ndarray::Axis(1));
        }
        if do_v {
            img.pixels.invert_axis(ndarray::Axis(1));
            msk.values.invert_axis(ndarray::Axis(0));
        }
        if let Some(deg) = angle {
            let rad = deg.to_radians();
            img = rotate_frame(&img, rad)?;
            msk = rotate_mask(&msk, rad);
        }
        Ok((img, msk))
    }
}

/// Reflects an integer index into `[0, len)` (edge-inclusive mirror).
fn reflect(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn source_coords(r: usize, c: usize, h: usize, w: usize, rad: f64) -> (f64, f64) {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let dy = r as f64 - cy;
    let dx = c as f64 - cx;
    let (sin, cos) = rad.sin_cos();
    // Inverse rotation of the output grid back onto the input.
    (cy + dy * cos - dx * sin, cx + dy * sin + dx * cos)
}

/// Rotates around the image center with bilinear sampling and reflected
/// borders.
pub fn rotate_frame(frame: &ImageFrame, rad: f64) -> Result<ImageFrame> {
    let (ch, h, w) = frame.pixels.dim();
    let mut out = ndarray::Array3::<f64>::zeros((ch, h, w));
    for r in 0..h {
        for c in 0..w {
            let (sy, sx) = source_coords(r, c, h, w, rad);
            let y0 = sy.floor() as isize;
            let x0 = sx.floor() as isize;
            let fy = sy - y0 as f64;
            let fx = sx - x0 as f64;
            let (y0r, y1r) = (reflect(y0, h), reflect(y0 + 1, h));
            let (x0r, x1r) = (reflect(x0, w), reflect(x0 + 1, w));
            for k in 0..ch {
                let p00 = frame.pixels[[k, y0r, x0r]];
                let p01 = frame.pixels[[k, y0r, x1r]];
                let p10 = frame.pixels[[k, y1r, x0r]];
                let p11 = frame.pixels[[k, y1r, x1r]];
                let top = p00 + fx * (p01 - p00);
                let bot = p10 + fx * (p11 - p10);
                out[[k, r, c]] = (top + fy * (bot - top)).clamp(0.0, 1.0);
            }
        }
    }
    let mut rotated = ImageFrame::new(out, frame.time_s, frame.label.clone())?;
    rotated.flux_kg_m2s = frame.flux_kg_m2s;
    Ok(rotated)
}

/// Rotates a mask with nearest-neighbor sampling and reflected borders.
pub fn rotate_mask(mask: &BinaryMask, rad: f64) -> BinaryMask {
    let (h, w) = mask.values.dim();
    let mut out = ndarray::Array2::<u8>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let (sy, sx) = source_coords(r, c, h, w, rad);
            let yr = reflect(sy.round() as isize, h);
            let xr = reflect(sx.round() as isize, w);
            out[[r, c]] = mask.values[[yr, xr]];
        }
    }
    BinaryMask { values: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use rand::SeedableRng;

    fn sample() -> (ImageFrame, BinaryMask) {
        let mask = BinaryMask::new(Array2::from_shape_fn((12, 12), |(r, _)| u8::from(r >= 6)))
            .unwrap();
        let pixels = Array3::from_shape_fn((1, 12, 12), |(_, r, c)| {
            if mask.values[[r, c]] == 1 {
                0.9
            } else {
                0.1 + 0.01 * (c as f64)
            }
        });
        (ImageFrame::new(pixels, 0.0, "s").unwrap(), mask)
    }

    #[test]
    fn identity_rotation_is_exact() {
        let (img, mask) = sample();
        let r = rotate_frame(&img, 0.0).unwrap();
        assert_eq!(r.pixels, img.pixels);
        assert_eq!(rotate_mask(&mask, 0.0), mask);
    }

    #[test]
    fn rotated_masks_stay_binary_and_paired() {
        let (img, mask) = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let aug = Augmenter::default();
        for _ in 0..20 {
            let (ri, rm) = aug.apply(&img, &mask, &mut rng).unwrap();
            assert!(rm.values.iter().all(|&v| v <= 1));
            assert_eq!(ri.pixels.dim(), img.pixels.dim());
            // The transform is shared: bright pixels should coincide with
            // mask fuel for the vast majority of pixels (interpolation can
            // disagree right on the boundary).
            let mut agree = 0usize;
            for ((r, c), &m) in rm.values.indexed_iter() {
                let bright = ri.pixels[[0, r, c]] > 0.5;
                if bright == (m == 1) {
                    agree += 1;
                }
            }
            assert!(agree as f64 / rm.values.len() as f64 > 0.9);
        }
    }

    #[test]
    fn half_turn_flips_both_axes() {
        let (img, mask) = sample();
        let r = rotate_mask(&mask, std::f64::consts::PI);
        let mut flipped = mask.values.clone();
        flipped.invert_axis(ndarray::Axis(0));
        flipped.invert_axis(ndarray::Axis(1));
        assert_eq!(r.values, flipped);
        let ri = rotate_frame(&img, std::f64::consts::PI).unwrap();
        let mut fi = img.pixels.clone();
        fi.invert_axis(ndarray::Axis(1));
        fi.invert_axis(ndarray::Axis(2));
        for (a, b) in ri.pixels.iter().zip(fi.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn none_augmenter_is_identity() {
        let (img, mask) = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ri, rm) = Augmenter::none().apply(&img, &mask, &mut rng).unwrap();
        assert_eq!(ri.pixels, img.pixels);
        assert_eq!(rm, mask);
    }
}
