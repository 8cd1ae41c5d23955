//! Image and mask representation shared by every other module.
//!
//! Pixels live in `[0, 1]` as `f64`, shaped channel-first `(C, H, W)`.
//! Files are 8-bit PNG; loading maps `k` to `k / 255` and saving rounds
//! back, so mask round trips are exact and image round trips are lossless
//! to `1/255`.

use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Grayscale weights for the standard RGB luma conversion.
pub const GRAY_WEIGHTS: [f64; 3] = [0.2989, 0.5870, 0.1140];

/// A time-stamped single image from a burn sequence.
///
/// `pixels` is `(C, H, W)` with `C` either 1 (grayscale) or 3 (RGB) and all
/// intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub pixels: Array3<f64>,
    /// Capture time in seconds relative to ignition.
    pub time_s: f64,
    /// Frame identifier, e.g. `"A34"`.
    pub label: String,
    /// Oxidizer flux tag in kg/m^2-s, when known.
    pub flux_kg_m2s: Option<f64>,
}

impl ImageFrame {
    /// Builds a frame from pixel data, validating the type invariants.
    pub fn new(pixels: Array3<f64>, time_s: f64, label: impl Into<String>) -> Result<Self> {
        let (c, h, w) = pixels.dim();
        if c != 1 && c != 3 {
            return Err(Error::ChannelMismatch { expected: 3, got: c });
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidDimensions(format!("{h}x{w} frame")));
        }
        if time_s < 0.0 || !time_s.is_finite() {
            return Err(Error::InvalidDimensions(format!("time_s = {time_s}")));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidDimensions(
                "pixel intensities outside [0, 1]".into(),
            ));
        }
        Ok(Self {
            pixels,
            time_s,
            label: label.into(),
            flux_kg_m2s: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().2
    }

    /// Converts an RGB frame to grayscale with the weighted sum
    /// `0.2989 R + 0.5870 G + 0.1140 B`.
    ///
    /// A frame that is already grayscale is rejected rather than passed
    /// through, so a misconfigured pipeline surfaces instead of silently
    /// double-converting.
    pub fn to_grayscale(&self) -> Result<ImageFrame> {
        if self.channels() == 1 {
            return Err(Error::AlreadyGrayscale);
        }
        let (_, h, w) = self.pixels.dim();
        let mut gray = Array2::<f64>::zeros((h, w));
        for r in 0..h {
            for c in 0..w {
                let v = GRAY_WEIGHTS[0] * self.pixels[[0, r, c]]
                    + GRAY_WEIGHTS[1] * self.pixels[[1, r, c]]
                    + GRAY_WEIGHTS[2] * self.pixels[[2, r, c]];
                gray[[r, c]] = v.clamp(0.0, 1.0);
            }
        }
        Ok(ImageFrame {
            pixels: gray.insert_axis(ndarray::Axis(0)),
            time_s: self.time_s,
            label: self.label.clone(),
            flux_kg_m2s: self.flux_kg_m2s,
        })
    }

    /// View of a single-channel frame as a 2-D array.
    pub fn plane(&self) -> ndarray::ArrayView2<'_, f64> {
        self.pixels.index_axis(ndarray::Axis(0), 0)
    }

    /// Resizes to `target_h x target_w`, preserving metadata.
    pub fn resized(&self, target_h: usize, target_w: usize, kind: Interp) -> Result<ImageFrame> {
        check_target(target_h, target_w)?;
        let (c, _, _) = self.pixels.dim();
        let mut out = Array3::<f64>::zeros((c, target_h, target_w));
        for ch in 0..c {
            let plane = self.pixels.index_axis(ndarray::Axis(0), ch);
            let resized = match kind {
                Interp::Bilinear => resize_bilinear(&plane, target_h, target_w),
                Interp::Nearest => resize_nearest(&plane, target_h, target_w),
            };
            out.index_axis_mut(ndarray::Axis(0), ch).assign(&resized);
        }
        Ok(ImageFrame {
            pixels: out,
            time_s: self.time_s,
            label: self.label.clone(),
            flux_kg_m2s: self.flux_kg_m2s,
        })
    }
}

/// Per-pixel fuel classification: 1 = fuel, 0 = background/noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub values: Array2<u8>,
}

impl BinaryMask {
    pub fn new(values: Array2<u8>) -> Result<Self> {
        if values.iter().any(|&v| v > 1) {
            return Err(Error::NonBinaryTarget);
        }
        Ok(Self { values })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            values: Array2::zeros((h, w)),
        }
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// Nearest-neighbor resize; the output stays strictly binary.
    pub fn resized(&self, target_h: usize, target_w: usize) -> Result<BinaryMask> {
        check_target(target_h, target_w)?;
        let (h, w) = self.values.dim();
        let mut out = Array2::<u8>::zeros((target_h, target_w));
        let sy = h as f64 / target_h as f64;
        let sx = w as f64 / target_w as f64;
        for r in 0..target_h {
            let sr = nearest_index(r, sy, h);
            for c in 0..target_w {
                let sc = nearest_index(c, sx, w);
                out[[r, c]] = self.values[[sr, sc]];
            }
        }
        Ok(BinaryMask { values: out })
    }

    /// Fraction of pixels classified as fuel.
    pub fn fuel_fraction(&self) -> f64 {
        let total = self.values.len();
        let ones: usize = self.values.iter().map(|&v| v as usize).sum();
        ones as f64 / total as f64
    }
}

/// Per-pixel probability that a pixel is fuel; noise probability is its
/// complement.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub p_fuel: Array2<f64>,
}

impl ProbabilityMap {
    pub fn new(p_fuel: Array2<f64>) -> Result<Self> {
        if p_fuel.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidDimensions(
                "probabilities outside [0, 1]".into(),
            ));
        }
        Ok(Self { p_fuel })
    }

    /// Thresholds the mean probability at 0.5 into a binary mask.
    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask {
            values: self.p_fuel.mapv(|p| u8::from(p >= 0.5)),
        }
    }

    /// Binary entropy of each pixel's (fuel, noise) probability pair,
    /// in nats, with the convention `0 ln 0 = 0`.
    pub fn entropy(&self) -> UncertaintyMap {
        UncertaintyMap {
            u: self.p_fuel.mapv(binary_entropy),
        }
    }
}

/// Per-pixel entropy of the averaged class probabilities, in `[0, ln 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub u: Array2<f64>,
}

impl UncertaintyMap {
    /// Mean entropy over the whole map.
    ///
    /// Neumaier-compensated so a uniform map's mean equals the uniform
    /// value; the `u > tau` edge rule in the rate pipeline depends on it.
    pub fn mean(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &v in self.u.iter() {
            let t = sum + v;
            comp += if sum.abs() >= v.abs() {
                (sum - t) + v
            } else {
                (v - t) + sum
            };
            sum = t;
        }
        (sum + comp) / self.u.len() as f64
    }

    /// Nearest-neighbor resize, preserving entropy values exactly.
    pub fn resized(&self, target_h: usize, target_w: usize) -> Result<UncertaintyMap> {
        check_target(target_h, target_w)?;
        let (h, w) = self.u.dim();
        let sy = h as f64 / target_h as f64;
        let sx = w as f64 / target_w as f64;
        let mut out = Array2::<f64>::zeros((target_h, target_w));
        for r in 0..target_h {
            let sr = nearest_index(r, sy, h);
            for c in 0..target_w {
                out[[r, c]] = self.u[[sr, nearest_index(c, sx, w)]];
            }
        }
        Ok(UncertaintyMap { u: out })
    }
}

/// Binary entropy in nats; exactly `ln 2` at `p = 0.5`, zero at the ends.
pub fn binary_entropy(p: f64) -> f64 {
    let q = 1.0 - p;
    let term = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    (-(term(p) + term(q))).max(0.0)
}

/// Interpolation used by [`ImageFrame::resized`]: bilinear for images,
/// nearest for anything that must stay quantized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    Bilinear,
    Nearest,
}

fn check_target(target_h: usize, target_w: usize) -> Result<()> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidDimensions(format!(
            "resize target {target_h}x{target_w}"
        )));
    }
    Ok(())
}

fn nearest_index(dst: usize, scale: f64, src_len: usize) -> usize {
    (((dst as f64 + 0.5) * scale).floor() as usize).min(src_len - 1)
}

/// Bilinear resize with the half-pixel-center convention. The incremental
/// blend form `a + f (b - a)` makes identity and constant inputs bitwise
/// exact; outputs are clamped to the input's value range.
fn resize_bilinear(src: &ndarray::ArrayView2<'_, f64>, target_h: usize, target_w: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in src.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let sy = h as f64 / target_h as f64;
    let sx = w as f64 / target_w as f64;
    let mut out = Array2::<f64>::zeros((target_h, target_w));
    for r in 0..target_h {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for c in 0..target_w {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            let top = src[[y0, x0]] + dx * (src[[y0, x1]] - src[[y0, x0]]);
            let bot = src[[y1, x0]] + dx * (src[[y1, x1]] - src[[y1, x0]]);
            out[[r, c]] = (top + dy * (bot - top)).clamp(lo, hi);
        }
    }
    out
}

fn resize_nearest(src: &ndarray::ArrayView2<'_, f64>, target_h: usize, target_w: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let sy = h as f64 / target_h as f64;
    let sx = w as f64 / target_w as f64;
    let mut out = Array2::<f64>::zeros((target_h, target_w));
    for r in 0..target_h {
        let sr = nearest_index(r, sy, h);
        for c in 0..target_w {
            out[[r, c]] = src[[sr, nearest_index(c, sx, w)]];
        }
    }
    out
}

/// Loads an 8-bit PNG as an [`ImageFrame`] with intensities `k / 255`.
///
/// Time, label and flux are not stored in the PNG; the label defaults to the
/// file stem and the rest to zero/unknown until a manifest fills them in.
pub fn load_frame(path: impl AsRef<Path>) -> Result<ImageFrame> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let dynimg = image::open(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let pixels = match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            let mut arr = Array3::<f64>::zeros((1, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                arr[[0, y as usize, x as usize]] = p.0[0] as f64 / 255.0;
            }
            arr
        }
        image::DynamicImage::ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            let mut arr = Array3::<f64>::zeros((3, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                for ch in 0..3 {
                    arr[[ch, y as usize, x as usize]] = p.0[ch] as f64 / 255.0;
                }
            }
            arr
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{path:?}: expected 8-bit gray or RGB PNG, got {:?}",
                other.color()
            )))
        }
    };
    ImageFrame::new(pixels, 0.0, label)
}

/// Saves a frame as an 8-bit PNG, rounding `v` to `round(255 v)`.
pub fn save_frame(frame: &ImageFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = frame.pixels.dim();
    let quant = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    match c {
        1 => {
            let mut img = image::GrayImage::new(w as u32, h as u32);
            for r in 0..h {
                for col in 0..w {
                    img.put_pixel(
                        col as u32,
                        r as u32,
                        image::Luma([quant(frame.pixels[[0, r, col]])]),
                    );
                }
            }
            img.save(path)?;
        }
        3 => {
            let mut img = image::RgbImage::new(w as u32, h as u32);
            for r in 0..h {
                for col in 0..w {
                    let px = [
                        quant(frame.pixels[[0, r, col]]),
                        quant(frame.pixels[[1, r, col]]),
                        quant(frame.pixels[[2, r, col]]),
                    ];
                    img.put_pixel(col as u32, r as u32, image::Rgb(px));
                }
            }
            img.save(path)?;
        }
        _ => unreachable!("ImageFrame invariant: C in {{1, 3}}"),
    }
    Ok(())
}

/// Loads a mask PNG; pixels must be exactly 0 or 255.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let mut values = Array2::<u8>::zeros((h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        values[[y as usize, x as usize]] = match p.0[0] {
            0 => 0,
            255 => 1,
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "{path:?}: mask pixel {other} is neither 0 nor 255"
                )))
            }
        };
    }
    Ok(BinaryMask { values })
}

/// Saves a mask as an 8-bit PNG with fuel = 255, background = 0.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = mask.values.dim();
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            img.put_pixel(c as u32, r as u32, image::Luma([mask.values[[r, c]] * 255]));
        }
    }
    img.save(path.as_ref())?;
    Ok(())
}
