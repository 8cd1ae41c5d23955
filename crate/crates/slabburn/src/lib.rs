//! Measurement of solid-fuel regression rate from slab-burner image sequences.
//!
//! The pipeline turns a time-stamped sequence of side-view burn images into a
//! single physical number: the rate at which the fuel surface recedes, in
//! mm/s. The stages are:
//!
//! 1. **Segmentation** — classify every pixel as fuel or background, either
//!    with classical filters ([`classic`]) or with a dropout-trained U-Net
//!    ([`unet`]) that also yields a per-pixel uncertainty map.
//! 2. **Profile tracking** — scan each mask column for the topmost fuel
//!    pixel and enforce the physical rule that fuel can only recede
//!    ([`rate`]).
//! 3. **Rate estimation** — fit a cubic to the height-time curve and
//!    differentiate it, with error bars derived from the uncertainty maps
//!    ([`rate`]).
//!
//! The [`synth`] module generates slab-burner sequences with analytically
//! known fuel profiles and the characteristic noise of the real apparatus
//! (wax splatter, soot, flame ghosting, over-saturation), so every stage can
//! be validated against exact ground truth. [`eval`] holds the comparison
//! metrics and the cross-validation drivers.

pub mod augment;
pub mod classic;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod img;
pub mod rate;
pub mod report;
pub mod synth;
pub mod unet;

pub use error::{Error, Result};
pub use synth::split_seed as derive_seed;
pub use img::{BinaryMask, ImageFrame, Interp, ProbabilityMap, UncertaintyMap};

// Book chapters double as doctests so the guide can never drift from the
// library. `cargo test --doc` runs every fenced Rust block in book/src.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }

    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Images, "../../../book/src/images.md");
    chapter!(Classical, "../../../book/src/classical.md");
    chapter!(Profiles, "../../../book/src/profiles.md");
    chapter!(Unet, "../../../book/src/unet.md");
    chapter!(Uncertainty, "../../../book/src/uncertainty.md");
    chapter!(Synthetic, "../../../book/src/synthetic.md");
    chapter!(Evaluation, "../../../book/src/evaluation.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
