//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame is already single-channel; grayscale conversion expects RGB input")]
    AlreadyGrayscale,

    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("degenerate histogram: image is constant, no threshold separates two classes")]
    DegenerateHistogram,

    #[error("mask sequence is empty")]
    EmptySequence,

    #[error("image too small for the spatial filter: {h}x{w} after downsampling, window is {window}x{window}")]
    ImageTooSmall { h: usize, w: usize, window: usize },

    #[error("cubic fit needs at least {needed} points, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("rank-deficient fit: fewer than 4 distinct sample times")]
    RankDeficientFit,

    #[error("truth regression rate is zero; relative error undefined")]
    ZeroTruthRate,

    #[error("no columns left to compare: all truth heights are zero")]
    AllColumnsExcluded,

    #[error("no column is valid in every frame; cannot aggregate a height series")]
    NoCommonColumns,

    #[error("time stamps must be strictly increasing (frame {index})")]
    NonIncreasingTimes { index: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("flux {label:?} has no frames")]
    EmptyFlux { label: String },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite activations in forward pass")]
    NonFiniteActivations,

    #[error("targets must be binary (0 or 1)")]
    NonBinaryTarget,

    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("input {h}x{w} not divisible by 2^depth = {factor}")]
    NotDivisible { h: usize, w: usize, factor: usize },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("manifest error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("profile underflow: fuel height clamped to zero in {count} column-frames")]
    ProfileUnderflow { count: usize },

    #[error("empty results: nothing to report")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
