//! Fragment attention network.
//!
//! A Video-Swin-style backbone (patch embedding, four stages of windowed
//! self-attention with shifted windows in alternate blocks, patch merging)
//! whose relative position biases are *gated*: pairs of positions in the same
//! fragment mini-patch read one bias table, pairs across a splice boundary
//! read another. The head regresses every feature position to a quality
//! value before pooling, which yields a per-mini-patch quality map alongside
//! the clip score.
//!
//! Tensors are channels-last, `[B, T, H, W, C]`, on the CPU. Models run in
//! `f32` for training and `f64` for numerical checks.

pub mod attention;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod head;
pub mod layers;
pub mod loss;
pub mod model;
pub mod quality_map;
pub mod window;

pub use candle_core::{DType, Device, Tensor};
pub use config::{FanetConfig, Preset, StageGeometry};
pub use error::{Error, Result};
pub use head::QualityOutput;
pub use model::{fragments_to_tensor, Fanet};
