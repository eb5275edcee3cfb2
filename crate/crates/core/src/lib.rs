//! Data path for fragment-based video quality assessment.
//!
//! * [`media`] decodes and synthesizes frame stacks and reads dataset manifests.
//! * [`sampling`] turns a clip into *fragments*: raw-resolution mini-patches
//!   drawn once per grid cell, spliced back in grid order and shared across
//!   all frames. The naive baselines (resize, crop) and the fragment
//!   variants used for ablations live next to it.
//! * [`metrics`] holds the correlation coefficients used for evaluation.

pub mod error;
pub mod media;
pub mod metrics;
pub mod sampling;

pub use error::{Error, Result};
pub use media::VideoClip;
