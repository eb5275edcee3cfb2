//! Training, evaluation and analysis around the fragment attention network:
//! the PLCC-loss training loop, seeded (ensemble) evaluation, single-sampling
//! stability, per-resolution sweeps and an analytic FLOPs counter.
//!
//! Every report carries [`REPORT_SCHEMA_VERSION`] and is fully determined by
//! its seeds, configs and inputs.

pub mod data;
pub mod error;
pub mod eval;
pub mod flops;
pub mod stability;
pub mod sweep;
pub mod train;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub use data::{derive_seed, Dataset, Item, EVAL_CHUNK};
pub use error::{Error, Result};
pub use eval::{evaluate, evaluate_with_seeds, Correlations, EvalOptions, EvalRecord, VideoScore};
pub use flops::{flops_count, FlopsReport, LayerCost};
pub use stability::{pair_accuracy, stability_analysis, StabilityOptions, StabilityRecord};
pub use sweep::{resolution_sweep, GroupMetrics, SweepRecord};
pub use train::{train, train_datasets, train_with, EpochRecord, TrainConfig, TrainReport};
