//! Single-sampling stability: how much a video's score moves between
//! independent fragment draws, and how often a single draw orders a pair of
//! videos the same way a multi-draw ensemble does.

use fragvqa_core::metrics::srcc;
use fragvqa_core::sampling::{SampleOptions, Variant};
use fragvqa_core::VideoClip;
use fragvqa_net::Fanet;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, Dataset};
use crate::eval::score_rounds;
use crate::{Error, Result, REPORT_SCHEMA_VERSION};

const REPEAT_STREAM: u64 = 0x5167;
const ENSEMBLE_STREAM: u64 = 0xe45e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityOptions {
    pub variant: Variant,
    pub n_repeats: usize,
    pub ensemble_k: usize,
    pub seed: u64,
    /// Nominal label scale used to normalize the standard deviation.
    pub score_range: (f64, f64),
    pub upscale_small: bool,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Gms,
            n_repeats: 16,
            ensemble_k: 6,
            seed: 0,
            score_range: (1.0, 5.0),
            upscale_small: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub schema_version: u32,
    pub variant: Variant,
    pub n_repeats: usize,
    pub ensemble_k: usize,
    pub seed: u64,
    pub videos: usize,
    /// Mean over videos of the sample standard deviation across repeats.
    pub mean_std: f64,
    pub score_range: (f64, f64),
    pub normalized_std: f64,
    /// Mean over repeats of the pair accuracy against the ensemble.
    pub pair_accuracy: f64,
    pub pair_accuracy_min: f64,
    pub per_repeat_accuracy: Vec<f64>,
    pub ensemble_srcc: Option<f64>,
    pub mean_single_srcc: Option<f64>,
}

/// Fraction of pairs ordered the same way by `single` and `reference`.
/// Pairs tied in `reference` are skipped; a tie in `single` only matches a
/// tie. Returns 1 when no pair is ordered.
pub fn pair_accuracy(single: &[f64], reference: &[f64]) -> f64 {
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..reference.len() {
        for j in i + 1..reference.len() {
            let r = reference[i].total_cmp(&reference[j]);
            if r.is_eq() {
                continue;
            }
            total += 1;
            if single[i].total_cmp(&single[j]) == r {
                agree += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn stability_analysis(model: &Fanet, dataset: &Dataset, opts: &StabilityOptions) -> Result<StabilityRecord> {
    if opts.n_repeats < 2 || opts.ensemble_k < 1 {
        return Err(Error::Config("stability needs n_repeats >= 2 and ensemble_k >= 1".into()));
    }
    let span = opts.score_range.1 - opts.score_range.0;
    if !(span > 0.0) {
        return Err(Error::Config(format!("empty score range {:?}", opts.score_range)));
    }
    let clips: Vec<&VideoClip> = dataset.items.iter().map(|i| &i.clip).collect();
    let so = SampleOptions {
        upscale_small: opts.upscale_small,
    };
    let seeds = |stream: u64, n: usize| -> Vec<u64> { (0..n as u64).map(|i| derive_seed(opts.seed, stream, i)).collect() };
    let repeats = score_rounds(model, &clips, opts.variant, &seeds(REPEAT_STREAM, opts.n_repeats), so)?;
    let ens_rounds = score_rounds(model, &clips, opts.variant, &seeds(ENSEMBLE_STREAM, opts.ensemble_k), so)?;
    let n = clips.len();
    let ensemble: Vec<f64> = (0..n)
        .map(|v| ens_rounds.iter().map(|r| r[v]).sum::<f64>() / opts.ensemble_k as f64)
        .collect();
    let mean_std = (0..n)
        .map(|v| sample_std(&repeats.iter().map(|r| r[v]).collect::<Vec<_>>()))
        .sum::<f64>()
        / n as f64;
    let per_repeat_accuracy: Vec<f64> = repeats.iter().map(|r| pair_accuracy(r, &ensemble)).collect();
    let labels = dataset.labels();
    let single: Vec<f64> = repeats.iter().filter_map(|r| srcc(r, &labels).ok()).collect();
    Ok(StabilityRecord {
        schema_version: REPORT_SCHEMA_VERSION,
        variant: opts.variant,
        n_repeats: opts.n_repeats,
        ensemble_k: opts.ensemble_k,
        seed: opts.seed,
        videos: n,
        mean_std,
        score_range: opts.score_range,
        normalized_std: mean_std / span,
        pair_accuracy: per_repeat_accuracy.iter().sum::<f64>() / per_repeat_accuracy.len() as f64,
        pair_accuracy_min: per_repeat_accuracy.iter().copied().fold(f64::INFINITY, f64::min),
        per_repeat_accuracy,
        ensemble_srcc: srcc(&ensemble, &labels).ok(),
        mean_single_srcc: (!single.is_empty()).then(|| single.iter().sum::<f64>() / single.len() as f64),
    })
}
