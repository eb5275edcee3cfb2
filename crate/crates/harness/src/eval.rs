use fragvqa_core::metrics::{krcc, plcc, srcc};
use fragvqa_core::sampling::{SampleOptions, Variant};
use fragvqa_core::VideoClip;
use fragvqa_net::Fanet;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, score_clips, Dataset};
use crate::{Result, REPORT_SCHEMA_VERSION};

const SAMPLE_STREAM: u64 = 0x5a17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub variant: Variant,
    /// Seeded samplings averaged per video.
    pub n_samples: usize,
    pub seed: u64,
    pub upscale_small: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Gms,
            n_samples: 1,
            seed: 0,
            upscale_small: false,
        }
    }
}

impl EvalOptions {
    /// Base seed of every sampling round.
    pub fn sample_seeds(&self) -> Vec<u64> {
        (0..self.n_samples as u64)
            .map(|i| derive_seed(self.seed, SAMPLE_STREAM, i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub id: String,
    pub mos: f64,
    /// Mean of `samples`.
    pub score: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
}

impl Correlations {
    pub fn of(pred: &[f64], gt: &[f64]) -> Result<Self> {
        Ok(Self {
            srcc: srcc(pred, gt)?,
            plcc: plcc(pred, gt)?,
            krcc: krcc(pred, gt)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema_version: u32,
    pub variant: Variant,
    pub n_samples: usize,
    pub seed: u64,
    pub count: usize,
    #[serde(flatten)]
    pub metrics: Correlations,
    pub videos: Vec<VideoScore>,
}

/// Per-round scores: `rounds[r][v]` for video `v` under round seed `r`.
/// Video `v` in a round seeded `s` samples with `derive_seed(s, v, 0)`.
pub fn score_rounds(
    model: &Fanet,
    clips: &[&VideoClip],
    variant: Variant,
    round_seeds: &[u64],
    opts: SampleOptions,
) -> Result<Vec<Vec<f64>>> {
    round_seeds
        .iter()
        .map(|&s| {
            let seeds: Vec<u64> = (0..clips.len() as u64).map(|v| derive_seed(s, v, 0)).collect();
            score_clips(model, clips, variant, &seeds, opts)
        })
        .collect()
}

/// Scores `dataset` once per round seed and averages per video.
pub fn evaluate_with_seeds(
    model: &Fanet,
    dataset: &Dataset,
    variant: Variant,
    round_seeds: &[u64],
    upscale_small: bool,
) -> Result<EvalRecord> {
    let clips: Vec<&VideoClip> = dataset.items.iter().map(|i| &i.clip).collect();
    let opts = SampleOptions { upscale_small };
    let rounds = score_rounds(model, &clips, variant, round_seeds, opts)?;
    let videos: Vec<VideoScore> = dataset
        .items
        .iter()
        .enumerate()
        .map(|(v, item)| {
            let samples: Vec<f64> = rounds.iter().map(|r| r[v]).collect();
            VideoScore {
                id: item.id.clone(),
                mos: item.mos,
                score: samples.iter().sum::<f64>() / samples.len() as f64,
                samples,
            }
        })
        .collect();
    let pred: Vec<f64> = videos.iter().map(|v| v.score).collect();
    Ok(EvalRecord {
        schema_version: REPORT_SCHEMA_VERSION,
        variant,
        n_samples: round_seeds.len(),
        seed: round_seeds.first().copied().unwrap_or_default(),
        count: videos.len(),
        metrics: Correlations::of(&pred, &dataset.labels())?,
        videos,
    })
}

pub fn evaluate(model: &Fanet, dataset: &Dataset, opts: &EvalOptions) -> Result<EvalRecord> {
    let mut rec = evaluate_with_seeds(model, dataset, opts.variant, &opts.sample_seeds(), opts.upscale_small)?;
    rec.seed = opts.seed;
    Ok(rec)
}
