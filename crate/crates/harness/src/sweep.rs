use fragvqa_core::sampling::Variant;
use fragvqa_net::Fanet;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::eval::{evaluate, Correlations, EvalOptions};
use crate::{Result, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub name: String,
    pub count: usize,
    #[serde(flatten)]
    pub metrics: Correlations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub variant: Variant,
    pub n_samples: usize,
    pub seed: u64,
    pub groups: Vec<GroupMetrics>,
}

impl SweepRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Evaluates every named group with the same model and options.
pub fn resolution_sweep(model: &Fanet, groups: &[(String, Dataset)], opts: &EvalOptions) -> Result<SweepRecord> {
    let groups = groups
        .iter()
        .map(|(name, ds)| {
            let rec = evaluate(model, ds, opts)?;
            Ok(GroupMetrics {
                name: name.clone(),
                count: rec.count,
                metrics: rec.metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepRecord {
        schema_version: REPORT_SCHEMA_VERSION,
        variant: opts.variant,
        n_samples: opts.n_samples,
        seed: opts.seed,
        groups,
    })
}
