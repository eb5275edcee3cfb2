use fragvqa_core::media::{load_clip, Manifest, Split};
use fragvqa_core::sampling::{sample, FragmentBatch, GridSpec, SampleOptions, Variant};
use fragvqa_core::VideoClip;
use fragvqa_net::{fragments_to_tensor, DType, Fanet};

use crate::{Error, Result};

/// Clips scored per forward pass during evaluation. Fixed so every
/// evaluation groups videos identically.
pub const EVAL_CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct Item {
    /// Manifest path as written, used as the stable video id.
    pub id: String,
    pub mos: f64,
    pub clip: VideoClip,
}

/// Decoded clips of one manifest split, in manifest order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub items: Vec<Item>,
}

impl Dataset {
    /// Loads every entry of `split`, or all entries when `split` is `None`.
    pub fn load(manifest: &Manifest, split: Option<Split>) -> Result<Self> {
        let items = manifest
            .entries
            .iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .map(|e| {
                Ok(Item {
                    id: e.path.display().to_string(),
                    mos: e.mos,
                    clip: load_clip(&manifest.resolve(e))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { items })
    }

    pub fn from_items(items: Vec<Item>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.mos).collect()
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for `(base, a, b)`.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(base) ^ a) ^ b.rotate_left(32))
}

/// Samples one fragment batch per clip. `seeds[i]` drives clip `i`.
pub fn sample_all(
    clips: &[&VideoClip],
    spec: &GridSpec,
    variant: Variant,
    seeds: &[u64],
    opts: SampleOptions,
) -> Result<Vec<FragmentBatch>> {
    clips
        .iter()
        .zip(seeds)
        .map(|(c, &s)| Ok(sample(c, spec, variant, s, opts)?))
        .collect()
}

/// Scores clips in fixed chunks of [`EVAL_CHUNK`].
pub fn score_clips(
    model: &Fanet,
    clips: &[&VideoClip],
    variant: Variant,
    seeds: &[u64],
    opts: SampleOptions,
) -> Result<Vec<f64>> {
    if clips.len() != seeds.len() {
        return Err(Error::Config(format!("{} clips but {} seeds", clips.len(), seeds.len())));
    }
    let spec = model.config().fragments;
    let mut out = Vec::with_capacity(clips.len());
    for (cs, ss) in clips.chunks(EVAL_CHUNK).zip(seeds.chunks(EVAL_CHUNK)) {
        let batches = sample_all(cs, &spec, variant, ss, opts)?;
        let refs: Vec<&FragmentBatch> = batches.iter().collect();
        let x = fragments_to_tensor(&refs, model.dtype(), model.device())?;
        let s = model.scores(&x)?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        out.extend(s);
    }
    Ok(out)
}
