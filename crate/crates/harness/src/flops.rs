//! Analytic cost of one forward pass.
//!
//! One multiply-accumulate is one unit. Element-wise work that is a single
//! add or scale per element (layer-norm affine, relative bias add) also
//! costs one unit per element. Softmax, GELU and linear-layer bias adds are
//! not counted. Attention runs on window-padded tokens, as the network does.

use fragvqa_net::config::NUM_STAGES;
use fragvqa_net::FanetConfig;
use serde::{Deserialize, Serialize};

pub const FLOPS_CONVENTION: &str =
    "1 unit per multiply-accumulate; layer-norm and bias-table adds 1 unit per element; softmax and GELU uncounted";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub convention: String,
    /// `(frames, height, width)` in pixels.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerCost>,
    pub total: u64,
    /// Everything except the regression head.
    pub backbone_total: u64,
}

impl FlopsReport {
    pub fn giga(&self) -> f64 {
        self.total as f64 / 1e9
    }

    pub fn backbone_giga(&self) -> f64 {
        self.backbone_total as f64 / 1e9
    }
}

pub fn flops_count(cfg: &FanetConfig, input: [usize; 3]) -> FlopsReport {
    let geo = cfg.stage_geometry(input);
    let mut layers = Vec::new();
    fn push(layers: &mut Vec<LayerCost>, name: String, macs: usize) {
        layers.push(LayerCost { name, macs: macs as u64 });
    }

    let [pt, ph, pw] = cfg.patch_stride;
    let c0 = cfg.embed_dim;
    let tokens0 = geo[0].tokens();
    push(&mut layers, "patch_embed.proj".into(), tokens0 * cfg.in_channels * pt * ph * pw * c0);
    push(&mut layers, "patch_embed.norm".into(), tokens0 * c0);

    for g in &geo {
        let s = g.stage;
        let c = g.dim;
        if s > 0 {
            let merged = g.tokens();
            push(&mut layers, format!("stages.{s}.merge.norm"), merged * 2 * c);
            push(&mut layers, format!("stages.{s}.merge.reduction"), merged * 2 * c * c);
        }
        let (n, p, win) = (g.tokens(), g.padded_tokens(), g.window_tokens());
        for b in 0..g.depth {
            let pre = format!("stages.{s}.blocks.{b}");
            push(&mut layers, format!("{pre}.norm1"), n * c);
            push(&mut layers, format!("{pre}.attn.qkv"), p * c * 3 * c);
            push(&mut layers, format!("{pre}.attn.qk"), p * win * c);
            push(&mut layers, format!("{pre}.attn.bias"), p * win * g.heads);
            push(&mut layers, format!("{pre}.attn.av"), p * win * c);
            push(&mut layers, format!("{pre}.attn.proj"), p * c * c);
            push(&mut layers, format!("{pre}.norm2"), n * c);
            let hidden = c * cfg.mlp_ratio;
            push(&mut layers, format!("{pre}.mlp.fc1"), n * c * hidden);
            push(&mut layers, format!("{pre}.mlp.fc2"), n * hidden * c);
        }
    }
    let last = &geo[NUM_STAGES - 1];
    let c = last.dim;
    push(&mut layers, "norm".into(), last.tokens() * c);
    let backbone_total: u64 = layers.iter().map(|l| l.macs).sum();
    push(&mut layers, "head.fc1".into(), last.tokens() * c * c);
    push(&mut layers, "head.fc2".into(), last.tokens() * c);

    FlopsReport {
        convention: FLOPS_CONVENTION.into(),
        input_shape: input,
        total: layers.iter().map(|l| l.macs).sum(),
        layers,
        backbone_total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_patch_embed_by_hand() {
        let cfg = FanetConfig::tiny();
        let r = flops_count(&cfg, cfg.input_dims());
        // 4 x 16 x 16 tokens, each a 3*2*4*4 = 96-value cube projected to 32
        assert_eq!(r.layers[0].macs, 4 * 16 * 16 * 96 * 32);
        assert_eq!(r.total, r.layers.iter().map(|l| l.macs).sum::<u64>());
    }
}
