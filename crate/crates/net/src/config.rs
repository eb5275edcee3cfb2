use fragvqa_core::sampling::GridSpec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_STAGES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 32x224x224 fragments, Swin-T geometry, (8,7,7) windows.
    Normal,
    /// 16x128x128 fragments, Swin-T geometry, (4,4,4) windows.
    Low,
    /// 8x64x64 fragments, trainable on a laptop CPU in minutes.
    Tiny,
    Custom,
}

/// Network hyper-parameters plus the fragment geometry the network is built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanetConfig {
    pub preset: Preset,
    pub embed_dim: usize,
    pub depths: [usize; NUM_STAGES],
    pub heads: [usize; NUM_STAGES],
    /// Attention window `(t, h, w)` in tokens.
    pub window: [usize; 3],
    /// Non-overlapping patch embedding stride `(t, h, w)` in pixels.
    pub patch_stride: [usize; 3],
    pub in_channels: usize,
    pub mlp_ratio: usize,
    pub fragments: GridSpec,
    /// Per stage: gated real/pseudo bias tables, or a single shared table.
    pub gated_bias: [bool; NUM_STAGES],
}

impl FanetConfig {
    pub fn normal_density() -> Self {
        Self {
            preset: Preset::Normal,
            embed_dim: 96,
            depths: [2, 2, 6, 2],
            heads: [3, 6, 12, 24],
            window: [8, 7, 7],
            patch_stride: [2, 4, 4],
            in_channels: 3,
            mlp_ratio: 4,
            fragments: GridSpec::normal_density(),
            gated_bias: [true; NUM_STAGES],
        }
    }

    pub fn low_density() -> Self {
        Self {
            preset: Preset::Low,
            window: [4, 4, 4],
            fragments: GridSpec::low_density(),
            ..Self::normal_density()
        }
    }

    pub fn tiny() -> Self {
        Self {
            preset: Preset::Tiny,
            embed_dim: 32,
            depths: [1, 1, 1, 1],
            heads: [1, 2, 2, 4],
            window: [2, 4, 4],
            patch_stride: [2, 4, 4],
            in_channels: 3,
            mlp_ratio: 4,
            fragments: GridSpec::tiny(),
            gated_bias: [true; NUM_STAGES],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "normal" => Some(Self::normal_density()),
            "low" => Some(Self::low_density()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn stage_dim(&self, stage: usize) -> usize {
        self.embed_dim << stage
    }

    pub fn last_dim(&self) -> usize {
        self.stage_dim(NUM_STAGES - 1)
    }

    /// Side of one mini-patch in stage-`stage` feature pixels.
    pub fn minipatch_feature_side(&self, stage: usize) -> usize {
        self.fragments.patch / (self.patch_stride[1] << stage)
    }

    /// `(frames, side, side)` of the fragments this network expects.
    pub fn input_dims(&self) -> [usize; 3] {
        let side = self.fragments.side();
        [self.fragments.frames, side, side]
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.embed_dim == 0 || self.in_channels == 0 || self.mlp_ratio == 0 {
            problems.push("embed_dim, in_channels and mlp_ratio must be positive".to_string());
        }
        if self.window.contains(&0) || self.patch_stride.contains(&0) {
            problems.push("window and patch_stride entries must be positive".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        for s in 0..NUM_STAGES {
            let dim = self.stage_dim(s);
            let heads = self.heads[s];
            if self.depths[s] == 0 {
                problems.push(format!("stage {s} has no blocks"));
            }
            if heads == 0 || dim % heads != 0 {
                problems.push(format!("stage {s}: {heads} heads do not divide {dim} channels"));
            }
        }
        let [st, sh, sw] = self.patch_stride;
        let [t, side, _] = self.input_dims();
        if sh != sw {
            problems.push(format!("patch stride must be square in space, got {sh}x{sw}"));
        }
        if t % st != 0 {
            problems.push(format!("{t} frames not divisible by temporal stride {st}"));
        }
        if side % sh != 0 {
            problems.push(format!("fragment side {side} not divisible by spatial stride {sh}"));
        }
        let last_stride = sh << (NUM_STAGES - 1);
        if self.fragments.patch % last_stride != 0 {
            problems.push(format!(
                "mini-patch side {} not divisible by final feature stride {last_stride}",
                self.fragments.patch
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Per-stage token grid, windows and shifts for an input of
    /// `(frames, height, width)` pixels. Windows shrink to the feature size
    /// when the feature map is smaller, and such dimensions are never shifted.
    pub fn stage_geometry(&self, input: [usize; 3]) -> Vec<StageGeometry> {
        let mut dims = [
            input[0].div_ceil(self.patch_stride[0]),
            input[1].div_ceil(self.patch_stride[1]),
            input[2].div_ceil(self.patch_stride[2]),
        ];
        let mut out = Vec::with_capacity(NUM_STAGES);
        for s in 0..NUM_STAGES {
            if s > 0 {
                dims[1] = dims[1].div_ceil(2);
                dims[2] = dims[2].div_ceil(2);
            }
            let mut window = [0; 3];
            let mut shift = [0; 3];
            let mut padded = [0; 3];
            for i in 0..3 {
                if dims[i] <= self.window[i] {
                    window[i] = dims[i];
                    shift[i] = 0;
                } else {
                    window[i] = self.window[i];
                    shift[i] = self.window[i] / 2;
                }
                padded[i] = dims[i].div_ceil(window[i]) * window[i];
            }
            out.push(StageGeometry {
                stage: s,
                dims,
                padded,
                window,
                shift,
                dim: self.stage_dim(s),
                heads: self.heads[s],
                depth: self.depths[s],
                minipatch_side: self.minipatch_feature_side(s).max(1),
                gated: self.gated_bias[s],
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageGeometry {
    pub stage: usize,
    /// Token grid `(t, h, w)` entering the stage's blocks.
    pub dims: [usize; 3],
    /// Token grid after padding to whole windows.
    pub padded: [usize; 3],
    pub window: [usize; 3],
    /// Shift applied in odd-numbered blocks.
    pub shift: [usize; 3],
    pub dim: usize,
    pub heads: usize,
    pub depth: usize,
    pub minipatch_side: usize,
    pub gated: bool,
}

impl StageGeometry {
    pub fn tokens(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn padded_tokens(&self) -> usize {
        self.padded.iter().product()
    }

    pub fn window_tokens(&self) -> usize {
        self.window.iter().product()
    }

    pub fn windows_per_axis(&self) -> [usize; 3] {
        [
            self.padded[0] / self.window[0],
            self.padded[1] / self.window[1],
            self.padded[2] / self.window[2],
        ]
    }

    pub fn num_windows(&self) -> usize {
        self.windows_per_axis().iter().product()
    }

    pub fn block_shift(&self, block: usize) -> [usize; 3] {
        if block % 2 == 1 {
            self.shift
        } else {
            [0; 3]
        }
    }
}
