//! Hierarchical windowed-attention backbone on channels-last
//! `[B, T, H, W, C]` activations: patch embedding, four stages of
//! (shifted-)window attention blocks, and 2x2 spatial patch merging between
//! stages.

use candle_core::{DType, Device, Tensor};

use crate::attention::{attend, gated_bias, gather_bias, relative_position_index, table_len};
use crate::config::StageGeometry;
use crate::config::FanetConfig;
use crate::layers::{LayerNorm, Linear, Mlp, ParamStore};
use crate::window::{gates_tensor, partition, reverse, shift_mask, stage_gates};
use crate::{Error, Result};

pub struct PatchEmbed {
    pub stride: [usize; 3],
    pub proj: Linear,
    pub norm: LayerNorm,
}

impl PatchEmbed {
    pub fn new(ps: &mut ParamStore, stride: [usize; 3], in_channels: usize, dim: usize) -> Result<Self> {
        let k = stride.iter().product::<usize>() * in_channels;
        Ok(Self {
            stride,
            proj: Linear::new(ps, "patch_embed.proj", k, dim, true)?,
            norm: LayerNorm::new(ps, "patch_embed.norm", dim)?,
        })
    }

    /// Non-overlapping `stride`-sized cubes, flattened and projected.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, h, w, c) = x.dims5()?;
        let [st, sh, sw] = self.stride;
        let (t2, h2, w2) = (t / st, h / sh, w / sw);
        let cubes = x
            .reshape(vec![b, t2, st, h2, sh, w2, sw, c])?
            .permute([0, 1, 3, 5, 2, 4, 6, 7])?
            .contiguous()?
            .reshape((b, t2, h2, w2, st * sh * sw * c))?;
        self.norm.forward(&self.proj.forward(&cubes)?)
    }
}

/// How the gate looks across all windows of one block phase.
#[derive(Debug, Clone)]
pub enum GateState {
    AllIntra,
    AllCross,
    Mixed(Tensor),
}

/// Window masks of one shift phase.
#[derive(Debug, Clone)]
pub struct PhaseMasks {
    pub shift: [usize; 3],
    pub gate: GateState,
    pub shift_mask: Option<Tensor>,
}

/// Everything about a stage that depends on the input size but not on weights.
#[derive(Debug, Clone)]
pub struct StageMasks {
    pub geometry: StageGeometry,
    pub index: Tensor,
    pub phases: [PhaseMasks; 2],
}

impl StageMasks {
    pub fn new(g: &StageGeometry, table_window: [usize; 3], dtype: DType, device: &Device) -> Result<Self> {
        let n = g.window_tokens();
        let index = Tensor::from_vec(relative_position_index(g.window, table_window)?, n * n, device)?;
        let phase = |shift: [usize; 3]| -> Result<PhaseMasks> {
            let gates = stage_gates(g, shift);
            let gate = if gates.iter().all(|m| m.all_true()) {
                GateState::AllIntra
            } else if gates.iter().all(|m| m.bits().iter().all(|&b| !b)) {
                GateState::AllCross
            } else {
                GateState::Mixed(gates_tensor(&gates, dtype, device)?)
            };
            Ok(PhaseMasks {
                shift,
                gate,
                shift_mask: shift_mask(g, shift, dtype, device)?,
            })
        };
        Ok(Self {
            geometry: g.clone(),
            index,
            phases: [phase([0; 3])?, phase(g.shift)?],
        })
    }
}

pub struct WindowAttention {
    pub heads: usize,
    pub qkv: Linear,
    pub proj: Linear,
    pub real_table: Tensor,
    /// Absent when the stage uses a single, ungated table.
    pub pseudo_table: Option<Tensor>,
}

impl WindowAttention {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        table_window: [usize; 3],
        gated: bool,
    ) -> Result<Self> {
        let len = table_len(table_window);
        Ok(Self {
            heads,
            qkv: Linear::new(ps, &format!("{name}.qkv"), dim, 3 * dim, true)?,
            proj: Linear::new(ps, &format!("{name}.proj"), dim, dim, true)?,
            real_table: ps.constant(&format!("{name}.real_bias_table"), &[len, heads], 0.0)?,
            pseudo_table: if gated {
                Some(ps.constant(&format!("{name}.pseudo_bias_table"), &[len, heads], 0.0)?)
            } else {
                None
            },
        })
    }

    /// Bias for all windows, broadcastable to `[B, num_windows, heads, n, n]`.
    fn bias(&self, masks: &StageMasks, phase: &PhaseMasks) -> Result<Tensor> {
        let n = masks.geometry.window_tokens();
        let b_in = gather_bias(&self.real_table, &masks.index, n)?;
        let mut bias = match (&self.pseudo_table, &phase.gate) {
            (None, _) | (Some(_), GateState::AllIntra) => b_in,
            (Some(pseudo), GateState::AllCross) => gather_bias(pseudo, &masks.index, n)?,
            (Some(pseudo), GateState::Mixed(g)) => {
                let b_cr = gather_bias(pseudo, &masks.index, n)?;
                gated_bias(&b_in.unsqueeze(0)?, &b_cr.unsqueeze(0)?, g)?
            }
        };
        if let Some(m) = &phase.shift_mask {
            bias = bias.broadcast_add(m)?;
        }
        Ok(bias)
    }

    /// `x`: `[B * num_windows, n, C]`.
    pub fn forward(&self, x: &Tensor, masks: &StageMasks, phase: &PhaseMasks) -> Result<Tensor> {
        let (bw, n, c) = x.dims3()?;
        let nw = masks.geometry.num_windows();
        let b = bw / nw;
        let d = c / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape(vec![b, nw, n, 3, self.heads, d])?
            .permute([3, 0, 1, 4, 2, 5])?
            .contiguous()?;
        let (q, k, v) = (qkv.get(0)?, qkv.get(1)?, qkv.get(2)?);
        let out = attend(&q, &k, &v, Some(&self.bias(masks, phase)?))?;
        let out = out.permute([0, 1, 3, 2, 4])?.contiguous()?.reshape((bw, n, c))?;
        self.proj.forward(&out)
    }
}

pub struct Block {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

fn roll3(x: &Tensor, shift: [usize; 3], sign: i32) -> Result<Tensor> {
    let mut x = x.clone();
    for (k, &s) in shift.iter().enumerate() {
        if s > 0 {
            x = x.roll(sign * s as i32, k + 1)?;
        }
    }
    Ok(x)
}

impl Block {
    pub fn forward(&self, x: &Tensor, masks: &StageMasks, phase: &PhaseMasks) -> Result<Tensor> {
        let g = &masks.geometry;
        let b = x.dims()[0];
        let mut h = self.norm1.forward(x)?;
        for k in 0..3 {
            h = h.pad_with_zeros(k + 1, 0, g.padded[k] - g.dims[k])?;
        }
        let h = roll3(&h, phase.shift, -1)?;
        let windows = partition(&h, g.window)?;
        let attended = self.attn.forward(&windows, masks, phase)?;
        let mut h = roll3(&reverse(&attended, g.window, g.padded, b)?, phase.shift, 1)?;
        for k in 0..3 {
            if g.padded[k] != g.dims[k] {
                h = h.narrow(k + 1, 0, g.dims[k])?;
            }
        }
        let x = (x + h)?;
        let y = self.mlp.forward(&self.norm2.forward(&x)?)?;
        Ok((x + y)?)
    }
}

/// 2x2 spatial neighbourhoods concatenated in the order
/// `(0,0), (1,0), (0,1), (1,1)` as `(dy, dx)`, normalized, then projected
/// from `4C` to `2C` channels.
pub struct PatchMerging {
    pub norm: LayerNorm,
    pub reduction: Linear,
}

impl PatchMerging {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(ps, &format!("{name}.norm"), 4 * dim)?,
            reduction: Linear::new(ps, &format!("{name}.reduction"), 4 * dim, 2 * dim, false)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, h, w, c) = x.dims5()?;
        let x = x.pad_with_zeros(2, 0, h % 2)?.pad_with_zeros(3, 0, w % 2)?;
        let (h2, w2) = (h.div_ceil(2), w.div_ceil(2));
        let merged = x
            .reshape(vec![b, t, h2, 2, w2, 2, c])?
            .permute([0, 1, 2, 4, 5, 3, 6])?
            .contiguous()?
            .reshape((b, t, h2, w2, 4 * c))?;
        self.reduction.forward(&self.norm.forward(&merged)?)
    }
}

pub struct Stage {
    pub blocks: Vec<Block>,
    pub merge: Option<PatchMerging>,
}

impl Stage {
    pub fn new(ps: &mut ParamStore, cfg: &FanetConfig, stage: usize) -> Result<Self> {
        let dim = cfg.stage_dim(stage);
        let (depth, heads) = (cfg.depths[stage], cfg.heads[stage]);
        let mut blocks = Vec::with_capacity(depth);
        for i in 0..depth {
            let name = format!("stages.{stage}.blocks.{i}");
            blocks.push(Block {
                norm1: LayerNorm::new(ps, &format!("{name}.norm1"), dim)?,
                attn: WindowAttention::new(ps, &format!("{name}.attn"), dim, heads, cfg.window, cfg.gated_bias[stage])?,
                norm2: LayerNorm::new(ps, &format!("{name}.norm2"), dim)?,
                mlp: Mlp::new(ps, &format!("{name}.mlp"), dim, dim * cfg.mlp_ratio, dim)?,
            });
        }
        let merge = if stage + 1 < cfg.depths.len() {
            Some(PatchMerging::new(ps, &format!("stages.{stage}.merge"), dim)?)
        } else {
            None
        };
        Ok(Self { blocks, merge })
    }

    pub fn forward(&self, x: &Tensor, masks: &StageMasks) -> Result<Tensor> {
        let mut x = x.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(&x, masks, &masks.phases[i % 2])?;
        }
        match &self.merge {
            Some(m) => m.forward(&x),
            None => Ok(x),
        }
    }
}

pub(crate) fn check_dims(x: &Tensor, geometry: &StageGeometry) -> Result<()> {
    let d = x.dims();
    if d[1..4] != geometry.dims {
        return Err(Error::Contract(format!(
            "stage {} expects a {:?} token grid, got {:?}",
            geometry.stage,
            geometry.dims,
            &d[1..4]
        )));
    }
    Ok(())
}
