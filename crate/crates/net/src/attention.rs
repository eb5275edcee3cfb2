//! Gated relative position biases.
//!
//! Each attention window owns two learnable tables indexed by the relative
//! offset of a position pair: the *real* table for pairs inside the same
//! fragment mini-patch and the *pseudo* table for pairs that straddle a
//! splice boundary, whose pixel distance in the fragment says nothing about
//! their distance in the source video. A boolean gate picks per pair:
//!
//! ```text
//! logits = Q K^T / sqrt(d) + G * B_real + (1 - G) * B_pseudo
//! out    = softmax_rows(logits) V
//! ```
//!
//! The bias terms are not scaled by `1/sqrt(d)`.

use candle_core::{DType, Device, Tensor};

use crate::layers::softmax_last;
use crate::{Error, Result};

/// Symmetric pair mask over the flattened positions of one window,
/// `true` when both positions fall in the same mini-patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateMask {
    n: usize,
    bits: Vec<bool>,
}

impl GateMask {
    /// Gate for positions with the given absolute `(t, h, w)` feature
    /// coordinates. Membership is spatial only: the time index never splits it.
    pub fn from_coords(coords: &[[usize; 3]], minipatch_side: usize) -> Self {
        let mp = minipatch_side.max(1);
        let cell: Vec<(usize, usize)> = coords.iter().map(|c| (c[1] / mp, c[2] / mp)).collect();
        let n = coords.len();
        let mut bits = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                bits[i * n + j] = cell[i] == cell[j];
            }
        }
        Self { n, bits }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn all_true(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// Has both intra- and cross-patch pairs.
    pub fn is_mixed(&self) -> bool {
        self.bits.iter().any(|&b| b) && !self.all_true()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let v: Vec<f64> = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Ok(Tensor::from_vec(v, (self.n, self.n), device)?.to_dtype(dtype)?)
    }
}

/// Positions of a window at `origin` in `(t, h, w)`-major order.
pub fn window_positions(origin: [usize; 3], window: [usize; 3]) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(window.iter().product());
    for t in 0..window[0] {
        for h in 0..window[1] {
            for w in 0..window[2] {
                out.push([origin[0] + t, origin[1] + h, origin[2] + w]);
            }
        }
    }
    out
}

pub fn build_gate_mask(origin: [usize; 3], window: [usize; 3], minipatch_side: usize) -> GateMask {
    GateMask::from_coords(&window_positions(origin, window), minipatch_side)
}

/// Number of distinct relative offsets for a window, i.e. bias table rows.
pub fn table_len(window: [usize; 3]) -> usize {
    window.iter().map(|&w| 2 * w - 1).product()
}

/// Table row for every position pair `(i, j)` of a `window`-shaped block,
/// flattened row-major. Rows are laid out for `table_window`, which must be
/// at least as large as `window` on every axis, so a clamped window reuses
/// the entries of the configured one.
pub fn relative_position_index(window: [usize; 3], table_window: [usize; 3]) -> Result<Vec<u32>> {
    if window.iter().zip(&table_window).any(|(w, tw)| w > tw || *w == 0) {
        return Err(Error::Contract(format!(
            "window {window:?} does not fit bias table for {table_window:?}"
        )));
    }
    let pos = window_positions([0; 3], window);
    let [_, th, tw] = table_window.map(|w| 2 * w - 1);
    let mut out = Vec::with_capacity(pos.len() * pos.len());
    for a in &pos {
        for b in &pos {
            let r: Vec<usize> = (0..3).map(|k| a[k] + table_window[k] - 1 - b[k]).collect();
            out.push((r[0] * th * tw + r[1] * tw + r[2]) as u32);
        }
    }
    Ok(out)
}

/// Gathers a `[len, heads]` table into the `[heads, n, n]` bias for a window.
pub fn gather_bias(table: &Tensor, index: &Tensor, n: usize) -> Result<Tensor> {
    let heads = table.dims()[1];
    Ok(table
        .index_select(index, 0)?
        .reshape((n, n, heads))?
        .permute((2, 0, 1))?
        .contiguous()?)
}

/// `G * B_in + (1 - G) * B_cr`, broadcasting `gate` against the biases.
pub fn gated_bias(bias_in: &Tensor, bias_cr: &Tensor, gate: &Tensor) -> Result<Tensor> {
    let inverse = gate.affine(-1.0, 1.0)?;
    Ok(gate
        .broadcast_mul(bias_in)?
        .broadcast_add(&inverse.broadcast_mul(bias_cr)?)?)
}

/// `softmax(q k^T / sqrt(d) + bias) v` over the last two axes. `bias` must
/// broadcast against the `[..., n, n]` logits.
pub fn attend(q: &Tensor, k: &Tensor, v: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let qd = q.dims();
    if qd.len() < 2 || k.dims() != qd || v.dims()[..qd.len() - 1] != qd[..qd.len() - 1] {
        return Err(Error::Contract(format!(
            "attention operands disagree: q {:?}, k {:?}, v {:?}",
            qd,
            k.dims(),
            v.dims()
        )));
    }
    let (n, d) = (qd[qd.len() - 2], qd[qd.len() - 1]);
    let dv = v.dims()[qd.len() - 1];
    // matmul takes at most two batch axes; fold them all into one
    let batch: usize = qd[..qd.len() - 2].iter().product();
    let q3 = q.reshape((batch, n, d))?;
    let kt = k.reshape((batch, n, d))?.transpose(1, 2)?.contiguous()?;
    let mut logits = (q3.matmul(&kt)? * (1.0 / (d as f64).sqrt()))?;
    if let Some(b) = bias {
        let mut full = qd.to_vec();
        *full.last_mut().expect("rank >= 2") = n;
        logits = logits.reshape(full)?.broadcast_add(b)?.reshape((batch, n, n))?;
    }
    let out = softmax_last(&logits)?.matmul(&v.reshape((batch, n, dv))?)?;
    let mut shape = qd.to_vec();
    *shape.last_mut().expect("rank >= 2") = dv;
    Ok(out.reshape(shape)?)
}

/// Attention for one window of `n` positions with per-head `q, k, v` of shape
/// `[heads, n, d]`, `[len, heads]` tables and the window's gate.
pub fn grpb_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    real_table: &Tensor,
    pseudo_table: &Tensor,
    index: &[u32],
    gate: &GateMask,
) -> Result<Tensor> {
    let n = gate.len();
    if q.dims().len() != 3 || q.dims()[1] != n || index.len() != n * n {
        return Err(Error::Contract(format!(
            "window of {n} positions, q {:?}, {} index entries",
            q.dims(),
            index.len()
        )));
    }
    if real_table.dims() != pseudo_table.dims() || real_table.dims()[1] != q.dims()[0] {
        return Err(Error::Contract(format!(
            "bias tables {:?} / {:?} do not match {} heads",
            real_table.dims(),
            pseudo_table.dims(),
            q.dims()[0]
        )));
    }
    let idx = Tensor::from_slice(index, n * n, q.device())?;
    let b_in = gather_bias(real_table, &idx, n)?;
    let b_cr = gather_bias(pseudo_table, &idx, n)?;
    let g = gate.to_tensor(q.dtype(), q.device())?;
    attend(q, k, v, Some(&gated_bias(&b_in, &b_cr, &g)?))
}

/// Standard relative-position-bias attention: one table for every pair.
pub fn rpb_attention(q: &Tensor, k: &Tensor, v: &Tensor, table: &Tensor, index: &[u32]) -> Result<Tensor> {
    let n = q.dims()[1];
    let idx = Tensor::from_slice(index, n * n, q.device())?;
    attend(q, k, v, Some(&gather_bias(table, &idx, n)?))
}
