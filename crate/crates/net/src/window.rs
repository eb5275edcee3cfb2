//! Window partitioning of channels-last `[B, T, H, W, C]` feature maps and
//! the per-window masks that depend on where a window sits.

use candle_core::{DType, Device, Tensor};

use crate::attention::GateMask;
use crate::config::StageGeometry;
use crate::Result;

/// Added to logits of pairs that a cyclic shift brought together from
/// opposite borders of the feature map.
pub const SHIFT_MASK_VALUE: f64 = -100.0;

/// Origins of all windows, in `(t, h, w)`-major order, in the rolled frame.
fn window_origins(g: &StageGeometry) -> Vec<[usize; 3]> {
    let [nt, nh, nw] = g.windows_per_axis();
    let mut out = Vec::with_capacity(nt * nh * nw);
    for a in 0..nt {
        for b in 0..nh {
            for c in 0..nw {
                out.push([a * g.window[0], b * g.window[1], c * g.window[2]]);
            }
        }
    }
    out
}

/// For every window, the unrolled (original) padded coordinates of its
/// positions after a cyclic shift of `-shift`.
pub fn window_coords(g: &StageGeometry, shift: [usize; 3]) -> Vec<Vec<[usize; 3]>> {
    window_origins(g)
        .into_iter()
        .map(|o| {
            crate::attention::window_positions(o, g.window)
                .into_iter()
                .map(|p| [0, 1, 2].map(|k| (p[k] + shift[k]) % g.padded[k]))
                .collect()
        })
        .collect()
}

pub fn stage_gates(g: &StageGeometry, shift: [usize; 3]) -> Vec<GateMask> {
    window_coords(g, shift)
        .iter()
        .map(|c| GateMask::from_coords(c, g.minipatch_side))
        .collect()
}

/// `[num_windows, 1, n, n]` gate tensor.
pub fn gates_tensor(gates: &[GateMask], dtype: DType, device: &Device) -> Result<Tensor> {
    let n = gates[0].len();
    let v: Vec<f64> = gates
        .iter()
        .flat_map(|m| m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(v, (gates.len(), 1, n, n), device)?.to_dtype(dtype)?)
}

/// Region label along one axis of the rolled map: positions that wrapped
/// around from the far border are told apart from their new neighbours.
fn region(p: usize, padded: usize, window: usize, shift: usize) -> usize {
    if shift == 0 {
        0
    } else if p < padded - window {
        0
    } else if p < padded - shift {
        1
    } else {
        2
    }
}

/// `[num_windows, 1, n, n]` additive mask, or `None` without shift.
pub fn shift_mask(g: &StageGeometry, shift: [usize; 3], dtype: DType, device: &Device) -> Result<Option<Tensor>> {
    if shift == [0; 3] {
        return Ok(None);
    }
    let origins = window_origins(g);
    let n = g.window_tokens();
    let mut v = Vec::with_capacity(origins.len() * n * n);
    for o in origins {
        let labels: Vec<[usize; 3]> = crate::attention::window_positions(o, g.window)
            .into_iter()
            .map(|p| [0, 1, 2].map(|k| region(p[k], g.padded[k], g.window[k], shift[k])))
            .collect();
        for a in &labels {
            for b in &labels {
                v.push(if a == b { 0.0 } else { SHIFT_MASK_VALUE });
            }
        }
    }
    let nw = v.len() / (n * n);
    Ok(Some(Tensor::from_vec(v, (nw, 1, n, n), device)?.to_dtype(dtype)?))
}

/// `[B, Tp, Hp, Wp, C]` to `[B * num_windows, n, C]`.
pub fn partition(x: &Tensor, window: [usize; 3]) -> Result<Tensor> {
    let (b, t, h, w, c) = x.dims5()?;
    let [wt, wh, ww] = window;
    let x = x
        .reshape(vec![b, t / wt, wt, h / wh, wh, w / ww, ww, c])?
        .permute([0, 1, 3, 5, 2, 4, 6, 7])?
        .contiguous()?;
    Ok(x.reshape((b * (t / wt) * (h / wh) * (w / ww), wt * wh * ww, c))?)
}

/// Inverse of [`partition`] for a `padded` grid and batch size `b`.
pub fn reverse(x: &Tensor, window: [usize; 3], padded: [usize; 3], b: usize) -> Result<Tensor> {
    let [wt, wh, ww] = window;
    let [t, h, w] = padded;
    let c = x.dims()[2];
    let x = x
        .reshape(vec![b, t / wt, h / wh, w / ww, wt, wh, ww, c])?
        .permute([0, 1, 4, 2, 5, 3, 6, 7])?
        .contiguous()?;
    Ok(x.reshape((b, t, h, w, c))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FanetConfig;

    #[test]
    fn partition_round_trips() {
        let x = Tensor::arange(0f64, (2 * 4 * 6 * 4 * 3) as f64, &Device::Cpu)
            .unwrap()
            .reshape((2, 4, 6, 4, 3))
            .unwrap();
        let p = partition(&x, [2, 3, 2]).unwrap();
        assert_eq!(p.dims(), &[2 * 2 * 2 * 2, 12, 3]);
        // second position of the first window is (t=0, h=0, w=1)
        let first: Vec<Vec<f64>> = p.get(0).unwrap().to_vec2().unwrap();
        assert_eq!(first[1][0], 3.0);
        let back = reverse(&p, [2, 3, 2], [4, 6, 4], 2).unwrap();
        let diff = (back - &x).unwrap().abs().unwrap().max_all().unwrap();
        assert_eq!(diff.to_scalar::<f64>().unwrap(), 0.0);
    }

    #[test]
    fn gates_are_partitions_in_every_phase() {
        for cfg in [FanetConfig::tiny(), FanetConfig::normal_density()] {
            for g in cfg.stage_geometry(cfg.input_dims()) {
                for shift in [[0; 3], g.shift] {
                    for m in stage_gates(&g, shift) {
                        let n = m.len();
                        for i in 0..n {
                            assert!(m.get(i, i));
                            for j in 0..n {
                                assert_eq!(m.get(i, j), m.get(j, i));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_late_stages_mix_gates() {
        let cfg = FanetConfig::tiny();
        let geo = cfg.stage_geometry(cfg.input_dims());
        assert!(stage_gates(&geo[0], [0; 3]).iter().all(|m| m.all_true()));
        assert!(stage_gates(&geo[3], [0; 3]).iter().all(|m| m.is_mixed()));
    }

    #[test]
    fn shift_mask_separates_wrapped_regions() {
        let cfg = FanetConfig::normal_density();
        let geo = &cfg.stage_geometry(cfg.input_dims())[0];
        let m = shift_mask(geo, geo.shift, DType::F64, &Device::Cpu).unwrap().unwrap();
        let (nw, _, n, _) = m.dims4().unwrap();
        assert_eq!(nw, geo.num_windows());
        let all: Vec<f64> = m.flatten_all().unwrap().to_vec1().unwrap();
        // the first window never sees wrapped positions
        assert!(all[..n * n].iter().all(|&v| v == 0.0));
        // the last window does
        assert!(all[(nw - 1) * n * n..].iter().any(|&v| v == SHIFT_MASK_VALUE));
        assert!(shift_mask(geo, [0; 3], DType::F64, &Device::Cpu).unwrap().is_none());
    }
}
