//! Intra-patch non-linear regression head.
//!
//! Every feature position is regressed to a quality value by a shared
//! two-layer MLP *before* any pooling. Values are then averaged inside each
//! mini-patch cell to give the quality map, and the map is averaged to give
//! the clip score.
//!
//! Pooling runs in cell-major order (cells in `(t, row, col)` order,
//! positions row-major inside a cell). With a power-of-two cell area the
//! divisions are exact, so `score == mean(map) == mean(positions)` holds
//! bit for bit when the position mean is summed in the same order.

use candle_core::Tensor;
use fragvqa_core::sampling::{FragmentBatch, Rect};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::layers::{Linear, ParamStore};
use crate::{Error, Result};

pub struct IpNlrHead {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl IpNlrHead {
    pub fn new(ps: &mut ParamStore, dim: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(ps, "head.fc1", dim, dim, true)?,
            fc2: Linear::new(ps, "head.fc2", dim, 1, true)?,
        })
    }

    /// `[B, T, H, W, C]` features to `[B, T, H, W]` positionwise scores.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        let y = self.fc2.forward(&self.fc1.forward(features)?.gelu_erf()?)?;
        Ok(y.squeeze(4)?)
    }
}

/// Fragment region covered by one quality-map cell and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGeometry {
    /// Index along the map's time axis.
    pub t: usize,
    pub row: usize,
    pub col: usize,
    /// First fragment frame of the cell's temporal group.
    pub frame: usize,
    pub fragment: Rect,
    /// Source-video rectangles the cell's pixels were copied or resampled from.
    pub sources: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub temporal_stride: usize,
    /// Fragment pixels per map cell side.
    pub cell_pixels: usize,
    pub source_height: usize,
    pub source_width: usize,
    pub cells: Vec<CellGeometry>,
}

impl PatchGeometry {
    pub fn from_batch(batch: &FragmentBatch, map_dims: (usize, usize, usize), temporal_stride: usize) -> Self {
        let (t_map, rows, cols) = map_dims;
        let cell_pixels = batch.side() / rows.max(cols).max(1);
        let source_height = batch.plan.grid_bounds.iter().map(|r| r.bottom).max().unwrap_or(0);
        let source_width = batch.plan.grid_bounds.iter().map(|r| r.right).max().unwrap_or(0);
        let mut cells = Vec::with_capacity(t_map * rows * cols);
        for t in 0..t_map {
            let frame = (t * temporal_stride).min(batch.num_frames() - 1);
            for row in 0..rows {
                for col in 0..cols {
                    let fragment = Rect {
                        top: row * cell_pixels,
                        bottom: (row + 1) * cell_pixels,
                        left: col * cell_pixels,
                        right: (col + 1) * cell_pixels,
                    };
                    cells.push(CellGeometry {
                        t,
                        row,
                        col,
                        frame,
                        sources: batch.source_rects(frame, &fragment),
                        fragment,
                    });
                }
            }
        }
        Self {
            temporal_stride,
            cell_pixels,
            source_height,
            source_width,
            cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityOutput {
    pub score: f64,
    /// `(t, rows, cols)` per-cell mean of the regressed values.
    pub quality_map: Array3<f64>,
    /// `(t, h, w)` positionwise regressed values.
    pub regressed: Array3<f64>,
    pub geometry: Option<PatchGeometry>,
}

impl QualityOutput {
    /// Builds the map and score from positionwise values and a cell side in
    /// feature positions.
    pub fn from_regressed(regressed: Array3<f64>, cell_side: usize) -> Result<Self> {
        let (quality_map, score) = pool_cells(&regressed, cell_side)?;
        Ok(Self {
            score,
            quality_map,
            regressed,
            geometry: None,
        })
    }

    /// Map averaged over time, `rows x cols`, for per-frame display.
    pub fn frame_view(&self) -> Vec<Vec<f64>> {
        let (t, rows, cols) = self.quality_map.dim();
        (0..rows)
            .map(|i| {
                (0..cols)
                    .map(|j| (0..t).map(|k| self.quality_map[[k, i, j]]).sum::<f64>() / t as f64)
                    .collect()
            })
            .collect()
    }
}

/// Cell means and their mean.
pub fn pool_cells(regressed: &Array3<f64>, cell_side: usize) -> Result<(Array3<f64>, f64)> {
    let (t, h, w) = regressed.dim();
    if cell_side == 0 || h % cell_side != 0 || w % cell_side != 0 {
        return Err(Error::Contract(format!(
            "feature map {h}x{w} does not divide into {cell_side}x{cell_side} cells"
        )));
    }
    let (rows, cols) = (h / cell_side, w / cell_side);
    let area = (cell_side * cell_side) as f64;
    let mut map = Array3::zeros((t, rows, cols));
    let mut total = 0.0;
    for k in 0..t {
        for i in 0..rows {
            for j in 0..cols {
                let mut s = 0.0;
                for y in i * cell_side..(i + 1) * cell_side {
                    for x in j * cell_side..(j + 1) * cell_side {
                        s += regressed[[k, y, x]];
                    }
                }
                map[[k, i, j]] = s / area;
                total += map[[k, i, j]];
            }
        }
    }
    Ok((map, total / (t * rows * cols) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use rand::{Rng, SeedableRng};

    fn cell_major_mean(r: &Array3<f64>, side: usize) -> f64 {
        let (t, h, w) = r.dim();
        let mut s = 0.0;
        for k in 0..t {
            for i in 0..h / side {
                for j in 0..w / side {
                    let mut c = 0.0;
                    for y in i * side..(i + 1) * side {
                        for x in j * side..(j + 1) * side {
                            c += r[[k, y, x]];
                        }
                    }
                    s += c / (side * side) as f64;
                }
            }
        }
        s / (t * (h / side) * (w / side)) as f64
    }

    #[test]
    fn constant_field_gives_constant_map() {
        let out = QualityOutput::from_regressed(Array3::from_elem((2, 4, 4), 3.25), 2).unwrap();
        assert!(out.quality_map.iter().all(|&v| v == 3.25));
        assert_eq!(out.score, 3.25);
    }

    #[test]
    fn score_is_exact_mean_for_power_of_two_cells() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for side in [1, 2, 4] {
            let r = Array3::from_shape_simple_fn((3, 8, 8), || rng.random_range(-3.0..7.0));
            let out = QualityOutput::from_regressed(r.clone(), side).unwrap();
            let map_mean = out.quality_map.iter().sum::<f64>() / out.quality_map.len() as f64;
            assert_eq!(out.score, map_mean);
            assert_eq!(out.score, cell_major_mean(&r, side));
        }
    }

    #[test]
    fn permuting_cells_permutes_map() {
        let r = Array3::from_shape_fn((1, 4, 4), |(_, y, x)| (y * 4 + x) as f64 * 0.5);
        // swap the top-left and bottom-right 2x2 cells
        let mut p = r.clone();
        for y in 0..2 {
            for x in 0..2 {
                p[[0, y, x]] = r[[0, y + 2, x + 2]];
                p[[0, y + 2, x + 2]] = r[[0, y, x]];
            }
        }
        let a = QualityOutput::from_regressed(r, 2).unwrap();
        let b = QualityOutput::from_regressed(p, 2).unwrap();
        assert_eq!(a.quality_map[[0, 0, 0]], b.quality_map[[0, 1, 1]]);
        assert_eq!(a.quality_map[[0, 1, 1]], b.quality_map[[0, 0, 0]]);
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn indivisible_cells_rejected() {
        let r = Array3::zeros((1, 6, 6));
        assert!(matches!(QualityOutput::from_regressed(r, 4), Err(Error::Contract(_))));
    }

    #[test]
    fn two_cell_toy_by_hand() {
        // C = 2, hidden = 2. fc1 = identity with bias (0, -1); fc2 = (1, 2), bias 0.5.
        let mut ps = ParamStore::new(DType::F64, 0);
        let head = IpNlrHead::new(&mut ps, 2).unwrap();
        let dev = Device::Cpu;
        ps.set("head.fc1.weight", &Tensor::new(&[[1.0f64, 0.0], [0.0, 1.0]], &dev).unwrap()).unwrap();
        ps.set("head.fc1.bias", &Tensor::new(&[0.0f64, -1.0], &dev).unwrap()).unwrap();
        ps.set("head.fc2.weight", &Tensor::new(&[[1.0f64], [2.0]], &dev).unwrap()).unwrap();
        ps.set("head.fc2.bias", &Tensor::new(&[0.5f64], &dev).unwrap()).unwrap();
        // one frame, 1x2 positions, each its own cell
        let f = Tensor::new(&[1.0f64, 1.0, 0.0, 3.0], &dev).unwrap().reshape((1, 1, 1, 2, 2)).unwrap();
        let y: Vec<f64> = head.forward(&f).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let gelu = |x: f64| 0.5 * x * (1.0 + libm_erf(x / std::f64::consts::SQRT_2));
        let want0 = gelu(1.0) + 2.0 * gelu(0.0) + 0.5;
        let want1 = gelu(0.0) + 2.0 * gelu(2.0) + 0.5;
        assert!((y[0] - want0).abs() < 1e-12);
        assert!((y[1] - want1).abs() < 1e-12);
        let out = QualityOutput::from_regressed(Array3::from_shape_vec((1, 1, 2), y).unwrap(), 1).unwrap();
        assert!((out.score - (want0 + want1) / 2.0).abs() < 1e-12);
    }

    // erf(1/sqrt2) and erf(sqrt2) from tables; erf(0) = 0
    fn libm_erf(x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else if (x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15 {
            0.682_689_492_137_085_9
        } else if (x - std::f64::consts::SQRT_2).abs() < 1e-15 {
            0.954_499_736_103_641_6
        } else {
            unreachable!("no table entry for {x}")
        }
    }
}
