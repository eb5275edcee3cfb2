//! Export of patch-wise quality maps: a JSON record of every cell with its
//! fragment and source rectangles, and a PNG overlay that paints each cell's
//! time-averaged score onto the source frame at the place it was sampled.

use std::path::{Path, PathBuf};

use fragvqa_core::sampling::Rect;
use image::{Rgb, RgbImage};
use ndarray::ArrayView3;
use serde::{Deserialize, Serialize};

use crate::head::QualityOutput;
use crate::{Error, Result};

pub const MAP_SCHEMA_VERSION: u32 = 1;
const OVERLAY_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub t: usize,
    pub row: usize,
    pub col: usize,
    pub frame: usize,
    pub score: f64,
    pub fragment: Rect,
    pub sources: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMapRecord {
    pub schema_version: u32,
    pub score: f64,
    /// `(t, rows, cols)`.
    pub map_shape: [usize; 3],
    pub temporal_stride: usize,
    pub source_height: usize,
    pub source_width: usize,
    pub cells: Vec<CellRecord>,
    /// Time-averaged map, `rows x cols`.
    pub frame_view: Vec<Vec<f64>>,
}

impl QualityMapRecord {
    pub fn from_output(out: &QualityOutput) -> Result<Self> {
        let geo = out
            .geometry
            .as_ref()
            .ok_or_else(|| Error::Contract("quality output carries no sampling geometry".into()))?;
        let (t, rows, cols) = out.quality_map.dim();
        if geo.cells.len() != t * rows * cols {
            return Err(Error::Contract(format!(
                "geometry has {} cells, map has {}",
                geo.cells.len(),
                t * rows * cols
            )));
        }
        let cells = geo
            .cells
            .iter()
            .map(|c| CellRecord {
                t: c.t,
                row: c.row,
                col: c.col,
                frame: c.frame,
                score: out.quality_map[[c.t, c.row, c.col]],
                fragment: c.fragment,
                sources: c.sources.clone(),
            })
            .collect();
        Ok(Self {
            schema_version: MAP_SCHEMA_VERSION,
            score: out.score,
            map_shape: [t, rows, cols],
            temporal_stride: geo.temporal_stride,
            source_height: geo.source_height,
            source_width: geo.source_width,
            cells,
            frame_view: out.frame_view(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Contract(format!("bad quality map record: {e}")))?;
        if r.schema_version != MAP_SCHEMA_VERSION {
            return Err(Error::Contract(format!("unsupported map schema {}", r.schema_version)));
        }
        Ok(r)
    }

    /// Score range of the frame view.
    pub fn range(&self) -> (f64, f64) {
        self.frame_view
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Red for the low end of `range`, green for the high end.
pub fn heat_color(v: f64, range: (f64, f64)) -> Rgb<u8> {
    let (lo, hi) = range;
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    Rgb([(255.0 * (1.0 - t)).round() as u8, (255.0 * t).round() as u8, 64])
}

/// Paints the frame view over `background` (`H x W x 3`), or over mid grey.
pub fn render_overlay(
    record: &QualityMapRecord,
    background: Option<ArrayView3<'_, u8>>,
    range: Option<(f64, f64)>,
) -> Result<RgbImage> {
    let (h, w) = (record.source_height, record.source_width);
    if h == 0 || w == 0 {
        return Err(Error::Contract("record has no source extent".into()));
    }
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb([128, 128, 128]));
    if let Some(bg) = background {
        let (bh, bw, bc) = bg.dim();
        if (bh, bw) != (h, w) || bc == 0 {
            return Err(Error::Contract(format!("background is {bh}x{bw}, map covers {h}x{w}")));
        }
        for (x, y, p) in img.enumerate_pixels_mut() {
            let (y, x) = (y as usize, x as usize);
            *p = Rgb([0, 1, 2].map(|c| bg[[y, x, c.min(bc - 1)]]));
        }
    }
    let range = range.unwrap_or_else(|| record.range());
    for cell in record.cells.iter().filter(|c| c.t == 0) {
        let color = heat_color(record.frame_view[cell.row][cell.col], range);
        for r in &cell.sources {
            for y in r.top..r.bottom.min(h) {
                for x in r.left..r.right.min(w) {
                    let p = img.get_pixel_mut(x as u32, y as u32);
                    for c in 0..3 {
                        let v = p.0[c] as f64 * (1.0 - OVERLAY_ALPHA) + color.0[c] as f64 * OVERLAY_ALPHA;
                        p.0[c] = v.round() as u8;
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Writes `<stem>.json` and `<stem>.png` into `dir`.
pub fn export_quality_map(
    out: &QualityOutput,
    background: Option<ArrayView3<'_, u8>>,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    let record = QualityMapRecord::from_output(out)?;
    let json = dir.join(format!("{stem}.json"));
    let png = dir.join(format!("{stem}.png"));
    std::fs::write(&json, record.to_json()).map_err(|e| Error::io(&json, e))?;
    render_overlay(&record, background, None)?
        .save(&png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok((json, png))
}
