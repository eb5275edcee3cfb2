//! Bilinear resampling with half-pixel centres.
//!
//! Output pixel `i` samples the source at `(i + 0.5) * in/out - 0.5`,
//! clamped at zero, from its two neighbours on each axis; edges replicate.
//! Results round half away from zero, so downsizing the 2x2 checkerboard
//! `[[0, 255], [255, 0]]` to 1x1 samples the centre `(0.5, 0.5)` and yields
//! `round(127.5) = 128`.

use ndarray::{Array3, Array4, ArrayView3, Axis};

use crate::media::VideoClip;
use crate::{Error, Result};

struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

pub fn resize_bilinear(frame: ArrayView3<'_, u8>, out_h: usize, out_w: usize) -> Array3<u8> {
    let (h, w, c) = frame.dim();
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    Array3::from_shape_fn((out_h, out_w, c), |(y, x, ch)| {
        let (a, b) = (&ty[y], &tx[x]);
        let p = |yy: usize, xx: usize| frame[[yy, xx, ch]] as f64;
        let top = p(a.lo, b.lo) * (1.0 - b.frac) + p(a.lo, b.hi) * b.frac;
        let bottom = p(a.hi, b.lo) * (1.0 - b.frac) + p(a.hi, b.hi) * b.frac;
        let v = top * (1.0 - a.frac) + bottom * a.frac;
        v.round().clamp(0.0, 255.0) as u8
    })
}

pub(crate) fn resize_clip(clip: &VideoClip, out_h: usize, out_w: usize) -> Result<VideoClip> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Config("resize target must be positive".into()));
    }
    let frames: Vec<Array3<u8>> = clip
        .frames()
        .axis_iter(Axis(0))
        .map(|f| resize_bilinear(f, out_h, out_w))
        .collect();
    let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
    let stacked: Array4<u8> =
        ndarray::stack(Axis(0), &views).map_err(|e| Error::Contract(e.to_string()))?;
    VideoClip::new(stacked, clip.fps(), clip.source_id())
}

/// Enlarges a clip, keeping its aspect ratio, until both sides reach
/// `min_side`. Clips that already fit are returned unchanged.
pub fn upscale_to_fit(clip: &VideoClip, min_side: usize) -> Result<VideoClip> {
    let (h, w) = (clip.height(), clip.width());
    if h >= min_side && w >= min_side {
        return Ok(clip.clone());
    }
    let scale = (min_side as f64 / h as f64).max(min_side as f64 / w as f64);
    let out_h = ((h as f64 * scale).ceil() as usize).max(min_side);
    let out_w = ((w as f64 * scale).ceil() as usize).max(min_side);
    resize_clip(clip, out_h, out_w)
}
