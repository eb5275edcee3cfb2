//! Frame stacks: decoding, temporal selection, synthetic corpora and manifests.

mod manifest;
mod raw;
mod synth;

use ndarray::{Array4, ArrayView3, Axis};

use crate::{Error, Result};

pub use manifest::{assign_splits, Manifest, ManifestEntry, Split, SplitFractions};
pub use raw::{decode_raw, encode_raw, load_clip, save_clip, DEFAULT_FPS, RAW_MAGIC};
pub use synth::{
    mos_for, synthesize_clip, synthesize_corpus, write_corpus, Degradation, DistortionProfile, SyntheticLabel,
    BLUR_SIGMA_SCALE, CLIP_DIR, MANIFEST_FILE, MOS_MAX, MOS_MIN, NOISE_LEVEL_SCALE, SHAKE_SCALE,
};

/// A decoded clip: 8-bit pixels laid out as `(frames, height, width, channels)`.
///
/// Conversion to normalized reals happens at the network boundary; everything
/// upstream of the network works on the integer pixels so fragment blocks can
/// be compared bit for bit against their source.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Array4<u8>,
    fps: f32,
    source_id: String,
}

impl VideoClip {
    pub fn new(frames: Array4<u8>, fps: f32, source_id: impl Into<String>) -> Result<Self> {
        let (t, h, w, c) = frames.dim();
        if t == 0 {
            return Err(Error::EmptyClip);
        }
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Contract(format!(
                "frame dimensions must be positive, got {h}x{w}x{c}"
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Contract(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            frames: frames.as_standard_layout().into_owned(),
            fps,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> &Array4<u8> {
        &self.frames
    }

    pub fn into_frames(self) -> Array4<u8> {
        self.frames
    }

    pub fn frame(&self, t: usize) -> ArrayView3<'_, u8> {
        self.frames.index_axis(Axis(0), t)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn height(&self) -> usize {
        self.frames.dim().1
    }

    pub fn width(&self) -> usize {
        self.frames.dim().2
    }

    pub fn channels(&self) -> usize {
        self.frames.dim().3
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
}

/// Indices of `count` frames spread uniformly over `source_frames`:
/// `round(k * (source_frames - 1) / (count - 1))`, halves rounded up.
///
/// Frames repeat when the source is shorter than `count`. A single requested
/// frame is the first one.
pub fn frame_indices(source_frames: usize, count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![0];
    }
    let span = source_frames.saturating_sub(1);
    let denom = count - 1;
    (0..count)
        .map(|k| (2 * k * span + denom) / (2 * denom))
        .collect()
}

/// Keeps exactly `count` frames at uniformly spaced indices.
pub fn select_frames(clip: &VideoClip, count: usize) -> Result<VideoClip> {
    if count == 0 {
        return Err(Error::Config("frame count must be at least 1".into()));
    }
    let indices = frame_indices(clip.num_frames(), count);
    let frames = clip.frames.select(Axis(0), &indices);
    VideoClip::new(frames, clip.fps, clip.source_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_clip(t: usize) -> VideoClip {
        let frames = Array4::from_shape_fn((t, 4, 5, 3), |(t, y, x, c)| (t * 10 + y + x + c) as u8);
        VideoClip::new(frames, 25.0, "ramp").unwrap()
    }

    #[test]
    fn indices_identity_when_lengths_match() {
        assert_eq!(frame_indices(8, 8), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn indices_hit_both_ends() {
        assert_eq!(frame_indices(4, 2), vec![0, 3]);
        assert_eq!(frame_indices(10, 4), vec![0, 3, 6, 9]);
        // 5 * k / 3 = 0, 1.67, 3.33, 5 -> 0, 2, 3, 5
        assert_eq!(frame_indices(6, 4), vec![0, 2, 3, 5]);
    }

    #[test]
    fn indices_repeat_short_sources() {
        assert_eq!(frame_indices(1, 4), vec![0, 0, 0, 0]);
        assert_eq!(frame_indices(2, 3), vec![0, 1, 1]);
    }

    #[test]
    fn select_is_idempotent_at_full_length() {
        let clip = ramp_clip(8);
        let same = select_frames(&clip, 8).unwrap();
        assert_eq!(same, clip);
        assert_eq!(select_frames(&same, 8).unwrap(), clip);
    }

    #[test]
    fn select_copies_chosen_frames() {
        let clip = ramp_clip(4);
        let picked = select_frames(&clip, 2).unwrap();
        assert_eq!(picked.num_frames(), 2);
        assert_eq!(picked.frame(1), clip.frame(3));
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(select_frames(&ramp_clip(3), 0).is_err());
        let empty = Array4::<u8>::zeros((0, 4, 4, 3));
        assert!(matches!(VideoClip::new(empty, 30.0, "x"), Err(Error::EmptyClip)));
    }
}
