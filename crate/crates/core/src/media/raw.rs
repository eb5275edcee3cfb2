//! Raw clip interchange format and the image-sequence decode path.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic     8 bytes  "VQARAW01"
//! frames    u32
//! height    u32
//! width     u32
//! channels  u32
//! fps       f32
//! id_len    u32
//! id        id_len bytes of UTF-8
//! payload   frames*height*width*channels bytes, row-major (t, y, x, c)
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array4;

use super::VideoClip;
use crate::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"VQARAW01";

/// Frame rate assigned to image sequences, which carry none.
pub const DEFAULT_FPS: f32 = 30.0;

pub fn encode_raw(clip: &VideoClip) -> Vec<u8> {
    let (t, h, w, c) = clip.frames().dim();
    let id = clip.source_id().as_bytes();
    let mut out = Vec::with_capacity(32 + id.len() + t * h * w * c);
    out.extend_from_slice(RAW_MAGIC);
    for dim in [t, h, w, c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&clip.fps().to_le_bytes());
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    out.extend(clip.frames().iter().copied());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| {
                Error::Decode(format!(
                    "truncated raw clip: need {n} bytes for {what} at offset {}, have {}",
                    self.pos,
                    self.buf.len().saturating_sub(self.pos)
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_raw(bytes: &[u8]) -> Result<VideoClip> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != RAW_MAGIC {
        return Err(Error::Decode("bad magic, not a raw clip".into()));
    }
    let t = r.u32("frame count")? as usize;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let c = r.u32("channels")? as usize;
    let fps = f32::from_bits(r.u32("fps")?);
    let id_len = r.u32("id length")? as usize;
    let id = std::str::from_utf8(r.take(id_len, "source id")?)
        .map_err(|e| Error::Decode(format!("source id is not UTF-8: {e}")))?
        .to_owned();
    if t == 0 {
        return Err(Error::EmptyClip);
    }
    let len = [t, h, w, c]
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Decode("payload size overflows".into()))?;
    let payload = r.take(len, "pixel payload")?;
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    let frames = Array4::from_shape_vec((t, h, w, c), payload.to_vec())
        .map_err(|e| Error::Decode(e.to_string()))?;
    VideoClip::new(frames, fps, id)
}

pub fn save_clip(clip: &VideoClip, path: &Path) -> Result<()> {
    fs::write(path, encode_raw(clip)).map_err(|e| Error::io(path, e))
}

/// Loads a clip from a raw interchange file, or from a directory of
/// PNG/JPEG frames taken in file-name order.
pub fn load_clip(path: &Path) -> Result<VideoClip> {
    if path.is_dir() {
        return load_image_sequence(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}

fn load_image_sequence(dir: &Path) -> Result<VideoClip> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyClip);
    }

    let mut pixels = Vec::new();
    let mut dims = None;
    for file in &files {
        let img = image::open(file)
            .map_err(|e| Error::Decode(format!("{}: {e}", file.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        match dims {
            None => dims = Some((h as usize, w as usize)),
            Some(d) if d != (h as usize, w as usize) => {
                return Err(Error::Decode(format!(
                    "{}: frame is {w}x{h}, expected {}x{}",
                    file.display(),
                    d.1,
                    d.0
                )))
            }
            Some(_) => {}
        }
        pixels.extend_from_slice(img.as_raw());
    }
    let (h, w) = dims.expect("at least one frame");
    let frames = Array4::from_shape_vec((files.len(), h, w, 3), pixels)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoClip::new(frames, DEFAULT_FPS, id)
}
