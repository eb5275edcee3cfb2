//! Binary fragment batch format. Integers little endian.
//!
//! ```text
//! magic        8 bytes "VQAFRAG1"
//! variant      u8  (0 fragments, 1 random-mini-patches, 2 shuffled-mini-patches,
//!                   3 without-temporal-alignment, 4 bilinear-resizing, 5 random-cropping)
//! frames       u32
//! grids        u32
//! patch        u32
//! channels     u32
//! seed         u64
//! cells        grids^2 records of u32 top, bottom, left, right, offset_y, offset_x
//! slots        grids^2 u32
//! per_frame    u8 flag; if 1, frames * grids^2 pairs of u32 (offset_y, offset_x)
//! payload      frames * side * side * channels bytes, side = grids * patch
//! ```

use ndarray::Array4;

use super::{FragmentBatch, Rect, SamplingPlan, Variant};
use crate::{Error, Result};

pub const FRAGMENT_MAGIC: &[u8; 8] = b"VQAFRAG1";

pub fn encode_fragments(batch: &FragmentBatch) -> Vec<u8> {
    let (t, _, _, c) = batch.fragments.dim();
    let plan = &batch.plan;
    let mut out = Vec::new();
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(FRAGMENT_MAGIC);
    out.push(batch.variant.code());
    for v in [t, plan.grids, plan.patch, c] {
        put(&mut out, v);
    }
    out.extend_from_slice(&plan.seed.to_le_bytes());
    for (r, &(dy, dx)) in plan.grid_bounds.iter().zip(&plan.offsets) {
        for v in [r.top, r.bottom, r.left, r.right, dy, dx] {
            put(&mut out, v);
        }
    }
    for &s in &batch.slots {
        put(&mut out, s);
    }
    match &batch.frame_offsets {
        None => out.push(0),
        Some(per_frame) => {
            out.push(1);
            for frame in per_frame {
                for &(dy, dx) in frame {
                    put(&mut out, dy);
                    put(&mut out, dx);
                }
            }
        }
    }
    out.extend(batch.fragments.iter().copied());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("truncated fragment batch at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn decode_fragments(bytes: &[u8]) -> Result<FragmentBatch> {
    let mut r = Cursor { buf: bytes, pos: 0 };
    if r.take(8)? != FRAGMENT_MAGIC {
        return Err(Error::Decode("bad magic, not a fragment batch".into()));
    }
    let code = r.u8()?;
    let variant =
        Variant::from_code(code).ok_or_else(|| Error::Decode(format!("unknown variant code {code}")))?;
    let t = r.u32()?;
    let grids = r.u32()?;
    let patch = r.u32()?;
    let c = r.u32()?;
    let seed = r.u64()?;
    let cells = grids
        .checked_mul(grids)
        .filter(|&n| n <= bytes.len())
        .ok_or_else(|| Error::Decode("grid count out of range".into()))?;
    let mut grid_bounds = Vec::with_capacity(cells);
    let mut offsets = Vec::with_capacity(cells);
    for _ in 0..cells {
        grid_bounds.push(Rect {
            top: r.u32()?,
            bottom: r.u32()?,
            left: r.u32()?,
            right: r.u32()?,
        });
        offsets.push((r.u32()?, r.u32()?));
    }
    let slots = (0..cells).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let frame_offsets = match r.u8()? {
        0 => None,
        1 => {
            if t.checked_mul(cells).is_none_or(|n| n > bytes.len()) {
                return Err(Error::Decode("per-frame offset table out of range".into()));
            }
            let mut per = Vec::with_capacity(t);
            for _ in 0..t {
                per.push(
                    (0..cells)
                        .map(|_| Ok((r.u32()?, r.u32()?)))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            Some(per)
        }
        other => return Err(Error::Decode(format!("bad per-frame flag {other}"))),
    };
    let side = grids * patch;
    let len = [t, side, side, c]
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Decode("payload size overflows".into()))?;
    let payload = r.take(len)?;
    if r.pos != bytes.len() {
        return Err(Error::Decode("trailing bytes after fragment payload".into()));
    }
    let fragments = Array4::from_shape_vec((t, side, side, c), payload.to_vec())
        .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(FragmentBatch {
        fragments,
        plan: SamplingPlan {
            grids,
            patch,
            grid_bounds,
            offsets,
            seed,
        },
        variant,
        frame_offsets,
        slots,
    })
}
