//! Samplers compared against grid mini-patch sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    check_feasible, check_frames, draw_offsets, make_plan, partition_grids, resize::resize_clip,
    sampling_rng, splice, FragmentBatch, GridSpec, Rect, SamplingPlan, Variant, STREAM_CROP,
    STREAM_OFFSETS, STREAM_RANDOM_PATCHES, STREAM_SHUFFLE,
};
use crate::media::VideoClip;
use crate::{Error, Result};

fn full_frame(clip: &VideoClip) -> Rect {
    Rect {
        top: 0,
        bottom: clip.height(),
        left: 0,
        right: clip.width(),
    }
}

/// Grid sampling with offsets redrawn independently for every frame.
///
/// Frame 0 uses exactly the offsets of the aligned plan for the same seed;
/// later frames continue the same random stream.
pub fn variant_unaligned(clip: &VideoClip, spec: &GridSpec, seed: u64) -> Result<FragmentBatch> {
    check_frames(clip, spec)?;
    let rects = partition_grids(clip.height(), clip.width(), spec.grids)?;
    check_feasible(&rects, spec.patch, spec.grids)?;
    let mut rng = sampling_rng(seed, STREAM_OFFSETS);
    let per_frame: Vec<Vec<(usize, usize)>> = (0..spec.frames)
        .map(|_| draw_offsets(&mut rng, &rects, spec.patch))
        .collect();
    let plan = SamplingPlan {
        grids: spec.grids,
        patch: spec.patch,
        grid_bounds: rects.clone(),
        offsets: per_frame[0].clone(),
        seed,
    };
    let slots: Vec<usize> = (0..rects.len()).collect();
    let fragments = splice(clip, spec.grids, spec.patch, &slots, |t, k| {
        let (dy, dx) = per_frame[t][k];
        (rects[k].top + dy, rects[k].left + dx)
    });
    Ok(FragmentBatch {
        fragments,
        plan,
        variant: Variant::Unaligned,
        frame_offsets: Some(per_frame),
        slots,
    })
}

/// `grids^2` temporally aligned patches drawn anywhere in the frame and
/// spliced in draw order; patches may overlap.
pub fn variant_random_minipatches(clip: &VideoClip, spec: &GridSpec, seed: u64) -> Result<FragmentBatch> {
    check_frames(clip, spec)?;
    let frame = full_frame(clip);
    if clip.height() < spec.patch || clip.width() < spec.patch {
        return Err(Error::FragmentInfeasible {
            row: 0,
            col: 0,
            grid_height: clip.height(),
            grid_width: clip.width(),
            patch: spec.patch,
            min_height: spec.patch,
            min_width: spec.patch,
        });
    }
    let n = spec.grids * spec.grids;
    let bounds = vec![frame; n];
    let mut rng = sampling_rng(seed, STREAM_RANDOM_PATCHES);
    let offsets = draw_offsets(&mut rng, &bounds, spec.patch);
    let plan = SamplingPlan {
        grids: spec.grids,
        patch: spec.patch,
        grid_bounds: bounds,
        offsets,
        seed,
    };
    let slots: Vec<usize> = (0..n).collect();
    let fragments = splice(clip, spec.grids, spec.patch, &slots, |_, k| plan.offsets[k]);
    Ok(FragmentBatch {
        fragments,
        plan,
        variant: Variant::RandomMinipatch,
        frame_offsets: None,
        slots,
    })
}

/// The splice permutation used by [`variant_shuffled`] for `seed`.
pub(crate) fn shuffle_slots(cells: usize, seed: u64) -> Vec<usize> {
    let mut slots: Vec<usize> = (0..cells).collect();
    slots.shuffle(&mut sampling_rng(seed, STREAM_SHUFFLE));
    slots
}

/// Grid sampling with the patches spliced at a seeded random permutation of
/// the grid positions.
pub fn variant_shuffled(clip: &VideoClip, spec: &GridSpec, seed: u64) -> Result<FragmentBatch> {
    check_frames(clip, spec)?;
    let rects = partition_grids(clip.height(), clip.width(), spec.grids)?;
    let plan = make_plan(&rects, spec.patch, seed)?;
    let slots = shuffle_slots(rects.len(), seed);
    let fragments = splice(clip, spec.grids, spec.patch, &slots, |_, k| {
        let r = plan.source_rect(k);
        (r.top, r.left)
    });
    Ok(FragmentBatch {
        fragments,
        plan,
        variant: Variant::Shuffled,
        frame_offsets: None,
        slots,
    })
}

/// Every frame bilinearly resized to `side x side`.
pub fn variant_resize(clip: &VideoClip, side: usize) -> Result<FragmentBatch> {
    let resized = resize_clip(clip, side, side)?;
    Ok(FragmentBatch {
        fragments: resized.into_frames(),
        plan: SamplingPlan {
            grids: 1,
            patch: side,
            grid_bounds: vec![full_frame(clip)],
            offsets: vec![(0, 0)],
            seed: 0,
        },
        variant: Variant::Resize,
        frame_offsets: None,
        slots: vec![0],
    })
}

/// One seeded `side x side` crop, at the same place in every frame.
pub fn variant_crop(clip: &VideoClip, side: usize, seed: u64) -> Result<FragmentBatch> {
    if side == 0 {
        return Err(Error::Config("crop side must be positive".into()));
    }
    if clip.height() < side || clip.width() < side {
        return Err(Error::FragmentInfeasible {
            row: 0,
            col: 0,
            grid_height: clip.height(),
            grid_width: clip.width(),
            patch: side,
            min_height: side,
            min_width: side,
        });
    }
    let mut rng = sampling_rng(seed, STREAM_CROP);
    let dy = rng.random_range(0..=clip.height() - side);
    let dx = rng.random_range(0..=clip.width() - side);
    let plan = SamplingPlan {
        grids: 1,
        patch: side,
        grid_bounds: vec![full_frame(clip)],
        offsets: vec![(dy, dx)],
        seed,
    };
    let fragments = splice(clip, 1, side, &[0], |_, _| (dy, dx));
    Ok(FragmentBatch {
        fragments,
        plan,
        variant: Variant::Crop,
        frame_offsets: None,
        slots: vec![0],
    })
}
