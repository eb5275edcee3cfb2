//! Grid mini-patch sampling.
//!
//! A frame of `H x W` pixels is cut into `G x G` grid cells with floored
//! boundaries, one `S x S` mini-patch is drawn inside each cell, and the
//! mini-patches are spliced back in grid order into a `G*S x G*S` fragment.
//! The same offsets are used for every frame, so temporal variation inside
//! a patch survives sampling. No pixel is ever resampled on this path.

mod io;
mod resize;
mod variants;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::media::{select_frames, VideoClip};
use crate::{Error, Result};

pub use io::{decode_fragments, encode_fragments, FRAGMENT_MAGIC};
pub use resize::{resize_bilinear, upscale_to_fit};
pub use variants::{
    variant_crop, variant_random_minipatches, variant_resize, variant_shuffled,
    variant_unaligned,
};

/// Fragment geometry: `grids` cells per side, `patch`-pixel mini-patches,
/// `frames` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub grids: usize,
    pub patch: usize,
    pub frames: usize,
}

impl GridSpec {
    pub fn new(grids: usize, patch: usize, frames: usize) -> Result<Self> {
        if grids == 0 || patch == 0 || frames == 0 {
            return Err(Error::Config(format!(
                "grid spec needs positive values, got grids={grids} patch={patch} frames={frames}"
            )));
        }
        Ok(Self {
            grids,
            patch,
            frames,
        })
    }

    /// 32 frames, 7x7 grids of 32-pixel patches: 224x224 fragments.
    pub const fn normal_density() -> Self {
        Self {
            grids: 7,
            patch: 32,
            frames: 32,
        }
    }

    /// 16 frames, 4x4 grids of 32-pixel patches: 128x128 fragments.
    pub const fn low_density() -> Self {
        Self {
            grids: 4,
            patch: 32,
            frames: 16,
        }
    }

    /// 8 frames, 2x2 grids of 32-pixel patches: 64x64 fragments.
    pub const fn tiny() -> Self {
        Self {
            grids: 2,
            patch: 32,
            frames: 8,
        }
    }

    pub fn side(&self) -> usize {
        self.grids * self.patch
    }

    /// Pixels kept per frame.
    pub fn sampled_pixels(&self) -> usize {
        self.side() * self.side()
    }

    /// Smallest source side (in both directions) every grid can hold a patch in.
    pub fn min_source_side(&self) -> usize {
        self.side()
    }
}

/// Half-open pixel rectangle `[top, bottom) x [left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Rect {
    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    pub fn contains(&self, other: &Rect) -> bool {
        self.top <= other.top
            && other.bottom <= self.bottom
            && self.left <= other.left
            && other.right <= self.right
    }
}

/// Splits an `height x width` frame into `grids x grids` cells, row-major.
/// Cell `(i, j)` covers rows `[i*H/G, (i+1)*H/G)` and columns
/// `[j*W/G, (j+1)*W/G)`, both endpoints floored.
pub fn partition_grids(height: usize, width: usize, grids: usize) -> Result<Vec<Rect>> {
    if grids == 0 || grids > height.min(width) {
        return Err(Error::Partition {
            height,
            width,
            grids,
        });
    }
    let mut rects = Vec::with_capacity(grids * grids);
    for i in 0..grids {
        for j in 0..grids {
            rects.push(Rect {
                top: i * height / grids,
                bottom: (i + 1) * height / grids,
                left: j * width / grids,
                right: (j + 1) * width / grids,
            });
        }
    }
    Ok(rects)
}

/// Where each mini-patch is taken from: one offset per grid cell, relative to
/// the cell origin, shared by all frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub grids: usize,
    pub patch: usize,
    pub grid_bounds: Vec<Rect>,
    pub offsets: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn num_cells(&self) -> usize {
        self.grid_bounds.len()
    }

    /// Source rectangle of the patch drawn from cell `k`.
    pub fn source_rect(&self, k: usize) -> Rect {
        patch_rect(&self.grid_bounds[k], self.offsets[k], self.patch)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grids * self.grids;
        if self.grid_bounds.len() != n || self.offsets.len() != n {
            return Err(Error::Contract(format!(
                "plan for {g}x{g} grids has {} bounds and {} offsets",
                self.grid_bounds.len(),
                self.offsets.len(),
                g = self.grids
            )));
        }
        for k in 0..n {
            if !self.grid_bounds[k].contains(&self.source_rect(k)) {
                return Err(Error::Contract(format!(
                    "offset {:?} of cell {k} leaves its grid {:?}",
                    self.offsets[k], self.grid_bounds[k]
                )));
            }
        }
        Ok(())
    }
}

fn patch_rect(bounds: &Rect, (dy, dx): (usize, usize), patch: usize) -> Rect {
    Rect {
        top: bounds.top + dy,
        bottom: bounds.top + dy + patch,
        left: bounds.left + dx,
        right: bounds.left + dx + patch,
    }
}

/// The generator behind every sampling decision: ChaCha8 seeded from a
/// `u64`, with a separate stream per kind of draw.
pub(crate) fn sampling_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const STREAM_OFFSETS: u64 = 0;
pub(crate) const STREAM_SHUFFLE: u64 = 1;
pub(crate) const STREAM_RANDOM_PATCHES: u64 = 2;
pub(crate) const STREAM_CROP: u64 = 3;

fn isqrt_exact(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

pub(crate) fn check_feasible(rects: &[Rect], patch: usize, grids: usize) -> Result<()> {
    for (k, r) in rects.iter().enumerate() {
        if r.height() < patch || r.width() < patch {
            return Err(Error::FragmentInfeasible {
                row: k / grids,
                col: k % grids,
                grid_height: r.height(),
                grid_width: r.width(),
                patch,
                min_height: grids * patch,
                min_width: grids * patch,
            });
        }
    }
    Ok(())
}

pub(crate) fn draw_offsets(rng: &mut ChaCha8Rng, rects: &[Rect], patch: usize) -> Vec<(usize, usize)> {
    rects
        .iter()
        .map(|r| {
            let dy = rng.random_range(0..=r.height() - patch);
            let dx = rng.random_range(0..=r.width() - patch);
            (dy, dx)
        })
        .collect()
}

/// Draws one offset per grid cell, uniform over the positions that keep the
/// patch inside the cell.
pub fn make_plan(rects: &[Rect], patch: usize, seed: u64) -> Result<SamplingPlan> {
    let grids = isqrt_exact(rects.len())
        .filter(|&g| g > 0)
        .ok_or_else(|| Error::Contract(format!("{} rectangles do not form a square grid", rects.len())))?;
    if patch == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    check_feasible(rects, patch, grids)?;
    let mut rng = sampling_rng(seed, STREAM_OFFSETS);
    let offsets = draw_offsets(&mut rng, rects, patch);
    Ok(SamplingPlan {
        grids,
        patch,
        grid_bounds: rects.to_vec(),
        offsets,
        seed,
    })
}

/// Which sampler produced a fragment batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[serde(rename = "fragments")]
    Gms,
    #[serde(rename = "random-mini-patches")]
    RandomMinipatch,
    #[serde(rename = "shuffled-mini-patches")]
    Shuffled,
    #[serde(rename = "without-temporal-alignment")]
    Unaligned,
    #[serde(rename = "bilinear-resizing")]
    Resize,
    #[serde(rename = "random-cropping")]
    Crop,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Gms,
        Variant::Resize,
        Variant::Crop,
        Variant::RandomMinipatch,
        Variant::Shuffled,
        Variant::Unaligned,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Gms => "fragments",
            Variant::RandomMinipatch => "random-mini-patches",
            Variant::Shuffled => "shuffled-mini-patches",
            Variant::Unaligned => "without-temporal-alignment",
            Variant::Resize => "bilinear-resizing",
            Variant::Crop => "random-cropping",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            Variant::Gms => 0,
            Variant::RandomMinipatch => 1,
            Variant::Shuffled => 2,
            Variant::Unaligned => 3,
            Variant::Resize => 4,
            Variant::Crop => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.code() == code)
    }

    /// Whether two samplings with different seeds can differ.
    pub fn is_random(&self) -> bool {
        !matches!(self, Variant::Resize)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s {
            "fragments" | "gms" => Variant::Gms,
            "random-mini-patches" | "random-minipatch" => Variant::RandomMinipatch,
            "shuffled-mini-patches" | "shuffled" => Variant::Shuffled,
            "without-temporal-alignment" | "unaligned" => Variant::Unaligned,
            "bilinear-resizing" | "resize" => Variant::Resize,
            "random-cropping" | "crop" => Variant::Crop,
            other => {
                return Err(Error::Config(format!(
                    "unknown sampler variant {other:?}; expected one of {}",
                    Variant::ALL.map(|v| v.name()).join(", ")
                )))
            }
        };
        Ok(v)
    }
}

/// Sampled network input plus everything needed to trace each block back to
/// the source video.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBatch {
    /// `(frames, side, side, channels)`.
    pub fragments: Array4<u8>,
    pub plan: SamplingPlan,
    pub variant: Variant,
    /// Per-frame offsets, only when frames were sampled independently.
    pub frame_offsets: Option<Vec<Vec<(usize, usize)>>>,
    /// `slots[k]` is the splice position (row-major cell index) of patch `k`.
    pub slots: Vec<usize>,
}

impl FragmentBatch {
    pub fn side(&self) -> usize {
        self.fragments.dim().1
    }

    pub fn num_frames(&self) -> usize {
        self.fragments.dim().0
    }

    fn offset_at(&self, t: usize, k: usize) -> (usize, usize) {
        match &self.frame_offsets {
            Some(per_frame) => per_frame[t][k],
            None => self.plan.offsets[k],
        }
    }

    /// Source rectangle of the block spliced into cell `cell` of frame `t`.
    /// For the resize variant the "cell" is the whole frame.
    pub fn cell_source(&self, t: usize, cell: usize) -> Rect {
        let k = self
            .slots
            .iter()
            .position(|&s| s == cell)
            .expect("slots are a permutation of cells");
        if self.variant == Variant::Resize {
            return self.plan.grid_bounds[0];
        }
        patch_rect(&self.plan.grid_bounds[k], self.offset_at(t, k), self.plan.patch)
    }

    /// Maps a rectangle of fragment coordinates in frame `t` back to source
    /// pixels; one rectangle per cell the region overlaps.
    pub fn source_rects(&self, t: usize, region: &Rect) -> Vec<Rect> {
        if self.variant == Variant::Resize {
            let src = self.plan.grid_bounds[0];
            let side = self.side();
            let sy = |v: usize| src.top + v * src.height() / side;
            let sx = |v: usize| src.left + v * src.width() / side;
            return vec![Rect {
                top: sy(region.top),
                bottom: sy(region.bottom),
                left: sx(region.left),
                right: sx(region.right),
            }];
        }
        let p = self.plan.patch;
        let g = self.plan.grids;
        let mut out = Vec::new();
        for ci in region.top / p..region.bottom.div_ceil(p).min(g) {
            for cj in region.left / p..region.right.div_ceil(p).min(g) {
                let top = region.top.max(ci * p);
                let bottom = region.bottom.min((ci + 1) * p);
                let left = region.left.max(cj * p);
                let right = region.right.min((cj + 1) * p);
                if top >= bottom || left >= right {
                    continue;
                }
                let src = self.cell_source(t, ci * g + cj);
                out.push(Rect {
                    top: src.top + top - ci * p,
                    bottom: src.top + bottom - ci * p,
                    left: src.left + left - cj * p,
                    right: src.left + right - cj * p,
                });
            }
        }
        out
    }
}

/// Copies patch `k` (source origin given per frame by `origin`) into
/// splice slot `slots[k]`.
pub(crate) fn splice(
    clip: &VideoClip,
    grids: usize,
    patch: usize,
    slots: &[usize],
    origin: impl Fn(usize, usize) -> (usize, usize),
) -> Array4<u8> {
    let (t, _, _, c) = clip.frames().dim();
    let side = grids * patch;
    let mut out = Array4::<u8>::zeros((t, side, side, c));
    for frame in 0..t {
        for (k, &slot) in slots.iter().enumerate() {
            let (y, x) = origin(frame, k);
            let (oy, ox) = ((slot / grids) * patch, (slot % grids) * patch);
            out.slice_mut(s![frame, oy..oy + patch, ox..ox + patch, ..]).assign(
                &clip
                    .frames()
                    .slice(s![frame, y..y + patch, x..x + patch, ..]),
            );
        }
    }
    out
}

pub(crate) fn check_frames(clip: &VideoClip, spec: &GridSpec) -> Result<()> {
    if clip.num_frames() != spec.frames {
        return Err(Error::Contract(format!(
            "clip has {} frames, grid spec expects {}",
            clip.num_frames(),
            spec.frames
        )));
    }
    Ok(())
}

/// Splices the patches named by `plan` out of every frame of `clip`.
pub fn extract_fragments(clip: &VideoClip, plan: &SamplingPlan, spec: &GridSpec) -> Result<FragmentBatch> {
    check_frames(clip, spec)?;
    if plan.grids != spec.grids || plan.patch != spec.patch {
        return Err(Error::Contract(format!(
            "plan is {}x{} grids of {}px patches, spec wants {}x{} of {}px",
            plan.grids, plan.grids, plan.patch, spec.grids, spec.grids, spec.patch
        )));
    }
    plan.validate()?;
    let expected = partition_grids(clip.height(), clip.width(), spec.grids)?;
    if expected != plan.grid_bounds {
        return Err(Error::Contract(format!(
            "plan grid bounds do not partition a {}x{} frame",
            clip.height(),
            clip.width()
        )));
    }
    let slots: Vec<usize> = (0..plan.num_cells()).collect();
    let fragments = splice(clip, spec.grids, spec.patch, &slots, |_, k| {
        let r = plan.source_rect(k);
        (r.top, r.left)
    });
    Ok(FragmentBatch {
        fragments,
        plan: plan.clone(),
        variant: Variant::Gms,
        frame_offsets: None,
        slots,
    })
}

/// Grid mini-patch sampling of a clip whose frame count already matches.
pub fn grid_minipatch_sample(clip: &VideoClip, spec: &GridSpec, seed: u64) -> Result<FragmentBatch> {
    check_frames(clip, spec)?;
    let rects = partition_grids(clip.height(), clip.width(), spec.grids)?;
    let plan = make_plan(&rects, spec.patch, seed)?;
    extract_fragments(clip, &plan, spec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Bilinearly enlarge clips too small for the grid instead of failing.
    pub upscale_small: bool,
}

/// Full sampling pipeline: temporal selection of `spec.frames` frames, the
/// optional pre-upscale, then the chosen sampler. Resize and crop produce
/// `spec.side()`-pixel squares.
pub fn sample(
    clip: &VideoClip,
    spec: &GridSpec,
    variant: Variant,
    seed: u64,
    opts: SampleOptions,
) -> Result<FragmentBatch> {
    let mut clip = select_frames(clip, spec.frames)?;
    let needs_grid = !matches!(variant, Variant::Resize);
    if opts.upscale_small && needs_grid {
        clip = upscale_to_fit(&clip, spec.side())?;
    }
    match variant {
        Variant::Gms => grid_minipatch_sample(&clip, spec, seed),
        Variant::RandomMinipatch => variant_random_minipatches(&clip, spec, seed),
        Variant::Shuffled => variant_shuffled(&clip, spec, seed),
        Variant::Unaligned => variant_unaligned(&clip, spec, seed),
        Variant::Resize => variant_resize(&clip, spec.side()),
        Variant::Crop => variant_crop(&clip, spec.side(), seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_clip(t: usize, h: usize, w: usize, seed: u64) -> VideoClip {
        let mut rng = sampling_rng(seed, 99);
        let frames = Array4::from_shape_simple_fn((t, h, w, 3), || rng.random::<u8>());
        VideoClip::new(frames, 30.0, "noise").unwrap()
    }

    #[test]
    fn divisible_partition() {
        let rects = partition_grids(224, 224, 7).unwrap();
        assert!(rects.iter().all(|r| r.height() == 32 && r.width() == 32));
        assert_eq!(
            rects[8],
            Rect {
                top: 32,
                bottom: 64,
                left: 32,
                right: 64
            }
        );
    }

    #[test]
    fn full_hd_partition_floors() {
        let rects = partition_grids(1080, 1920, 7).unwrap();
        assert_eq!(
            rects[0],
            Rect {
                top: 0,
                bottom: 154,
                left: 0,
                right: 274
            }
        );
        assert_eq!(rects[48].bottom, 1080);
        assert_eq!(rects[48].right, 1920);
    }

    #[test]
    fn too_many_grids_is_partition_error() {
        assert!(matches!(
            partition_grids(5, 100, 6),
            Err(Error::Partition { .. })
        ));
        assert!(partition_grids(10, 10, 0).is_err());
    }

    #[test]
    fn exact_grid_forces_zero_offset() {
        let rects = partition_grids(64, 64, 2).unwrap();
        for seed in 0..20 {
            let plan = make_plan(&rects, 32, seed).unwrap();
            assert!(plan.offsets.iter().all(|&o| o == (0, 0)));
        }
    }

    #[test]
    fn plans_are_seed_deterministic_and_seed_sensitive() {
        let rects = partition_grids(1080, 1920, 7).unwrap();
        assert_eq!(make_plan(&rects, 32, 5).unwrap(), make_plan(&rects, 32, 5).unwrap());
        let differs = (0..8u64).any(|s| {
            make_plan(&rects, 32, s).unwrap().offsets != make_plan(&rects, 32, s + 1).unwrap().offsets
        });
        assert!(differs);
    }

    #[test]
    fn infeasible_grid_names_cell_and_minimum() {
        let rects = partition_grids(100, 300, 4).unwrap();
        match make_plan(&rects, 32, 0) {
            Err(Error::FragmentInfeasible {
                row,
                col,
                min_height,
                ..
            }) => {
                assert_eq!((row, col), (0, 0));
                assert_eq!(min_height, 128);
            }
            other => panic!("expected infeasible error, got {other:?}"),
        }
    }

    #[test]
    fn identity_when_frame_equals_fragment() {
        let clip = noise_clip(2, 64, 64, 1);
        let spec = GridSpec::new(2, 32, 2).unwrap();
        let batch = grid_minipatch_sample(&clip, &spec, 123).unwrap();
        assert_eq!(&batch.fragments, clip.frames());
    }

    #[test]
    fn preset_shapes() {
        let clip = noise_clip(40, 240, 260, 2);
        let dense = sample(&clip, &GridSpec::normal_density(), Variant::Gms, 0, Default::default()).unwrap();
        assert_eq!(dense.fragments.dim(), (32, 224, 224, 3));
        let low = sample(&clip, &GridSpec::low_density(), Variant::Gms, 0, Default::default()).unwrap();
        assert_eq!(low.fragments.dim(), (16, 128, 128, 3));
    }

    #[test]
    fn blocks_are_bit_exact_copies() {
        let clip = noise_clip(3, 100, 130, 3);
        let spec = GridSpec::new(3, 20, 3).unwrap();
        let b = grid_minipatch_sample(&clip, &spec, 9).unwrap();
        for t in 0..3 {
            for cell in 0..9 {
                let r = b.cell_source(t, cell);
                let (oy, ox) = ((cell / 3) * 20, (cell % 3) * 20);
                assert_eq!(
                    b.fragments.slice(s![t, oy..oy + 20, ox..ox + 20, ..]),
                    clip.frames().slice(s![t, r.top..r.bottom, r.left..r.right, ..])
                );
            }
        }
    }

    #[test]
    fn mismatched_plan_is_contract_error() {
        let clip = noise_clip(2, 64, 64, 4);
        let spec = GridSpec::new(2, 16, 2).unwrap();
        let rects = partition_grids(64, 64, 2).unwrap();
        let plan = make_plan(&rects, 32, 0).unwrap();
        assert!(matches!(extract_fragments(&clip, &plan, &spec), Err(Error::Contract(_))));
        let wrong_frames = GridSpec::new(2, 32, 3).unwrap();
        assert!(matches!(extract_fragments(&clip, &plan, &wrong_frames), Err(Error::Contract(_))));
        let other_rects = partition_grids(70, 64, 2).unwrap();
        let other = make_plan(&other_rects, 32, 0).unwrap();
        let spec = GridSpec::new(2, 32, 2).unwrap();
        assert!(matches!(extract_fragments(&clip, &other, &spec), Err(Error::Contract(_))));
    }

    #[test]
    fn source_rects_follow_plan() {
        let clip = noise_clip(1, 90, 90, 5);
        let spec = GridSpec::new(3, 10, 1).unwrap();
        let b = grid_minipatch_sample(&clip, &spec, 2).unwrap();
        let whole = Rect {
            top: 10,
            bottom: 20,
            left: 0,
            right: 10,
        };
        assert_eq!(b.source_rects(0, &whole), vec![b.plan.source_rect(3)]);
        let straddle = Rect {
            top: 5,
            bottom: 15,
            left: 0,
            right: 10,
        };
        assert_eq!(b.source_rects(0, &straddle).len(), 2);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::from_code(v.code()), Some(v));
        }
        assert!("nearest".parse::<Variant>().is_err());
    }

    #[test]
    fn upscale_option_rescues_small_clips() {
        let clip = noise_clip(8, 40, 50, 6);
        let spec = GridSpec::tiny();
        assert!(matches!(
            sample(&clip, &spec, Variant::Gms, 0, SampleOptions::default()),
            Err(Error::FragmentInfeasible { .. })
        ));
        let b = sample(&clip, &spec, Variant::Gms, 0, SampleOptions { upscale_small: true }).unwrap();
        assert_eq!(b.fragments.dim(), (8, 64, 64, 3));
    }
}
