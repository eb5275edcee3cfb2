use fragvqa_core::media::VideoClip;
use fragvqa_core::sampling::{sample, GridSpec, Rect, SampleOptions, Variant};
use ndarray::{s, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_clip(t: usize, h: usize, w: usize, seed: u64) -> VideoClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = Array4::from_shape_simple_fn((t, h, w, 3), || rng.random::<u8>());
    VideoClip::new(frames, 25.0, "prop").unwrap()
}

/// Every source pixel belongs to exactly one grid cell.
fn assert_disjoint_cover(bounds: &[Rect], h: usize, w: usize) {
    let mut hits = vec![0u8; h * w];
    for r in bounds {
        for y in r.top..r.bottom {
            for x in r.left..r.right {
                hits[y * w + x] += 1;
            }
        }
    }
    assert!(hits.iter().all(|&c| c == 1), "cells overlap or leave gaps");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn gms_structure(
        grids in 1usize..6,
        patch in 1usize..12,
        t in 1usize..5,
        extra_h in 0usize..40,
        extra_w in 0usize..40,
        seed in any::<u64>(),
    ) {
        let (h, w) = (grids * patch + extra_h, grids * patch + extra_w);
        let clip = random_clip(t, h, w, seed ^ 0xa5a5);
        let spec = GridSpec::new(grids, patch, t).unwrap();
        let batch = sample(&clip, &spec, Variant::Gms, seed, SampleOptions::default()).unwrap();
        let plan = &batch.plan;

        prop_assert_eq!(plan.grid_bounds.len(), grids * grids);
        assert_disjoint_cover(&plan.grid_bounds, h, w);
        // floored partition: cell (i, j) starts at i*H/G, j*W/G
        for (k, r) in plan.grid_bounds.iter().enumerate() {
            let (i, j) = (k / grids, k % grids);
            prop_assert_eq!((r.top, r.left), (i * h / grids, j * w / grids));
        }

        // one mini-patch per grid, fully inside it
        prop_assert_eq!(plan.offsets.len(), grids * grids);
        for k in 0..grids * grids {
            let src = plan.source_rect(k);
            prop_assert!(plan.grid_bounds[k].contains(&src));
            prop_assert_eq!((src.height(), src.width()), (patch, patch));
        }

        // temporal alignment and bit-exact block copy
        prop_assert!(batch.frame_offsets.is_none());
        let side = grids * patch;
        prop_assert_eq!(batch.fragments.dim(), (t, side, side, 3));
        for f in 0..t {
            for k in 0..grids * grids {
                let src = batch.cell_source(f, k);
                prop_assert_eq!(src, plan.source_rect(k));
                let (oy, ox) = ((k / grids) * patch, (k % grids) * patch);
                let got = batch.fragments.slice(s![f, oy..oy + patch, ox..ox + patch, ..]);
                let want = clip.frames().slice(s![f, src.top..src.bottom, src.left..src.right, ..]);
                prop_assert_eq!(got, want);
            }
        }
    }
}

#[test]
fn identity_when_source_is_exactly_fragment_sized() {
    let spec = GridSpec::new(4, 8, 3).unwrap();
    let clip = random_clip(3, 32, 32, 11);
    for seed in 0..100 {
        let batch = sample(&clip, &spec, Variant::Gms, seed, SampleOptions::default()).unwrap();
        assert_eq!(&batch.fragments, clip.frames(), "seed {seed}");
    }
}

#[test]
fn same_seed_same_fragments() {
    let spec = GridSpec::new(3, 5, 2).unwrap();
    let clip = random_clip(2, 40, 57, 3);
    let a = sample(&clip, &spec, Variant::Gms, 99, SampleOptions::default()).unwrap();
    let b = sample(&clip, &spec, Variant::Gms, 99, SampleOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn information_ratio_at_1080p() {
    let spec = GridSpec::normal_density();
    assert_eq!(spec.sampled_pixels(), 50176);
    assert_eq!(1080 * 1920, 2073600);
    let ratio = spec.sampled_pixels() as f64 / (1080.0 * 1920.0);
    assert!((ratio - 0.0242).abs() < 5e-5, "{ratio}");
}

#[test]
fn too_small_source_names_minimum() {
    let spec = GridSpec::new(7, 32, 1).unwrap();
    let clip = random_clip(1, 200, 300, 0);
    let err = sample(&clip, &spec, Variant::Gms, 0, SampleOptions::default()).unwrap_err();
    assert!(err.to_string().contains("224"), "{err}");
}
