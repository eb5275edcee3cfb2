mod common;

use common::*;
use fragvqa_core::media::VideoClip;
use fragvqa_core::sampling::{sample, GridSpec, SampleOptions, Variant};
use fragvqa_net::checkpoint::{decode_checkpoint, encode_checkpoint, load_model, save_checkpoint, Checkpoint};
use fragvqa_net::quality_map::{export_quality_map, render_overlay, QualityMapRecord};
use fragvqa_net::{DType, Error, Fanet, FanetConfig, QualityOutput};
use ndarray::{Array3, Array4};
use rand::Rng;

fn clip(h: usize, w: usize, seed: u64) -> VideoClip {
    let mut r = rng(seed);
    let frames = Array4::from_shape_simple_fn((8, h, w, 3), || r.random::<u8>());
    VideoClip::new(frames, 30.0, format!("clip{seed}")).unwrap()
}

#[test]
fn tiny_forward_shape_contract() {
    let model = Fanet::new(FanetConfig::tiny(), DType::F32, 0).unwrap();
    let b = sample(&clip(96, 128, 1), &GridSpec::tiny(), Variant::Gms, 3, SampleOptions::default()).unwrap();
    assert_eq!(b.fragments.dim(), (8, 64, 64, 3));
    let out = model.infer(&[&b]).unwrap();
    assert!(out[0].score.is_finite());
    assert_eq!(out[0].quality_map.dim(), (4, 2, 2));
    assert_eq!(out[0].regressed.dim(), (4, 2, 2));
}

#[test]
fn duplicated_batch_entries_score_identically() {
    let model = Fanet::new(FanetConfig::tiny(), DType::F32, 4).unwrap();
    let a = sample(&clip(80, 80, 2), &GridSpec::tiny(), Variant::Gms, 0, SampleOptions::default()).unwrap();
    let c = sample(&clip(80, 80, 3), &GridSpec::tiny(), Variant::Gms, 0, SampleOptions::default()).unwrap();
    let out = model.infer(&[&a, &c, &a]).unwrap();
    assert_eq!(out[0].score, out[2].score);
    assert_eq!(out[0].quality_map, out[2].quality_map);
    let again = model.infer(&[&a]).unwrap();
    assert!((again[0].score - out[0].score).abs() < 1e-6);
}

#[test]
fn incompatible_input_lists_divisibility() {
    let model = Fanet::new(FanetConfig::tiny(), DType::F32, 0).unwrap();
    let x = fragvqa_net::Tensor::zeros((1, 7, 64, 62, 3), DType::F32, &fragvqa_net::Device::Cpu).unwrap();
    let err = model.regress(&x).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Config(_)));
    assert!(msg.contains("frames 7") && msg.contains("width 62"), "{msg}");
}

#[test]
fn score_identities_hold_exactly() {
    let mut r = rng(9);
    let model = Fanet::new(FanetConfig::tiny(), DType::F64, 2).unwrap();
    randomize(&model, &mut r, 0.1);
    let b = sample(&clip(64, 64, 4), &GridSpec::tiny(), Variant::Gms, 0, SampleOptions::default()).unwrap();
    let out = model.infer(&[&b]).unwrap().remove(0);
    let map_mean = out.quality_map.iter().sum::<f64>() / out.quality_map.len() as f64;
    let pos_mean = out.regressed.iter().sum::<f64>() / out.regressed.len() as f64;
    assert_eq!(out.score, map_mean);
    assert_eq!(out.score, pos_mean);
}

#[test]
fn checkpoint_round_trip_and_mismatch_diff() {
    let mut r = rng(5);
    let model = Fanet::new(FanetConfig::tiny(), DType::F32, 7).unwrap();
    randomize(&model, &mut r, 0.05);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path, serde_json::json!({"epoch": 3})).unwrap();
    let loaded = load_model(&path).unwrap();
    let x = random_input(&mut r, model.config(), 1).to_dtype(DType::F32).unwrap();
    assert_eq!(max_abs_diff(&model.regress(&x).unwrap(), &loaded.regress(&x).unwrap()), 0.0);
    assert_eq!(Checkpoint::read(&path).unwrap().header.meta["epoch"], 3);

    let other = Fanet::new(FanetConfig { embed_dim: 16, gated_bias: [true, true, true, false], ..FanetConfig::tiny() }, DType::F32, 0)
        .unwrap();
    let err = Checkpoint::read(&path).unwrap().apply(&other).unwrap_err().to_string();
    assert!(err.contains("shape patch_embed.proj.weight"), "{err}");
    assert!(err.contains("unexpected stages.3.blocks.0.attn.pseudo_bias_table"), "{err}");

    let bytes = encode_checkpoint(&model, serde_json::Value::Null).unwrap();
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_checkpoint(b"VQACKPT0xxxxxxxxxxxxxxxx").is_err());
}

#[test]
fn quality_map_record_and_overlay() {
    let model = Fanet::new(FanetConfig::tiny(), DType::F32, 1).unwrap();
    let b = sample(&clip(100, 140, 6), &GridSpec::tiny(), Variant::Gms, 8, SampleOptions::default()).unwrap();
    let out = model.infer(&[&b]).unwrap().remove(0);
    let rec = QualityMapRecord::from_output(&out).unwrap();
    assert_eq!(QualityMapRecord::from_json(&rec.to_json()).unwrap(), rec);
    assert_eq!((rec.source_height, rec.source_width), (100, 140));
    for cell in &rec.cells {
        let k = cell.row * 2 + cell.col;
        assert_eq!(cell.sources, vec![b.plan.source_rect(k)]);
    }

    let dir = tempfile::tempdir().unwrap();
    let (json, png) = export_quality_map(&out, None, dir.path(), "map").unwrap();
    assert!(json.exists() && png.exists());

    let mut flat = out.clone();
    flat.quality_map.fill(2.5);
    let rec = QualityMapRecord::from_output(&flat).unwrap();
    let img = render_overlay(&rec, None, None).unwrap();
    let inside: Vec<_> = rec.cells[..4]
        .iter()
        .flat_map(|c| c.sources.clone())
        .map(|r| *img.get_pixel(r.left as u32, r.top as u32))
        .collect();
    assert!(inside.windows(2).all(|w| w[0] == w[1]));

    let bare = QualityOutput::from_regressed(Array3::zeros((1, 2, 2)), 1).unwrap();
    assert!(matches!(QualityMapRecord::from_output(&bare), Err(Error::Contract(_))));
}
