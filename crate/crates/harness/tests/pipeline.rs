use std::path::Path;

use fragvqa_core::media::{write_corpus, DistortionProfile, Manifest, Split, SplitFractions};
use fragvqa_core::sampling::Variant;
use fragvqa_harness::*;
use fragvqa_net::{DType, Fanet, FanetConfig};

fn small_profile() -> DistortionProfile {
    DistortionProfile {
        height: 64,
        width: 80,
        ..DistortionProfile::blur_only()
    }
}

fn corpus(dir: &Path, n: usize) -> Manifest {
    write_corpus(dir, n, 3, &small_profile(), SplitFractions::default()).unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs: 1,
        warmup_steps: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn one_epoch_twice_gives_identical_loss_traces() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 24);
    let cfg = quick_config();
    let a = train(&m, &cfg, &FanetConfig::tiny(), None).unwrap();
    let b = train(&m, &cfg, &FanetConfig::tiny(), None).unwrap();
    assert!(!a.log[0].step_losses.is_empty());
    assert_eq!(a.log, b.log);

    let other = train(&m, &TrainConfig { seed: 1, ..cfg }, &FanetConfig::tiny(), None).unwrap();
    assert_ne!(a.log[0].step_losses, other.log[0].step_losses);
}

#[test]
fn batch_size_one_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 12);
    let cfg = TrainConfig {
        batch_size: 1,
        ..quick_config()
    };
    let err = train(&m, &cfg, &FanetConfig::tiny(), None).err().expect("training must be refused");
    assert_eq!(err.class(), "config");
    assert!(err.to_string().contains("batch_size"), "{err}");
}

#[test]
fn training_writes_log_and_best_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(&dir.path().join("corpus"), 24);
    let out = dir.path().join("run");
    let cfg = TrainConfig {
        epochs: 2,
        ..quick_config()
    };
    let report = train(&m, &cfg, &FanetConfig::tiny(), Some(&out)).unwrap();
    let lines: Vec<EpochRecord> = std::fs::read_to_string(out.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines, report.log);
    assert!(lines.iter().all(|r| r.val_srcc.is_some() && r.train_loss.is_finite()));
    let ckpt = report.checkpoint.unwrap();
    assert_eq!(ckpt, out.join("best.ckpt"));
    let loaded = fragvqa_net::checkpoint::load_model(&ckpt).unwrap();
    let test = Dataset::load(&m, Some(Split::Test)).unwrap();
    let opts = EvalOptions::default();
    assert_eq!(
        evaluate(&loaded, &test, &opts).unwrap(),
        evaluate(&report.model, &test, &opts).unwrap()
    );
}

#[test]
fn non_finite_loss_aborts_with_a_batch_dump() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(&dir.path().join("corpus"), 24);
    let out = dir.path().join("run");
    let cfg = TrainConfig {
        lr: 1e30,
        warmup_steps: 0,
        epochs: 3,
        ..quick_config()
    };
    let err = train(&m, &cfg, &FanetConfig::tiny(), Some(&out)).err().expect("training must abort");
    let Error::NonFiniteLoss { dump: Some(dump), .. } = &err else {
        panic!("expected a non-finite loss error, got {err}");
    };
    let dumped: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dump).unwrap()).unwrap();
    assert!(dumped.get("mos").is_some(), "{dumped}");
}

fn trained_tiny(seed: u64) -> Fanet {
    Fanet::new(FanetConfig::tiny(), DType::F32, seed).unwrap()
}

#[test]
fn evaluation_is_reproducible_and_ensembles_of_one_seed_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 16);
    let ds = Dataset::load(&m, None).unwrap();
    let model = trained_tiny(4);
    let opts = EvalOptions {
        seed: 9,
        ..EvalOptions::default()
    };
    let single = evaluate(&model, &ds, &opts).unwrap();
    assert_eq!(single, evaluate(&model, &ds, &opts).unwrap());

    let repeated = evaluate_with_seeds(&model, &ds, opts.variant, &[opts.sample_seeds()[0]; 4], false).unwrap();
    for (a, b) in single.videos.iter().zip(&repeated.videos) {
        assert_eq!(a.score, b.score);
    }

    let scores: Vec<f64> = single.videos.iter().map(|v| v.score).collect();
    let mos: Vec<f64> = single.videos.iter().map(|v| v.mos).collect();
    assert_eq!(single.metrics.srcc, fragvqa_core::metrics::srcc(&scores, &mos).unwrap());
    assert_eq!(single.metrics.krcc, fragvqa_core::metrics::krcc(&scores, &mos).unwrap());

    let back: EvalRecord = serde_json::from_str(&serde_json::to_string(&single).unwrap()).unwrap();
    assert_eq!(back, single);
}

#[test]
fn deterministic_sampler_is_perfectly_stable() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 12);
    let ds = Dataset::load(&m, None).unwrap();
    let opts = StabilityOptions {
        variant: Variant::Resize,
        n_repeats: 4,
        ensemble_k: 2,
        ..StabilityOptions::default()
    };
    let rec = stability_analysis(&trained_tiny(2), &ds, &opts).unwrap();
    assert_eq!(rec.mean_std, 0.0);
    assert_eq!(rec.pair_accuracy, 1.0);
    assert_eq!(rec.pair_accuracy_min, 1.0);
    assert_eq!(rec.per_repeat_accuracy.len(), 4);

    let gms_opts = StabilityOptions {
        variant: Variant::Gms,
        ..opts
    };
    let gms = stability_analysis(&trained_tiny(2), &ds, &gms_opts).unwrap();
    assert!(gms.mean_std > 0.0 && gms.normalized_std.is_finite());
    assert_eq!(gms.normalized_std, gms.mean_std / 4.0);
    let back: StabilityRecord = serde_json::from_str(&serde_json::to_string(&gms).unwrap()).unwrap();
    assert_eq!(back, gms);
}

#[test]
fn stability_rejects_a_single_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 6);
    let ds = Dataset::load(&m, None).unwrap();
    let opts = StabilityOptions {
        n_repeats: 1,
        ..StabilityOptions::default()
    };
    assert_eq!(stability_analysis(&trained_tiny(0), &ds, &opts).unwrap_err().class(), "config");
}

#[test]
fn single_group_sweep_matches_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 10);
    let ds = Dataset::load(&m, None).unwrap();
    let model = trained_tiny(6);
    let opts = EvalOptions {
        n_samples: 2,
        ..EvalOptions::default()
    };
    let sweep = resolution_sweep(&model, &[("64x80".to_string(), ds.clone())], &opts).unwrap();
    let direct = evaluate(&model, &ds, &opts).unwrap();
    assert_eq!(sweep.groups.len(), 1);
    assert_eq!(sweep.groups[0].metrics, direct.metrics);
    assert_eq!(sweep.groups[0].count, ds.len());
    assert_eq!(SweepRecord::from_json(&sweep.to_json()).unwrap(), sweep);
}

#[test]
fn flops_total_is_the_sum_of_layers_and_linear_in_frames() {
    for cfg in [FanetConfig::tiny(), FanetConfig::low_density(), FanetConfig::normal_density()] {
        let r = flops_count(&cfg, cfg.input_dims());
        assert_eq!(r.total, r.layers.iter().map(|l| l.macs).sum::<u64>());
        let head: u64 = r.layers.iter().filter(|l| l.name.starts_with("head.")).map(|l| l.macs).sum();
        assert_eq!(r.backbone_total + head, r.total);
        assert!(r.layers.iter().all(|l| l.macs > 0));
        let back: FlopsReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
    let tiny = FanetConfig::tiny();
    let doubled = flops_count(&tiny, [16, 64, 64]);
    let base = flops_count(&tiny, [8, 64, 64]);
    assert_eq!(doubled.total, 2 * base.total);
}
