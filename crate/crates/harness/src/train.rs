use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use fragvqa_core::media::{Manifest, Split};
use fragvqa_core::sampling::{FragmentBatch, SampleOptions, Variant};
use fragvqa_core::VideoClip;
use fragvqa_net::checkpoint::save_checkpoint;
use fragvqa_net::loss::plcc_loss;
use fragvqa_net::{fragments_to_tensor, DType, Fanet, FanetConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, sample_all, Dataset};
use crate::eval::{evaluate, EvalOptions};
use crate::{Error, Result, REPORT_SCHEMA_VERSION};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x54f1;
const PLAN_STREAM: u64 = 0x97a2;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const NONFINITE_DUMP: &str = "nonfinite_batch.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Draw fresh fragments for every video each epoch; off keeps one
    /// fixed view per video for the whole run.
    pub redraw_plan_per_iter: bool,
    pub upscale_small: bool,
    /// Steps of linear warmup before the cosine decay starts.
    pub warmup_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 3e-4,
            weight_decay: 0.05,
            epochs: 20,
            seed: 0,
            variant: Variant::Gms,
            redraw_plan_per_iter: true,
            upscale_small: false,
            warmup_steps: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size < 2 {
            problems.push(format!("batch_size must be at least 2 for the PLCC loss, got {}", self.batch_size));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            problems.push(format!("lr must be positive and finite, got {}", self.lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            problems.push(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Linear warmup over `warmup_steps`, then cosine decay from `lr`
    /// towards zero at step `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = (step - self.warmup_steps) as f64 / span;
        self.lr * 0.5 * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub schema_version: u32,
    pub epoch: usize,
    pub train_loss: f64,
    pub step_losses: Vec<f64>,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub val_srcc: Option<f64>,
    pub val_plcc: Option<f64>,
    pub val_krcc: Option<f64>,
}

pub struct TrainReport {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_srcc: Option<f64>,
    /// Parameters restored to the best validation epoch.
    pub model: Fanet,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Serialize)]
struct NonFiniteDump<'a> {
    epoch: usize,
    step: usize,
    loss: f64,
    ids: Vec<&'a str>,
    mos: Vec<f64>,
    predictions: Vec<f64>,
    sample_seeds: &'a [u64],
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn train(manifest: &Manifest, cfg: &TrainConfig, net: &FanetConfig, out_dir: Option<&Path>) -> Result<TrainReport> {
    train_with(manifest, cfg, net, out_dir, |_| {})
}

/// [`train`] with a callback run after every epoch.
pub fn train_with(
    manifest: &Manifest,
    cfg: &TrainConfig,
    net: &FanetConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    net.validate()?;
    let train_set = Dataset::load(manifest, Some(Split::Train))?;
    let val_set = Dataset::load(manifest, Some(Split::Val))?;
    if train_set.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "train split has {} clips, fewer than batch_size {}",
            train_set.len(),
            cfg.batch_size
        )));
    }
    if val_set.len() < 2 {
        return Err(Error::Config(format!("val split has {} clips, need at least 2", val_set.len())));
    }
    train_datasets(&train_set, &val_set, cfg, net, out_dir, &mut on_epoch)
}

/// Training on already loaded splits.
pub fn train_datasets(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    net: &FanetConfig,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    let model = Fanet::new(net.clone(), DType::F32, derive_seed(cfg.seed, INIT_STREAM, 0))?;
    let vars = model.params().vars();
    let mut opt = AdamW::new(
        vars.clone(),
        ParamsAdamW {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..ParamsAdamW::default()
        },
    )?;

    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(METRICS_FILE);
            Some((File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };
    let ckpt_path = out_dir.map(|d| d.join(BEST_CHECKPOINT));

    let spec = net.fragments;
    let opts = SampleOptions {
        upscale_small: cfg.upscale_small,
    };
    let steps_per_epoch = train_set.len() / cfg.batch_size;
    let total_steps = steps_per_epoch * cfg.epochs;
    let val_opts = EvalOptions {
        variant: cfg.variant,
        n_samples: 1,
        seed: cfg.seed,
        upscale_small: cfg.upscale_small,
    };

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM, epoch as u64)));
        let plan_base = derive_seed(cfg.seed, PLAN_STREAM, if cfg.redraw_plan_per_iter { epoch as u64 } else { 0 });

        let mut step_losses = Vec::with_capacity(steps_per_epoch);
        let mut lr = cfg.lr;
        for (i, idx) in order.chunks_exact(cfg.batch_size).enumerate() {
            let items: Vec<_> = idx.iter().map(|&v| &train_set.items[v]).collect();
            let clips: Vec<&VideoClip> = items.iter().map(|it| &it.clip).collect();
            let seeds: Vec<u64> = idx.iter().map(|&v| derive_seed(plan_base, v as u64, 0)).collect();
            let batches = sample_all(&clips, &spec, cfg.variant, &seeds, opts)?;
            let refs: Vec<&FragmentBatch> = batches.iter().collect();
            let x = fragments_to_tensor(&refs, DType::F32, model.device())?;
            let mos: Vec<f64> = items.iter().map(|it| it.mos).collect();
            let gt = Tensor::new(mos.iter().map(|&m| m as f32).collect::<Vec<_>>(), model.device())?;
            let pred = model.scores(&x)?;
            let loss = plcc_loss(&pred, &gt)?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                let dump = match out_dir {
                    Some(dir) => {
                        let p = dir.join(NONFINITE_DUMP);
                        write_json(
                            &p,
                            &NonFiniteDump {
                                epoch,
                                step: i,
                                loss: value,
                                ids: items.iter().map(|it| it.id.as_str()).collect(),
                                mos,
                                predictions: pred.to_dtype(DType::F64)?.to_vec1()?,
                                sample_seeds: &seeds,
                            },
                        )?;
                        Some(p)
                    }
                    None => None,
                };
                return Err(Error::NonFiniteLoss { epoch, step: i, dump });
            }
            lr = cfg.lr_at(step, total_steps);
            opt.set_learning_rate(lr);
            opt.backward_step(&loss)?;
            step_losses.push(value);
            step += 1;
        }

        let val = evaluate(&model, val_set, &val_opts).ok();
        let rec = EpochRecord {
            schema_version: REPORT_SCHEMA_VERSION,
            epoch,
            train_loss: step_losses.iter().sum::<f64>() / step_losses.len() as f64,
            step_losses,
            lr,
            val_srcc: val.as_ref().map(|v| v.metrics.srcc),
            val_plcc: val.as_ref().map(|v| v.metrics.plcc),
            val_krcc: val.as_ref().map(|v| v.metrics.krcc),
        };
        if let Some((f, p)) = log_file.as_mut() {
            let line = serde_json::to_string(&rec).expect("serializable");
            writeln!(f, "{line}").map_err(|e| Error::io(&*p, e))?;
        }
        on_epoch(&rec);

        let score = rec.val_srcc.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
            let snapshot = vars.iter().map(|v| v.as_tensor().copy()).collect::<candle_core::Result<Vec<_>>>()?;
            if let Some(p) = &ckpt_path {
                let meta = serde_json::json!({
                    "epoch": epoch,
                    "val_srcc": rec.val_srcc,
                    "train": cfg,
                });
                save_checkpoint(&model, p, meta)?;
            }
            best = Some((epoch, score, snapshot));
        }
        log.push(rec);
    }

    let (best_epoch, best_score, snapshot) = best.expect("at least one epoch");
    for (v, t) in vars.iter().zip(&snapshot) {
        v.set(t)?;
    }
    Ok(TrainReport {
        log,
        best_epoch,
        best_val_srcc: best_score.is_finite().then_some(best_score),
        model,
        checkpoint: ckpt_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig {
            lr: 1e-3,
            warmup_steps: 0,
            ..TrainConfig::default()
        };
        assert_eq!(c.lr_at(0, 100), 1e-3);
        assert!((c.lr_at(50, 100) - 5e-4).abs() < 1e-15);
        assert!(c.lr_at(100, 100).abs() < 1e-15);
    }

    #[test]
    fn warmup_ramps_then_decays() {
        let c = TrainConfig {
            lr: 1e-3,
            warmup_steps: 10,
            ..TrainConfig::default()
        };
        assert!((c.lr_at(0, 110) - 1e-4).abs() < 1e-15);
        assert!((c.lr_at(9, 110) - 1e-3).abs() < 1e-15);
        assert_eq!(c.lr_at(10, 110), 1e-3);
        assert!((c.lr_at(60, 110) - 5e-4).abs() < 1e-15);
        assert!(c.lr_at(110, 110).abs() < 1e-15);
    }

    #[test]
    fn batch_size_one_rejected() {
        let c = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("batch_size")));
    }
}
