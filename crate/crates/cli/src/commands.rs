use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use fragvqa_core::media::{
    load_clip, select_frames, write_corpus, DistortionProfile, Manifest, Split, SplitFractions, MANIFEST_FILE,
};
use fragvqa_core::sampling::{encode_fragments, sample, FragmentBatch, GridSpec, SampleOptions, Variant};
use fragvqa_core::VideoClip;
use fragvqa_harness::data::score_clips;
use fragvqa_harness::{
    evaluate, flops_count, stability_analysis, train_with, Dataset, EvalOptions, FlopsReport, StabilityOptions,
    TrainConfig,
};
use fragvqa_net::checkpoint::{load_model, save_checkpoint};
use fragvqa_net::quality_map::export_quality_map;
use fragvqa_net::FanetConfig;
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{artifact_json, emit, prepare_out, resolve, write_artifact, Resolved};
use crate::error::{CliError, Result};

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with pseudo-MOS labels and a split manifest.
    Synth(SynthArgs),
    /// Sample one clip into fragments and write the batch plus a contact sheet.
    Fragments(FragmentsArgs),
    /// Train a network with the PLCC loss; keeps the best validation checkpoint.
    Train(TrainArgs),
    /// Correlations of (ensembled) predictions with the manifest labels.
    Eval(EvalArgs),
    /// Print one score per input clip.
    Score(ScoreArgs),
    /// Export the per-mini-patch quality map of one clip as JSON and PNG.
    Map(MapArgs),
    /// Single-sampling stability against a multi-sampling ensemble.
    Stability(StabilityArgs),
    /// Analytic multiply-accumulate count of one forward pass.
    Flops(FlopsArgs),
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Fragments(a) => fragments(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
        Command::Map(a) => map(a),
        Command::Stability(a) => stability(a),
        Command::Flops(a) => flops(a),
    }
}

#[derive(Args)]
pub struct ConfigArg {
    /// TOML or JSON file with any of this command's keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
pub struct OutArgs {
    /// Output directory; relative paths go under $FRAGVQA_OUT_ROOT when set.
    #[arg(long)]
    out: PathBuf,
    /// Write into an existing non-empty directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct OptionalOutArgs {
    /// Also write the report into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: fragvqa_core::Error| e.to_string())
}

fn parse_dims<const N: usize>(s: &str) -> std::result::Result<[usize; N], String> {
    let parts: Vec<usize> = s
        .split(['x', ','])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<usize>| format!("expected {N} dimensions, got {}", p.len()))
}

fn net_config(preset: &str, net: &Option<FanetConfig>) -> Result<FanetConfig> {
    match net {
        Some(n) => Ok(n.clone()),
        None => FanetConfig::by_name(preset)
            .ok_or_else(|| CliError::Usage(format!("unknown preset {preset:?}; expected normal, low or tiny"))),
    }
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "all" => Ok(None),
        other => Ok(Some(other.parse()?)),
    }
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}` (flag or config key)")))
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(Manifest::read(path)?)
}

fn print_json(text: &str) {
    println!("{text}");
}

// synth

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n: u64,
    pub seed: u64,
    pub profile: String,
    pub frames: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let f = SplitFractions::default();
        Self {
            n: 200,
            seed: 0,
            profile: "mixed".into(),
            frames: None,
            height: None,
            width: None,
            train_fraction: f.train,
            val_fraction: f.val,
        }
    }
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    /// Number of clips.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// mixed, blur or pristine.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArgs,
}

fn synth(args: SynthArgs) -> Result<()> {
    let r: Resolved<SynthConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    if c.n == 0 {
        return Err(CliError::Usage("n must be at least 1".into()));
    }
    let mut profile = DistortionProfile::by_name(&c.profile)
        .ok_or_else(|| CliError::Usage(format!("unknown profile {:?}; expected mixed, blur or pristine", c.profile)))?;
    if let Some(v) = c.frames {
        profile.frames = v;
    }
    if let Some(v) = c.height {
        profile.height = v;
    }
    if let Some(v) = c.width {
        profile.width = v;
    }
    let fractions = SplitFractions {
        train: c.train_fraction,
        val: c.val_fraction,
    };
    fractions.validate()?;
    profile.validate()?;
    let out = prepare_out(&args.out.out, args.out.force)?;
    emit("synth", &r, Some(&out))?;
    let manifest = write_corpus(&out, c.n as usize, c.seed, &profile, fractions)?;
    let path = out.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let summary = serde_json::json!({
        "manifest": path,
        "manifest_sha256": hex::encode(Sha256::digest(&bytes)),
        "clips": manifest.entries.len(),
        "train": manifest.count(Split::Train),
        "val": manifest.count(Split::Val),
        "test": manifest.count(Split::Test),
    });
    print_json(&artifact_json(&r.hash, &summary));
    Ok(())
}

// fragments

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FragmentsConfig {
    pub input: Option<PathBuf>,
    pub grids: usize,
    pub patch: usize,
    pub frames: usize,
    pub seed: u64,
    pub variant: Variant,
    pub upscale_small: bool,
    pub contact_sheet: bool,
}

impl Default for FragmentsConfig {
    fn default() -> Self {
        let g = GridSpec::normal_density();
        Self {
            input: None,
            grids: g.grids,
            patch: g.patch,
            frames: g.frames,
            seed: 0,
            variant: Variant::Gms,
            upscale_small: false,
            contact_sheet: true,
        }
    }
}

#[derive(Args, Serialize)]
pub struct FragmentsArgs {
    /// Clip to sample (raw clip file).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Grids per side.
    #[arg(long = "gf")]
    grids: Option<usize>,
    /// Mini-patch side in pixels.
    #[arg(long = "sf")]
    patch: Option<usize>,
    /// Frames to sample.
    #[arg(long = "t")]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// fragments, random-mini-patches, shuffled-mini-patches,
    /// without-temporal-alignment, bilinear-resizing or random-cropping.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    upscale_small: Option<bool>,
    #[arg(long)]
    contact_sheet: Option<bool>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize)]
struct FragmentsInfo<'a> {
    input: &'a Path,
    variant: Variant,
    spec: GridSpec,
    plan: &'a fragvqa_core::sampling::SamplingPlan,
    slots: &'a [usize],
    frame_offsets: &'a Option<Vec<Vec<(usize, usize)>>>,
    fragments_file: &'a Path,
    contact_sheet: Option<&'a Path>,
}

/// Frames tiled row-major, `ceil(sqrt(T))` per row, on a black canvas.
pub fn contact_sheet(batch: &FragmentBatch) -> RgbImage {
    let (t, side, _, c) = batch.fragments.dim();
    let cols = (t as f64).sqrt().ceil() as usize;
    let rows = t.div_ceil(cols);
    let gap = 2;
    let w = cols * side + (cols - 1) * gap;
    let h = rows * side + (rows - 1) * gap;
    let mut img = RgbImage::new(w as u32, h as u32);
    for f in 0..t {
        let (oy, ox) = ((f / cols) * (side + gap), (f % cols) * (side + gap));
        for y in 0..side {
            for x in 0..side {
                let px = [0, 1, 2].map(|ch| batch.fragments[[f, y, x, ch.min(c - 1)]]);
                img.put_pixel((ox + x) as u32, (oy + y) as u32, Rgb(px));
            }
        }
    }
    img
}

fn fragments(args: FragmentsArgs) -> Result<()> {
    let r: Resolved<FragmentsConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    let input = require(&c.input, "input")?;
    let spec = GridSpec::new(c.grids, c.patch, c.frames)?;
    let clip = load_clip(&input)?;
    let batch = sample(
        &clip,
        &spec,
        c.variant,
        c.seed,
        SampleOptions {
            upscale_small: c.upscale_small,
        },
    )?;
    let out = prepare_out(&args.out.out, args.out.force)?;
    emit("fragments", &r, Some(&out))?;
    let frag_path = out.join("fragments.vqf");
    std::fs::write(&frag_path, encode_fragments(&batch)).map_err(|e| CliError::io(&frag_path, e))?;
    let sheet_path = out.join("contact_sheet.png");
    if c.contact_sheet {
        contact_sheet(&batch)
            .save(&sheet_path)
            .map_err(|e| CliError::Net(fragvqa_net::Error::Image(e.to_string())))?;
    }
    let info = FragmentsInfo {
        input: &input,
        variant: batch.variant,
        spec,
        plan: &batch.plan,
        slots: &batch.slots,
        frame_offsets: &batch.frame_offsets,
        fragments_file: &frag_path,
        contact_sheet: c.contact_sheet.then_some(sheet_path.as_path()),
    };
    write_artifact(&out.join("fragments.json"), &r.hash, &info)?;
    print_json(&artifact_json(&r.hash, &info));
    Ok(())
}

// train

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCmdConfig {
    pub manifest: Option<PathBuf>,
    pub preset: String,
    /// Full network config; overrides `preset` when present.
    pub net: Option<FanetConfig>,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub redraw_plan_per_iter: bool,
    pub upscale_small: bool,
    pub warmup_steps: usize,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            manifest: None,
            preset: "tiny".into(),
            net: None,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            seed: t.seed,
            variant: t.variant,
            redraw_plan_per_iter: t.redraw_plan_per_iter,
            upscale_small: t.upscale_small,
            warmup_steps: t.warmup_steps,
        }
    }
}

impl TrainCmdConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            seed: self.seed,
            variant: self.variant,
            redraw_plan_per_iter: self.redraw_plan_per_iter,
            upscale_small: self.upscale_small,
            warmup_steps: self.warmup_steps,
        }
    }
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// normal, low or tiny.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    redraw_plan_per_iter: Option<bool>,
    #[arg(long)]
    upscale_small: Option<bool>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArgs,
}

fn train(args: TrainArgs) -> Result<()> {
    let r: Resolved<TrainCmdConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    let manifest = read_manifest(&require(&c.manifest, "manifest")?)?;
    let net = net_config(&c.preset, &c.net)?;
    let tc = c.train_config();
    tc.validate()?;
    net.validate()?;
    let out = prepare_out(&args.out.out, args.out.force)?;
    emit("train", &r, Some(&out))?;
    let report = train_with(&manifest, &tc, &net, Some(&out), |rec| {
        eprintln!("{}", serde_json::to_string(rec).expect("serializable"));
    })?;
    let ckpt = out.join(fragvqa_harness::train::BEST_CHECKPOINT);
    let meta = serde_json::json!({
        "epoch": report.best_epoch,
        "val_srcc": report.best_val_srcc,
        "train": tc,
        "config_hash": r.hash,
    });
    save_checkpoint(&report.model, &ckpt, meta)?;
    let summary = serde_json::json!({
        "best_epoch": report.best_epoch,
        "best_val_srcc": report.best_val_srcc,
        "checkpoint": ckpt,
        "metrics": out.join(fragvqa_harness::train::METRICS_FILE),
    });
    write_artifact(&out.join("train_summary.json"), &r.hash, &summary)?;
    print_json(&artifact_json(&r.hash, &summary));
    Ok(())
}

// eval

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCmdConfig {
    pub checkpoint: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// train, val, test or all.
    pub split: String,
    pub variant: Variant,
    pub n_samples: usize,
    pub seed: u64,
    pub upscale_small: bool,
}

impl Default for EvalCmdConfig {
    fn default() -> Self {
        let e = EvalOptions::default();
        Self {
            checkpoint: None,
            manifest: None,
            split: "test".into(),
            variant: e.variant,
            n_samples: e.n_samples,
            seed: e.seed,
            upscale_small: e.upscale_small,
        }
    }
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Seeded samplings averaged per video.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    upscale_small: Option<bool>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
    #[serde(skip)]
    #[command(flatten)]
    out: OptionalOutArgs,
}

fn eval(args: EvalArgs) -> Result<()> {
    let r: Resolved<EvalCmdConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    if c.n_samples == 0 {
        return Err(CliError::Usage("n_samples must be at least 1".into()));
    }
    let model = load_model(&require(&c.checkpoint, "checkpoint")?)?;
    let manifest = read_manifest(&require(&c.manifest, "manifest")?)?;
    let dataset = Dataset::load(&manifest, parse_split(&c.split)?)?;
    let out = args.out.out.as_deref().map(|o| prepare_out(o, args.out.force)).transpose()?;
    emit("eval", &r, out.as_deref())?;
    let record = evaluate(
        &model,
        &dataset,
        &EvalOptions {
            variant: c.variant,
            n_samples: c.n_samples,
            seed: c.seed,
            upscale_small: c.upscale_small,
        },
    )?;
    if let Some(dir) = &out {
        write_artifact(&dir.join("eval.json"), &r.hash, &record)?;
    }
    print_json(&artifact_json(&r.hash, &record));
    Ok(())
}

// score

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreCmdConfig {
    pub checkpoint: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub variant: Variant,
    pub n_samples: usize,
    pub seed: u64,
    pub upscale_small: bool,
}

impl Default for ScoreCmdConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            inputs: Vec::new(),
            variant: Variant::Gms,
            n_samples: 1,
            seed: 0,
            upscale_small: false,
        }
    }
}

#[derive(Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Clip files to score.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    upscale_small: Option<bool>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
}

/// Every input is sampled with the same round seeds, so a clip's score does
/// not depend on its position in the list.
fn score(args: ScoreArgs) -> Result<()> {
    let r: Resolved<ScoreCmdConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    if c.inputs.is_empty() {
        return Err(CliError::Usage("no input clips given".into()));
    }
    if c.n_samples == 0 {
        return Err(CliError::Usage("n_samples must be at least 1".into()));
    }
    let model = load_model(&require(&c.checkpoint, "checkpoint")?)?;
    emit("score", &r, None)?;
    let clips = c.inputs.iter().map(|p| load_clip(p)).collect::<fragvqa_core::Result<Vec<VideoClip>>>()?;
    let refs: Vec<&VideoClip> = clips.iter().collect();
    let opts = SampleOptions {
        upscale_small: c.upscale_small,
    };
    let rounds = EvalOptions {
        variant: c.variant,
        n_samples: c.n_samples,
        seed: c.seed,
        upscale_small: c.upscale_small,
    }
    .sample_seeds();
    let mut totals = vec![0.0; clips.len()];
    for s in &rounds {
        let seeds = vec![*s; clips.len()];
        for (t, v) in totals.iter_mut().zip(score_clips(&model, &refs, c.variant, &seeds, opts)?) {
            *t += v;
        }
    }
    for (path, total) in c.inputs.iter().zip(totals) {
        println!("{}\t{}", total / rounds.len() as f64, path.display());
    }
    Ok(())
}

// map

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapCmdConfig {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub variant: Variant,
    pub seed: u64,
    pub upscale_small: bool,
}

impl Default for MapCmdConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            input: None,
            variant: Variant::Gms,
            seed: 0,
            upscale_small: false,
        }
    }
}

#[derive(Args, Serialize)]
pub struct MapArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    upscale_small: Option<bool>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
    #[serde(skip)]
    #[command(flatten)]
    out: OutArgs,
}

fn map(args: MapArgs) -> Result<()> {
    let r: Resolved<MapCmdConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    let model = load_model(&require(&c.checkpoint, "checkpoint")?)?;
    let clip = load_clip(&require(&c.input, "input")?)?;
    let spec = model.config().fragments;
    let batch = sample(
        &clip,
        &spec,
        c.variant,
        c.seed,
        SampleOptions {
            upscale_small: c.upscale_small,
        },
    )?;
    let out = prepare_out(&args.out.out, args.out.force)?;
    emit("map", &r, Some(&out))?;
    let output = model.infer(&[&batch])?.remove(0);
    // the overlay is drawn on the first sampled frame when the map refers to
    // the clip's own pixel grid
    let selected = select_frames(&clip, spec.frames)?;
    let upscaled = c.upscale_small && c.variant != Variant::Resize && clip.height().min(clip.width()) < spec.side();
    let background = (!upscaled).then(|| selected.frame(0));
    let (json, png) = export_quality_map(&output, background, &out, "quality_map")?;
    let summary = serde_json::json!({ "score": output.score, "map": json, "overlay": png });
    write_artifact(&out.join("map_summary.json"), &r.hash, &summary)?;
    print_json(&artifact_json(&r.hash, &summary));
    Ok(())
}

// stability

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityCmdConfig {
    pub checkpoint: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub split: String,
    pub variant: Variant,
    pub n_repeats: usize,
    pub ensemble_k: usize,
    pub seed: u64,
    pub score_range: [f64; 2],
    pub upscale_small: bool,
}

impl Default for StabilityCmdConfig {
    fn default() -> Self {
        let s = StabilityOptions::default();
        Self {
            checkpoint: None,
            manifest: None,
            split: "test".into(),
            variant: s.variant,
            n_repeats: s.n_repeats,
            ensemble_k: s.ensemble_k,
            seed: s.seed,
            score_range: [s.score_range.0, s.score_range.1],
            upscale_small: s.upscale_small,
        }
    }
}

#[derive(Args, Serialize)]
pub struct StabilityArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    n_repeats: Option<usize>,
    #[arg(long)]
    ensemble_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Nominal label range used to normalize the std, as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    score_range: Option<[f64; 2]>,
    #[arg(long)]
    upscale_small: Option<bool>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
    #[serde(skip)]
    #[command(flatten)]
    out: OptionalOutArgs,
}

fn parse_range(s: &str) -> std::result::Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    Ok([
        lo.trim().parse().map_err(|e| format!("{e}"))?,
        hi.trim().parse().map_err(|e| format!("{e}"))?,
    ])
}

fn stability(args: StabilityArgs) -> Result<()> {
    let r: Resolved<StabilityCmdConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    let model = load_model(&require(&c.checkpoint, "checkpoint")?)?;
    let manifest = read_manifest(&require(&c.manifest, "manifest")?)?;
    let dataset = Dataset::load(&manifest, parse_split(&c.split)?)?;
    let out = args.out.out.as_deref().map(|o| prepare_out(o, args.out.force)).transpose()?;
    emit("stability", &r, out.as_deref())?;
    let record = stability_analysis(
        &model,
        &dataset,
        &StabilityOptions {
            variant: c.variant,
            n_repeats: c.n_repeats,
            ensemble_k: c.ensemble_k,
            seed: c.seed,
            score_range: (c.score_range[0], c.score_range[1]),
            upscale_small: c.upscale_small,
        },
    )?;
    if let Some(dir) = &out {
        write_artifact(&dir.join("stability.json"), &r.hash, &record)?;
    }
    print_json(&artifact_json(&r.hash, &record));
    Ok(())
}

// flops

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlopsCmdConfig {
    pub preset: String,
    pub net: Option<FanetConfig>,
    /// Network input `(frames, height, width)`; defaults to the fragment size.
    pub input: Option<[usize; 3]>,
    /// Source resolution `(height, width)` of the video being assessed.
    pub source: Option<[usize; 2]>,
    /// Cost of running the backbone on the whole source frame instead.
    pub full_resolution: bool,
}

impl Default for FlopsCmdConfig {
    fn default() -> Self {
        Self {
            preset: "normal".into(),
            net: None,
            input: None,
            source: None,
            full_resolution: false,
        }
    }
}

#[derive(Args, Serialize)]
pub struct FlopsArgs {
    #[arg(long)]
    preset: Option<String>,
    /// `TxHxW`.
    #[arg(long, value_parser = parse_dims::<3>)]
    input: Option<[usize; 3]>,
    /// `HxW`.
    #[arg(long, value_parser = parse_dims::<2>)]
    source: Option<[usize; 2]>,
    #[arg(long)]
    full_resolution: Option<bool>,
    #[serde(skip)]
    #[command(flatten)]
    cfg: ConfigArg,
}

#[derive(Serialize)]
struct FlopsOutput<'a> {
    source: Option<[usize; 2]>,
    full_resolution: bool,
    total_g: f64,
    backbone_g: f64,
    #[serde(flatten)]
    report: &'a FlopsReport,
}

fn flops(args: FlopsArgs) -> Result<()> {
    let r: Resolved<FlopsCmdConfig> = resolve(args.cfg.config.as_deref(), &args)?;
    let c = &r.config;
    let net = net_config(&c.preset, &c.net)?;
    let input = match (c.full_resolution, c.input, c.source) {
        (true, _, Some([h, w])) => [net.fragments.frames, h, w],
        (true, _, None) => return Err(CliError::Usage("full_resolution needs a source resolution".into())),
        (false, Some(i), _) => i,
        (false, None, _) => net.input_dims(),
    };
    if input.contains(&0) {
        return Err(CliError::Usage(format!("input dimensions must be positive, got {input:?}")));
    }
    emit("flops", &r, None)?;
    let report = flops_count(&net, input);
    let output = FlopsOutput {
        source: c.source,
        full_resolution: c.full_resolution,
        total_g: report.giga(),
        backbone_g: report.backbone_giga(),
        report: &report,
    };
    print_json(&artifact_json(&r.hash, &output));
    Ok(())
}
