use std::borrow::Cow;

use candle_core::{DType, Device, Tensor};
use fragvqa_core::sampling::FragmentBatch;
use ndarray::Array3;

use crate::backbone::{check_dims, PatchEmbed, Stage, StageMasks};
use crate::config::{FanetConfig, NUM_STAGES};
use crate::head::{IpNlrHead, PatchGeometry, QualityOutput};
use crate::layers::{LayerNorm, ParamStore};
use crate::{Error, Result};

/// Per-channel normalization applied at the network boundary.
pub const PIXEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const PIXEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

pub struct Fanet {
    cfg: FanetConfig,
    params: ParamStore,
    embed: PatchEmbed,
    stages: Vec<Stage>,
    norm: LayerNorm,
    head: IpNlrHead,
    masks: Vec<StageMasks>,
}

impl Fanet {
    /// Builds the network with freshly initialized weights; `seed` fixes them.
    pub fn new(cfg: FanetConfig, dtype: DType, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(dtype, seed);
        let embed = PatchEmbed::new(&mut ps, cfg.patch_stride, cfg.in_channels, cfg.embed_dim)?;
        let stages = (0..NUM_STAGES)
            .map(|s| Stage::new(&mut ps, &cfg, s))
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(&mut ps, "norm", cfg.last_dim())?;
        let head = IpNlrHead::new(&mut ps, cfg.last_dim())?;
        let masks = build_masks(&cfg, cfg.input_dims(), dtype, ps.device())?;
        Ok(Self {
            cfg,
            params: ps,
            embed,
            stages,
            norm,
            head,
            masks,
        })
    }

    pub fn config(&self) -> &FanetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// Feature positions per quality-map cell side.
    pub fn cell_side(&self) -> usize {
        self.cfg.minipatch_feature_side(NUM_STAGES - 1).max(1)
    }

    /// Checks a `[B, T, H, W, C]` input against the strides and map cells.
    pub fn check_input(&self, dims: &[usize]) -> Result<()> {
        let [_, t, h, w, c] = dims else {
            return Err(Error::Config(format!("expected a [B, T, H, W, C] input, got {dims:?}")));
        };
        let mut problems = Vec::new();
        if *c != self.cfg.in_channels {
            problems.push(format!("{c} channels, network takes {}", self.cfg.in_channels));
        }
        let [st, sh, sw] = self.cfg.patch_stride;
        for (name, v, s) in [("frames", t, st), ("height", h, sh), ("width", w, sw)] {
            if *v == 0 || v % s != 0 {
                problems.push(format!("{name} {v} not divisible by patch stride {s}"));
            }
        }
        if problems.is_empty() {
            let last = self.cfg.stage_geometry([*t, *h, *w])[NUM_STAGES - 1].dims;
            let cell = self.cell_side();
            if last[1] % cell != 0 || last[2] % cell != 0 {
                problems.push(format!(
                    "final feature map {}x{} not divisible by {cell}x{cell} map cells",
                    last[1], last[2]
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn masks_for(&self, input: [usize; 3]) -> Result<Cow<'_, [StageMasks]>> {
        if input == self.cfg.input_dims() {
            Ok(Cow::Borrowed(&self.masks))
        } else {
            Ok(Cow::Owned(build_masks(&self.cfg, input, self.dtype(), self.device())?))
        }
    }

    /// Final normalized backbone features `[B, T', H', W', C_last]`.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.dims())?;
        let d = x.dims();
        let masks = self.masks_for([d[1], d[2], d[3]])?;
        let mut h = self.embed.forward(x)?;
        for (stage, m) in self.stages.iter().zip(masks.iter()) {
            check_dims(&h, &m.geometry)?;
            h = stage.forward(&h, m)?;
        }
        self.norm.forward(&h)
    }

    /// Positionwise regressed quality `[B, T', H', W']`.
    pub fn regress(&self, x: &Tensor) -> Result<Tensor> {
        self.head.forward(&self.features(x)?)
    }

    /// Clip scores `[B]`: the mean of every positionwise value.
    pub fn scores(&self, x: &Tensor) -> Result<Tensor> {
        let r = self.regress(x)?;
        let b = r.dims()[0];
        Ok(r.reshape((b, ()))?.mean(1)?)
    }

    /// Scores, quality maps and their source geometry for fragment batches.
    pub fn infer(&self, batches: &[&FragmentBatch]) -> Result<Vec<QualityOutput>> {
        let x = fragments_to_tensor(batches, self.dtype(), self.device())?;
        let r = self.regress(&x)?.to_dtype(DType::F64)?;
        let (b, t, h, w) = r.dims4()?;
        let flat: Vec<f64> = r.flatten_all()?.to_vec1()?;
        let per = t * h * w;
        let mut out = Vec::with_capacity(b);
        for (i, batch) in batches.iter().enumerate() {
            let values = Array3::from_shape_vec((t, h, w), flat[i * per..(i + 1) * per].to_vec())
                .map_err(|e| Error::Contract(e.to_string()))?;
            let mut q = QualityOutput::from_regressed(values, self.cell_side())?;
            q.geometry = Some(PatchGeometry::from_batch(
                batch,
                q.quality_map.dim(),
                self.cfg.patch_stride[0],
            ));
            out.push(q);
        }
        Ok(out)
    }
}

fn build_masks(cfg: &FanetConfig, input: [usize; 3], dtype: DType, device: &Device) -> Result<Vec<StageMasks>> {
    cfg.stage_geometry(input)
        .iter()
        .map(|g| StageMasks::new(g, cfg.window, dtype, device))
        .collect()
}

/// Stacks fragments into a normalized `[B, T, S, S, C]` tensor: pixels are
/// scaled to `[0, 1]`, then shifted and scaled per channel.
pub fn fragments_to_tensor(batches: &[&FragmentBatch], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Contract("no fragment batches".into()))?
        .fragments
        .dim();
    let mut v = Vec::with_capacity(batches.len() * first.0 * first.1 * first.2 * first.3);
    for b in batches {
        if b.fragments.dim() != first {
            return Err(Error::Contract(format!(
                "fragment shapes differ: {:?} vs {:?}",
                first,
                b.fragments.dim()
            )));
        }
        for (i, &p) in b.fragments.iter().enumerate() {
            let c = i % first.3;
            let (m, s) = if first.3 == 3 { (PIXEL_MEAN[c], PIXEL_STD[c]) } else { (0.5, 0.25) };
            v.push((p as f64 / 255.0 - m) / s);
        }
    }
    let (t, h, w, c) = first;
    Ok(Tensor::from_vec(v, (batches.len(), t, h, w, c), device)?.to_dtype(dtype)?)
}
