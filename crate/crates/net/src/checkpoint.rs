//! Single-file checkpoints.
//!
//! ```text
//! magic        8 bytes "VQACKPT1"
//! version      u32 LE
//! header_len   u64 LE
//! header       JSON: {version, config, dtype, tensors: [{name, shape}], meta}
//! payload      every tensor in header order, little-endian f32 or f64
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::FanetConfig;
use crate::model::Fanet;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VQACKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: FanetConfig,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form provenance, e.g. the training config and epoch.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<Vec<f64>>,
}

fn dtype_name(d: DType) -> Result<&'static str> {
    match d {
        DType::F32 => Ok("f32"),
        DType::F64 => Ok("f64"),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    }
}

pub fn parse_dtype(name: &str) -> Result<DType> {
    match name {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other}"))),
    }
}

pub fn encode_checkpoint(model: &Fanet, meta: serde_json::Value) -> Result<Vec<u8>> {
    let dtype = dtype_name(model.dtype())?;
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (name, var) in model.params().iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: var.dims().to_vec(),
        });
        let flat = var.as_tensor().flatten_all()?;
        match model.dtype() {
            DType::F32 => flat.to_vec1::<f32>()?.iter().for_each(|v| payload.extend_from_slice(&v.to_le_bytes())),
            _ => flat.to_vec1::<f64>()?.iter().for_each(|v| payload.extend_from_slice(&v.to_le_bytes())),
        }
    }
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        dtype: dtype.to_string(),
        tensors,
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let hend = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[20..hend]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let width = match parse_dtype(&header.dtype)? {
        DType::F32 => 4,
        _ => 8,
    };
    let mut pos = hend;
    let mut values = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        let end = n
            .checked_mul(width)
            .and_then(|b| pos.checked_add(b))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated payload in {}", t.name)))?;
        let chunk = &bytes[pos..end];
        values.push(if width == 4 {
            chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect()
        } else {
            chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        });
        pos = end;
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(Checkpoint { header, values })
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_checkpoint(&bytes)
    }

    /// Differences between the stored tensors and a model's parameters, one
    /// line per named parameter.
    pub fn diff(&self, model: &Fanet) -> Vec<String> {
        let stored: BTreeMap<&str, &Vec<usize>> =
            self.header.tensors.iter().map(|t| (t.name.as_str(), &t.shape)).collect();
        let mut lines = Vec::new();
        let mut seen = 0;
        for (name, var) in model.params().iter() {
            match stored.get(name) {
                None => lines.push(format!("missing {name} {:?}", var.dims())),
                Some(shape) => {
                    seen += 1;
                    if shape.as_slice() != var.dims() {
                        lines.push(format!("shape {name}: stored {shape:?}, model {:?}", var.dims()));
                    }
                }
            }
        }
        if seen != stored.len() {
            let names: Vec<String> = model.params().names();
            for t in &self.header.tensors {
                if !names.contains(&t.name) {
                    lines.push(format!("unexpected {} {:?}", t.name, t.shape));
                }
            }
        }
        lines
    }

    /// Copies the stored weights into `model`, refusing any name or shape mismatch.
    pub fn apply(&self, model: &Fanet) -> Result<()> {
        let diff = self.diff(model);
        if !diff.is_empty() {
            return Err(Error::Checkpoint(format!("parameter mismatch:\n  {}", diff.join("\n  "))));
        }
        for (t, v) in self.header.tensors.iter().zip(&self.values) {
            let tensor = Tensor::from_slice(v, t.shape.as_slice(), model.device())?;
            model.params().set(&t.name, &tensor)?;
        }
        Ok(())
    }

    pub fn into_model(self) -> Result<Fanet> {
        let model = Fanet::new(self.header.config.clone(), parse_dtype(&self.header.dtype)?, 0)?;
        self.apply(&model)?;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Fanet, path: &Path, meta: serde_json::Value) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Fanet> {
    Checkpoint::read(path)?.into_model()
}
