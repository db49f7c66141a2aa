//! Checkpoint files: one line of JSON header followed by raw little-endian
//! `f64` payload.
//!
//! The header lists every tensor as `{name, shape, offset, trainable}` with
//! `offset` counted in elements from the start of the payload. Trainable
//! parameters come first, in model order, then non-trainable buffers.

use std::fs;
use std::path::Path;

use poremamba_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Regressor};
use crate::error::{Error, Result};
use crate::train::NormStats;

pub const FORMAT: &str = "poremamba-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub model: ModelConfig,
    pub norm: Option<NormStats>,
    pub entries: Vec<Entry>,
}

/// Serializes a model with its target normalization.
pub fn to_bytes(model: &dyn Regressor, norm: Option<NormStats>) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    let mut add = |name: &str, t: &Tensor, trainable: bool| {
        entries.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len(),
            trainable,
        });
        payload.extend_from_slice(t.data());
    };
    for p in model.params().iter() {
        add(&p.name, &p.value, true);
    }
    for (name, t) in model.buffers() {
        add(&name, &t, false);
    }
    let header = Header {
        format: FORMAT.into(),
        model: model.config(),
        norm,
        entries,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(payload.len() * 8);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn save(path: &Path, model: &dyn Regressor, norm: Option<NormStats>) -> Result<()> {
    let bytes = to_bytes(model, norm)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Rebuilds the model described by the header and restores every tensor.
pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Box<dyn Regressor>, Option<NormStats>)> {
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing checkpoint header line".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..split]).map_err(|e| bad(format!("bad checkpoint header: {e}")))?;
    if header.format != FORMAT {
        return Err(bad(format!("unsupported checkpoint format {:?}", header.format)));
    }
    let body = &bytes[split + 1..];
    if body.len() % 8 != 0 {
        return Err(bad(format!("payload of {} bytes is not a whole number of f64", body.len())));
    }
    let payload: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let tensor = |e: &Entry| -> Result<Tensor> {
        let len: usize = e.shape.iter().product();
        let data = payload
            .get(e.offset..e.offset + len)
            .ok_or_else(|| bad(format!("tensor {} runs past the payload", e.name)))?;
        Ok(Tensor::new(e.shape.clone(), data.to_vec())?)
    };

    let mut model = header.model.build(0)?;
    let (trainable, buffers): (Vec<&Entry>, Vec<&Entry>) = header.entries.iter().partition(|e| e.trainable);
    let params = model.params_mut();
    if trainable.len() != params.len() {
        return Err(bad(format!(
            "checkpoint has {} parameters, model expects {}",
            trainable.len(),
            params.len()
        )));
    }
    for (i, e) in trainable.iter().enumerate() {
        let p = params.get(i);
        if p.name != e.name || p.value.shape() != e.shape.as_slice() {
            return Err(bad(format!(
                "parameter {} {:?} does not match model parameter {} {:?}",
                e.name,
                e.shape,
                p.name,
                p.value.shape()
            )));
        }
        *params.tensor_mut(i) = tensor(e)?;
    }
    let buffers = buffers
        .iter()
        .map(|e| Ok((e.name.clone(), tensor(e)?)))
        .collect::<Result<Vec<_>>>()?;
    model.load_buffers(&buffers)?;
    if let Some(n) = &header.norm {
        n.validate()?;
    }
    Ok((model, header.norm))
}

pub fn load(path: &Path) -> Result<(Box<dyn Regressor>, Option<NormStats>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
