//! Binary checkpoint format, version 1:
//!
//! ```text
//! magic   8 bytes  "DSOCKPT\0"
//! version u32 LE
//! hlen    u64 LE   length of the JSON header
//! header  hlen bytes UTF-8 JSON: architecture, training config, tensor names and shapes
//! weights f64 LE, tensors in header order, row-major
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Architecture, ModelParams, Tensor};
use super::TrainingConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSOCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    training: Option<TrainingConfig>,
    param_count: usize,
    tensors: Vec<TensorInfo>,
}

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let header = Header {
        architecture: params.architecture().clone(),
        training: params.training.clone(),
        param_count: params.param_count(),
        tensors: params
            .tensors()
            .iter()
            .map(|t| TensorInfo {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let bad = |reason: String| Error::format(path, reason);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(20..20usize.saturating_add(hlen))
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    let mut rest = &bytes[20 + hlen..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in header.tensors {
        let n: usize = info.shape.iter().product();
        if rest.len() < 8 * n {
            return Err(bad(format!("truncated weights in {}", info.name)));
        }
        let data = rest[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        rest = &rest[8 * n..];
        tensors.push(Tensor {
            name: info.name,
            shape: info.shape,
            data,
        });
    }
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    let params = ModelParams::from_tensors(header.architecture, tensors, header.training)
        .map_err(|e| bad(e.to_string()))?;
    if params.param_count() != header.param_count {
        return Err(bad("parameter count mismatch".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

/// Hex SHA-256 of the serialized checkpoint.
pub fn digest(params: &ModelParams) -> String {
    hex::encode(Sha256::digest(to_bytes(params)))
}
