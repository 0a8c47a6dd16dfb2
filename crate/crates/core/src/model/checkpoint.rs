//! Single-file checkpoints: magic, little-endian header length, JSON header
//! (schema, architecture, iteration, tensor index), then raw `f64` data.

use std::fs;
use std::path::Path;

use camrank_tensor::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::CamRankNet;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "camrank-ckpt/1";
const MAGIC: &[u8; 8] = b"CAMRANK\0";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    iteration: usize,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Encodes the network; `iteration` is stored for bookkeeping.
pub fn to_bytes(net: &CamRankNet, iteration: usize) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in net.params().iter() {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset });
        offset += t.numel();
    }
    let header = Header { schema: CHECKPOINT_SCHEMA.to_string(), iteration, config: net.config().clone(), tensors };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in net.params().iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a network and its iteration counter.
pub fn from_bytes(bytes: &[u8]) -> Result<(CamRankNet, usize)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json)?;
    if header.schema != CHECKPOINT_SCHEMA {
        return Err(Error::Checkpoint(format!("unsupported schema `{}`", header.schema)));
    }
    let data = &bytes[16 + len..];
    let mut params = ParamStore::new();
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let raw = data.get(8 * e.offset..8 * (e.offset + n)).ok_or_else(|| bad("truncated tensor data"))?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        params.insert(e.name.clone(), Tensor::new(&e.shape, values));
    }
    Ok((CamRankNet::from_params(header.config, params)?, header.iteration))
}

pub fn save(path: &Path, net: &CamRankNet, iteration: usize) -> Result<()> {
    let bytes = to_bytes(net, iteration)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(CamRankNet, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
