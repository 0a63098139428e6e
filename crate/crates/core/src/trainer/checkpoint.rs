//! Binary layout: magic, `u32` version, `u32` header length, JSON header,
//! little-endian `f64` payload in canonical parameter order, SHA-256 of
//! everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainMode;
use crate::encoder::{param_shapes, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LPCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub mode: TrainMode,
    pub seed: u64,
    pub epoch: usize,
    pub dev_accuracy: Option<f64>,
}

impl Default for TrainMeta {
    fn default() -> Self {
        Self {
            mode: TrainMode::Full,
            seed: 0,
            epoch: 0,
            dev_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    readout_layer: usize,
    meta: TrainMeta,
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn checkpoint_to_bytes(params: &ModelParams, meta: &TrainMeta) -> Result<Vec<u8>> {
    params.validate()?;
    let named = params.tensors.named();
    let header = Header {
        config: params.config,
        readout_layer: params.readout_layer,
        meta: meta.clone(),
        tensors: named
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Json { line: 0, source: e })?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in &named {
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Corruption(what.into())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 {
        return Err(corrupt(format!("{} bytes is too short for a header", bytes.len())));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 12 + DIGEST_LEN {
        return Err(corrupt("truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let header_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("header length past end of file"))?;
    let header: Header = serde_json::from_slice(&body[12..header_end])
        .map_err(|e| corrupt(format!("header: {e}")))?;
    header.config.validate()?;
    let shapes = param_shapes(&header.config);
    let expected: Vec<(String, Vec<usize>)> = shapes
        .named()
        .into_iter()
        .map(|(n, s)| (n, s.clone()))
        .collect();
    if expected != header.tensors {
        return Err(corrupt("tensor table does not match the encoder config"));
    }
    let payload = &body[header_end..];
    let count: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != count * 8 {
        return Err(corrupt(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let tensors = shapes.try_map(|_, shape| {
        let n: usize = shape.iter().product();
        Tensor::new(shape, values.by_ref().take(n).collect())
    })?;
    let params = ModelParams::from_parts(header.config, header.readout_layer, tensors)?;
    Ok(Checkpoint {
        params,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, meta: &TrainMeta) -> Result<()> {
    let bytes = checkpoint_to_bytes(params, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
