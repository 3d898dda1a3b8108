//! Model files: `ATLM` magic, `u16` version, `u32` header length, a JSON
//! header, then the flat parameter vector as little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{History, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::lstm::{Architecture, LstmParams};
use crate::sampling::Scaler;

const MAGIC: &[u8; 4] = b"ATLM";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    n_params: usize,
    scaler: Scaler,
    config: TrainConfig,
    history: History,
    dataset_fingerprint: String,
}

pub fn save_model(path: &Path, tm: &TrainedModel) -> Result<()> {
    let header = Header {
        arch: tm.params.arch().clone(),
        n_params: tm.params.len(),
        scaler: tm.scaler,
        config: tm.config.clone(),
        history: tm.history.clone(),
        dataset_fingerprint: tm.dataset_fingerprint.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(10 + json.len() + 8 * tm.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for w in tm.params.as_slice() {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |reason: &str| Error::format(path, reason);
    if buf.len() < 10 || &buf[..4] != MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(buf[6..10].try_into().expect("4 bytes")) as usize;
    let body = buf.get(10..10 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let payload = &buf[10 + hlen..];
    if payload.len() != 8 * header.n_params {
        return Err(bad("payload length does not match header"));
    }
    let flat = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let params = LstmParams::unflatten(&header.arch, flat)?;
    Ok(TrainedModel {
        params,
        scaler: header.scaler,
        config: header.config,
        history: header.history,
        dataset_fingerprint: header.dataset_fingerprint,
    })
}
