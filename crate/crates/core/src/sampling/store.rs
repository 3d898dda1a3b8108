//! Dataset directories: `manifest.json` plus one trajectory file per chunk.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Strategy};
use crate::dynsys::io::{self as traj_io, TrajectoryFormat};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub file: String,
    pub samples: usize,
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub strategy: Strategy,
    pub seed: u64,
    pub dt: f64,
    pub total_samples: usize,
    pub format: TrajectoryFormat,
    pub fingerprint: String,
    pub chunks: Vec<ChunkEntry>,
}

pub fn save_dataset(ds: &Dataset, dir: &Path, format: TrajectoryFormat) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut chunks = Vec::new();
    for (i, c) in ds.chunks().iter().enumerate() {
        let file = format!("chunk_{i:03}.{}", format.extension());
        traj_io::save(c, &dir.join(&file), format)?;
        chunks.push(ChunkEntry {
            file,
            samples: c.len(),
            t0: c.t0(),
        });
    }
    let manifest = Manifest {
        strategy: ds.strategy(),
        seed: ds.seed(),
        dt: ds.dt(),
        total_samples: ds.total_samples(),
        format,
        fingerprint: ds.fingerprint(),
        chunks,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let chunks = manifest
        .chunks
        .iter()
        .map(|e| {
            let t = traj_io::load(&dir.join(&e.file), Some(manifest.dt))?;
            if t.len() != e.samples {
                return Err(Error::format(
                    dir.join(&e.file),
                    format!("manifest says {} samples, file has {}", e.samples, t.len()),
                ));
            }
            // CSV time columns are exact to 17 digits; restore the manifest t0
            crate::dynsys::Trajectory::new(t.into_samples(), manifest.dt, e.t0)
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset::new(chunks, manifest.strategy, manifest.seed)?;
    if ds.fingerprint() != manifest.fingerprint {
        return Err(Error::format(path, "fingerprint mismatch"));
    }
    Ok(ds)
}
