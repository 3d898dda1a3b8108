//! `repro.json`: the job that produced a result directory and the hashes of
//! every file it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use attractorlab::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jobs::Job;

pub const REPRO_FILE: &str = "repro.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repro {
    pub tool: String,
    pub version: String,
    pub job: Job,
    /// Path relative to the result directory, with `/` separators, to the
    /// SHA-256 of the file.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            walk(root, &p, out)?;
        } else if p != root.join(REPRO_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

/// Hashes every file under `dir` except `repro.json`.
pub fn hash_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files
        .into_iter()
        .map(|p| {
            let rel = p
                .strip_prefix(dir)
                .expect("under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok((rel, sha256_file(&p)?))
        })
        .collect()
}

/// Runs `job` into `out` and records it.
pub fn run_recorded(job: &Job, out: &Path) -> Result<(String, Repro)> {
    let summary = job.run(out)?;
    let repro = Repro {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        job: job.clone(),
        artifacts: hash_tree(out)?,
    };
    fs::write(out.join(REPRO_FILE), serde_json::to_string_pretty(&repro)? + "\n")?;
    Ok((summary, repro))
}

pub fn read_repro(path: &Path) -> Result<Repro> {
    let path = if path.is_dir() { path.join(REPRO_FILE) } else { path.to_path_buf() };
    Ok(serde_json::from_str(&fs::read_to_string(&path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub matched: Vec<String>,
    pub differing: Vec<String>,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

impl ReplayOutcome {
    pub fn is_exact(&self) -> bool {
        self.differing.is_empty() && self.missing.is_empty() && self.extra.is_empty()
    }
}

/// Re-runs the recorded job into `out` and compares every artifact hash.
pub fn replay(repro: &Repro, out: &Path) -> Result<ReplayOutcome> {
    if out.join(REPRO_FILE).exists() {
        return Err(Error::InvalidArgument(format!(
            "{} already holds a result; replay into an empty directory",
            out.display()
        )));
    }
    let (_, fresh) = run_recorded(&repro.job, out)?;
    let mut o = ReplayOutcome {
        matched: Vec::new(),
        differing: Vec::new(),
        missing: Vec::new(),
        extra: Vec::new(),
    };
    for (k, h) in &repro.artifacts {
        match fresh.artifacts.get(k) {
            Some(g) if g == h => o.matched.push(k.clone()),
            Some(_) => o.differing.push(k.clone()),
            None => o.missing.push(k.clone()),
        }
    }
    o.extra = fresh.artifacts.keys().filter(|k| !repro.artifacts.contains_key(*k)).cloned().collect();
    Ok(o)
}
