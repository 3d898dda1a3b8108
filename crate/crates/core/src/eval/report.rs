//! Report files: the aggregate as JSON, one CSV row per model and the
//! prediction envelope as CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::ensemble::{Envelope, EnsembleReport};
use crate::dynsys::io::fmt_f64;
use crate::error::Result;

pub fn write_ensemble_json(path: &Path, r: &EnsembleReport) -> Result<()> {
    let mut s = serde_json::to_string_pretty(r)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_ensemble_json(path: &Path) -> Result<EnsembleReport> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Columns `model_id,seed,strategy,memory,d2,valid_time,valid_time_known,failure,error`.
pub fn write_ensemble_csv<W: Write>(r: &EnsembleReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model_id",
        "seed",
        "strategy",
        "memory",
        "d2",
        "valid_time",
        "valid_time_known",
        "failure",
        "error",
    ])?;
    for m in &r.models {
        let h = m.held_out.as_ref();
        w.write_record([
            m.model_id.to_string(),
            m.param_seed.to_string(),
            r.strategy.as_str().to_string(),
            r.memory.as_str().to_string(),
            opt(h.map(|h| h.d2)),
            opt(h.map(|h| h.valid_time_lyapunov)),
            opt(m.known_valid_time),
            (m.d2_failure() as u8).to_string(),
            m.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t,mean_x,std_x,mean_y,std_y,mean_z,std_z,true_x,true_y,true_z`.
pub fn write_envelope_csv<W: Write>(e: &Envelope, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t", "mean_x", "std_x", "mean_y", "std_y", "mean_z", "std_z", "true_x", "true_y", "true_z",
    ])?;
    for k in 0..e.truth.len() {
        let t = e.t0 + k as f64 * e.dt;
        let mut row = vec![fmt_f64(t)];
        for d in 0..3 {
            row.push(fmt_f64(e.mean.get(k).map_or(f64::NAN, |m| m[d])));
            row.push(fmt_f64(e.std.get(k).map_or(f64::NAN, |s| s[d])));
        }
        row.extend(e.truth[k].iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
