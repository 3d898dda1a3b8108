//! Diagnostics in parameter space: t-SNE of flattened parameter vectors,
//! radial distributions around the embedding barycenter, d2 histograms.

mod radial;
mod tsne;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynsys::io::fmt_f64;
use crate::error::{Error, Result};
use crate::sampling::Strategy;

pub use radial::{d2_edges, d2_histogram, radial_distribution, D2Histogram, D2HistogramRow, RadialDistribution, StrategyRadial};
pub use tsne::{initial_layout, joint_affinities, tsne, tsne_with_init, TsneConfig, TsneResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub model_id: usize,
    pub strategy: Strategy,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `|d2 - d_true| / d_true`.
    pub d2_error: f64,
}

/// A model entering the joint embedding.
pub struct ModelVector {
    pub model_id: usize,
    pub strategy: Strategy,
    pub params: Vec<f64>,
    pub d2_error: f64,
}

/// Embeds all models jointly.
pub fn embed_models(models: &[ModelVector], cfg: &TsneConfig) -> Result<(Vec<EmbeddingPoint>, TsneResult)> {
    let x: Vec<Vec<f64>> = models.iter().map(|m| m.params.clone()).collect();
    let res = tsne(&x, cfg)?;
    let pts = models
        .iter()
        .zip(&res.embedding)
        .map(|(m, y)| EmbeddingPoint {
            model_id: m.model_id,
            strategy: m.strategy,
            gamma1: y[0],
            gamma2: y[1],
            d2_error: m.d2_error,
        })
        .collect();
    Ok((pts, res))
}

/// Columns `model_id,strategy,gamma1,gamma2,d2_error`.
pub fn write_embedding_csv<W: Write>(pts: &[EmbeddingPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_id", "strategy", "gamma1", "gamma2", "d2_error"])?;
    for p in pts {
        w.write_record([
            p.model_id.to_string(),
            p.strategy.as_str().to_string(),
            fmt_f64(p.gamma1),
            fmt_f64(p.gamma2),
            fmt_f64(p.d2_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `strategy,tier,r_lo,r_hi,count,normalized`.
pub fn write_radial_csv<W: Write>(rd: &RadialDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "tier", "r_lo", "r_hi", "count", "normalized"])?;
    for s in &rd.strategies {
        for (tier, counts) in s.counts.iter().enumerate() {
            for (b, c) in counts.iter().enumerate() {
                w.write_record([
                    s.strategy.as_str().to_string(),
                    tier.to_string(),
                    fmt_f64(rd.edges[b]),
                    fmt_f64(rd.edges[b + 1]),
                    c.to_string(),
                    fmt_f64(s.normalized[b]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `strategy,memory,d2_lo,d2_hi,count,failure_fraction`.
pub fn write_d2_histogram_csv<W: Write>(h: &D2Histogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "memory", "d2_lo", "d2_hi", "count", "failure_fraction"])?;
    for row in &h.rows {
        for (b, c) in row.counts.iter().enumerate() {
            w.write_record([
                row.strategy.as_str().to_string(),
                row.memory.as_str().to_string(),
                fmt_f64(h.edges[b]),
                fmt_f64(h.edges[b + 1]),
                c.to_string(),
                fmt_f64(row.failure_fraction),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One-nearest-neighbour label agreement in an embedding.
pub fn nn_purity(y: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if y.len() != labels.len() || y.len() < 2 {
        return Err(Error::InvalidArgument("need matching labels and at least 2 points".into()));
    }
    let hits = (0..y.len())
        .filter(|&i| {
            let nn = (0..y.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (y[a][0] - y[i][0]).hypot(y[a][1] - y[i][1]);
                    let db = (y[b][0] - y[i][0]).hypot(y[b][1] - y[i][1]);
                    da.total_cmp(&db)
                })
                .expect("at least 2 points");
            labels[nn] == labels[i]
        })
        .count();
    Ok(hits as f64 / y.len() as f64)
}
