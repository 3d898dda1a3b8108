//! Distances from the barycenter of an embedding, and d2 histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EmbeddingPoint;
use crate::eval::{failure_fraction, EnsembleReport};
use crate::lstm::MemoryMode;
use crate::sampling::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRadial {
    pub strategy: Strategy,
    pub n_models: usize,
    /// `counts[tier][bin]`; tier 0 holds the most accurate models by d2
    /// error, each tier an equal share of the strategy's models.
    pub counts: Vec<Vec<usize>>,
    /// Bin totals divided by the largest bin total of this strategy.
    pub normalized: Vec<f64>,
    /// Share of this strategy's models within the median radius of all
    /// points.
    pub within_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDistribution {
    pub barycenter: [f64; 2],
    pub edges: Vec<f64>,
    pub median_radius: f64,
    pub strategies: Vec<StrategyRadial>,
}

fn bin_of(edges: &[f64], r: f64) -> usize {
    (edges.partition_point(|&e| e <= r).max(1) - 1).min(edges.len() - 2)
}

/// Radial histogram around the barycenter of all points, with the same
/// bins for every strategy.
pub fn radial_distribution(points: &[EmbeddingPoint], n_bins: usize, n_tiers: usize) -> RadialDistribution {
    let n = points.len().max(1) as f64;
    let bc = [
        points.iter().map(|p| p.gamma1).sum::<f64>() / n,
        points.iter().map(|p| p.gamma2).sum::<f64>() / n,
    ];
    let radius = |p: &EmbeddingPoint| (p.gamma1 - bc[0]).hypot(p.gamma2 - bc[1]);
    let r: Vec<f64> = points.iter().map(radius).collect();
    let n_bins = n_bins.max(1);
    let n_tiers = n_tiers.max(1);
    let r_max = r.iter().cloned().fold(0.0, f64::max);
    let width = if r_max > 0.0 { r_max / n_bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 * width).collect();
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let median_radius = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };

    let mut groups: BTreeMap<Strategy, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        groups.entry(p.strategy).or_default().push(i);
    }
    let strategies = groups
        .into_iter()
        .map(|(strategy, mut idx)| {
            idx.sort_by(|&a, &b| points[a].d2_error.total_cmp(&points[b].d2_error).then(a.cmp(&b)));
            let m = idx.len();
            let mut counts = vec![vec![0; n_bins]; n_tiers];
            for (rank, &i) in idx.iter().enumerate() {
                counts[rank * n_tiers / m][bin_of(&edges, r[i])] += 1;
            }
            let totals: Vec<usize> = (0..n_bins).map(|b| counts.iter().map(|t| t[b]).sum()).collect();
            let peak = *totals.iter().max().unwrap_or(&0) as f64;
            StrategyRadial {
                strategy,
                n_models: m,
                normalized: totals.iter().map(|&c| if peak > 0.0 { c as f64 / peak } else { 0.0 }).collect(),
                within_median: idx.iter().filter(|&&i| r[i] <= median_radius).count() as f64 / m as f64,
                counts,
            }
        })
        .collect();
    RadialDistribution {
        barycenter: bc,
        edges,
        median_radius,
        strategies,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2HistogramRow {
    pub strategy: Strategy,
    pub memory: MemoryMode,
    pub counts: Vec<usize>,
    pub n_models: usize,
    pub failure_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2Histogram {
    pub edges: Vec<f64>,
    pub rows: Vec<D2HistogramRow>,
}

/// Evenly spaced edges `0, width, ..., n * width`.
pub fn d2_edges(n: usize, width: f64) -> Vec<f64> {
    (0..=n).map(|k| k as f64 * width).collect()
}

/// Histogram of the d2 of each evaluated model per report, over shared
/// edges; values beyond the edges land in the end bins. The failure
/// annotation is recomputed from the per-model rows.
pub fn d2_histogram(reports: &[EnsembleReport], edges: &[f64]) -> D2Histogram {
    let rows = reports
        .iter()
        .map(|rep| {
            let mut counts = vec![0; edges.len() - 1];
            for m in &rep.models {
                if let Some(h) = &m.held_out {
                    counts[bin_of(edges, h.d2)] += 1;
                }
            }
            D2HistogramRow {
                strategy: rep.strategy,
                memory: rep.memory,
                counts,
                n_models: rep.models.len(),
                failure_fraction: failure_fraction(&rep.models),
            }
        })
        .collect();
    D2Histogram {
        edges: edges.to_vec(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: usize, s: Strategy, g: [f64; 2], e: f64) -> EmbeddingPoint {
        EmbeddingPoint {
            model_id: id,
            strategy: s,
            gamma1: g[0],
            gamma2: g[1],
            d2_error: e,
        }
    }

    #[test]
    fn identical_points_fill_first_bin() {
        let pts: Vec<_> = (0..6).map(|i| pt(i, Strategy::Ergodic, [1.0, 1.0], 0.1)).collect();
        let rd = radial_distribution(&pts, 5, 2);
        let s = &rd.strategies[0];
        assert_eq!(s.counts[0][0] + s.counts[1][0], 6);
        assert_eq!(s.normalized[0], 1.0);
        assert!(s.normalized[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ring_concentrates_in_outer_bin() {
        let r = 3.0;
        let pts: Vec<_> = (0..50)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 50.0;
                pt(k, Strategy::Random, [r * a.cos() + 2.0, r * a.sin() - 1.0], k as f64)
            })
            .chain([pt(50, Strategy::Random, [2.0, -1.0], 0.0)])
            .collect();
        let rd = radial_distribution(&pts, 6, 1);
        let c = &rd.strategies[0].counts[0];
        assert_eq!(c[5], 50);
        assert_eq!(c.iter().sum::<usize>(), 51);
    }

    #[test]
    fn counts_match_strategy_sizes_and_tiers_follow_error() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(pt(i, Strategy::Ergodic, [i as f64, 0.0], i as f64));
        }
        for i in 10..13 {
            pts.push(pt(i, Strategy::FixedPoint, [0.0, i as f64], 0.0));
        }
        let rd = radial_distribution(&pts, 4, 2);
        for s in &rd.strategies {
            let total: usize = s.counts.iter().flatten().sum();
            assert_eq!(total, s.n_models);
        }
        let erg = rd.strategies.iter().find(|s| s.strategy == Strategy::Ergodic).unwrap();
        assert_eq!(erg.counts[0].iter().sum::<usize>(), 5);
    }
}
