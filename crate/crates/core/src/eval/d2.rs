//! Grassberger–Procaccia correlation dimension.

use serde::{Deserialize, Serialize};

use crate::dynsys::{State, Trajectory};
use crate::error::{Error, Result};

/// Correlation dimension of the Lorenz attractor used as the reference.
pub const D_TRUE: f64 = 2.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct D2Config {
    /// Pairs closer than this many samples in time are ignored, measured in
    /// steps of the input trajectory.
    pub theiler: usize,
    pub per_decade: usize,
    /// Span of the radius grid below the cloud diameter, in decades.
    pub decades: f64,
    /// Longer inputs are subsampled with a uniform stride down to this size.
    pub max_points: usize,
    pub min_points: usize,
    /// Width of the automatically selected fit window, in decades.
    pub fit_decades: f64,
    /// Explicit `(r_lo, r_hi)` fit range; overrides the automatic choice.
    pub fit_range: Option<(f64, f64)>,
    /// Radii whose correlation sum leaves `[c_min_pairs / n_pairs, c_max]`
    /// are excluded from the automatic fit.
    pub c_min_pairs: f64,
    pub c_max: f64,
}

impl Default for D2Config {
    fn default() -> Self {
        D2Config {
            theiler: 20,
            per_decade: 20,
            decades: 4.0,
            max_points: 5000,
            min_points: 5000,
            fit_decades: 1.0,
            fit_range: None,
            c_min_pairs: 100.0,
            c_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2Estimate {
    pub d2: f64,
    /// The cloud has (near) zero extent; `d2` is reported as 0.
    pub degenerate: bool,
    pub fit: (f64, f64),
    pub radii: Vec<f64>,
    pub corr: Vec<f64>,
}

/// `C(r) = 2 / (N (N - 1)) * #{i < j, |i - j| > theiler : |x_i - x_j| < r}`
/// for every radius in the ascending grid. The normalization counts all
/// pairs, as in the textbook definition.
pub fn correlation_sum(points: &[State], radii: &[f64], theiler: usize) -> Vec<f64> {
    let n = points.len();
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let mut hist = vec![0u64; r2.len() + 1];
    let pts: Vec<[f64; 3]> = points.iter().map(|s| s.to_array()).collect();
    for i in 0..n {
        let a = pts[i];
        for b in &pts[(i + theiler + 1).min(n)..] {
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            // first radius with d < r
            hist[r2.partition_point(|&x| x <= d2)] += 1;
        }
    }
    let norm = 2.0 / (n as f64 * (n as f64 - 1.0));
    let mut acc = 0u64;
    hist[..r2.len()]
        .iter()
        .map(|&h| {
            acc += h;
            acc as f64 * norm
        })
        .collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn correlation_dimension(traj: &Trajectory, cfg: &D2Config) -> Result<D2Estimate> {
    let stride = (traj.len() / cfg.max_points.max(1)).max(1);
    let theiler = cfg.theiler.div_ceil(stride);
    let pts = traj.subsample(stride);
    correlation_dimension_points(pts.samples(), theiler, cfg)
}

/// Same as [`correlation_dimension`] on an unordered cloud, with the
/// Theiler window given directly in points.
pub fn correlation_dimension_points(pts: &[State], theiler: usize, cfg: &D2Config) -> Result<D2Estimate> {
    if pts.len() < cfg.min_points.max(3) {
        return Err(Error::InvalidArgument(format!(
            "correlation dimension needs at least {} points, got {}",
            cfg.min_points.max(3),
            pts.len()
        )));
    }
    if cfg.per_decade == 0 || !(cfg.decades > 0.0) || !(cfg.fit_decades > 0.0) {
        return Err(Error::InvalidArgument("invalid radius grid".into()));
    }
    if pts.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("point cloud".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut scale: f64 = 1.0;
    for s in pts {
        for (d, v) in s.to_array().into_iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
            scale = scale.max(v.abs());
        }
    }
    let diameter = (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt();
    if diameter <= 1e-9 * scale {
        return Ok(D2Estimate {
            d2: 0.0,
            degenerate: true,
            fit: (0.0, 0.0),
            radii: Vec::new(),
            corr: Vec::new(),
        });
    }
    let steps = (cfg.decades * cfg.per_decade as f64).round() as usize;
    let radii: Vec<f64> = (0..=steps)
        .map(|j| diameter * 10f64.powf((j as f64 - steps as f64) / cfg.per_decade as f64))
        .collect();
    let corr = correlation_sum(pts, &radii, theiler);
    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let logc: Vec<f64> = corr.iter().map(|c| c.ln()).collect();

    let (a, b) = match cfg.fit_range {
        Some((r_lo, r_hi)) => {
            let a = radii.partition_point(|&r| r < r_lo);
            let b = radii.partition_point(|&r| r <= r_hi);
            if b < a + 2 || corr[a] <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "fit range ({r_lo}, {r_hi}) covers too few populated radii"
                )));
            }
            (a, b)
        }
        None => {
            let n = pts.len() as f64;
            let c_min = cfg.c_min_pairs * 2.0 / (n * (n - 1.0));
            let usable: Vec<bool> = corr.iter().map(|&c| c >= c_min && c <= cfg.c_max).collect();
            let local: Vec<f64> = (0..radii.len() - 1)
                .map(|j| (logc[j + 1] - logc[j]) / (logr[j + 1] - logr[j]))
                .collect();
            let w = ((cfg.fit_decades * cfg.per_decade as f64).round() as usize).max(2);
            // flattest run of w local slopes whose radii are all usable
            let mut best: Option<(f64, usize)> = None;
            for start in 0..local.len().saturating_sub(w - 1) {
                if !usable[start..=start + w].iter().all(|&u| u) {
                    continue;
                }
                let sl = &local[start..start + w];
                let m = sl.iter().sum::<f64>() / w as f64;
                let var = sl.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / w as f64;
                if best.is_none_or(|(v, _)| var < v) {
                    best = Some((var, start));
                }
            }
            match best {
                Some((_, start)) => (start, start + w + 1),
                None => {
                    // no scaling region resolved: the cloud is effectively a
                    // handful of points
                    return Ok(D2Estimate {
                        d2: 0.0,
                        degenerate: true,
                        fit: (0.0, 0.0),
                        radii,
                        corr,
                    });
                }
            }
        }
    };
    let d2 = slope(&logr[a..b], &logc[a..b]).max(0.0);
    Ok(D2Estimate {
        d2,
        degenerate: false,
        fit: (radii[a], radii[b - 1]),
        radii,
        corr,
    })
}
