//! Exact t-SNE.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    /// Z-score every input coordinate before measuring distances.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 15.0,
            n_iter: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 100.0,
            momentum: 0.5,
            final_momentum: 0.8,
            standardize: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// `(iteration, KL(P || Q))` every 50 iterations after the
    /// exaggeration phase, and at the last iteration.
    pub kl_trace: Vec<(usize, f64)>,
}

fn sq_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

fn standardized(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let dim = x[0].len();
    let mut out = x.to_vec();
    for k in 0..dim {
        let m = x.iter().map(|v| v[k]).sum::<f64>() / n;
        let s = (x.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / n).sqrt();
        for v in out.iter_mut() {
            v[k] = if s > 0.0 { (v[k] - m) / s } else { 0.0 };
        }
    }
    out
}

/// Row `i` of the conditional affinities with the Gaussian bandwidth found
/// by bisection on the precision so that the row's perplexity matches.
fn conditional_row(d: &[f64], i: usize, perplexity: f64, row: &mut [f64]) -> Result<()> {
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    // scale so that beta = 1 starts near the right range
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mean = d.iter().sum::<f64>() / (d.len() - 1) as f64;
    if mean > 0.0 {
        beta = 1.0 / mean;
    }
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut wsum = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            let v = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
            row[j] = v;
            sum += v;
            wsum += v * (dj - dmin);
        }
        let h = sum.ln() + beta * wsum / sum;
        if (h - target).abs() < 1e-10 {
            row.iter_mut().for_each(|v| *v /= sum);
            return Ok(());
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        if !beta.is_finite() || beta > 1e300 {
            break;
        }
    }
    Err(Error::PerplexityInfeasible {
        perplexity,
        reason: format!("bisection failed to bracket for point {i}"),
    })
}

/// Symmetric joint affinities `P`, row-major `n x n`.
pub fn joint_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let d = sq_distances(x);
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        conditional_row(&d[i * n..(i + 1) * n], i, perplexity, &mut cond[i * n..(i + 1) * n])?;
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    Ok(p)
}

fn check(x: &[Vec<f64>], cfg: &TsneConfig) -> Result<()> {
    let n = x.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!("t-SNE needs at least 10 points, got {n}")));
    }
    if x.iter().any(|v| v.len() != x[0].len()) {
        return Err(Error::InvalidArgument("input vectors differ in length".into()));
    }
    let max = (n - 1) as f64 / 3.0;
    if !(cfg.perplexity >= 5.0 && cfg.perplexity <= max) {
        return Err(Error::PerplexityInfeasible {
            perplexity: cfg.perplexity,
            reason: format!("must lie in [5, {max:.3}] for {n} points"),
        });
    }
    Ok(())
}

/// Seeded initial layout, `N(0, 1e-4)` per coordinate.
pub fn initial_layout(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seed::rng(seed::derive(seed, Stream::Embedding, 0));
    let normal = Normal::new(0.0, 1e-2).expect("valid");
    (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect()
}

pub fn tsne(x: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    tsne_with_init(x, initial_layout(x.len(), cfg.seed), cfg)
}

fn kl(p: &[f64], q_num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(q_num)
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qn)| pv * (pv / (qn / z).max(1e-300)).ln())
        .sum()
}

/// Order in which points are processed: lexicographic in the input
/// coordinates, ties broken by the initial position. Running in this order
/// makes the result independent of the order of the input.
fn canonical_order(x: &[Vec<f64>], init: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| {
        x[a].iter()
            .zip(&x[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(init[a][0].total_cmp(&init[b][0]))
            .then(init[a][1].total_cmp(&init[b][1]))
    });
    idx
}

/// Student-t kernel values into `num`, returns their sum.
fn kernel(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    z
}

/// t-SNE from a given initial layout.
///
/// After the exaggeration phase a step that raises the KL divergence is
/// undone: the layout goes back to the last accepted one, momentum and
/// gains are reset and the step size is halved. Accepted steps grow the
/// step size back towards the configured learning rate.
pub fn tsne_with_init(x: &[Vec<f64>], init: Vec<[f64; 2]>, cfg: &TsneConfig) -> Result<TsneResult> {
    check(x, cfg)?;
    let n = x.len();
    if init.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: init.len(),
        });
    }
    let order = canonical_order(x, &init);
    let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let p = if cfg.standardize {
        joint_affinities(&standardized(&xs), cfg.perplexity)?
    } else {
        joint_affinities(&xs, cfg.perplexity)?
    };
    let mut y: Vec<[f64; 2]> = order.iter().map(|&i| init[i]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0; 2]; n];
    let mut kl_trace = Vec::new();
    let mut accepted = y.clone();
    let mut accepted_kl = f64::INFINITY;
    let mut scale: f64 = 1.0;
    for it in 0..cfg.n_iter {
        let post = it >= cfg.exaggeration_iters;
        let exag = if post { 1.0 } else { cfg.exaggeration };
        let mom = if post { cfg.final_momentum } else { cfg.momentum };
        let mut z = kernel(&y, &mut num);
        if post {
            let now = kl(&p, &num, z);
            if now > accepted_kl {
                y.copy_from_slice(&accepted);
                update.iter_mut().for_each(|u| *u = [0.0; 2]);
                gains.iter_mut().for_each(|g| *g = [1.0; 2]);
                scale *= 0.5;
                z = kernel(&y, &mut num);
            } else {
                accepted.copy_from_slice(&y);
                accepted_kl = now;
                scale = (scale * 1.1).min(1.0);
            }
            if (it - cfg.exaggeration_iters).is_multiple_of(50) {
                kl_trace.push((it, accepted_kl));
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let nij = num[i * n + j];
                let m = (exag * p[i * n + j] - nij / z) * nij;
                g[0] += m * (y[i][0] - y[j][0]);
                g[1] += m * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }
        let lr = cfg.learning_rate * scale;
        for i in 0..n {
            for d in 0..2 {
                let gd = grad[i][d];
                gains[i][d] = if (gd > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = mom * update[i][d] - lr * gains[i][d] * gd;
                y[i][d] += update[i][d];
            }
        }
        let c = [
            y.iter().map(|v| v[0]).sum::<f64>() / n as f64,
            y.iter().map(|v| v[1]).sum::<f64>() / n as f64,
        ];
        for v in y.iter_mut() {
            v[0] -= c[0];
            v[1] -= c[1];
        }
        if y.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(Error::NonFinite(format!("t-SNE diverged at iteration {it}")));
        }
    }
    if cfg.n_iter > cfg.exaggeration_iters {
        let z = kernel(&y, &mut num);
        let last = kl(&p, &num, z);
        if last > accepted_kl {
            y.copy_from_slice(&accepted);
        } else {
            accepted_kl = last;
        }
        kl_trace.push((cfg.n_iter, accepted_kl));
    }
    let mut embedding = vec![[0.0; 2]; n];
    for (k, &i) in order.iter().enumerate() {
        embedding[i] = y[k];
    }
    Ok(TsneResult { embedding, kl_trace })
}
