//! Lyapunov spectrum by tangent-space integration with periodic QR
//! re-orthonormalization.

use serde::{Deserialize, Serialize};

use super::{jacobian, lorenz_rhs, random_attractor_state, LorenzParams, Matrix3, State};
use crate::error::{Error, Result};
use crate::seed;

/// Steps between re-orthonormalizations of the tangent frame.
const QR_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Sorted descending, in inverse time units.
    pub exponents: [f64; 3],
    pub ky_dimension: f64,
    pub n_steps: usize,
    pub dt: f64,
}

impl LyapunovReport {
    pub fn lyapunov_time(&self) -> f64 {
        1.0 / self.exponents[0]
    }
}

/// Kaplan-Yorke dimension of a descending spectrum: `j + S_j / |lambda_{j+1}|`
/// where `j` is the largest index with a non-negative partial sum `S_j`.
pub fn kaplan_yorke(exponents: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (j, &l) in exponents.iter().enumerate() {
        if sum + l < 0.0 {
            return j as f64 + sum / l.abs();
        }
        sum += l;
    }
    exponents.len() as f64
}

// tangent frame stored column-wise: q[c] is the c-th tangent vector
type Frame = [[f64; 3]; 3];

fn tangent_rhs(s: State, q: &Frame, p: &LorenzParams) -> (State, Frame) {
    let j: Matrix3 = jacobian(s, p);
    let mut dq = [[0.0; 3]; 3];
    for (c, col) in q.iter().enumerate() {
        dq[c] = super::mat_vec(&j, *col);
    }
    (lorenz_rhs(s, p), dq)
}

fn axpy(q: &Frame, dq: &Frame, h: f64) -> Frame {
    let mut out = *q;
    for c in 0..3 {
        for r in 0..3 {
            out[c][r] += h * dq[c][r];
        }
    }
    out
}

fn rk4_tangent(s: State, q: &Frame, p: &LorenzParams, dt: f64) -> (State, Frame) {
    let (k1, l1) = tangent_rhs(s, q, p);
    let (k2, l2) = tangent_rhs(s + k1 * (0.5 * dt), &axpy(q, &l1, 0.5 * dt), p);
    let (k3, l3) = tangent_rhs(s + k2 * (0.5 * dt), &axpy(q, &l2, 0.5 * dt), p);
    let (k4, l4) = tangent_rhs(s + k3 * dt, &axpy(q, &l3, dt), p);
    let s_next = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let mut q_next = *q;
    for c in 0..3 {
        for r in 0..3 {
            q_next[c][r] += dt / 6.0 * (l1[c][r] + 2.0 * l2[c][r] + 2.0 * l3[c][r] + l4[c][r]);
        }
    }
    (s_next, q_next)
}

/// Modified Gram-Schmidt in place; returns the diagonal of R.
fn orthonormalize(q: &mut Frame) -> [f64; 3] {
    let mut diag = [0.0; 3];
    for c in 0..3 {
        for prev in 0..c {
            let d: f64 = (0..3).map(|r| q[c][r] * q[prev][r]).sum();
            for r in 0..3 {
                q[c][r] -= d * q[prev][r];
            }
        }
        let n = (0..3).map(|r| q[c][r] * q[c][r]).sum::<f64>().sqrt();
        diag[c] = n;
        for r in 0..3 {
            q[c][r] /= n;
        }
    }
    diag
}

/// Lyapunov exponents from `n_steps` of RK4 tangent dynamics, starting from
/// a seeded random state on the attractor.
pub fn lyapunov_spectrum(
    p: &LorenzParams,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    if n_steps < QR_EVERY {
        return Err(Error::InvalidArgument(format!(
            "n_steps must be >= {QR_EVERY}, got {n_steps}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut s = random_attractor_state(p, dt, super::DEFAULT_TRANSIENT, &mut rng)?;
    let mut q: Frame = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut log_sums = [0.0f64; 3];
    let mut steps_done = 0;
    for k in 1..=n_steps {
        (s, q) = rk4_tangent(s, &q, p, dt);
        if k % QR_EVERY == 0 || k == n_steps {
            let diag = orthonormalize(&mut q);
            for i in 0..3 {
                log_sums[i] += diag[i].ln();
            }
            steps_done = k;
            if !s.is_finite() || log_sums.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tangent integration at step {k}")));
            }
        }
    }
    let t = steps_done as f64 * dt;
    let mut exponents = log_sums.map(|v| v / t);
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovReport {
        exponents,
        ky_dimension: kaplan_yorke(&exponents),
        n_steps,
        dt,
    })
}
