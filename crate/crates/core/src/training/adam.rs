//! Adam with bias correction and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::bptt::Gradient;
use crate::lstm::LstmParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Maximum global gradient norm; non-positive disables clipping.
    pub clip: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Moments {
    pub fn new(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Scales `g` in place so its norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_global_norm(g: &mut Gradient, max_norm: f64) -> f64 {
    let norm = g.norm();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        g.0.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

/// One Adam update. The gradient is clipped in place first.
pub fn adam_step(p: &mut LstmParams, g: &mut Gradient, mo: &mut Moments, lr: f64, hp: &AdamHyper) {
    assert_eq!(p.len(), g.0.len(), "gradient shape");
    assert_eq!(p.len(), mo.m.len(), "moment shape");
    clip_global_norm(g, hp.clip);
    mo.t += 1;
    let t = mo.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let w = p.as_mut_slice();
    for k in 0..w.len() {
        let gk = g.0[k];
        mo.m[k] = hp.beta1 * mo.m[k] + (1.0 - hp.beta1) * gk;
        mo.v[k] = hp.beta2 * mo.v[k] + (1.0 - hp.beta2) * gk * gk;
        let m_hat = mo.m[k] / bc1;
        let v_hat = mo.v[k] / bc2;
        w[k] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}
