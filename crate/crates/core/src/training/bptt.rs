//! Teacher-forced loss and its gradient by backpropagation through time.
//!
//! A window is processed layer by layer: the input projection of a whole
//! layer is one matrix product, only the recurrent term is sequential. The
//! backward pass mirrors this and accumulates weight gradients as matrix
//! products over the window.

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use crate::dynsys::{State, Trajectory};
use crate::error::{Error, Result};
use crate::lstm::{cell_update, sigmoid, LayerMemory, LstmParams, MemoryState, STATE_DIM};

/// Gradient with the same flat layout as [`LstmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn zeros_like(p: &LstmParams) -> Self {
        Gradient(vec![0.0; p.len()])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|g| *g = 0.0);
    }
}

struct LayerTape {
    x: Array2<f64>,     // T x n_in
    gates: Array2<f64>, // T x 4h, activated (i, f, g, o)
    c: Array2<f64>,     // T x h
    tc: Array2<f64>,    // tanh(c)
    h: Array2<f64>,     // T x h
    h0: Array1<f64>,
    c0: Array1<f64>,
}

fn forward_layer(
    w: ArrayView2<f64>,
    u: ArrayView2<f64>,
    b: ArrayView1<f64>,
    x: Array2<f64>,
    mem: &LayerMemory,
) -> LayerTape {
    let t_len = x.nrows();
    let units = mem.h.len();
    let mut gates = Array2::<f64>::zeros((t_len, 4 * units));
    gates += &b;
    general_mat_mul(1.0, &x, &w.t(), 1.0, &mut gates);
    let mut c = Array2::<f64>::zeros((t_len, units));
    let mut tc = Array2::<f64>::zeros((t_len, units));
    let mut h = Array2::<f64>::zeros((t_len, units));
    let mut h_prev = Array1::from(mem.h.clone());
    let mut c_prev = Array1::from(mem.c.clone());
    for t in 0..t_len {
        let mut row = gates.row_mut(t);
        general_mat_vec_mul(1.0, &u, &h_prev, 1.0, &mut row);
        let pre = row.as_slice_mut().expect("row-major rows are contiguous");
        let cs = c_prev.as_slice_mut().expect("owned");
        let hs = h_prev.as_slice_mut().expect("owned");
        cell_update(pre, cs, hs);
        c.row_mut(t).assign(&c_prev);
        h.row_mut(t).assign(&h_prev);
        tc.row_mut(t).assign(&c_prev.mapv(f64::tanh));
    }
    LayerTape {
        x,
        gates,
        c,
        tc,
        h,
        h0: Array1::from(mem.h.clone()),
        c0: Array1::from(mem.c.clone()),
    }
}

/// Returns the gradient w.r.t. the layer input and accumulates parameter
/// gradients into `gw`, `gu`, `gb`.
fn backward_layer(
    tape: &LayerTape,
    w: ArrayView2<f64>,
    u: ArrayView2<f64>,
    d_h: &Array2<f64>,
    mut gw: ArrayViewMut2<f64>,
    mut gu: ArrayViewMut2<f64>,
    mut gb: ArrayViewMut1<f64>,
) -> Array2<f64> {
    let t_len = tape.x.nrows();
    let n = tape.h0.len();
    let mut d_a = Array2::<f64>::zeros((t_len, 4 * n));
    let mut dh_next = Array1::<f64>::zeros(n);
    let mut dc_next = Array1::<f64>::zeros(n);
    let ut = u.t().as_standard_layout().into_owned();
    for t in (0..t_len).rev() {
        let g = tape.gates.row(t);
        let (gi, gf, gg, go) = (
            g.slice(s![0..n]),
            g.slice(s![n..2 * n]),
            g.slice(s![2 * n..3 * n]),
            g.slice(s![3 * n..4 * n]),
        );
        let tc = tape.tc.row(t);
        let c_prev = if t > 0 {
            tape.c.row(t - 1)
        } else {
            tape.c0.view()
        };
        let dh = &d_h.row(t) + &dh_next;
        let mut row = d_a.row_mut(t);
        let da = row.as_slice_mut().expect("contiguous");
        for k in 0..n {
            let dc = dh[k] * go[k] * (1.0 - tc[k] * tc[k]) + dc_next[k];
            da[k] = dc * gg[k] * gi[k] * (1.0 - gi[k]);
            da[n + k] = dc * c_prev[k] * gf[k] * (1.0 - gf[k]);
            da[2 * n + k] = dc * gi[k] * (1.0 - gg[k] * gg[k]);
            da[3 * n + k] = dh[k] * tc[k] * go[k] * (1.0 - go[k]);
            dc_next[k] = dc * gf[k];
        }
        general_mat_vec_mul(1.0, &ut, &d_a.row(t), 0.0, &mut dh_next);
    }
    // h_{t-1} for every t in the window
    let mut h_prev = Array2::<f64>::zeros((t_len, n));
    h_prev.row_mut(0).assign(&tape.h0);
    if t_len > 1 {
        h_prev.slice_mut(s![1.., ..]).assign(&tape.h.slice(s![..t_len - 1, ..]));
    }
    general_mat_mul(1.0, &d_a.t(), &tape.x, 1.0, &mut gw);
    general_mat_mul(1.0, &d_a.t(), &h_prev, 1.0, &mut gu);
    gb += &d_a.sum_axis(Axis(0));
    d_a.dot(&w)
}

fn states_matrix(states: &[State]) -> Array2<f64> {
    Array2::from_shape_fn((states.len(), STATE_DIM), |(t, d)| states[t].to_array()[d])
}

/// Sum over the window of `||prediction - target||^2`, with memory starting
/// at `m0`. Adds the gradient into `grad` and returns the loss together with
/// the memory after the last input. Memory entering the window is treated
/// as a constant, so the gradient is truncated at the window start.
pub fn window_loss_and_grad(
    p: &LstmParams,
    inputs: &[State],
    targets: &[State],
    m0: &MemoryState,
    grad: &mut Gradient,
) -> Result<(f64, MemoryState)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: inputs.len().max(1),
            actual: targets.len(),
        });
    }
    let n_layers = p.arch().hidden.len();
    let mut tapes = Vec::with_capacity(n_layers);
    let mut x = states_matrix(inputs);
    for l in 0..n_layers {
        let (w, u, b) = p.layer(l);
        let tape = forward_layer(w, u, b, x, &m0.layers[l]);
        x = tape.h.clone();
        tapes.push(tape);
    }
    let (wo, bo) = p.head();
    let mut y = x.dot(&wo.t());
    y += &bo;
    y.mapv_inplace(sigmoid);
    let target = states_matrix(targets);
    let diff = &y - &target;
    let loss: f64 = diff.iter().map(|d| d * d).sum();

    let layout = p.layout().clone();
    let top = p.arch().top_units();
    // dL/dz of the head pre-activation
    let d_z = &diff * 2.0 * &y * &y.mapv(|v| 1.0 - v);
    {
        let (gw_slice, rest) = grad.0.split_at_mut(layout.head_b.start);
        let mut gwo = ArrayViewMut2::from_shape((STATE_DIM, top), &mut gw_slice[layout.head_w.clone()])
            .expect("layout");
        general_mat_mul(1.0, &d_z.t(), &x, 1.0, &mut gwo);
        let mut gbo = ArrayViewMut1::from(&mut rest[..STATE_DIM]);
        gbo += &d_z.sum_axis(Axis(0));
    }
    let mut d_h = d_z.dot(&wo);
    for l in (0..n_layers).rev() {
        let (w, u, _) = p.layer(l);
        let blk = &layout.layers[l];
        let h = blk.units;
        let g = &mut grad.0[blk.w.start..blk.b.end];
        let (gw, rest) = g.split_at_mut(blk.w.len());
        let (gu, gb) = rest.split_at_mut(blk.u.len());
        d_h = backward_layer(
            &tapes[l],
            w,
            u,
            &d_h,
            ArrayViewMut2::from_shape((4 * h, blk.n_in), gw).expect("layout"),
            ArrayViewMut2::from_shape((4 * h, h), gu).expect("layout"),
            ArrayViewMut1::from(gb),
        );
    }

    let last = inputs.len() - 1;
    let m_out = MemoryState {
        layers: tapes
            .iter()
            .map(|t| LayerMemory {
                h: t.h.row(last).to_vec(),
                c: t.c.row(last).to_vec(),
            })
            .collect(),
    };
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} or gradient overflowed")));
    }
    Ok((loss, m_out))
}

/// Teacher-forced loss of a whole chunk treated as a single window: each
/// sample is fed in and the next one is the target.
pub fn sequence_loss(
    p: &LstmParams,
    chunk: &Trajectory,
    m0: &MemoryState,
) -> Result<(f64, Gradient)> {
    let s = chunk.samples();
    if s.len() < 2 {
        return Err(Error::InvalidArgument("chunk needs at least 2 samples".into()));
    }
    let mut g = Gradient::zeros_like(p);
    let (loss, _) = window_loss_and_grad(p, &s[..s.len() - 1], &s[1..], m0, &mut g)?;
    Ok((loss, g))
}

/// Loss only, by iterating the single-step cell.
pub fn sequence_loss_value(p: &LstmParams, chunk: &Trajectory, m0: &MemoryState) -> f64 {
    let mut m = m0.clone();
    chunk
        .samples()
        .windows(2)
        .map(|w| {
            let y = crate::lstm::step_in_place(p, w[0], &mut m);
            let d = y - w[1];
            d.dot(&d)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{init_params, Architecture, InitScale};

    fn toy_chunk(n: usize) -> Trajectory {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 * 0.3;
                State::new(0.5 + 0.3 * t.sin(), 0.5 + 0.2 * (1.3 * t).cos(), 0.4 + 0.01 * k as f64)
            })
            .collect();
        Trajectory::new(samples, 0.01, 0.0).unwrap()
    }

    #[test]
    fn window_forward_matches_single_steps() {
        let arch = Architecture::new(vec![6, 5]).unwrap();
        let p = init_params(&arch, 3, InitScale::Constant(0.7));
        let chunk = toy_chunk(12);
        let mut rng = crate::seed::rng(1);
        let m0 = MemoryState::gaussian(&arch, &mut rng);
        let mut g = Gradient::zeros_like(&p);
        let s = chunk.samples();
        let (loss, m_end) = window_loss_and_grad(&p, &s[..11], &s[1..], &m0, &mut g).unwrap();
        let want = sequence_loss_value(&p, &chunk, &m0);
        assert!((loss - want).abs() < 1e-12 * want.max(1.0));
        let mut m = m0.clone();
        for x in &s[..11] {
            crate::lstm::step_in_place(&p, *x, &mut m);
        }
        for (a, b) in m.values().zip(m_end.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_params_loss_is_distance_to_one_half() {
        let arch = Architecture::default();
        let p = LstmParams::zeros(&arch);
        let chunk = toy_chunk(30);
        let (loss, _) = sequence_loss(&p, &chunk, &MemoryState::zeros(&arch)).unwrap();
        let half = State::new(0.5, 0.5, 0.5);
        let want: f64 = chunk.samples()[1..]
            .iter()
            .map(|s| {
                let d = *s - half;
                d.dot(&d)
            })
            .sum();
        assert!((loss - want).abs() < 1e-14);
    }

    #[test]
    fn rejects_short_chunks() {
        let arch = Architecture::new(vec![2]).unwrap();
        let p = LstmParams::zeros(&arch);
        let one = Trajectory::new(vec![State::ORIGIN], 0.01, 0.0).unwrap();
        assert!(sequence_loss(&p, &one, &MemoryState::zeros(&arch)).is_err());
    }
}
