//! Stacked LSTM with a logistic dense head.
//!
//! All parameters live in one flat `Vec<f64>`. Blocks are laid out as
//! `layer 1 W, U, b; layer 2 W, U, b; ...; head W, b`. Inside each gate
//! block the rows are ordered input, forget, candidate, output (`i, f, g, o`)
//! and every matrix is row-major, so `W` of a layer with `h` units and `n`
//! inputs is `4h x n`. This ordering is part of the model file format.

mod memory;

use std::ops::Range;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynsys::State;
use crate::error::{Error, Result};
use crate::seed;

pub use memory::{init_memory, LayerMemory, MemoryInit, MemoryMode, MemoryState};

/// Width of the observed state, which is both the input and the output.
pub const STATE_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Units per LSTM layer, bottom to top.
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50],
        }
    }
}

impl Architecture {
    pub fn new(hidden: Vec<usize>) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "need at least one layer and non-zero widths, got {hidden:?}"
            )));
        }
        Ok(Self { hidden })
    }

    pub fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut take = |n: usize| {
            let r = offset..offset + n;
            offset += n;
            r
        };
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut n_in = STATE_DIM;
        for &h in &self.hidden {
            layers.push(LayerBlocks {
                n_in,
                units: h,
                w: take(4 * h * n_in),
                u: take(4 * h * h),
                b: take(4 * h),
            });
            n_in = h;
        }
        let head_w = take(STATE_DIM * n_in);
        let head_b = take(STATE_DIM);
        Layout {
            layers,
            head_w,
            head_b,
            len: offset,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().len
    }

    pub fn top_units(&self) -> usize {
        *self.hidden.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBlocks {
    pub n_in: usize,
    pub units: usize,
    pub w: Range<usize>,
    pub u: Range<usize>,
    pub b: Range<usize>,
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub layers: Vec<LayerBlocks>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub len: usize,
}

/// Per-matrix standard deviation used by [`init_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum InitScale {
    /// `1 / sqrt(fan_in)` for each matrix.
    InverseSqrtFanIn,
    Constant(f64),
}

impl Default for InitScale {
    fn default() -> Self {
        InitScale::InverseSqrtFanIn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    arch: Architecture,
    layout: Layout,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let layout = arch.layout();
        Self {
            arch: arch.clone(),
            data: vec![0.0; layout.len],
            layout,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn unflatten(arch: &Architecture, flat: Vec<f64>) -> Result<Self> {
        let layout = arch.layout();
        if flat.len() != layout.len {
            return Err(Error::LengthMismatch {
                expected: layout.len,
                actual: flat.len(),
            });
        }
        Ok(Self {
            arch: arch.clone(),
            layout,
            data: flat,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(W, U, b)` of layer `l`.
    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let blk = &self.layout.layers[l];
        let h = blk.units;
        (
            ArrayView2::from_shape((4 * h, blk.n_in), &self.data[blk.w.clone()]).unwrap(),
            ArrayView2::from_shape((4 * h, h), &self.data[blk.u.clone()]).unwrap(),
            ArrayView1::from(&self.data[blk.b.clone()]),
        )
    }

    pub fn head(&self) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let top = self.arch.top_units();
        (
            ArrayView2::from_shape((STATE_DIM, top), &self.data[self.layout.head_w.clone()])
                .unwrap(),
            ArrayView1::from(&self.data[self.layout.head_b.clone()]),
        )
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gaussian weights with the forget-gate biases set to one and every other
/// bias zero.
pub fn init_params(arch: &Architecture, seed: u64, scale: InitScale) -> LstmParams {
    let mut p = LstmParams::zeros(arch);
    let mut rng = seed::rng(seed);
    let std_for = |fan_in: usize| match scale {
        InitScale::InverseSqrtFanIn => 1.0 / (fan_in as f64).sqrt(),
        InitScale::Constant(s) => s,
    };
    let mut fill = |range: Range<usize>, std: f64, data: &mut [f64]| {
        let normal = Normal::new(0.0, std).expect("std is finite and positive");
        for v in &mut data[range] {
            *v = normal.sample(&mut rng);
        }
    };
    let layout = p.layout.clone();
    for blk in &layout.layers {
        fill(blk.w.clone(), std_for(blk.n_in), &mut p.data);
        fill(blk.u.clone(), std_for(blk.units), &mut p.data);
        let h = blk.units;
        for v in &mut p.data[blk.b.start + h..blk.b.start + 2 * h] {
            *v = 1.0;
        }
    }
    fill(layout.head_w.clone(), std_for(arch.top_units()), &mut p.data);
    p
}

/// One LSTM cell update in place. `pre` holds the gate pre-activations on
/// entry; on exit it holds the activated gates `(i, f, g, o)`.
pub(crate) fn cell_update(pre: &mut [f64], c: &mut [f64], h: &mut [f64]) {
    let n = c.len();
    let (i_g, rest) = pre.split_at_mut(n);
    let (f_g, rest) = rest.split_at_mut(n);
    let (g_g, o_g) = rest.split_at_mut(n);
    for k in 0..n {
        i_g[k] = sigmoid(i_g[k]);
        f_g[k] = sigmoid(f_g[k]);
        g_g[k] = g_g[k].tanh();
        o_g[k] = sigmoid(o_g[k]);
        c[k] = f_g[k] * c[k] + i_g[k] * g_g[k];
        h[k] = o_g[k] * c[k].tanh();
    }
}

/// One step of the network: feeds a normalized state, returns the predicted
/// next normalized state and the updated memory. `m` is left untouched.
pub fn step(p: &LstmParams, input: State, m: &MemoryState) -> (State, MemoryState) {
    let mut next = m.clone();
    let out = step_in_place(p, input, &mut next);
    (out, next)
}

/// [`step`] that overwrites the memory instead of returning a new one.
pub fn step_in_place(p: &LstmParams, input: State, m: &mut MemoryState) -> State {
    let mut x = Array1::from(input.to_array().to_vec());
    for (l, mem) in m.layers.iter_mut().enumerate() {
        let (w, u, b) = p.layer(l);
        let mut pre = b.to_owned();
        general_mat_vec_mul(1.0, &w, &x, 1.0, &mut pre);
        general_mat_vec_mul(1.0, &u, &ArrayView1::from(&mem.h[..]), 1.0, &mut pre);
        cell_update(
            pre.as_slice_mut().expect("owned array is contiguous"),
            &mut mem.c,
            &mut mem.h,
        );
        x = Array1::from(mem.h.clone());
    }
    let (wo, bo) = p.head();
    let mut z = bo.to_owned();
    general_mat_vec_mul(1.0, &wo, &x, 1.0, &mut z);
    State::new(sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]))
}
