use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::dynsys::{State, Trajectory};
use crate::error::{Error, Result};

pub const DEFAULT_LO: f64 = 0.05;
pub const DEFAULT_HI: f64 = 0.95;

/// Per-component affine map from the data range onto `[lo, hi]`, so that
/// targets stay clear of the logistic output's asymptotes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub lo: f64,
    pub hi: f64,
}

impl Scaler {
    pub fn fit<'a>(states: impl IntoIterator<Item = &'a State>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for s in states {
            any = true;
            for (i, v) in s.to_array().into_iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        if !any {
            return Err(Error::EmptyDataset);
        }
        for i in 0..3 {
            if !(max[i] > min[i]) {
                return Err(Error::DegenerateRange {
                    component: i,
                    value: min[i],
                });
            }
        }
        Ok(Self { min, max, lo, hi })
    }

    pub fn normalize(&self, s: State) -> State {
        let a = s.to_array();
        State::from_array(std::array::from_fn(|i| {
            self.lo + (a[i] - self.min[i]) / (self.max[i] - self.min[i]) * (self.hi - self.lo)
        }))
    }

    pub fn denormalize(&self, s: State) -> State {
        let a = s.to_array();
        State::from_array(std::array::from_fn(|i| {
            self.min[i] + (a[i] - self.lo) / (self.hi - self.lo) * (self.max[i] - self.min[i])
        }))
    }

    pub fn normalize_trajectory(&self, t: &Trajectory) -> Trajectory {
        let samples = t.samples().iter().map(|s| self.normalize(*s)).collect();
        Trajectory::new(samples, t.dt(), t.t0()).expect("shape preserved")
    }

    pub fn denormalize_trajectory(&self, t: &Trajectory) -> Trajectory {
        let samples = t.samples().iter().map(|s| self.denormalize(*s)).collect();
        Trajectory::new(samples, t.dt(), t.t0()).expect("shape preserved")
    }
}

/// Fits a scaler on every sample of `ds`.
pub fn fit_scaler(ds: &Dataset, lo: f64, hi: f64) -> Result<Scaler> {
    Scaler::fit(ds.chunks().iter().flat_map(|c| c.samples()), lo, hi)
}
