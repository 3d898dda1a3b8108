//! Closed-loop evaluation of trained models: free runs, valid time,
//! correlation dimension and ensemble experiments.

mod d2;
mod ensemble;
mod report;

use serde::{Deserialize, Serialize};

use crate::dynsys::{integrate, LorenzParams, State, Trajectory};
use crate::error::{Error, Result};
use crate::lstm::{init_memory, step_in_place, MemoryInit};
use crate::training::TrainedModel;

pub use d2::{correlation_dimension, correlation_dimension_points, correlation_sum, D2Config, D2Estimate, D_TRUE};
pub use ensemble::{
    consistent_failures, envelope, failure_fraction, held_out_ic, run_ensemble, run_ensemble_on, Envelope, EnsembleOutcome, EnsembleReport, EnsembleSpec,
    ModelResult,
};
pub use report::{read_ensemble_json, write_ensemble_csv, write_ensemble_json, write_envelope_csv};

/// Iterates the model on its own output for `n_steps` steps from `ic`.
/// The returned trajectory holds the predictions only, in physical units,
/// with `t0 = dt` so that sample `k` is the state at `(k + 1) dt` after `ic`.
pub fn free_run(tm: &TrainedModel, ic: State, mi: &MemoryInit, n_steps: usize, dt: f64) -> Result<Trajectory> {
    free_run_from(tm, &[ic], mi, n_steps, dt)
}

/// Like [`free_run`], but the observations in `history` are fed first
/// (teacher forced, outputs discarded) so that the memory is primed; the
/// closed loop starts from the last one.
pub fn free_run_from(
    tm: &TrainedModel,
    history: &[State],
    mi: &MemoryInit,
    n_steps: usize,
    dt: f64,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let Some((&ic, warm)) = history.split_last() else {
        return Err(Error::InvalidArgument("empty history".into()));
    };
    let mut m = init_memory(tm.params.arch(), mi);
    for s in warm {
        step_in_place(&tm.params, tm.scaler.normalize(*s), &mut m);
    }
    let mut x = tm.scaler.normalize(ic);
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        x = step_in_place(&tm.params, x, &mut m);
        out.push(tm.scaler.denormalize(x));
    }
    Trajectory::new(out, dt, dt)
}

/// Time, in Lyapunov units, before the normalized error
/// `|pred - truth| / rms(truth)` first exceeds `threshold`. The time of
/// sample `k` is `k * dt`; a prediction that never fails scores the whole
/// horizon `len * dt`. `rms(truth)` is the root mean square of `|truth_k|`.
pub fn valid_time(pred: &Trajectory, truth: &Trajectory, lambda1: f64, threshold: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.dt() != truth.dt() {
        return Err(Error::InvalidArgument(format!(
            "dt differs: {} vs {}",
            pred.dt(),
            truth.dt()
        )));
    }
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda1 must be > 0, got {lambda1}")));
    }
    let t = truth.samples();
    let rms = (t.iter().map(|s| s.dot(s)).sum::<f64>() / t.len() as f64).sqrt();
    let k = pred
        .samples()
        .iter()
        .zip(t)
        .position(|(p, q)| !(p.distance(q) / rms <= threshold))
        .unwrap_or(t.len());
    Ok(k as f64 * truth.dt() * lambda1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Steps of the valid-time forecast.
    pub horizon: usize,
    /// True observations fed before the closed loop starts. The initial
    /// condition is the first of them; the forecast starts from the last.
    pub warmup: usize,
    pub threshold: f64,
    /// Largest Lyapunov exponent; computed from the system when `None`.
    pub lambda1: Option<f64>,
    pub lyapunov_steps: usize,
    pub d2: D2Config,
    pub d2_steps: usize,
    pub spin_up: usize,
    pub d_true: f64,
    /// Relative d2 error above which a model counts as failed.
    pub failure_tol: f64,
    /// Also score the forecast from the first state of the training set.
    pub known_ic: bool,
    /// Steps of the ensemble envelope.
    pub envelope_steps: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            horizon: 1500,
            warmup: 100,
            threshold: 0.4,
            lambda1: None,
            lyapunov_steps: 1_000_000,
            d2: D2Config::default(),
            d2_steps: 50_000,
            spin_up: 1000,
            d_true: D_TRUE,
            failure_tol: 0.25,
            known_ic: true,
            envelope_steps: 1000,
        }
    }
}

impl EvalSettings {
    pub fn resolve_lambda1(&self, p: &LorenzParams, dt: f64, seed: u64) -> Result<f64> {
        match self.lambda1 {
            Some(l) => Ok(l),
            None => Ok(crate::dynsys::lyapunov_spectrum(p, dt, self.lyapunov_steps, seed)?.exponents[0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub valid_time_lyapunov: f64,
    pub d2: f64,
    pub d2_degenerate: bool,
    pub d2_failure: bool,
    pub free_run_length: usize,
    pub ic_in_training: bool,
}

pub fn is_d2_failure(d2: f64, d_true: f64, tol: f64) -> bool {
    !((d2 - d_true).abs() / d_true <= tol)
}

/// Forecast from `ic` after the warm-up, with the matching stretch of the
/// true flow: `(prediction, truth)`.
pub fn forecast(
    tm: &TrainedModel,
    sys: &LorenzParams,
    ic: State,
    mi: &MemoryInit,
    dt: f64,
    n_steps: usize,
    warmup: usize,
) -> Result<(Trajectory, Trajectory)> {
    let flow = integrate(ic, sys, dt, warmup + n_steps + 1, 0)?;
    let pred = free_run_from(tm, &flow.samples()[..=warmup], mi, n_steps, dt)?;
    let truth = Trajectory::new(flow.samples()[warmup + 1..].to_vec(), dt, dt)?;
    Ok((pred, truth))
}

/// Valid time from `ic` against the true flow.
pub fn forecast_skill(
    tm: &TrainedModel,
    sys: &LorenzParams,
    ic: State,
    mi: &MemoryInit,
    dt: f64,
    lambda1: f64,
    s: &EvalSettings,
) -> Result<f64> {
    let (pred, truth) = forecast(tm, sys, ic, mi, dt, s.horizon, s.warmup)?;
    valid_time(&pred, &truth, lambda1, s.threshold)
}

/// d2 of a long free run started at `ic` (after the warm-up), with the
/// spin-up discarded.
pub fn model_d2(
    tm: &TrainedModel,
    sys: &LorenzParams,
    ic: State,
    mi: &MemoryInit,
    dt: f64,
    s: &EvalSettings,
) -> Result<D2Estimate> {
    let (run, _) = forecast(tm, sys, ic, mi, dt, s.spin_up + s.d2_steps, s.warmup)?;
    let tail = run.slice(s.spin_up..s.spin_up + s.d2_steps)?;
    correlation_dimension(&tail, &s.d2)
}

/// Full evaluation from one initial condition.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    tm: &TrainedModel,
    sys: &LorenzParams,
    ic: State,
    ic_in_training: bool,
    mi: &MemoryInit,
    dt: f64,
    lambda1: f64,
    s: &EvalSettings,
) -> Result<EvalReport> {
    let vt = forecast_skill(tm, sys, ic, mi, dt, lambda1, s)?;
    let est = model_d2(tm, sys, ic, mi, dt, s)?;
    Ok(EvalReport {
        valid_time_lyapunov: vt,
        d2: est.d2,
        d2_degenerate: est.degenerate,
        d2_failure: is_d2_failure(est.d2, s.d_true, s.failure_tol),
        free_run_length: s.spin_up + s.d2_steps,
        ic_in_training,
    })
}
