//! Ensembles of independently seeded models trained on one dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, forecast, forecast_skill, is_d2_failure, EvalReport, EvalSettings};
use crate::dynsys::{integrate, random_attractor_state, LorenzParams, State, DEFAULT_TRANSIENT};
use crate::error::{Error, Result};
use crate::lstm::{MemoryInit, MemoryMode};
use crate::sampling::{Dataset, DatasetSpec, Strategy};
use crate::seed::{self, Stream};
use crate::training::{train, TrainConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub system: LorenzParams,
    pub dataset: DatasetSpec,
    /// Template; the seeds and memory mode are replaced per model.
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub memory: MemoryMode,
    pub n_models: usize,
    pub seed_root: u64,
    /// Upper edges of the d2 histogram bins start at `0`, step `hist_width`.
    pub hist_bins: usize,
    pub hist_width: f64,
}

impl EnsembleSpec {
    pub fn new(strategy: Strategy, memory: MemoryMode, n_models: usize, seed_root: u64) -> Self {
        EnsembleSpec {
            system: LorenzParams::default(),
            dataset: DatasetSpec::with_strategy(strategy, seed::derive(seed_root, Stream::Data, 0)),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            memory,
            n_models,
            seed_root,
            hist_bins: 40,
            hist_width: 0.1,
        }
    }

    /// Training configuration of model `i`.
    pub fn model_config(&self, i: usize) -> TrainConfig {
        let i = i as u64;
        TrainConfig {
            param_seed: seed::derive(self.seed_root, Stream::Params, i),
            shuffle_seed: seed::derive(self.seed_root, Stream::Shuffle, i),
            memory_init: MemoryInit {
                mode: self.memory,
                seed: seed::derive(self.seed_root, Stream::Memory, i),
            },
            ..self.train.clone()
        }
    }

    /// Memory used when model `i` runs closed loop.
    pub fn eval_memory(&self, i: usize) -> MemoryInit {
        MemoryInit {
            mode: self.memory,
            seed: seed::derive(seed::derive(self.seed_root, Stream::Memory, i as u64), Stream::HeldOut, 0),
        }
    }
}

/// Initial condition on the attractor from a stream no training set uses.
/// `index = u64::MAX` is the shared envelope start.
pub fn held_out_ic(sys: &LorenzParams, dt: f64, root: u64, index: u64) -> Result<State> {
    random_attractor_state(sys, dt, DEFAULT_TRANSIENT, &mut seed::rng(seed::derive(root, Stream::HeldOut, index)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model_id: usize,
    pub param_seed: u64,
    /// Evaluation from the model's held-out initial condition.
    pub held_out: Option<EvalReport>,
    /// Valid time from the first state of the training set.
    pub known_valid_time: Option<f64>,
    pub final_loss: Option<f64>,
    /// Set when training or evaluation failed numerically; such a model
    /// counts as a d2 failure.
    pub error: Option<String>,
}

impl ModelResult {
    pub fn d2_failure(&self) -> bool {
        self.held_out.as_ref().is_none_or(|r| r.d2_failure)
    }
}

pub fn failure_fraction(models: &[ModelResult]) -> f64 {
    if models.is_empty() {
        return 0.0;
    }
    models.iter().filter(|m| m.d2_failure()).count() as f64 / models.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub dt: f64,
    pub t0: f64,
    pub mean: Vec<[f64; 3]>,
    pub std: Vec<[f64; 3]>,
    pub truth: Vec<[f64; 3]>,
}

/// Per-step mean and population standard deviation across runs of equal
/// length.
pub fn envelope(runs: &[Vec<State>], truth: &[State], dt: f64, t0: f64) -> Envelope {
    let n = truth.len();
    let k = runs.len().max(1) as f64;
    let mut mean = vec![[0.0; 3]; n];
    let mut std = vec![[0.0; 3]; n];
    for t in 0..n {
        for d in 0..3 {
            let m = runs.iter().map(|r| r[t].to_array()[d]).sum::<f64>() / k;
            let v = runs.iter().map(|r| (r[t].to_array()[d] - m).powi(2)).sum::<f64>() / k;
            mean[t][d] = m;
            std[t][d] = v.sqrt();
        }
    }
    Envelope {
        dt,
        t0,
        mean,
        std,
        truth: truth.iter().map(|s| s.to_array()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub strategy: Strategy,
    pub memory: MemoryMode,
    pub seed_root: u64,
    pub lambda1: f64,
    pub dataset_fingerprint: String,
    pub models: Vec<ModelResult>,
    pub failure_fraction: f64,
    pub hist_edges: Vec<f64>,
    pub hist_counts: Vec<usize>,
    pub envelope: Envelope,
}

pub struct EnsembleOutcome {
    pub report: EnsembleReport,
    /// Trained models by id; `None` where training failed.
    pub models: Vec<Option<TrainedModel>>,
}

pub(crate) fn histogram(values: impl Iterator<Item = f64>, edges: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; edges.len() - 1];
    for v in values {
        let i = edges.partition_point(|&e| e <= v).clamp(1, edges.len() - 1) - 1;
        counts[i] += 1;
    }
    counts
}

/// Trains and evaluates `spec.n_models` models on `workers` threads.
pub fn run_ensemble(spec: &EnsembleSpec, workers: usize) -> Result<EnsembleOutcome> {
    let ds = spec.dataset.build(&spec.system)?;
    let lambda1 = spec.eval.resolve_lambda1(&spec.system, ds.dt(), spec.seed_root)?;
    run_ensemble_on(spec, &ds, lambda1, workers)
}

/// [`run_ensemble`] with a prebuilt dataset and a known `lambda1`.
pub fn run_ensemble_on(spec: &EnsembleSpec, ds: &Dataset, lambda1: f64, workers: usize) -> Result<EnsembleOutcome> {
    if spec.n_models == 0 {
        return Err(Error::InvalidArgument("n_models must be >= 1".into()));
    }
    let dt = ds.dt();
    let sys = &spec.system;
    let s = &spec.eval;
    let known = ds.chunks()[0].first();
    let env_ic = held_out_ic(sys, dt, spec.seed_root, u64::MAX)?;
    let env_truth = integrate(env_ic, sys, dt, s.warmup + s.envelope_steps + 1, 0)?;

    let job = |i: usize| -> (ModelResult, Option<TrainedModel>, Option<Vec<State>>) {
        let cfg = spec.model_config(i);
        let mut res = ModelResult {
            model_id: i,
            param_seed: cfg.param_seed,
            held_out: None,
            known_valid_time: None,
            final_loss: None,
            error: None,
        };
        let tm = match train(ds, &cfg) {
            Ok(tm) => tm,
            Err(e) => {
                res.error = Some(e.to_string());
                return (res, None, None);
            }
        };
        res.final_loss = tm.history.loss.iter().copied().reduce(f64::min);
        let mi = spec.eval_memory(i);
        let run = || -> Result<(EvalReport, Option<f64>, Vec<State>)> {
            let ic = held_out_ic(sys, dt, spec.seed_root, i as u64)?;
            let rep = evaluate(&tm, sys, ic, false, &mi, dt, lambda1, s)?;
            let kv = if s.known_ic {
                Some(forecast_skill(&tm, sys, known, &mi, dt, lambda1, s)?)
            } else {
                None
            };
            let env = forecast(&tm, sys, env_ic, &mi, dt, s.envelope_steps, s.warmup)?.0.into_samples();
            Ok((rep, kv, env))
        };
        match run() {
            Ok((rep, kv, env)) => {
                res.held_out = Some(rep);
                res.known_valid_time = kv;
                (res, Some(tm), Some(env))
            }
            Err(e) => {
                res.error = Some(e.to_string());
                (res, Some(tm), None)
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| (0..spec.n_models).into_par_iter().map(job).collect());

    let mut models = Vec::with_capacity(results.len());
    let mut trained = Vec::with_capacity(results.len());
    let mut runs = Vec::new();
    for (r, tm, env) in results {
        models.push(r);
        trained.push(tm);
        runs.extend(env);
    }
    let hist_edges: Vec<f64> = (0..=spec.hist_bins).map(|k| k as f64 * spec.hist_width).collect();
    let hist_counts = histogram(models.iter().filter_map(|m| m.held_out.as_ref().map(|r| r.d2)), &hist_edges);
    let envelope = envelope(&runs, &env_truth.samples()[s.warmup + 1..], dt, dt);
    let report = EnsembleReport {
        strategy: ds.strategy(),
        memory: spec.memory,
        seed_root: spec.seed_root,
        lambda1,
        dataset_fingerprint: ds.fingerprint(),
        failure_fraction: failure_fraction(&models),
        models,
        hist_edges,
        hist_counts,
        envelope,
    };
    Ok(EnsembleOutcome {
        report,
        models: trained,
    })
}

/// Checks the per-model failure flags against the rule in `s`.
pub fn consistent_failures(report: &EnsembleReport, s: &EvalSettings) -> bool {
    report
        .models
        .iter()
        .filter_map(|m| m.held_out.as_ref())
        .all(|r| r.d2_failure == is_d2_failure(r.d2, s.d_true, s.failure_tol))
}
