//! Teacher-forced one-step-ahead training with truncated BPTT and Adam.
//!
//! An epoch visits the chunks of a dataset in a seeded shuffled order. Each
//! chunk starts from a fresh memory state (zero or a Gaussian draw) and is
//! cut into consecutive windows; memory flows from one window to the next
//! inside the chunk while the gradient is truncated at window edges. The
//! parameters are updated once per window (or once per group of `batch`
//! windows taken in lockstep from different chunks).

mod adam;
mod bptt;
mod model;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dynsys::Trajectory;
use crate::error::{Error, Result};
use crate::lstm::{init_params, Architecture, InitScale, LstmParams, MemoryInit, MemoryState};
use crate::sampling::{fit_scaler, Dataset, Scaler, DEFAULT_HI, DEFAULT_LO};
use crate::seed::{self, Stream};

pub use adam::{adam_step, clip_global_norm, AdamHyper, Moments};
pub use bptt::{sequence_loss, sequence_loss_value, window_loss_and_grad, Gradient};
pub use model::{load_model, save_model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LrSchedule {
    /// Multiply the rate by `factor` after `patience` epochs without a new
    /// best epoch loss.
    Plateau { factor: f64, patience: usize },
    Constant,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Plateau {
            factor: 0.5,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub init_scale: InitScale,
    pub epochs: usize,
    pub tbptt_window: usize,
    pub lr0: f64,
    pub adam: AdamHyper,
    pub lr_schedule: LrSchedule,
    pub memory_init: MemoryInit,
    pub param_seed: u64,
    pub shuffle_seed: u64,
    /// Chunks advanced in lockstep per parameter update.
    pub batch: usize,
    /// Target range of the scaler fit on the training data.
    pub scale_lo: f64,
    pub scale_hi: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Architecture::default(),
            init_scale: InitScale::default(),
            epochs: 200,
            tbptt_window: 100,
            lr0: 1e-3,
            adam: AdamHyper::default(),
            lr_schedule: LrSchedule::default(),
            memory_init: MemoryInit::zero(),
            param_seed: 0,
            shuffle_seed: 0,
            batch: 1,
            scale_lo: DEFAULT_LO,
            scale_hi: DEFAULT_HI,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.tbptt_window < 1 {
            return bad("tbptt_window must be >= 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if self.batch < 1 {
            return bad("batch must be >= 1".into());
        }
        if let LrSchedule::Plateau { factor, patience } = self.lr_schedule {
            if !(factor > 0.0 && factor < 1.0) {
                return bad(format!("schedule factor must be in (0, 1), got {factor}"));
            }
            if patience == 0 {
                return bad("schedule patience must be >= 1".into());
            }
        }
        let hp = &self.adam;
        if !(0.0..1.0).contains(&hp.beta1) || !(0.0..1.0).contains(&hp.beta2) || hp.eps <= 0.0 {
            return bad(format!("invalid Adam hyperparameters {hp:?}"));
        }
        if !(self.scale_lo < self.scale_hi) {
            return bad("scale_lo must be below scale_hi".into());
        }
        Architecture::new(self.arch.hidden.clone()).map(|_| ())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean squared error per teacher-forced step, one value per epoch.
    pub loss: Vec<f64>,
    /// Learning rate in effect during each epoch.
    pub lr: Vec<f64>,
    /// Windows skipped because the loss or gradient was not finite.
    pub skipped: usize,
    /// Epoch whose parameters were kept (`None` when no epoch ran).
    pub best_epoch: Option<usize>,
}

impl History {
    /// Best-so-far envelope of the loss.
    pub fn running_min(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.loss
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: LstmParams,
    pub scaler: Scaler,
    pub config: TrainConfig,
    pub history: History,
    pub dataset_fingerprint: String,
}

/// Instrumentation hooks called by [`train_with_observer`].
pub trait TrainObserver {
    /// A chunk is about to be processed with initial memory `m0`.
    fn on_chunk_start(&mut self, _epoch: usize, _chunk: usize, _m0: &MemoryState) {}
    /// A window starting at sample `start` of `chunk` enters with memory `m`.
    fn on_window(&mut self, _epoch: usize, _chunk: usize, _start: usize, _m: &MemoryState) {}
    fn on_epoch_end(&mut self, _epoch: usize, _loss: f64, _lr: f64) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Memory a chunk starts from in a given epoch. Gaussian draws differ per
/// chunk and per epoch.
pub fn chunk_memory(arch: &Architecture, mi: &MemoryInit, epoch: usize, chunk: usize) -> MemoryState {
    let s = seed::derive(seed::derive(mi.seed, Stream::Memory, epoch as u64), Stream::Memory, chunk as u64);
    mi.draw(arch, &mut seed::rng(s))
}

pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with_observer(ds, cfg, &mut NoObserver)
}

pub fn train_with_observer(
    ds: &Dataset,
    cfg: &TrainConfig,
    obs: &mut dyn TrainObserver,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if ds.chunks().iter().all(|c| c.len() < 2) {
        return Err(Error::EmptyDataset);
    }
    let scaler = fit_scaler(ds, cfg.scale_lo, cfg.scale_hi)?;
    let chunks: Vec<Trajectory> = ds
        .chunks()
        .iter()
        .map(|c| scaler.normalize_trajectory(c))
        .collect();
    let (params, history) = fit(&chunks, cfg, obs)?;
    Ok(TrainedModel {
        params,
        scaler,
        config: cfg.clone(),
        history,
        dataset_fingerprint: ds.fingerprint(),
    })
}

struct Cursor<'a> {
    id: usize,
    chunk: &'a Trajectory,
    pos: usize,
    mem: MemoryState,
    done: bool,
}

/// Trains on already normalized chunks.
pub fn fit(
    chunks: &[Trajectory],
    cfg: &TrainConfig,
    obs: &mut dyn TrainObserver,
) -> Result<(LstmParams, History)> {
    cfg.validate()?;
    let arch = &cfg.arch;
    let mut p = init_params(arch, cfg.param_seed, cfg.init_scale);
    let mut best = p.clone();
    let mut best_loss = f64::INFINITY;
    let mut history = History::default();
    let mut moments = Moments::new(p.len());
    let mut grad = Gradient::zeros_like(&p);
    let mut lr = cfg.lr0;
    let mut stale = 0usize;
    let mut shuffle_rng = seed::rng(seed::derive(cfg.shuffle_seed, Stream::Shuffle, 0));
    let mut order: Vec<usize> = (0..chunks.len()).filter(|&i| chunks[i].len() >= 2).collect();
    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_steps = 0usize;
        let epoch_lr = lr;
        for group in order.chunks(cfg.batch) {
            let mut cursors: Vec<Cursor> = group
                .iter()
                .map(|&id| {
                    let mem = chunk_memory(arch, &cfg.memory_init, epoch, id);
                    obs.on_chunk_start(epoch, id, &mem);
                    Cursor {
                        id,
                        chunk: &chunks[id],
                        pos: 0,
                        mem,
                        done: false,
                    }
                })
                .collect();
            while cursors.iter().any(|c| !c.done) {
                grad.fill_zero();
                let mut failed = false;
                let mut any = false;
                for cur in cursors.iter_mut().filter(|c| !c.done) {
                    let s = cur.chunk.samples();
                    let end = (cur.pos + cfg.tbptt_window).min(s.len() - 1);
                    obs.on_window(epoch, cur.id, cur.pos, &cur.mem);
                    match window_loss_and_grad(&p, &s[cur.pos..end], &s[cur.pos + 1..end + 1], &cur.mem, &mut grad) {
                        Ok((loss, m)) => {
                            loss_sum += loss;
                            n_steps += end - cur.pos;
                            cur.mem = m;
                            cur.pos = end;
                            cur.done = end + 1 >= s.len();
                            any = true;
                        }
                        Err(Error::NonFinite(_)) => {
                            // the remainder of this chunk has no usable memory
                            cur.done = true;
                            failed = true;
                        }
                        Err(e) => return Err(e),
                    }
                }
                if failed || !grad.is_finite() {
                    history.skipped += 1;
                    lr *= 0.5;
                    if lr < cfg.lr0 * 1e-12 {
                        return Err(Error::NonFinite(format!(
                            "epoch {epoch}: learning rate collapsed after repeated non-finite windows"
                        )));
                    }
                    continue;
                }
                if any {
                    adam_step(&mut p, &mut grad, &mut moments, lr, &cfg.adam);
                }
            }
        }
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: parameters diverged")));
        }
        let epoch_loss = if n_steps > 0 {
            loss_sum / n_steps as f64
        } else {
            f64::INFINITY
        };
        history.loss.push(epoch_loss);
        history.lr.push(epoch_lr);
        obs.on_epoch_end(epoch, epoch_loss, epoch_lr);
        if epoch_loss < best_loss {
            best_loss = epoch_loss;
            best.as_mut_slice().copy_from_slice(p.as_slice());
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if let LrSchedule::Plateau { factor, patience } = cfg.lr_schedule {
                if stale >= patience {
                    lr *= factor;
                    stale = 0;
                }
            }
        }
    }
    Ok((if history.best_epoch.is_some() { best } else { p }, history))
}
