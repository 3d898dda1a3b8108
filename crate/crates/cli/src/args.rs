//! Command-line flags and their resolution into jobs.

use std::path::PathBuf;

use attractorlab::dynsys::io::TrajectoryFormat;
use attractorlab::lstm::{Architecture, MemoryInit, MemoryMode};
use attractorlab::sampling::Strategy;
use attractorlab::seed::{derive, Stream};
use attractorlab::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{resolve_seed, ExperimentConfig};
use crate::jobs::*;
use crate::repro::sha256_file;

#[derive(Parser, Debug)]
#[command(name = "attractorlab", version, about = "Training-set design experiments for LSTM models of the Lorenz'63 system")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Build a training set and write it as a dataset directory.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Evaluate a trained model from one initial condition.
    Evaluate(EvaluateArgs),
    /// Train and evaluate ensembles over strategies and memory modes.
    Ensemble(EnsembleArgs),
    /// Correlation dimension of a trajectory file or of the true system.
    D2(D2Args),
    /// Lyapunov spectrum and Kaplan-Yorke dimension.
    Lyapunov(LyapunovArgs),
    /// Kac-lemma sample budget.
    Kac(KacArgs),
    /// t-SNE of the parameter vectors of a saved ensemble.
    Tsne(TsneArgs),
    /// Re-run the job recorded in a repro.json and compare every output.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// TOML or JSON experiment config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed root (falls back to the config, then ATTRACTORLAB_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub dt: Option<f64>,
    /// Samples of the ergodic trajectory.
    #[arg(long)]
    pub total: Option<usize>,
    #[arg(long)]
    pub chunks: Option<usize>,
    #[arg(long)]
    pub chunk_len: Option<usize>,
    #[arg(long)]
    pub short_len: Option<usize>,
    #[arg(long)]
    pub transient: Option<usize>,
    /// Offset from the fixed points along their eigen-directions.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Units per layer, e.g. `50,50`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Args, Debug, Default)]
pub struct EvalFlags {
    /// Forecast length in steps.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Normalized error that ends the valid time.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// True observations fed before the closed loop.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Largest Lyapunov exponent; computed when absent.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Free-run length used for d2.
    #[arg(long)]
    pub d2_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory written by gen-data; otherwise one is built.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[command(flatten)]
    pub dataset: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub memory: Option<MemoryMode>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    /// Initial condition `x,y,z`; a held-out state is drawn otherwise.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    pub ic: Option<Vec<f64>>,
    /// Memory at the start of the closed loop (defaults to the training mode).
    #[arg(long)]
    pub memory: Option<MemoryMode>,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub models: Option<usize>,
    /// `all` or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Option<Vec<String>>,
    /// Comma-separated memory modes.
    #[arg(long, value_delimiter = ',')]
    pub memory: Option<Vec<MemoryMode>>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write every trained model (needed by `tsne`).
    #[arg(long)]
    pub save_models: bool,
    #[command(flatten)]
    pub dataset: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct D2Args {
    #[command(flatten)]
    pub common: Common,
    /// Trajectory file (CSV or binary).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Length of the true-system run when no input is given.
    #[arg(long, default_value_t = 50_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long)]
    pub theiler: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LyapunovArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2_000_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KacArgs {
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 2.06)]
    pub dim: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prefactor: f64,
    /// Also report the prefactor that gives this many samples.
    #[arg(long)]
    pub target: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TsneArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory of `ensemble --save-models`.
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(long, default_value = "zero")]
    pub memory: MemoryMode,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 4)]
    pub tiers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// A repro.json or the directory holding it.
    #[arg(long)]
    pub repro: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn load(common: &Common) -> Result<(ExperimentConfig, u64)> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = resolve_seed(common.seed, cfg.seed)?;
    Ok((cfg, seed))
}

fn apply_data(cfg: &mut ExperimentConfig, strategy: Option<Strategy>, a: &DataArgs, seed: u64) {
    let d = &mut cfg.dataset;
    if let Some(s) = strategy {
        d.strategy = s;
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { d.$f = v; })* };
    }
    set!(dt, total, chunks, chunk_len, short_len, transient, delta);
    d.seed = derive(seed, Stream::Data, 0);
}

fn apply_train(cfg: &mut ExperimentConfig, a: &TrainFlags) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.lr {
        t.lr0 = v;
    }
    if let Some(v) = a.window {
        t.tbptt_window = v;
    }
    if let Some(v) = a.batch {
        t.batch = v;
    }
    if let Some(h) = &a.hidden {
        t.arch = Architecture::new(h.clone())?;
    }
    t.validate()
}

fn apply_eval(cfg: &mut ExperimentConfig, a: &EvalFlags) {
    let e = &mut cfg.eval;
    if let Some(v) = a.horizon {
        e.horizon = v;
    }
    if let Some(v) = a.threshold {
        e.threshold = v;
    }
    if let Some(v) = a.warmup {
        e.warmup = v;
    }
    if a.lambda1.is_some() {
        e.lambda1 = a.lambda1;
    }
    if let Some(v) = a.d2_steps {
        e.d2_steps = v;
    }
}

fn absolute(p: &std::path::Path) -> Result<PathBuf> {
    Ok(std::fs::canonicalize(p)?)
}

pub fn parse_strategies(list: &[String]) -> Result<Vec<Strategy>> {
    if list.len() == 1 && list[0] == "all" {
        return Ok(Strategy::GRID.to_vec());
    }
    list.iter()
        .map(|s| s.parse::<Strategy>().map_err(|_| Error::InvalidArgument(format!("unknown strategy {s:?}"))))
        .collect()
}

impl GenDataArgs {
    pub fn job(&self) -> Result<Job> {
        let (mut cfg, seed) = load(&self.common)?;
        apply_data(&mut cfg, self.strategy, &self.data, seed);
        Ok(Job::GenData(GenDataJob {
            system: cfg.system,
            dataset: cfg.dataset,
            format: match self.format {
                FormatArg::Csv => TrajectoryFormat::Csv,
                FormatArg::Binary => TrajectoryFormat::Binary,
            },
        }))
    }
}

impl TrainArgs {
    pub fn job(&self) -> Result<Job> {
        let (mut cfg, seed) = load(&self.common)?;
        apply_data(&mut cfg, self.strategy, &self.dataset, seed);
        apply_train(&mut cfg, &self.train)?;
        let t = &mut cfg.train;
        t.param_seed = derive(seed, Stream::Params, 0);
        t.shuffle_seed = derive(seed, Stream::Shuffle, 0);
        t.memory_init = MemoryInit {
            mode: self.memory.unwrap_or(t.memory_init.mode),
            seed: derive(seed, Stream::Memory, 0),
        };
        let (data_dir, data_sha256) = match &self.data {
            Some(d) => {
                let d = absolute(d)?;
                let h = sha256_file(&d.join(attractorlab::sampling::store::MANIFEST))?;
                (Some(d), Some(h))
            }
            None => (None, None),
        };
        Ok(Job::Train(TrainJob {
            system: cfg.system,
            data_dir,
            data_sha256,
            dataset: cfg.dataset,
            train: cfg.train,
        }))
    }
}

impl EvaluateArgs {
    pub fn job(&self) -> Result<Job> {
        let (mut cfg, seed) = load(&self.common)?;
        apply_eval(&mut cfg, &self.eval);
        let model = absolute(&self.model)?;
        let tm = attractorlab::training::load_model(&model)?;
        let mode = self.memory.unwrap_or(tm.config.memory_init.mode);
        Ok(Job::Evaluate(EvaluateJob {
            system: cfg.system,
            model_sha256: sha256_file(&model)?,
            model,
            ic: self.ic.as_ref().map(|v| [v[0], v[1], v[2]]),
            seed,
            memory: MemoryInit {
                mode,
                seed: derive(seed, Stream::Memory, 0),
            },
            dt: cfg.dataset.dt,
            eval: cfg.eval,
        }))
    }
}

impl EnsembleArgs {
    pub fn job(&self) -> Result<Job> {
        let (mut cfg, seed) = load(&self.common)?;
        apply_data(&mut cfg, None, &self.dataset, seed);
        apply_train(&mut cfg, &self.train)?;
        apply_eval(&mut cfg, &self.eval);
        let e = &cfg.ensemble;
        let strategies = match &self.strategy {
            Some(list) => parse_strategies(list)?,
            None => e.strategies.clone(),
        };
        Ok(Job::Ensemble(EnsembleJob {
            system: cfg.system,
            dataset: cfg.dataset.clone(),
            train: cfg.train.clone(),
            eval: cfg.eval.clone(),
            strategies,
            memory: self.memory.clone().unwrap_or_else(|| e.memory.clone()),
            models: self.models.unwrap_or(e.models),
            seed,
            workers: self.workers.unwrap_or(e.workers),
            save_models: self.save_models || e.save_models,
        }))
    }
}

impl D2Args {
    pub fn job(&self) -> Result<Job> {
        let (mut cfg, seed) = load(&self.common)?;
        if let Some(w) = self.theiler {
            cfg.eval.d2.theiler = w;
        }
        let (input, input_sha256) = match &self.input {
            Some(p) => {
                let p = absolute(p)?;
                let h = sha256_file(&p)?;
                (Some(p), Some(h))
            }
            None => (None, None),
        };
        Ok(Job::D2(D2Job {
            system: cfg.system,
            input,
            input_sha256,
            steps: self.steps,
            dt: self.dt,
            seed,
            d2: cfg.eval.d2,
        }))
    }
}

impl LyapunovArgs {
    pub fn job(&self) -> Result<Job> {
        let (cfg, seed) = load(&self.common)?;
        Ok(Job::Lyapunov(LyapunovJob {
            system: cfg.system,
            dt: self.dt,
            steps: self.steps,
            seed,
        }))
    }
}

impl KacArgs {
    pub fn job(&self) -> Result<Job> {
        Ok(Job::Kac(KacJob {
            epsilon: self.epsilon,
            dim: self.dim,
            prefactor: self.prefactor,
            target: self.target,
        }))
    }
}

impl TsneArgs {
    pub fn job(&self) -> Result<Job> {
        let (mut cfg, seed) = load(&self.common)?;
        let t = &mut cfg.tsne;
        t.seed = seed;
        if let Some(p) = self.perplexity {
            t.perplexity = p;
        }
        if let Some(n) = self.iterations {
            t.n_iter = n;
        }
        t.standardize |= self.standardize;
        Ok(Job::Tsne(TsneJob {
            ensemble_dir: absolute(&self.ensemble)?,
            memory: self.memory,
            tsne: cfg.tsne,
            bins: self.bins,
            tiers: self.tiers,
            d_true: cfg.eval.d_true,
        }))
    }
}
