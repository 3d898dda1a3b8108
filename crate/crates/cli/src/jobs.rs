//! Fully resolved units of work. A job carries every input it needs, so
//! serializing it into `repro.json` is enough to run it again.

use std::fs;
use std::path::{Path, PathBuf};

use attractorlab::analysis::{
    d2_edges, d2_histogram, embed_models, radial_distribution, write_d2_histogram_csv, write_embedding_csv,
    write_radial_csv, ModelVector, TsneConfig,
};
use attractorlab::dynsys::io::{fmt_f64, load as load_traj, save as save_traj, TrajectoryFormat};
use attractorlab::dynsys::{integrate, kaplan_yorke, lyapunov_spectrum, LorenzParams, State};
use attractorlab::eval::{
    correlation_dimension, evaluate, free_run, held_out_ic, read_ensemble_json, run_ensemble_on, write_ensemble_csv,
    write_ensemble_json, write_envelope_csv, D2Config, EnsembleReport, EnsembleSpec, EvalSettings,
};
use attractorlab::lstm::{MemoryInit, MemoryMode};
use attractorlab::sampling::store::{load_dataset, save_dataset};
use attractorlab::sampling::{kac_prefactor_for, kac_sample_estimate, DatasetSpec, Strategy};
use attractorlab::training::{load_model, save_model, train, TrainConfig};
use attractorlab::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::repro::sha256_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    GenData(GenDataJob),
    Train(TrainJob),
    Evaluate(EvaluateJob),
    Ensemble(EnsembleJob),
    D2(D2Job),
    Lyapunov(LyapunovJob),
    Kac(KacJob),
    Tsne(TsneJob),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataJob {
    pub system: LorenzParams,
    pub dataset: DatasetSpec,
    pub format: TrajectoryFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub system: LorenzParams,
    /// Built from `dataset` when no directory is given.
    pub data_dir: Option<PathBuf>,
    pub data_sha256: Option<String>,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateJob {
    pub system: LorenzParams,
    pub model: PathBuf,
    pub model_sha256: String,
    /// Initial condition; drawn from the held-out stream of `seed` if absent.
    pub ic: Option<[f64; 3]>,
    pub seed: u64,
    pub memory: MemoryInit,
    pub dt: f64,
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleJob {
    pub system: LorenzParams,
    /// Template; `strategy` is replaced by each grid entry.
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub strategies: Vec<Strategy>,
    pub memory: Vec<MemoryMode>,
    pub models: usize,
    pub seed: u64,
    pub workers: usize,
    pub save_models: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2Job {
    pub system: LorenzParams,
    /// Trajectory file; otherwise a true Lorenz run of `steps` samples.
    pub input: Option<PathBuf>,
    pub input_sha256: Option<String>,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub d2: D2Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovJob {
    pub system: LorenzParams,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KacJob {
    pub epsilon: f64,
    pub dim: f64,
    pub prefactor: f64,
    /// Also back-solve the prefactor that yields this many samples.
    pub target: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneJob {
    pub ensemble_dir: PathBuf,
    pub memory: MemoryMode,
    pub tsne: TsneConfig,
    pub bins: usize,
    pub tiers: usize,
    pub d_true: f64,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn csv_file(path: &Path) -> Result<fs::File> {
    Ok(fs::File::create(path)?)
}

pub fn grid_dir(strategy: Strategy, memory: MemoryMode) -> String {
    format!("{}-{}", strategy.as_str(), memory.as_str())
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::GenData(_) => "gen-data",
            Job::Train(_) => "train",
            Job::Evaluate(_) => "evaluate",
            Job::Ensemble(_) => "ensemble",
            Job::D2(_) => "d2",
            Job::Lyapunov(_) => "lyapunov",
            Job::Kac(_) => "kac",
            Job::Tsne(_) => "tsne",
        }
    }

    /// Runs the job, writing its files under `out`. Returns a short
    /// human-readable summary.
    pub fn run(&self, out: &Path) -> Result<String> {
        fs::create_dir_all(out)?;
        match self {
            Job::GenData(j) => j.run(out),
            Job::Train(j) => j.run(out),
            Job::Evaluate(j) => j.run(out),
            Job::Ensemble(j) => j.run(out),
            Job::D2(j) => j.run(out),
            Job::Lyapunov(j) => j.run(out),
            Job::Kac(j) => j.run(out),
            Job::Tsne(j) => j.run(out),
        }
    }
}

impl GenDataJob {
    fn run(&self, out: &Path) -> Result<String> {
        let ds = self.dataset.build(&self.system)?;
        let m = save_dataset(&ds, out, self.format)?;
        Ok(format!(
            "{}: {} chunks, {} samples, fingerprint {}",
            m.strategy,
            m.chunks.len(),
            m.total_samples,
            m.fingerprint
        ))
    }
}

impl TrainJob {
    fn run(&self, out: &Path) -> Result<String> {
        let ds = match &self.data_dir {
            Some(d) => load_dataset(d)?,
            None => self.dataset.build(&self.system)?,
        };
        let tm = train(&ds, &self.train)?;
        save_model(&out.join("model.atlm"), &tm)?;
        let mut w = csv_file(&out.join("history.csv"))?;
        use std::io::Write;
        writeln!(w, "epoch,loss,lr")?;
        for (e, (l, r)) in tm.history.loss.iter().zip(&tm.history.lr).enumerate() {
            writeln!(w, "{e},{},{}", fmt_f64(*l), fmt_f64(*r))?;
        }
        Ok(format!(
            "trained {} parameters on {} ({} samples); best epoch {:?}, loss {}",
            tm.params.len(),
            ds.strategy(),
            ds.total_samples(),
            tm.history.best_epoch,
            tm.history.loss.iter().copied().fold(f64::INFINITY, f64::min)
        ))
    }
}

impl EvaluateJob {
    fn run(&self, out: &Path) -> Result<String> {
        let tm = load_model(&self.model)?;
        let ic = match self.ic {
            Some(a) => State::from_array(a),
            None => held_out_ic(&self.system, self.dt, self.seed, 0)?,
        };
        let lambda1 = self.eval.resolve_lambda1(&self.system, self.dt, self.seed)?;
        let rep = evaluate(&tm, &self.system, ic, false, &self.memory, self.dt, lambda1, &self.eval)?;
        write_json(&out.join("eval.json"), &rep)?;
        let pred = free_run(&tm, ic, &self.memory, self.eval.horizon, self.dt)?;
        save_traj(&pred, &out.join("prediction.csv"), TrajectoryFormat::Csv)?;
        let truth = integrate(ic, &self.system, self.dt, self.eval.horizon + 1, 0)?.slice(1..self.eval.horizon + 1)?;
        save_traj(&truth, &out.join("truth.csv"), TrajectoryFormat::Csv)?;
        Ok(format!(
            "valid time {:.3} Lyapunov times, d2 {:.3}{}",
            rep.valid_time_lyapunov,
            rep.d2,
            if rep.d2_failure { " (failure)" } else { "" }
        ))
    }
}

#[derive(Serialize, Deserialize)]
pub struct GridRow {
    pub strategy: Strategy,
    pub memory: MemoryMode,
    pub n_models: usize,
    pub n_errors: usize,
    pub failure_fraction: f64,
    pub median_valid_time: f64,
    pub median_d2: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl GridRow {
    pub fn of(r: &EnsembleReport) -> Self {
        let ok: Vec<_> = r.models.iter().filter_map(|m| m.held_out.as_ref()).collect();
        GridRow {
            strategy: r.strategy,
            memory: r.memory,
            n_models: r.models.len(),
            n_errors: r.models.iter().filter(|m| m.error.is_some()).count(),
            failure_fraction: r.failure_fraction,
            median_valid_time: median(ok.iter().map(|h| h.valid_time_lyapunov).collect()),
            median_d2: median(ok.iter().map(|h| h.d2).collect()),
        }
    }
}

impl EnsembleJob {
    pub fn spec(&self, strategy: Strategy, memory: MemoryMode) -> EnsembleSpec {
        let mut s = EnsembleSpec::new(strategy, memory, self.models, self.seed);
        s.system = self.system;
        s.dataset = DatasetSpec {
            strategy,
            ..self.dataset.clone()
        };
        s.train = self.train.clone();
        s.eval = self.eval.clone();
        s
    }

    fn run(&self, out: &Path) -> Result<String> {
        if self.strategies.is_empty() || self.memory.is_empty() {
            return Err(Error::InvalidArgument("empty strategy or memory list".into()));
        }
        let lambda1 = self.eval.resolve_lambda1(&self.system, self.dataset.dt, self.seed)?;
        let mut reports = Vec::new();
        let mut rows = Vec::new();
        for &strategy in &self.strategies {
            let ds = self.spec(strategy, MemoryMode::Zero).dataset.build(&self.system)?;
            for &memory in &self.memory {
                let spec = self.spec(strategy, memory);
                eprintln!("ensemble {}: {} models", grid_dir(strategy, memory), self.models);
                let outcome = run_ensemble_on(&spec, &ds, lambda1, self.workers)?;
                let dir = out.join(grid_dir(strategy, memory));
                fs::create_dir_all(&dir)?;
                write_ensemble_json(&dir.join("report.json"), &outcome.report)?;
                write_ensemble_csv(&outcome.report, csv_file(&dir.join("models.csv"))?)?;
                write_envelope_csv(&outcome.report.envelope, csv_file(&dir.join("envelope.csv"))?)?;
                if self.save_models {
                    let mdir = dir.join("models");
                    fs::create_dir_all(&mdir)?;
                    for (i, tm) in outcome.models.iter().enumerate() {
                        if let Some(tm) = tm {
                            save_model(&mdir.join(format!("model_{i:03}.atlm")), tm)?;
                        }
                    }
                }
                let row = GridRow::of(&outcome.report);
                eprintln!(
                    "  failure {:.2}, median valid time {:.2}, median d2 {:.3}",
                    row.failure_fraction, row.median_valid_time, row.median_d2
                );
                rows.push(row);
                reports.push(outcome.report);
            }
        }
        write_json(&out.join("summary.json"), &rows)?;
        let mut w = csv::Writer::from_writer(csv_file(&out.join("summary.csv"))?);
        w.write_record(["strategy", "memory", "n_models", "n_errors", "failure_fraction", "median_valid_time", "median_d2"])?;
        for r in &rows {
            w.write_record([
                r.strategy.as_str().to_string(),
                r.memory.as_str().to_string(),
                r.n_models.to_string(),
                r.n_errors.to_string(),
                fmt_f64(r.failure_fraction),
                fmt_f64(r.median_valid_time),
                fmt_f64(r.median_d2),
            ])?;
        }
        w.flush()?;
        let hist = d2_histogram(&reports, &d2_edges(40, 0.1));
        write_json(&out.join("d2_histogram.json"), &hist)?;
        write_d2_histogram_csv(&hist, csv_file(&out.join("d2_histogram.csv"))?)?;
        Ok(rows
            .iter()
            .map(|r| format!("{}: failure {:.2}", grid_dir(r.strategy, r.memory), r.failure_fraction))
            .collect::<Vec<_>>()
            .join("\n"))
    }
}

#[derive(Serialize)]
struct D2Output<'a> {
    d2: f64,
    degenerate: bool,
    fit: (f64, f64),
    points: usize,
    radii: &'a [f64],
    corr: &'a [f64],
}

impl D2Job {
    fn run(&self, out: &Path) -> Result<String> {
        let traj = match &self.input {
            Some(p) => load_traj(p, Some(self.dt))?,
            None => {
                let ic = held_out_ic(&self.system, self.dt, self.seed, 0)?;
                integrate(ic, &self.system, self.dt, self.steps, 0)?
            }
        };
        let e = correlation_dimension(&traj, &self.d2)?;
        write_json(
            &out.join("d2.json"),
            &D2Output {
                d2: e.d2,
                degenerate: e.degenerate,
                fit: e.fit,
                points: traj.len(),
                radii: &e.radii,
                corr: &e.corr,
            },
        )?;
        Ok(format!(
            "d2 = {:.4} (fit over r in [{:.4}, {:.4}]{})",
            e.d2,
            e.fit.0,
            e.fit.1,
            if e.degenerate { ", degenerate cloud" } else { "" }
        ))
    }
}

#[derive(Serialize)]
struct LyapunovOutput {
    exponents: [f64; 3],
    sum: f64,
    ky_dimension: f64,
    lyapunov_time: f64,
    steps: usize,
    dt: f64,
}

impl LyapunovJob {
    fn run(&self, out: &Path) -> Result<String> {
        let r = lyapunov_spectrum(&self.system, self.dt, self.steps, self.seed)?;
        let e = r.exponents;
        let o = LyapunovOutput {
            exponents: e,
            sum: e.iter().sum(),
            ky_dimension: kaplan_yorke(&e),
            lyapunov_time: r.lyapunov_time(),
            steps: self.steps,
            dt: self.dt,
        };
        write_json(&out.join("lyapunov.json"), &o)?;
        Ok(format!(
            "exponents {:.4} {:.4} {:.4}, sum {:.4}, Kaplan-Yorke dimension {:.4}",
            e[0], e[1], e[2], o.sum, o.ky_dimension
        ))
    }
}

#[derive(Serialize)]
struct KacOutput {
    epsilon: f64,
    dim: f64,
    prefactor: f64,
    n_samples: u64,
    target: Option<u64>,
    prefactor_for_target: Option<f64>,
}

impl KacJob {
    fn run(&self, out: &Path) -> Result<String> {
        let b = kac_sample_estimate(self.epsilon, self.dim, self.prefactor)?;
        let c = self.target.map(|t| kac_prefactor_for(t, self.epsilon, self.dim)).transpose()?;
        write_json(
            &out.join("kac.json"),
            &KacOutput {
                epsilon: self.epsilon,
                dim: self.dim,
                prefactor: self.prefactor,
                n_samples: b.n_samples,
                target: self.target,
                prefactor_for_target: c,
            },
        )?;
        let mut s = format!("{}", b.n_samples);
        if let (Some(t), Some(c)) = (self.target, c) {
            s.push_str(&format!("\nprefactor for {t} samples: {c:.5}"));
        }
        Ok(s)
    }
}

impl TsneJob {
    fn run(&self, out: &Path) -> Result<String> {
        let mut models = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(&self.ensemble_dir)?.collect::<std::io::Result<Vec<_>>>()?;
        entries.sort_by_key(|e| e.file_name());
        let mut id = 0;
        for e in entries {
            let dir = e.path();
            let report = dir.join("report.json");
            if !report.is_file() {
                continue;
            }
            let rep = read_ensemble_json(&report)?;
            if rep.memory != self.memory {
                continue;
            }
            for m in &rep.models {
                let path = dir.join("models").join(format!("model_{:03}.atlm", m.model_id));
                let Some(h) = &m.held_out else { continue };
                if !path.is_file() {
                    return Err(Error::InvalidArgument(format!(
                        "{} is missing; run the ensemble with --save-models",
                        path.display()
                    )));
                }
                models.push(ModelVector {
                    model_id: id,
                    strategy: rep.strategy,
                    params: load_model(&path)?.params.flatten(),
                    d2_error: (h.d2 - self.d_true).abs() / self.d_true,
                });
                id += 1;
            }
        }
        let (pts, res) = embed_models(&models, &self.tsne)?;
        write_embedding_csv(&pts, csv_file(&out.join("embedding.csv"))?)?;
        write_json(&out.join("embedding.json"), &pts)?;
        let rd = radial_distribution(&pts, self.bins, self.tiers);
        write_json(&out.join("radial.json"), &rd)?;
        write_radial_csv(&rd, csv_file(&out.join("radial.csv"))?)?;
        Ok(format!(
            "embedded {} models, final KL {:.4}",
            pts.len(),
            res.kl_trace.last().map_or(f64::NAN, |k| k.1)
        ))
    }
}

/// Hash of an input file, recorded so that a replay can detect that the
/// input changed.
pub fn input_hash(path: &Path) -> Result<String> {
    sha256_file(path)
}
