//! Training-set builders.
//!
//! Every builder produces a [`Dataset`] with the same budget at the default
//! settings (27,000 samples at `dt = 0.01`); the strategies differ only in
//! where in phase space the samples come from.

mod kac;
mod scaler;
pub mod store;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynsys::{
    eigen_directions, fixed_points, integrate, random_attractor_state, LorenzParams, State,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub use kac::{kac_prefactor_for, kac_sample_estimate, KacBudget};
pub use scaler::{fit_scaler, Scaler, DEFAULT_HI, DEFAULT_LO};

pub const DEFAULT_TOTAL: usize = 27_000;
pub const DEFAULT_CHUNKS: usize = 9;
pub const DEFAULT_CHUNK_LEN: usize = 3000;
pub const DEFAULT_SHORT_LEN: usize = 3000;
/// Initial offset from a fixed point along each eigen-direction.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Ergodic,
    #[serde(rename = "split")]
    ErgodicSplit,
    Random,
    FixedPoint,
    Short,
}

impl Strategy {
    /// The four equal-budget strategies compared in the ensemble grid.
    pub const GRID: [Strategy; 4] = [
        Strategy::Ergodic,
        Strategy::ErgodicSplit,
        Strategy::Random,
        Strategy::FixedPoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Ergodic => "ergodic",
            Strategy::ErgodicSplit => "split",
            Strategy::Random => "random",
            Strategy::FixedPoint => "fixed-point",
            Strategy::Short => "short",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ergodic" => Strategy::Ergodic,
            "split" | "ergodic-split" => Strategy::ErgodicSplit,
            "random" => Strategy::Random,
            "fixed-point" | "fp" => Strategy::FixedPoint,
            "short" => Strategy::Short,
            other => return Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        })
    }
}

/// Trajectory chunks sharing one time step. Recurrent memory is reset at
/// every chunk start during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    chunks: Vec<Trajectory>,
    strategy: Strategy,
    seed: u64,
}

impl Dataset {
    pub fn new(chunks: Vec<Trajectory>, strategy: Strategy, seed: u64) -> Result<Self> {
        let Some(first) = chunks.first() else {
            return Err(Error::EmptyDataset);
        };
        let dt = first.dt();
        if chunks.iter().any(|c| c.dt() != dt) {
            return Err(Error::InvalidArgument("chunks have different dt".into()));
        }
        Ok(Self {
            chunks,
            strategy,
            seed,
        })
    }

    pub fn chunks(&self) -> &[Trajectory] {
        &self.chunks
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.chunks[0].dt()
    }

    pub fn total_samples(&self) -> usize {
        self.chunks.iter().map(Trajectory::len).sum()
    }

    /// SHA-256 over strategy, dt and the raw sample bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.strategy.as_str().as_bytes());
        h.update(self.dt().to_le_bytes());
        for c in &self.chunks {
            h.update((c.len() as u64).to_le_bytes());
            for s in c.samples() {
                for v in s.to_array() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// One long trajectory on the attractor.
pub fn build_ergodic(
    p: &LorenzParams,
    dt: f64,
    n: usize,
    transient: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = seed::rng(seed);
    let s0 = crate::dynsys::random_box_point(&mut rng);
    let traj = integrate(s0, p, dt, n, transient)?;
    Dataset::new(vec![traj], Strategy::Ergodic, seed)
}

/// The first `n` samples of a single-chunk dataset.
pub fn build_short(ergodic: &Dataset, n: usize) -> Result<Dataset> {
    let [chunk] = ergodic.chunks() else {
        return Err(Error::InvalidArgument(format!(
            "short set needs a single-chunk dataset, got {} chunks",
            ergodic.chunks().len()
        )));
    };
    if n == 0 || n > chunk.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot take {n} samples from a chunk of {}",
            chunk.len()
        )));
    }
    Dataset::new(vec![chunk.slice(0..n)?], Strategy::Short, ergodic.seed())
}

/// Cuts a single trajectory into `n_chunks` contiguous equal blocks and
/// shuffles their order. Blocks keep their original start times.
pub fn build_split(ergodic: &Dataset, n_chunks: usize, seed: u64) -> Result<Dataset> {
    let [chunk] = ergodic.chunks() else {
        return Err(Error::InvalidArgument(format!(
            "split needs a single-chunk dataset, got {} chunks",
            ergodic.chunks().len()
        )));
    };
    if n_chunks == 0 || chunk.len() % n_chunks != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} samples are not divisible into {n_chunks} chunks",
            chunk.len()
        )));
    }
    let len = chunk.len() / n_chunks;
    let mut order: Vec<usize> = (0..n_chunks).collect();
    order.shuffle(&mut seed::rng(seed));
    let chunks = order
        .iter()
        .map(|&b| chunk.slice(b * len..(b + 1) * len))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(chunks, Strategy::ErgodicSplit, seed)
}

/// Independent short trajectories, each started from its own random state
/// on the attractor.
pub fn build_random(
    p: &LorenzParams,
    dt: f64,
    n_traj: usize,
    len: usize,
    transient: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_traj == 0 || len == 0 {
        return Err(Error::InvalidArgument(
            "need at least one trajectory of at least one sample".into(),
        ));
    }
    let chunks = (0..n_traj)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, Stream::Data, i as u64));
            let s0 = random_attractor_state(p, dt, transient, &mut rng)?;
            integrate(s0, p, dt, len, 0)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(chunks, Strategy::Random, seed)
}

/// For each fixed point `[F+, F-, F0]` and each of its eigen-directions `e`,
/// the trajectory from `F + delta * e` with no transient discarded.
pub fn build_fixed_point(p: &LorenzParams, dt: f64, delta: f64, len: usize) -> Result<Dataset> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    if len == 0 {
        return Err(Error::InvalidArgument("len must be >= 1".into()));
    }
    let mut chunks = Vec::with_capacity(9);
    for fp in fixed_points(p)? {
        for e in eigen_directions(fp, p)? {
            let s0 = fp + State::from_array(e) * delta;
            chunks.push(integrate(s0, p, dt, len, 0)?);
        }
    }
    Dataset::new(chunks, Strategy::FixedPoint, 0)
}

/// Builder arguments for every strategy, with the defaults used throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub strategy: Strategy,
    pub dt: f64,
    pub total: usize,
    pub chunks: usize,
    pub chunk_len: usize,
    pub short_len: usize,
    pub transient: usize,
    pub delta: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ergodic,
            dt: crate::dynsys::DEFAULT_DT,
            total: DEFAULT_TOTAL,
            chunks: DEFAULT_CHUNKS,
            chunk_len: DEFAULT_CHUNK_LEN,
            short_len: DEFAULT_SHORT_LEN,
            transient: crate::dynsys::DEFAULT_TRANSIENT,
            delta: DEFAULT_DELTA,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn with_strategy(strategy: Strategy, seed: u64) -> Self {
        Self {
            strategy,
            seed,
            ..Self::default()
        }
    }

    /// Builds the dataset. The ergodic trajectory behind `split` and `short`
    /// is the one `ergodic` builds from the same seed.
    pub fn build(&self, p: &LorenzParams) -> Result<Dataset> {
        let ergodic = || build_ergodic(p, self.dt, self.total, self.transient, self.seed);
        match self.strategy {
            Strategy::Ergodic => ergodic(),
            Strategy::Short => build_short(&ergodic()?, self.short_len),
            Strategy::ErgodicSplit => build_split(&ergodic()?, self.chunks, self.seed),
            Strategy::Random => build_random(
                p,
                self.dt,
                self.chunks,
                self.chunk_len,
                self.transient,
                self.seed,
            ),
            Strategy::FixedPoint => build_fixed_point(p, self.dt, self.delta, self.chunk_len),
        }
    }
}
