use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMemory {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Hidden and cell vectors of every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub layers: Vec<LayerMemory>,
}

impl MemoryState {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .hidden
                .iter()
                .map(|&n| LayerMemory {
                    h: vec![0.0; n],
                    c: vec![0.0; n],
                })
                .collect(),
        }
    }

    /// Every entry drawn i.i.d. from N(0, 1).
    pub fn gaussian(arch: &Architecture, rng: &mut seed::Rng) -> Self {
        let mut m = Self::zeros(arch);
        for layer in &mut m.layers {
            for v in layer.h.iter_mut().chain(layer.c.iter_mut()) {
                *v = StandardNormal.sample(rng);
            }
        }
        m
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.h.iter().chain(l.c.iter()).copied())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    #[default]
    Zero,
    Gaussian,
}

impl MemoryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryMode::Zero => "zero",
            MemoryMode::Gaussian => "gaussian",
        }
    }
}

impl std::fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MemoryMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "zero" => Ok(MemoryMode::Zero),
            "gaussian" | "random" => Ok(MemoryMode::Gaussian),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown memory mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryInit {
    pub mode: MemoryMode,
    pub seed: u64,
}

impl MemoryInit {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn gaussian(seed: u64) -> Self {
        Self {
            mode: MemoryMode::Gaussian,
            seed,
        }
    }

    /// Draws a memory state from an existing generator (ignores `self.seed`).
    pub fn draw(&self, arch: &Architecture, rng: &mut seed::Rng) -> MemoryState {
        match self.mode {
            MemoryMode::Zero => MemoryState::zeros(arch),
            MemoryMode::Gaussian => MemoryState::gaussian(arch, rng),
        }
    }
}

pub fn init_memory(arch: &Architecture, mi: &MemoryInit) -> MemoryState {
    mi.draw(arch, &mut seed::rng(mi.seed))
}
