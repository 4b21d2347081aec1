use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgcorr::analysis::Axis;
use wgcorr::montecarlo::McConfig;
use wgcorr::nppb::ManifoldRun;
use wgcorr::timedomain::PulseConfig;
use wgcorr::ChainConfig;

/// Everything a subcommand may need, read from one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub chain: ChainConfig,
    /// Detunings of the single sample used by `eval` and `timedomain`.
    #[serde(default)]
    pub detunings: Option<Vec<f64>>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub pulse: Option<PulseConfig>,
    /// Time at which `timedomain` reports g(τ, τ); defaults to the pulse peak.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub manifold: Option<ManifoldRun>,
    #[serde(default)]
    pub sweep: Option<SweepPlan>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// ℙ(g < 1).
    Pa,
    /// Density of the histogram bin containing `s0`.
    Density,
    /// Mean density over the decade centred on `s0`.
    DecadeDensity,
    /// g of the disorder-free chain.
    GClean,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Pa => "pa",
            Quantity::Density => "density",
            Quantity::DecadeDensity => "decade_density",
            Quantity::GClean => "g_clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub axes: Vec<Axis>,
    pub quantity: Quantity,
    #[serde(default)]
    pub s0: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("missing `{0}` section")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Applies `--seed` and `--realizations` to every section that has them.
    pub fn apply_overrides(&mut self, seed: Option<u64>, realizations: Option<u64>) {
        if let Some(mc) = self.mc.as_mut() {
            if let Some(s) = seed {
                mc.seed = s;
            }
            if let Some(k) = realizations {
                mc.realizations = k;
            }
        }
        if let (Some(m), Some(s)) = (self.manifold.as_mut(), seed) {
            m.seed = s;
        }
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.detunings.clone().unwrap_or_else(|| vec![0.0; self.chain.n_qubits])
    }

    pub fn mc(&self) -> Result<McConfig, ConfigError> {
        self.mc.ok_or(ConfigError::Missing("mc"))
    }
}
