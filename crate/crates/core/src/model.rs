//! Domain types shared by every other module: chain parameters, disorder
//! samples, the two-excitation pair basis and correlation values.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Static parameters of a qubit chain coupled to a waveguide.
///
/// Rates are stored explicitly; the coupling efficiency and chirality ratio
/// are derived. Phase factors are computed on φ folded into [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_qubits: usize,
    /// Phase acquired between neighbouring qubits, ω₀d/v_g.
    pub phase: f64,
    /// Decay rate into the transmission (right-going) mode.
    pub gamma_t: f64,
    /// Decay rate into the reflection (left-going) mode.
    pub gamma_r: f64,
    /// Decay rate into non-waveguide modes.
    #[serde(default)]
    pub gamma_nw: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::symmetric(1, 0.0)
    }
}

impl ChainConfig {
    /// Lossless, non-chiral chain with γ = γ_T + γ_R = 1.
    pub fn symmetric(n_qubits: usize, phase: f64) -> Self {
        Self {
            n_qubits,
            phase,
            gamma_t: 0.5,
            gamma_r: 0.5,
            gamma_nw: 0.0,
        }
    }

    pub fn with_gamma_nw(mut self, gamma_nw: f64) -> Self {
        self.gamma_nw = gamma_nw;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_n_qubits(mut self, n_qubits: usize) -> Self {
        self.n_qubits = n_qubits;
        self
    }

    /// Chain with explicit rates.
    pub fn new(n_qubits: usize, phase: f64, gamma_t: f64, gamma_r: f64, gamma_nw: f64) -> Self {
        Self {
            n_qubits,
            phase,
            gamma_t,
            gamma_r,
            gamma_nw,
        }
    }

    /// Total decay rate γ_T + γ_R + γ_nw of one qubit.
    pub fn total_decay(&self) -> f64 {
        self.gamma_t + self.gamma_r + self.gamma_nw
    }

    /// Waveguide coupling efficiency β = (γ_T+γ_R)/(γ_T+γ_R+γ_nw).
    pub fn beta(&self) -> f64 {
        (self.gamma_t + self.gamma_r) / self.total_decay()
    }

    /// Chirality ratio α = γ_R/γ_T (infinite when γ_T = 0).
    pub fn chirality_ratio(&self) -> f64 {
        self.gamma_r / self.gamma_t
    }

    /// Phase folded into [0, 2π).
    pub fn reduced_phase(&self) -> f64 {
        self.phase.rem_euclid(TAU)
    }

    /// e^{ikφ}, evaluated on the folded phase so that φ and φ + 2π give the
    /// same factors up to the rounding of φ + 2π itself.
    pub fn phase_factor(&self, k: f64) -> num_complex::Complex64 {
        num_complex::Complex64::cis(k * self.reduced_phase())
    }

    /// Number of two-excitation basis states, N(N−1)/2.
    pub fn pair_dim(&self) -> usize {
        self.n_qubits * self.n_qubits.saturating_sub(1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        validate_config(self)
    }
}

/// Checks every [`ChainConfig`] invariant, reporting the first violation.
pub fn validate_config(cfg: &ChainConfig) -> Result<()> {
    let invalid = |field, message: &str| Error::InvalidConfig {
        field,
        message: message.to_string(),
    };
    if cfg.n_qubits < 1 {
        return Err(invalid("n_qubits", "chain must contain at least one qubit"));
    }
    if !cfg.phase.is_finite() {
        return Err(invalid("phase", "must be finite"));
    }
    for (field, v) in [
        ("gamma_t", cfg.gamma_t),
        ("gamma_r", cfg.gamma_r),
        ("gamma_nw", cfg.gamma_nw),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(invalid(field, "must be finite and non-negative"));
        }
    }
    if cfg.gamma_t + cfg.gamma_r <= 0.0 {
        return Err(invalid(
            "gamma_t",
            "gamma_t + gamma_r must be positive (chain decoupled from the waveguide)",
        ));
    }
    Ok(())
}

/// One disorder realization: detunings Δ₁..Δ_N from the drive frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisorderSample(pub Vec<f64>);

impl DisorderSample {
    pub fn new(detunings: Vec<f64>) -> Self {
        Self(detunings)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn detunings(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_len(&self, cfg: &ChainConfig) -> Result<()> {
        check_len(&self.0, cfg.n_qubits)
    }
}

impl From<Vec<f64>> for DisorderSample {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn check_len(detunings: &[f64], n: usize) -> Result<()> {
    if detunings.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: detunings.len(),
        });
    }
    Ok(())
}

/// Bijection between qubit pairs (m, n), 1 ≤ n < m ≤ N, and flat indices.
///
/// Pairs are ordered lexicographically with m outer: (2,1), (3,1), (3,2),
/// (4,1), ... so the flat index of (m, n) is (m−1)(m−2)/2 + (n−1). The
/// ordering does not depend on N, which is only used for range checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    n_qubits: usize,
}

impl PairIndex {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits }
    }

    pub fn dim(&self) -> usize {
        self.n_qubits * self.n_qubits.saturating_sub(1) / 2
    }

    /// Flat index of the pair (m, n) with 1 ≤ n < m ≤ N.
    pub fn index(&self, m: usize, n: usize) -> Result<usize> {
        if n < 1 || n >= m || m > self.n_qubits {
            return Err(Error::IndexOutOfRange(format!(
                "({m}, {n}) is not a pair with 1 <= n < m <= {}",
                self.n_qubits
            )));
        }
        Ok(pair_index_unchecked(m, n))
    }

    /// Inverse of [`PairIndex::index`].
    pub fn unindex(&self, k: usize) -> Result<(usize, usize)> {
        if k >= self.dim() {
            return Err(Error::IndexOutOfRange(format!(
                "flat index {k} >= {}",
                self.dim()
            )));
        }
        Ok(pair_unindex_unchecked(k))
    }

    /// All pairs in flat-index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_qubits;
        (2..=n).flat_map(|m| (1..m).map(move |q| (m, q)))
    }
}

#[inline]
pub(crate) fn pair_index_unchecked(m: usize, n: usize) -> usize {
    (m - 1) * (m - 2) / 2 + (n - 1)
}

#[inline]
pub(crate) fn pair_unindex_unchecked(k: usize) -> (usize, usize) {
    // Largest m with (m-1)(m-2)/2 <= k.
    let mut m = ((1.5 + (2.0 * k as f64 + 0.25).sqrt()).floor() as usize).max(2);
    while (m - 1) * (m - 2) / 2 > k {
        m -= 1;
    }
    while m * (m - 1) / 2 <= k {
        m += 1;
    }
    (m, k - (m - 1) * (m - 2) / 2 + 1)
}

/// A zero-delay second-order correlation value.
///
/// `Divergent` marks exact destructive interference of the single-photon
/// amplitude (denominator zero to machine tolerance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationValue {
    Finite(f64),
    Divergent,
}

impl CorrelationValue {
    /// The value as an extended real; `Divergent` maps to +∞.
    pub fn as_f64(&self) -> f64 {
        match *self {
            CorrelationValue::Finite(v) => v,
            CorrelationValue::Divergent => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            CorrelationValue::Finite(v) => Some(v),
            CorrelationValue::Divergent => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, CorrelationValue::Divergent)
    }

    /// g < 1.
    pub fn is_antibunched(&self) -> bool {
        matches!(*self, CorrelationValue::Finite(v) if v < 1.0)
    }
}

impl fmt::Display for CorrelationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrelationValue::Finite(v) => write!(f, "{v:.11e}"),
            CorrelationValue::Divergent => f.write_str("divergent"),
        }
    }
}

/// Which output port of the waveguide is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Transmission,
    Reflection,
}

/// SHA-256 of the JSON serialization of `value`, hex encoded.
///
/// Written into output headers so results can be traced to their inputs.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
