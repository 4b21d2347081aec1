//! Seeded, mergeable disorder averaging.
//!
//! Sample m draws its detunings from a ChaCha8 stream keyed by the run seed
//! and selected by m, so any partition of the index range into shards gives
//! bitwise the same counters. Gaussian variates use the ziggurat sampler of
//! `rand_distr` (fixed tables, no platform dependence).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{Evaluator, NoninteractingEvaluator};
use crate::error::{Error, Result};
use crate::model::{config_hash, validate_config, ChainConfig, Channel, CorrelationValue};

/// Samples per work unit. Fixed so the shard layout never depends on the
/// number of threads.
pub const CHUNK: u64 = 4096;

/// Which evaluator produces the correlation of each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Full sector solves.
    #[default]
    Exact,
    /// Closed sums over non-interacting scattering paths.
    NonInteracting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Number of disorder realizations K.
    pub realizations: u64,
    /// Standard deviation W of each detuning.
    pub disorder_std: f64,
    pub seed: u64,
    pub channel: Channel,
    #[serde(default)]
    pub evaluation: Evaluation,
    /// Index of the first sample; shards of one run use disjoint ranges.
    #[serde(default)]
    pub first_index: u64,
}

impl McConfig {
    pub fn new(realizations: u64, disorder_std: f64, seed: u64, channel: Channel) -> Self {
        Self {
            realizations,
            disorder_std,
            seed,
            channel,
            evaluation: Evaluation::Exact,
            first_index: 0,
        }
    }

    pub fn noninteracting(mut self) -> Self {
        self.evaluation = Evaluation::NonInteracting;
        self
    }

    pub fn with_first_index(mut self, first: u64) -> Self {
        self.first_index = first;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            return Err(Error::InvalidConfig {
                field: "realizations",
                message: "at least one realization is required".into(),
            });
        }
        if !(self.disorder_std > 0.0) || !self.disorder_std.is_finite() {
            return Err(Error::InvalidConfig {
                field: "disorder_std",
                message: "must be finite and positive".into(),
            });
        }
        if self.first_index.checked_add(self.realizations).is_none() {
            return Err(Error::InvalidConfig {
                field: "first_index",
                message: "sample index range overflows".into(),
            });
        }
        Ok(())
    }
}

/// Source of the per-sample detuning streams for one seed.
#[derive(Debug, Clone)]
pub struct DisorderSampler {
    base: ChaCha8Rng,
    w: f64,
}

impl DisorderSampler {
    pub fn new(seed: u64, disorder_std: f64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
            w: disorder_std,
        }
    }

    /// Fills `out` with the detunings of sample `index`.
    pub fn fill(&self, index: u64, out: &mut [f64]) {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        for d in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *d = self.w * z;
        }
    }
}

/// Detunings of sample `index` of the run keyed by `seed`.
pub fn sample_detunings(seed: u64, index: u64, disorder_std: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    DisorderSampler::new(seed, disorder_std).fill(index, &mut out);
    out
}

/// Contiguous block of sample indices drawn with one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub seed: u64,
    pub first_index: u64,
    pub count: u64,
}

/// Log-binned histogram of correlation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Finite values below the first edge (including exact zeros).
    pub underflow: u64,
    /// Finite values at or above the last edge.
    pub overflow: u64,
    pub divergent: u64,
    /// Samples whose sector matrices were numerically singular.
    pub discarded: u64,
    #[serde(rename = "K")]
    pub total: u64,
    #[serde(rename = "seed")]
    pub seeds: Vec<SeedRange>,
    pub config_hash: String,
    #[serde(skip)]
    lo: f64,
    #[serde(skip)]
    per_decade: f64,
}

pub const DEFAULT_LOG_MIN: i32 = -12;
pub const DEFAULT_LOG_MAX: i32 = 12;
pub const DEFAULT_PER_DECADE: u32 = 20;

impl PdfEstimate {
    /// Empty histogram over [1e-12, 1e12) with 20 bins per decade.
    pub fn empty(config_hash: String) -> Self {
        Self::with_binning(DEFAULT_LOG_MIN, DEFAULT_LOG_MAX, DEFAULT_PER_DECADE, config_hash)
    }

    pub fn with_binning(log_min: i32, log_max: i32, per_decade: u32, config_hash: String) -> Self {
        assert!(log_max > log_min && per_decade > 0);
        let nbins = ((log_max - log_min) as u32 * per_decade) as usize;
        let edges = (0..=nbins)
            .map(|k| 10f64.powf(log_min as f64 + k as f64 / per_decade as f64))
            .collect();
        Self {
            edges,
            counts: vec![0; nbins],
            underflow: 0,
            overflow: 0,
            divergent: 0,
            discarded: 0,
            total: 0,
            seeds: Vec::new(),
            config_hash,
            lo: log_min as f64,
            per_decade: per_decade as f64,
        }
    }

    /// Restores the derived binning parameters after deserialization.
    fn refresh_binning(&mut self) -> Result<()> {
        let n = self.counts.len();
        if self.edges.len() != n + 1 || n == 0 {
            return Err(Error::BinningMismatch);
        }
        let lo = self.edges[0].log10();
        let hi = self.edges[n].log10();
        self.lo = lo.round();
        self.per_decade = (n as f64 / (hi - lo)).round();
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut p: Self = serde_json::from_str(s)?;
        p.refresh_binning()?;
        let sum = p.counts.iter().sum::<u64>() + p.underflow + p.overflow + p.divergent + p.discarded;
        if sum != p.total {
            return Err(Error::Parse(format!("counters sum to {sum}, K = {}", p.total)));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("histogram serializes")
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    /// Bin containing `s`, if inside the binned range.
    pub fn bin_of(&self, s: f64) -> Option<usize> {
        let n = self.counts.len();
        if !(s >= self.edges[0]) || s >= self.edges[n] {
            return None;
        }
        let mut i = (((s.log10() - self.lo) * self.per_decade).floor() as isize).clamp(0, n as isize - 1) as usize;
        while i > 0 && s < self.edges[i] {
            i -= 1;
        }
        while i + 1 < n && s >= self.edges[i + 1] {
            i += 1;
        }
        Some(i)
    }

    pub fn record(&mut self, v: CorrelationValue) {
        self.total += 1;
        match v {
            CorrelationValue::Divergent => self.divergent += 1,
            CorrelationValue::Finite(s) => match self.bin_of(s) {
                Some(i) => self.counts[i] += 1,
                None if s < self.edges[0] => self.underflow += 1,
                None => self.overflow += 1,
            },
        }
    }

    pub fn record_discarded(&mut self) {
        self.total += 1;
        self.discarded += 1;
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.edges == other.edges
    }

    /// Adds the counters of `other`. Binning and configuration must match.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.same_binning(other) {
            return Err(Error::BinningMismatch);
        }
        if self.config_hash != other.config_hash {
            return Err(Error::InvalidConfig {
                field: "config_hash",
                message: "histograms come from different configurations".into(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.divergent += other.divergent;
        self.discarded += other.discarded;
        self.total += other.total;
        self.seeds.extend_from_slice(&other.seeds);
        self.seeds = coalesce(std::mem::take(&mut self.seeds));
        Ok(())
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    /// Geometric centre of bin i.
    pub fn bin_center(&self, i: usize) -> f64 {
        (self.edges[i] * self.edges[i + 1]).sqrt()
    }

    /// count / (K · width) for bin i.
    pub fn density(&self, i: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts[i] as f64 / (self.total as f64 * self.bin_width(i))
    }

    /// Density of the bin containing `s`; zero outside the binned range.
    pub fn density_at(&self, s: f64) -> f64 {
        self.bin_of(s).map_or(0.0, |i| self.density(i))
    }

    /// Average density over [a, b), computed from whole bins inside it.
    pub fn mean_density(&self, a: f64, b: f64) -> f64 {
        let mut count = 0u64;
        let mut width = 0.0;
        for i in 0..self.nbins() {
            if self.edges[i] >= a * (1.0 - 1e-12) && self.edges[i + 1] <= b * (1.0 + 1e-12) {
                count += self.counts[i];
                width += self.bin_width(i);
            }
        }
        if width == 0.0 || self.total == 0 {
            0.0
        } else {
            count as f64 / (self.total as f64 * width)
        }
    }

    /// Probability masses of every bin followed by the underflow, overflow,
    /// divergent and discarded cells. Sums to one when K > 0.
    pub fn masses(&self) -> Vec<f64> {
        let k = self.total.max(1) as f64;
        self.counts
            .iter()
            .chain([&self.underflow, &self.overflow, &self.divergent, &self.discarded])
            .map(|&c| c as f64 / k)
            .collect()
    }

    /// Bin with the highest density (first one on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.nbins() {
            let d = self.density(i);
            if d > 0.0 && best.is_none_or(|(_, b)| d > b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Number of finite samples strictly below `s` that are resolved by the
    /// binning (bins lying entirely below `s`, plus underflow).
    pub fn count_below_edge(&self, s: f64) -> u64 {
        self.underflow
            + (0..self.nbins())
                .filter(|&i| self.edges[i + 1] <= s)
                .map(|i| self.counts[i])
                .sum::<u64>()
    }
}

fn coalesce(mut v: Vec<SeedRange>) -> Vec<SeedRange> {
    v.sort_by_key(|r| (r.seed, r.first_index));
    let mut out: Vec<SeedRange> = Vec::with_capacity(v.len());
    for r in v {
        if let Some(last) = out.last_mut() {
            if last.seed == r.seed && last.first_index + last.count == r.first_index {
                last.count += r.count;
                continue;
            }
        }
        out.push(r);
    }
    out
}

/// Probability of antibunching ℙ(g < 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub antibunched: u64,
    /// Realizations entering the estimate (K minus discarded).
    pub valid: u64,
    pub divergent: u64,
    pub discarded: u64,
}

impl PaEstimate {
    fn from_counts(antibunched: u64, valid: u64, divergent: u64, discarded: u64) -> Self {
        let p = if valid == 0 { 0.0 } else { antibunched as f64 / valid as f64 };
        let se = if valid == 0 { 0.0 } else { (p * (1.0 - p) / valid as f64).sqrt() };
        Self {
            probability: p,
            std_error: se,
            antibunched,
            valid,
            divergent,
            discarded,
        }
    }
}

/// Histogram plus the antibunching count of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub pdf: PdfEstimate,
    pub antibunched: u64,
}

impl McResult {
    pub fn pa(&self) -> PaEstimate {
        let valid = self.pdf.total - self.pdf.discarded;
        PaEstimate::from_counts(self.antibunched, valid, self.pdf.divergent, self.pdf.discarded)
    }

    fn merge(mut self, other: Self) -> Self {
        self.pdf
            .merge(&other.pdf)
            .expect("shards of one run share binning");
        self.antibunched += other.antibunched;
        self
    }
}

fn run_hash(cfg: &ChainConfig, mc: &McConfig, tag: &str) -> String {
    config_hash(&(cfg, mc.disorder_std, mc.channel, mc.evaluation, tag))
}

/// Runs `eval` on every sample of `mc` in parallel.
///
/// `make` builds one private worker state per shard. A `SingularSector`
/// error discards the sample; any other error aborts the run.
pub fn run_custom<W, M, F>(
    n_qubits: usize,
    mc: &McConfig,
    hash: String,
    make: M,
    eval: F,
) -> Result<McResult>
where
    M: Fn() -> Result<W> + Sync,
    F: Fn(&mut W, &[f64]) -> Result<CorrelationValue> + Sync,
{
    mc.validate()?;
    let sampler = DisorderSampler::new(mc.seed, mc.disorder_std);
    let start = mc.first_index;
    let end = start + mc.realizations;
    let nchunks = mc.realizations.div_ceil(CHUNK);
    let empty = || McResult {
        pdf: PdfEstimate::empty(hash.clone()),
        antibunched: 0,
    };
    let result = (0..nchunks)
        .into_par_iter()
        .map(|c| -> Result<McResult> {
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(end);
            let mut worker = make()?;
            let mut delta = vec![0.0; n_qubits];
            let mut acc = empty();
            for idx in lo..hi {
                sampler.fill(idx, &mut delta);
                match eval(&mut worker, &delta) {
                    Ok(v) => {
                        if v.is_antibunched() {
                            acc.antibunched += 1;
                        }
                        acc.pdf.record(v);
                    }
                    Err(Error::SingularSector { .. }) => acc.pdf.record_discarded(),
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        })
        .try_reduce(empty, |a, b| Ok(a.merge(b)))?;
    let mut result = result;
    result.pdf.seeds = vec![SeedRange {
        seed: mc.seed,
        first_index: start,
        count: mc.realizations,
    }];
    Ok(result)
}

/// Runs the evaluator selected by `mc`.
pub fn run(cfg: &ChainConfig, mc: &McConfig) -> Result<McResult> {
    validate_config(cfg)?;
    if mc.channel == Channel::Reflection && cfg.gamma_r <= 0.0 {
        return Err(Error::Unsupported("no reflected field when gamma_r = 0".into()));
    }
    let n = cfg.n_qubits;
    let channel = mc.channel;
    match mc.evaluation {
        Evaluation::Exact => run_custom(
            n,
            mc,
            run_hash(cfg, mc, "exact"),
            || Evaluator::new(cfg),
            |ev, d| ev.g(d, channel),
        ),
        Evaluation::NonInteracting => run_custom(
            n,
            mc,
            run_hash(cfg, mc, "noninteracting"),
            || NoninteractingEvaluator::new(cfg),
            |ev, d| {
                Ok(match channel {
                    Channel::Transmission => ev.transmission(d),
                    Channel::Reflection => ev.reflection(d),
                })
            },
        ),
    }
}

/// ℙ(g < 1) over Gaussian disorder, with binomial standard error.
pub fn estimate_pa_probability(cfg: &ChainConfig, mc: &McConfig) -> Result<PaEstimate> {
    run(cfg, mc).map(|r| r.pa())
}

pub fn estimate_pdf(cfg: &ChainConfig, mc: &McConfig) -> Result<PdfEstimate> {
    run(cfg, mc).map(|r| r.pdf)
}

/// [`estimate_pdf`] with the non-interacting evaluator regardless of
/// `mc.evaluation`.
pub fn estimate_pdf_noninteracting(cfg: &ChainConfig, mc: &McConfig) -> Result<PdfEstimate> {
    estimate_pdf(cfg, &mc.noninteracting())
}
