//! Near-perfect photon blockade: points where g equals a tiny target ε.
//!
//! A seed point on the level set g = ε is found by damped Gauss–Newton on
//! r(Δ) = ln g(Δ) − ln ε from random starts, then pulled towards the origin
//! along the level set. The level set is enumerated by predictor–corrector
//! continuation: a tangential step followed by Gauss–Newton re-convergence.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlations::Evaluator;
use crate::error::{Error, Result};
use crate::model::{validate_config, ChainConfig, Channel};

/// Manifold tolerance |g − ε|/ε.
pub const MANIFOLD_TOL: f64 = 0.1;
/// Gauss–Newton stops once |ln g − ln ε| falls below this.
const RESIDUAL_TOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 30;
const STALL_WINDOW: usize = 50;
const STALL_REDUCTION: f64 = 1e-3;
const MAX_GN_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldRun {
    pub target: Channel,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_k_sols")]
    pub k_sols_max: usize,
    /// Every detuning is confined to [−box, box].
    #[serde(default = "default_box", rename = "box")]
    pub box_bound: f64,
    /// Detunings held fixed at the start of the chain.
    #[serde(default)]
    pub fixed_prefix: Vec<f64>,
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
    #[serde(default = "default_separation")]
    pub min_separation: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_walkers")]
    pub walkers: usize,
}

fn default_epsilon() -> f64 {
    1e-10
}
fn default_k_sols() -> usize {
    100_000
}
fn default_box() -> f64 {
    1.0
}
fn default_restarts() -> usize {
    200
}
fn default_separation() -> f64 {
    1e-4
}
fn default_step() -> f64 {
    1e-2
}
fn default_walkers() -> usize {
    1
}

impl ManifoldRun {
    pub fn new(target: Channel, epsilon: f64) -> Self {
        Self {
            target,
            epsilon,
            k_sols_max: default_k_sols(),
            box_bound: default_box(),
            fixed_prefix: Vec::new(),
            max_restarts: default_restarts(),
            min_separation: default_separation(),
            step: default_step(),
            seed: 0,
            walkers: 1,
        }
    }

    pub fn validate(&self, cfg: &ChainConfig) -> Result<()> {
        validate_config(cfg)?;
        let bad = |field, message: &str| {
            Err(Error::InvalidConfig {
                field,
                message: message.into(),
            })
        };
        if !(self.epsilon > 0.0) {
            return bad("epsilon", "must be positive");
        }
        if !(self.box_bound > 0.0) {
            return bad("box", "must be positive");
        }
        if self.fixed_prefix.len() >= cfg.n_qubits {
            return bad("fixed_prefix", "must leave at least one free detuning");
        }
        if self.fixed_prefix.iter().any(|d| d.abs() > self.box_bound) {
            return bad("fixed_prefix", "fixed detunings must lie inside the box");
        }
        if !(self.step > 0.0) || !(self.min_separation > 0.0) {
            return bad("step", "step and min_separation must be positive");
        }
        if self.walkers == 0 {
            return bad("walkers", "at least one walker is required");
        }
        Ok(())
    }

    fn free_dim(&self, cfg: &ChainConfig) -> usize {
        cfg.n_qubits - self.fixed_prefix.len()
    }
}

/// One point on the level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSolution {
    /// All N detunings, including any fixed prefix.
    pub detunings: Vec<f64>,
    pub g: f64,
    pub walker_seed: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ManifoldSolutionSet {
    pub solutions: Vec<ManifoldSolution>,
    /// Continuation steps that stalled or left the box.
    pub boundary_hits: usize,
}

impl ManifoldSolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.solutions {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Inverse of [`write_jsonl`](Self::write_jsonl); `#` lines are skipped.
    pub fn read_jsonl(text: &str) -> Result<Self> {
        let solutions = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            solutions,
            boundary_hits: 0,
        })
    }
}

/// ln g over the free detunings, with the prefix held fixed.
pub struct LogG {
    ev: Evaluator,
    channel: Channel,
    full: Vec<f64>,
    prefix_len: usize,
}

impl LogG {
    pub fn new(cfg: &ChainConfig, channel: Channel, prefix: &[f64]) -> Result<Self> {
        let mut full = vec![0.0; cfg.n_qubits];
        full[..prefix.len()].copy_from_slice(prefix);
        Ok(Self {
            ev: Evaluator::new(cfg)?,
            channel,
            full,
            prefix_len: prefix.len(),
        })
    }

    /// ln g at the free coordinates `x`; +∞ for divergent or singular
    /// points, and ln(1e−300) for an exact zero.
    pub fn eval(&mut self, x: &[f64]) -> f64 {
        self.full[self.prefix_len..].copy_from_slice(x);
        match self.ev.g(&self.full, self.channel) {
            Ok(v) => match v.finite() {
                Some(g) => g.max(1e-300).ln(),
                None => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    }

    /// g itself (+∞ where ln g is).
    pub fn g(&mut self, x: &[f64]) -> f64 {
        self.full[self.prefix_len..].copy_from_slice(x);
        match self.ev.g(&self.full, self.channel) {
            Ok(v) => v.finite().unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.full.clone();
        v[self.prefix_len..].copy_from_slice(x);
        v
    }

    /// Central-difference gradient, step 1e−6·max(1, |x_j|).
    pub fn gradient(&mut self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut grad = vec![0.0; x.len()];
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            y[j] = x[j] + h;
            let fp = self.eval(&y);
            y[j] = x[j] - h;
            let fm = self.eval(&y);
            y[j] = x[j];
            grad[j] = (fp - fm) / (2.0 * h);
        }
        grad
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inside(x: &[f64], b: f64) -> bool {
    x.iter().all(|v| v.abs() <= b)
}

/// Damped Gauss–Newton on the scalar residual ln g − ln ε, restricted to
/// the box. Returns the converged point and the iteration count.
fn gauss_newton(f: &mut LogG, x0: &[f64], log_eps: f64, bound: f64) -> Result<(Vec<f64>, usize)> {
    let mut x = x0.to_vec();
    let mut r = f.eval(&x) - log_eps;
    let mut history = vec![r.abs()];
    for it in 0..MAX_GN_ITERATIONS {
        if !r.is_finite() {
            break;
        }
        if r.abs() <= RESIDUAL_TOL {
            return Ok((x, it));
        }
        let grad = f.gradient(&x);
        let gg = dot(&grad, &grad);
        if !(gg > 0.0) || !gg.is_finite() {
            break;
        }
        let step: Vec<f64> = grad.iter().map(|gj| -r * gj / gg).collect();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let y: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            if inside(&y, bound) {
                let ry = f.eval(&y) - log_eps;
                if ry.abs() < r.abs() {
                    x = y;
                    r = ry;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        history.push(r.abs());
        if !accepted {
            break;
        }
        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            if old - r.abs() < STALL_REDUCTION * old {
                break;
            }
        }
    }
    if r.abs() <= RESIDUAL_TOL {
        return Ok((x, history.len() - 1));
    }
    Err(Error::StepFailed {
        iterations: history.len() - 1,
        residual: r.abs(),
    })
}

/// Moves a level-set point towards smaller Σ Δ² by steps along the
/// tangent projection of −∇ΣΔ², re-converging after each step.
fn pull_towards_origin(f: &mut LogG, x0: Vec<f64>, log_eps: f64, bound: f64) -> Vec<f64> {
    let mut x = x0;
    let mut eta = 0.1;
    for _ in 0..200 {
        if eta < 1e-8 {
            break;
        }
        let grad = f.gradient(&x);
        let gg = dot(&grad, &grad);
        if !(gg > 0.0) {
            break;
        }
        let c = dot(&x, &grad) / gg;
        let t: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - c * gi).collect();
        let tn = dot(&t, &t).sqrt();
        if tn < 1e-12 {
            break;
        }
        let y: Vec<f64> = x.iter().zip(&t).map(|(xi, ti)| xi - eta * ti).collect();
        match gauss_newton(f, &y, log_eps, bound) {
            Ok((z, _)) if dot(&z, &z) < dot(&x, &x) => {
                x = z;
                eta *= 1.5;
            }
            _ => eta *= 0.5,
        }
    }
    x
}

/// Finds one point with |g − ε|/ε ≤ 0.1 inside the box, preferring small
/// Σ Δ². Returns all N detunings (prefix included).
pub fn find_seed_solution(cfg: &ChainConfig, run: &ManifoldRun) -> Result<Vec<f64>> {
    run.validate(cfg)?;
    let n = run.free_dim(cfg);
    let mut f = LogG::new(cfg, run.target, &run.fixed_prefix)?;
    let log_eps = run.epsilon.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut best: Option<Vec<f64>> = None;
    let mut successes = 0;
    for _ in 0..run.max_restarts {
        // Mix start scales so small-detuning solutions are also reached.
        let scale = run.box_bound * [1.0, 0.5, 0.2][rng.random_range(0..3)];
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        let Ok((x, _)) = gauss_newton(&mut f, &x0, log_eps, run.box_bound) else {
            continue;
        };
        let x = pull_towards_origin(&mut f, x, log_eps, run.box_bound);
        if best.as_ref().is_none_or(|b| dot(&x, &x) < dot(b, b)) {
            best = Some(x);
        }
        successes += 1;
        if successes >= 5 {
            break;
        }
    }
    match best {
        Some(x) => Ok(f.full(&x)),
        None => Err(Error::NoSolutionFound {
            restarts: run.max_restarts,
        }),
    }
}

/// Re-converges a full detuning vector onto the level set, keeping the
/// prefix fixed.
pub fn refine(cfg: &ChainConfig, run: &ManifoldRun, start: &[f64]) -> Result<ManifoldSolution> {
    run.validate(cfg)?;
    let p = run.fixed_prefix.len();
    if start.len() != cfg.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_qubits,
            actual: start.len(),
        });
    }
    let mut f = LogG::new(cfg, run.target, &run.fixed_prefix)?;
    let (x, it) = gauss_newton(&mut f, &start[p..], run.epsilon.ln(), run.box_bound)?;
    Ok(ManifoldSolution {
        g: f.g(&x),
        detunings: f.full(&x),
        walker_seed: run.seed,
        iterations: it,
    })
}

/// Spatial hash for ∞-norm deduplication.
struct Dedup {
    cell: f64,
    sep: f64,
    grid: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl Dedup {
    fn new(sep: f64) -> Self {
        Self {
            cell: sep,
            sep,
            grid: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    fn is_new(&self, x: &[f64]) -> bool {
        let k = self.key(x);
        let n = k.len();
        let mut offs = vec![-1i64; n];
        loop {
            let probe: Vec<i64> = k.iter().zip(&offs).map(|(a, b)| a + b).collect();
            if let Some(ids) = self.grid.get(&probe) {
                for &id in ids {
                    let d = self.points[id]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if d < self.sep {
                        return false;
                    }
                }
            }
            let mut j = 0;
            loop {
                if j == n {
                    return true;
                }
                offs[j] += 1;
                if offs[j] <= 1 {
                    break;
                }
                offs[j] = -1;
                j += 1;
            }
        }
    }

    fn insert(&mut self, x: Vec<f64>) {
        let k = self.key(&x);
        self.grid.entry(k).or_default().push(self.points.len());
        self.points.push(x);
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = dot(v, v).sqrt();
    if !(n > 0.0) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

fn project_out(v: &mut [f64], g: &[f64]) {
    let gg = dot(g, g);
    if gg > 0.0 {
        let c = dot(v, g) / gg;
        v.iter_mut().zip(g).for_each(|(a, b)| *a -= c * b);
    }
}

fn walk(
    cfg: &ChainConfig,
    run: &ManifoldRun,
    start: &[f64],
    walker_seed: u64,
    quota: usize,
) -> Result<ManifoldSolutionSet> {
    let p = run.fixed_prefix.len();
    let n = start.len() - p;
    let log_eps = run.epsilon.ln();
    let mut f = LogG::new(cfg, run.target, &run.fixed_prefix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(walker_seed);
    let mut out = ManifoldSolutionSet::default();
    let mut dedup = Dedup::new(run.min_separation);
    let mut x = start[p..].to_vec();
    let mut dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let max_attempts = quota.saturating_mul(20).max(100);
    let mut misses = 0usize;
    for _ in 0..max_attempts {
        if out.solutions.len() >= quota {
            break;
        }
        let grad = f.gradient(&x);
        let mut v: Vec<f64> = dir
            .iter()
            .map(|d| d + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        project_out(&mut v, &grad);
        if !normalize(&mut v) {
            continue;
        }
        let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + run.step * b).collect();
        let corrected = if inside(&y, run.box_bound) {
            gauss_newton(&mut f, &y, log_eps, run.box_bound).ok()
        } else {
            None
        };
        match corrected {
            Some((z, it)) => {
                misses = 0;
                dir = z.iter().zip(&x).map(|(a, b)| a - b).collect();
                normalize(&mut dir);
                if dedup.is_new(&z) {
                    out.solutions.push(ManifoldSolution {
                        g: f.g(&z),
                        detunings: f.full(&z),
                        walker_seed,
                        iterations: it,
                    });
                    dedup.insert(z.clone());
                }
                x = z;
            }
            None => {
                out.boundary_hits += 1;
                misses += 1;
                // Turn around; after repeated failures jump to a random
                // known solution with a fresh direction.
                dir.iter_mut().for_each(|d| *d = -*d);
                if misses > 4 && !dedup.points.is_empty() {
                    x = dedup.points[rng.random_range(0..dedup.points.len())].clone();
                    dir = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    misses = 0;
                }
            }
        }
    }
    Ok(out)
}

/// Enumerates up to `k_sols_max` distinct level-set points reachable from
/// `seed_solution` (all N detunings). Walkers run in parallel from the same
/// seed point with different random streams and are merged with
/// deduplication, in walker order.
pub fn enumerate_manifold(
    cfg: &ChainConfig,
    run: &ManifoldRun,
    seed_solution: &[f64],
) -> Result<ManifoldSolutionSet> {
    use rayon::prelude::*;
    run.validate(cfg)?;
    if seed_solution.len() != cfg.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_qubits,
            actual: seed_solution.len(),
        });
    }
    let start = refine(cfg, run, seed_solution)?;
    if (start.g / run.epsilon - 1.0).abs() > MANIFOLD_TOL {
        return Err(Error::StepFailed {
            iterations: start.iterations,
            residual: (start.g / run.epsilon).ln().abs(),
        });
    }
    let quota = run.k_sols_max.div_ceil(run.walkers);
    let parts = (0..run.walkers as u64)
        .into_par_iter()
        .map(|w| walk(cfg, run, &start.detunings, run.seed.wrapping_add(w), quota))
        .collect::<Result<Vec<_>>>()?;
    let p = run.fixed_prefix.len();
    let mut dedup = Dedup::new(run.min_separation);
    let mut set = ManifoldSolutionSet::default();
    for part in parts {
        set.boundary_hits += part.boundary_hits;
        for s in part.solutions {
            if set.solutions.len() >= run.k_sols_max {
                break;
            }
            if dedup.is_new(&s.detunings[p..]) {
                dedup.insert(s.detunings[p..].to_vec());
                set.solutions.push(s);
            }
        }
    }
    Ok(set)
}

/// Best-effort minimum of g over the box |Δ_j| ≤ `bound`.
///
/// Multi-start projected gradient descent on ln g with backtracking.
/// Heuristic: the returned value is the best local minimum found.
pub fn min_g_over_box(
    cfg: &ChainConfig,
    channel: Channel,
    bound: f64,
    restarts: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    validate_config(cfg)?;
    if !(bound > 0.0) {
        return Err(Error::InvalidConfig {
            field: "box",
            message: "must be positive".into(),
        });
    }
    if channel == Channel::Reflection && cfg.gamma_r <= 0.0 {
        return Err(Error::Unsupported("no reflected field when gamma_r = 0".into()));
    }
    let n = cfg.n_qubits;
    let mut f = LogG::new(cfg, channel, &[])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for _ in 0..restarts.max(1) {
        let scale = bound * rng.random_range(0.0..1.0f64).powi(2);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        let (v, x) = descend(&mut f, x0, bound);
        if v < best.0 {
            best = (v, x);
        }
    }
    let g = f.g(&best.1);
    Ok((g, best.1))
}

fn descend(f: &mut LogG, mut x: Vec<f64>, bound: f64) -> (f64, Vec<f64>) {
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|a| *a = a.clamp(-bound, bound));
    clamp(&mut x);
    let mut fx = f.eval(&x);
    let mut eta = 0.1 * bound;
    for _ in 0..2000 {
        if !fx.is_finite() || eta < 1e-12 * bound {
            break;
        }
        let grad = f.gradient(&x);
        let gn = dot(&grad, &grad).sqrt();
        if !(gn > 0.0) || !gn.is_finite() {
            break;
        }
        let mut improved = false;
        while eta >= 1e-12 * bound {
            let mut y: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - eta * g / gn).collect();
            clamp(&mut y);
            let fy = f.eval(&y);
            if fy < fx {
                x = y;
                fx = fy;
                eta *= 2.0;
                improved = true;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (fx, x)
}
