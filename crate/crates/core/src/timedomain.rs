//! Weak-drive evolution of the one- and two-excitation amplitudes under a
//! time-dependent coherent input, and time-resolved equal-time correlations.
//!
//! The amplitudes obey
//!   ċ₁ = −iH₁c₁ − iE(t)v₊,   ċ₂ = −iH₂c₂ − iE(t)·lift(c₁),
//! integrated with classical fixed-step RK4 from c₁ = c₂ = 0. The drive
//! carries the spatial phase e^{imφ} on qubit m, so a constant envelope
//! relaxes to E·ψ¹ and E²·ψ² of the steady state.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::correlations::DIVERGENCE_THRESHOLD;
use crate::error::{Error, Result};
use crate::hamiltonian::{build_drive, fill_sector1, fill_sector2, DriveVectors, HopTable};
use crate::linalg::DenseMatrix;
use crate::model::{check_len, config_hash, validate_config, ChainConfig, Channel, CorrelationValue};
use crate::montecarlo::{run_custom, McConfig, McResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// n̄√σ e^{−σ|t−t₀|}, the time profile of a Lorentzian spectrum.
    #[default]
    Lorentzian,
    /// n̄ at all times; the zero-bandwidth surrogate.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Spectral width σ_ω of the input.
    pub bandwidth: f64,
    #[serde(default = "default_amplitude")]
    pub mean_amplitude: f64,
    /// Arrival time t₀ of the pulse peak.
    #[serde(default)]
    pub t0: f64,
    /// Defaults to t₀ − 10/σ_ω.
    #[serde(default)]
    pub t_start: Option<f64>,
    /// Defaults to t₀.
    #[serde(default)]
    pub t_end: Option<f64>,
    pub dt: f64,
    #[serde(default)]
    pub envelope: Envelope,
}

fn default_amplitude() -> f64 {
    0.1
}

impl PulseConfig {
    /// Lorentzian pulse with the default amplitude, t₀ = 0 and the largest
    /// admissible step for `cfg`.
    pub fn lorentzian(cfg: &ChainConfig, bandwidth: f64) -> Self {
        let mut p = Self {
            bandwidth,
            mean_amplitude: default_amplitude(),
            t0: 0.0,
            t_start: None,
            t_end: None,
            dt: 0.0,
            envelope: Envelope::Lorentzian,
        };
        p.dt = p.dt_limit(cfg);
        p
    }

    /// Constant drive switched on at t = 0 and followed until `t_end`.
    pub fn constant(cfg: &ChainConfig, amplitude: f64, t_end: f64) -> Self {
        let mut p = Self {
            bandwidth: 1.0,
            mean_amplitude: amplitude,
            t0: t_end,
            t_start: Some(0.0),
            t_end: Some(t_end),
            dt: 0.0,
            envelope: Envelope::Constant,
        };
        p.dt = p.dt_limit(cfg);
        p
    }

    /// 0.01 / max(1, σ_ω, Γ).
    pub fn dt_limit(&self, cfg: &ChainConfig) -> f64 {
        0.01 / 1f64.max(self.bandwidth).max(cfg.total_decay())
    }

    pub fn start(&self) -> f64 {
        self.t_start.unwrap_or(self.t0 - 10.0 / self.bandwidth)
    }

    pub fn end(&self) -> f64 {
        self.t_end.unwrap_or(self.t0)
    }

    pub fn envelope_at(&self, t: f64) -> f64 {
        match self.envelope {
            Envelope::Lorentzian => {
                self.mean_amplitude * self.bandwidth.sqrt() * (-self.bandwidth * (t - self.t0).abs()).exp()
            }
            Envelope::Constant => self.mean_amplitude,
        }
    }

    pub fn validate(&self, cfg: &ChainConfig) -> Result<()> {
        let bad = |field, message: &str| {
            Err(Error::InvalidConfig {
                field,
                message: message.into(),
            })
        };
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return bad("bandwidth", "must be finite and positive");
        }
        if !(self.mean_amplitude > 0.0) {
            return bad("mean_amplitude", "must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if !(self.end() > self.start()) {
            return bad("t_end", "horizon must have t_end > t_start");
        }
        let limit = self.dt_limit(cfg);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Time grid with step at most `dt` that contains t₀ whenever t₀ lies
    /// inside the horizon (the envelope has a kink there).
    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.start(), self.end());
        let mut knots = vec![a];
        if self.envelope == Envelope::Lorentzian && self.t0 > a && self.t0 < b {
            knots.push(self.t0);
        }
        knots.push(b);
        let mut out = vec![a];
        for w in knots.windows(2) {
            let n = ((w[1] - w[0]) / self.dt).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / n as f64;
            for k in 1..n {
                out.push(w[0] + k as f64 * h);
            }
            out.push(w[1]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    pub c1: Vec<Vec<C64>>,
    pub c2: Vec<Vec<C64>>,
}

impl AmplitudeTrajectory {
    /// Index of the grid point closest to `tau`.
    pub fn index_of(&self, tau: f64) -> Result<usize> {
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        let slack = 1e-9 * (1.0 + first.abs().max(last.abs()));
        if tau < first - slack || tau > last + slack {
            return Err(Error::InvalidConfig {
                field: "tau",
                message: format!("{tau} lies outside the horizon [{first}, {last}]"),
            });
        }
        let i = self.times.partition_point(|&t| t < tau);
        Ok(match i {
            0 => 0,
            i if i == self.times.len() => i - 1,
            i if (self.times[i] - tau).abs() < (tau - self.times[i - 1]).abs() => i,
            i => i - 1,
        })
    }

    pub fn max_c1(&self) -> f64 {
        self.c1
            .iter()
            .flat_map(|v| v.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    /// CSV with columns t, |c1_1|..|c1_N|, g_T, g_R (g_R empty when γ_R = 0;
    /// divergent values written as "inf").
    pub fn write_csv<W: Write>(
        &self,
        cfg: &ChainConfig,
        pulse: &PulseConfig,
        header_comment: &str,
        mut w: W,
    ) -> Result<()> {
        if !header_comment.is_empty() {
            writeln!(w, "# {header_comment}")?;
        }
        let mut head = vec!["t".to_string()];
        head.extend((1..=cfg.n_qubits).map(|m| format!("abs_c1_{m}")));
        head.push("g_t".into());
        head.push("g_r".into());
        writeln!(w, "{}", head.join(","))?;
        let amps = OutputAmplitudes::new(cfg);
        for (k, &t) in self.times.iter().enumerate() {
            let e = pulse.envelope_at(t);
            let mut row = vec![format!("{t:.12e}")];
            row.extend(self.c1[k].iter().map(|z| format!("{:.12e}", z.norm())));
            let gt = amps.g(Channel::Transmission, e, &self.c1[k], &self.c2[k]);
            row.push(fmt_g(gt));
            row.push(if cfg.gamma_r > 0.0 {
                fmt_g(amps.g(Channel::Reflection, e, &self.c1[k], &self.c2[k]))
            } else {
                String::new()
            });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn fmt_g(v: CorrelationValue) -> String {
    match v {
        CorrelationValue::Finite(x) => format!("{x:.12e}"),
        CorrelationValue::Divergent => "inf".into(),
    }
}

/// Phase tables for building output amplitudes from c₁, c₂.
#[derive(Debug, Clone)]
struct OutputAmplitudes {
    sqrt_gt: f64,
    gt: f64,
    /// e^{imφ}, m = 1..N.
    ph1: Vec<C64>,
    /// e^{i(m+n)φ} in pair order.
    ph2: Vec<C64>,
}

impl OutputAmplitudes {
    fn new(cfg: &ChainConfig) -> Self {
        let ph1 = (1..=cfg.n_qubits).map(|m| cfg.phase_factor(m as f64)).collect();
        let ph2 = crate::model::PairIndex::new(cfg.n_qubits)
            .pairs()
            .map(|(m, n)| cfg.phase_factor((m + n) as f64))
            .collect();
        Self {
            sqrt_gt: cfg.gamma_t.sqrt(),
            gt: cfg.gamma_t,
            ph1,
            ph2,
        }
    }

    fn g(&self, channel: Channel, e: f64, c1: &[C64], c2: &[C64]) -> CorrelationValue {
        let i = C64::i();
        let (a1, a2) = match channel {
            Channel::Transmission => {
                let s1: C64 = self.ph1.iter().zip(c1).map(|(p, c)| p.conj() * c).sum();
                let s2: C64 = self.ph2.iter().zip(c2).map(|(p, c)| p.conj() * c).sum();
                let a1 = e - i * self.sqrt_gt * s1;
                let a2 = e * e - 2.0 * i * e * self.sqrt_gt * s1 - 2.0 * self.gt * s2;
                (a1, a2)
            }
            Channel::Reflection => {
                // The reflected field has no free part; the coupling scale
                // cancels in the ratio.
                let s1: C64 = self.ph1.iter().zip(c1).map(|(p, c)| p * c).sum();
                let s2: C64 = self.ph2.iter().zip(c2).map(|(p, c)| p * c).sum();
                (-i * s1, -2.0 * s2)
            }
        };
        let d = a1.norm();
        if d < DIVERGENCE_THRESHOLD {
            return CorrelationValue::Divergent;
        }
        CorrelationValue::Finite(a2.norm_sqr() / (d * d * d * d))
    }
}

/// Allocation-free RK4 integrator for one configuration.
#[derive(Debug, Clone)]
pub struct TimeEvolver {
    cfg: ChainConfig,
    hops: HopTable,
    drive: DriveVectors,
    amps: OutputAmplitudes,
    h1: DenseMatrix,
    h2: DenseMatrix,
    c1: Vec<C64>,
    c2: Vec<C64>,
    k1: [Vec<C64>; 4],
    k2: [Vec<C64>; 4],
    t1: Vec<C64>,
    t2: Vec<C64>,
    lift: Vec<C64>,
}

impl TimeEvolver {
    pub fn new(cfg: &ChainConfig) -> Result<Self> {
        validate_config(cfg)?;
        let n = cfg.n_qubits;
        let m = n * n.saturating_sub(1) / 2;
        let z1 = vec![C64::new(0.0, 0.0); n];
        let z2 = vec![C64::new(0.0, 0.0); m];
        Ok(Self {
            cfg: *cfg,
            hops: HopTable::new(cfg),
            drive: build_drive(cfg),
            amps: OutputAmplitudes::new(cfg),
            h1: DenseMatrix::zeros(n),
            h2: DenseMatrix::zeros(m),
            c1: z1.clone(),
            c2: z2.clone(),
            k1: [z1.clone(), z1.clone(), z1.clone(), z1.clone()],
            k2: [z2.clone(), z2.clone(), z2.clone(), z2.clone()],
            t1: z1,
            t2: z2.clone(),
            lift: z2,
        })
    }

    fn set_sample(&mut self, delta: &[f64]) -> Result<()> {
        check_len(delta, self.cfg.n_qubits)?;
        fill_sector1(&self.hops, delta, &mut self.h1);
        fill_sector2(&self.hops, delta, &mut self.h2);
        self.c1.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        self.c2.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        Ok(())
    }

    /// Right-hand side at amplitudes (x1, x2) and envelope e, into (o1, o2).
    fn rhs(
        h1: &DenseMatrix,
        h2: &DenseMatrix,
        drive: &DriveVectors,
        lift: &mut Vec<C64>,
        e: f64,
        x1: &[C64],
        x2: &[C64],
        o1: &mut [C64],
        o2: &mut [C64],
    ) {
        let mi = C64::new(0.0, -1.0);
        let n = x1.len();
        let a = h1.as_slice();
        for r in 0..n {
            let s: C64 = a[r * n..(r + 1) * n].iter().zip(x1).map(|(h, x)| h * x).sum();
            o1[r] = mi * (s + e * drive.v_plus[r]);
        }
        let m = x2.len();
        if m == 0 {
            return;
        }
        drive.lift_into(x1, lift);
        let b = h2.as_slice();
        for r in 0..m {
            let s: C64 = b[r * m..(r + 1) * m].iter().zip(x2).map(|(h, x)| h * x).sum();
            o2[r] = mi * (s + e * lift[r]);
        }
    }

    fn step(&mut self, pulse: &PulseConfig, t: f64, h: f64) {
        let e0 = pulse.envelope_at(t);
        let em = pulse.envelope_at(t + 0.5 * h);
        let e1 = pulse.envelope_at(t + h);
        let es = [e0, em, em, e1];
        let coef = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                self.t1.copy_from_slice(&self.c1);
                self.t2.copy_from_slice(&self.c2);
            } else {
                let c = coef[s] * h;
                for (i, t) in self.t1.iter_mut().enumerate() {
                    *t = self.c1[i] + c * self.k1[s - 1][i];
                }
                for (i, t) in self.t2.iter_mut().enumerate() {
                    *t = self.c2[i] + c * self.k2[s - 1][i];
                }
            }
            let (k1s, k2s) = (&mut self.k1[s], &mut self.k2[s]);
            Self::rhs(&self.h1, &self.h2, &self.drive, &mut self.lift, es[s], &self.t1, &self.t2, k1s, k2s);
        }
        let w = h / 6.0;
        for i in 0..self.c1.len() {
            self.c1[i] += w * (self.k1[0][i] + 2.0 * self.k1[1][i] + 2.0 * self.k1[2][i] + self.k1[3][i]);
        }
        for i in 0..self.c2.len() {
            self.c2[i] += w * (self.k2[0][i] + 2.0 * self.k2[1][i] + 2.0 * self.k2[2][i] + self.k2[3][i]);
        }
    }

    /// Integrates over the pulse grid, recording every grid point.
    pub fn evolve(&mut self, delta: &[f64], pulse: &PulseConfig) -> Result<AmplitudeTrajectory> {
        pulse.validate(&self.cfg)?;
        self.set_sample(delta)?;
        let grid = pulse.grid();
        let mut traj = AmplitudeTrajectory {
            times: Vec::with_capacity(grid.len()),
            c1: Vec::with_capacity(grid.len()),
            c2: Vec::with_capacity(grid.len()),
        };
        traj.times.push(grid[0]);
        traj.c1.push(self.c1.clone());
        traj.c2.push(self.c2.clone());
        for w in grid.windows(2) {
            self.step(pulse, w[0], w[1] - w[0]);
            traj.times.push(w[1]);
            traj.c1.push(self.c1.clone());
            traj.c2.push(self.c2.clone());
        }
        Ok(traj)
    }

    /// Integrates up to the grid point nearest `tau` without storing the
    /// trajectory and returns the correlation there.
    pub fn g_at(&mut self, delta: &[f64], pulse: &PulseConfig, tau: f64, channel: Channel) -> Result<CorrelationValue> {
        pulse.validate(&self.cfg)?;
        if channel == Channel::Reflection && self.cfg.gamma_r <= 0.0 {
            return Err(Error::Unsupported("no reflected field when gamma_r = 0".into()));
        }
        self.set_sample(delta)?;
        let grid = pulse.grid();
        let (first, last) = (grid[0], *grid.last().unwrap());
        if tau < first || tau > last {
            return Err(Error::InvalidConfig {
                field: "tau",
                message: format!("{tau} lies outside the horizon [{first}, {last}]"),
            });
        }
        let mut t_now = grid[0];
        for w in grid.windows(2) {
            if (w[0] - tau).abs() <= (w[1] - tau).abs() {
                break;
            }
            self.step(pulse, w[0], w[1] - w[0]);
            t_now = w[1];
        }
        Ok(self.amps.g(channel, pulse.envelope_at(t_now), &self.c1, &self.c2))
    }

    pub fn amplitudes(&self) -> (&[C64], &[C64]) {
        (&self.c1, &self.c2)
    }
}

pub fn evolve(cfg: &ChainConfig, delta: &[f64], pulse: &PulseConfig) -> Result<AmplitudeTrajectory> {
    TimeEvolver::new(cfg)?.evolve(delta, pulse)
}

/// Equal-time correlation of the output at grid time `tau`.
pub fn g_at_time(
    cfg: &ChainConfig,
    traj: &AmplitudeTrajectory,
    tau: f64,
    channel: Channel,
    pulse: &PulseConfig,
) -> Result<CorrelationValue> {
    if channel == Channel::Reflection && cfg.gamma_r <= 0.0 {
        return Err(Error::Unsupported("no reflected field when gamma_r = 0".into()));
    }
    let k = traj.index_of(tau)?;
    let amps = OutputAmplitudes::new(cfg);
    Ok(amps.g(channel, pulse.envelope_at(traj.times[k]), &traj.c1[k], &traj.c2[k]))
}

/// Disorder average of g(τ, τ) under the pulse, one trajectory per sample.
pub fn run_disorder(
    cfg: &ChainConfig,
    mc: &McConfig,
    pulse: &PulseConfig,
    tau: f64,
) -> Result<McResult> {
    pulse.validate(cfg)?;
    if mc.channel == Channel::Reflection && cfg.gamma_r <= 0.0 {
        return Err(Error::Unsupported("no reflected field when gamma_r = 0".into()));
    }
    let hash = config_hash(&(cfg, mc, pulse, tau));
    run_custom(
        cfg.n_qubits,
        mc,
        hash,
        || TimeEvolver::new(cfg),
        |te, delta| te.g_at(delta, pulse, tau, mc.channel),
    )
}
