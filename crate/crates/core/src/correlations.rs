//! Truncated steady state and the zero-delay correlations g_T and g_R.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hamiltonian::{
    build_drive, build_projections, fill_sector1, fill_sector2, inner, DriveVectors, HopTable,
    sparse_sector2, ProjectionVectors, SectorOneMatrix, SectorTwoMatrix, N_DENSE,
};
use crate::linalg::{CsrMatrix, DenseMatrix, LuWorkspace, Singular};
use crate::model::{check_len, validate_config, Channel, ChainConfig, CorrelationValue, DisorderSample};

/// Amplitude magnitude below which a correlation is reported divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-14;

/// Leading-order one- and two-excitation amplitudes of the driven chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSteadyState {
    pub psi1: Vec<C64>,
    /// Pair amplitudes in pair-index order; empty for a single qubit.
    pub psi2: Vec<C64>,
}

fn singular(sector: u8) -> impl Fn(Singular) -> Error {
    move |s| Error::SingularSector {
        sector,
        condition: s.condition,
    }
}

/// Solves H1 ψ¹ = −v₊ and H2 ψ² = −H₊ψ¹. `h2` may be `None` for N = 1.
pub fn solve_steady_state(
    h1: &SectorOneMatrix,
    h2: Option<&SectorTwoMatrix>,
    drive: &DriveVectors,
) -> Result<TruncatedSteadyState> {
    let n = h1.0.dim();
    if drive.v_plus.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: drive.v_plus.len(),
        });
    }
    let mut lu = LuWorkspace::new();
    let mut scratch = Vec::new();
    lu.factor(n, h1.0.as_slice()).map_err(singular(1))?;
    let mut psi1: Vec<C64> = drive.v_plus.iter().map(|v| -v).collect();
    lu.solve_in_place(&mut psi1, &mut scratch);

    let mut psi2 = Vec::new();
    if let Some(h2) = h2 {
        let dim = n * n.saturating_sub(1) / 2;
        if h2.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: h2.dim(),
            });
        }
        drive.lift_into(&psi1, &mut psi2);
        psi2.iter_mut().for_each(|z| *z = -*z);
        match h2 {
            SectorTwoMatrix::Dense(d) => {
                lu.factor(dim, d.as_slice()).map_err(singular(2))?;
                lu.solve_in_place(&mut psi2, &mut scratch);
            }
            SectorTwoMatrix::Sparse(s) => solve_sparse(s, &mut psi2, &mut lu, &mut scratch)?,
        }
    } else if n >= 2 {
        return Err(Error::DimensionMismatch {
            expected: n * (n - 1) / 2,
            actual: 0,
        });
    }
    Ok(TruncatedSteadyState { psi1, psi2 })
}

/// Uses substitution when the matrix is triangular (chiral chains) and falls
/// back to a dense factorization otherwise.
fn solve_sparse(
    s: &CsrMatrix,
    b: &mut [C64],
    lu: &mut LuWorkspace,
    scratch: &mut Vec<C64>,
) -> Result<()> {
    if s.is_lower_triangular() {
        s.solve_lower_in_place(b).map_err(singular(2))?;
    } else if s.is_upper_triangular() {
        s.solve_upper_in_place(b).map_err(singular(2))?;
    } else {
        let d = s.to_dense();
        lu.factor(d.dim(), d.as_slice()).map_err(singular(2))?;
        lu.solve_in_place(b, scratch);
    }
    Ok(())
}

/// Transmission and reflection correlations from a steady state.
pub fn correlations_from_state(
    state: &TruncatedSteadyState,
    proj: &ProjectionVectors,
) -> (CorrelationValue, CorrelationValue) {
    (
        transmission_from_state(state, proj),
        reflection_from_state(state, proj),
    )
}

pub fn transmission_from_state(state: &TruncatedSteadyState, proj: &ProjectionVectors) -> CorrelationValue {
    let a1 = inner(&proj.phi1_plus, &state.psi1);
    let a2 = inner(&proj.phi2_plus, &state.psi2);
    let i = C64::i();
    let den = (C64::new(1.0, 0.0) - i * a1).norm();
    if den < DIVERGENCE_THRESHOLD {
        return CorrelationValue::Divergent;
    }
    let num = (C64::new(1.0, 0.0) - 2.0 * i * a1 - a2).norm_sqr();
    CorrelationValue::Finite(num / (den * den * den * den))
}

pub fn reflection_from_state(state: &TruncatedSteadyState, proj: &ProjectionVectors) -> CorrelationValue {
    let a1 = inner(&proj.phi1_minus, &state.psi1).norm();
    if a1 < DIVERGENCE_THRESHOLD {
        return CorrelationValue::Divergent;
    }
    let a2 = inner(&proj.phi2_minus, &state.psi2).norm_sqr();
    CorrelationValue::Finite(a2 / (a1 * a1 * a1 * a1))
}

/// Reusable per-thread evaluator. Holds the configuration-dependent vectors
/// and the matrix and factorization buffers, so repeated evaluations for
/// different disorder samples do not allocate.
#[derive(Debug, Clone)]
pub struct Evaluator {
    cfg: ChainConfig,
    hops: HopTable,
    drive: DriveVectors,
    proj: ProjectionVectors,
    h1: DenseMatrix,
    h2: DenseMatrix,
    lu: LuWorkspace,
    scratch: Vec<C64>,
    state: TruncatedSteadyState,
}

impl Evaluator {
    pub fn new(cfg: &ChainConfig) -> Result<Self> {
        validate_config(cfg)?;
        Ok(Self {
            cfg: *cfg,
            hops: HopTable::new(cfg),
            drive: build_drive(cfg),
            proj: build_projections(cfg),
            h1: DenseMatrix::zeros(0),
            h2: DenseMatrix::zeros(0),
            lu: LuWorkspace::new(),
            scratch: Vec::new(),
            state: TruncatedSteadyState {
                psi1: Vec::new(),
                psi2: Vec::new(),
            },
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    /// Exchanges the two output projections. Only used to demonstrate that
    /// the anchor checks catch a conjugated phase convention.
    #[doc(hidden)]
    pub fn swap_output_phases(&mut self) {
        std::mem::swap(&mut self.proj.phi1_plus, &mut self.proj.phi1_minus);
        std::mem::swap(&mut self.proj.phi2_plus, &mut self.proj.phi2_minus);
    }

    /// Solves for the steady state of one disorder sample.
    pub fn solve(&mut self, delta: &[f64]) -> Result<&TruncatedSteadyState> {
        let n = self.cfg.n_qubits;
        check_len(delta, n)?;
        fill_sector1(&self.hops, delta, &mut self.h1);
        self.lu.factor(n, self.h1.as_slice()).map_err(singular(1))?;
        let psi1 = &mut self.state.psi1;
        psi1.clear();
        psi1.extend(self.drive.v_plus.iter().map(|v| -v));
        self.lu.solve_in_place(psi1, &mut self.scratch);

        let psi2 = &mut self.state.psi2;
        self.drive.lift_into(psi1, psi2);
        psi2.iter_mut().for_each(|z| *z = -*z);
        if n < 2 {
            return Ok(&self.state);
        }
        let unidirectional = self.cfg.gamma_r == 0.0 || self.cfg.gamma_t == 0.0;
        if n <= N_DENSE && !unidirectional {
            fill_sector2(&self.hops, delta, &mut self.h2);
            self.lu
                .factor(psi2.len(), self.h2.as_slice())
                .map_err(singular(2))?;
            self.lu.solve_in_place(psi2, &mut self.scratch);
        } else {
            let h2 = sparse_sector2(&self.hops, delta);
            solve_sparse(&h2, psi2, &mut self.lu, &mut self.scratch)?;
        }
        Ok(&self.state)
    }

    pub fn state(&self) -> &TruncatedSteadyState {
        &self.state
    }

    pub fn g(&mut self, delta: &[f64], channel: Channel) -> Result<CorrelationValue> {
        if channel == Channel::Reflection {
            self.require_reflection()?;
        }
        self.solve(delta)?;
        Ok(match channel {
            Channel::Transmission => transmission_from_state(&self.state, &self.proj),
            Channel::Reflection => reflection_from_state(&self.state, &self.proj),
        })
    }

    /// Both correlations from one solve; reflection is `None` when γ_R = 0.
    pub fn g_both(&mut self, delta: &[f64]) -> Result<(CorrelationValue, Option<CorrelationValue>)> {
        self.solve(delta)?;
        let t = transmission_from_state(&self.state, &self.proj);
        let r = (self.cfg.gamma_r > 0.0).then(|| reflection_from_state(&self.state, &self.proj));
        Ok((t, r))
    }

    fn require_reflection(&self) -> Result<()> {
        if self.cfg.gamma_r > 0.0 {
            Ok(())
        } else {
            Err(Error::Unsupported(
                "no reflected field when gamma_r = 0".into(),
            ))
        }
    }
}

pub fn g_transmission(cfg: &ChainConfig, sample: &DisorderSample) -> Result<CorrelationValue> {
    Evaluator::new(cfg)?.g(sample.detunings(), Channel::Transmission)
}

pub fn g_reflection(cfg: &ChainConfig, sample: &DisorderSample) -> Result<CorrelationValue> {
    Evaluator::new(cfg)?.g(sample.detunings(), Channel::Reflection)
}

pub fn g_channel(cfg: &ChainConfig, sample: &DisorderSample, channel: Channel) -> Result<CorrelationValue> {
    Evaluator::new(cfg)?.g(sample.detunings(), channel)
}

/// Correlation of the clean chain (all detunings zero).
pub fn g_clean(cfg: &ChainConfig, channel: Channel) -> Result<CorrelationValue> {
    g_channel(cfg, &DisorderSample::zeros(cfg.n_qubits), channel)
}

/// Steady state in which every emitted photon leaves without being
/// reabsorbed: ψ̃¹_m = −√γ_T e^{imφ} a_m and ψ̃²_mn = γ_T e^{i(m+n)φ} a_m a_n,
/// with a_m = 1/(Δ_m − iΓ/2).
pub fn noninteracting_state(cfg: &ChainConfig, sample: &DisorderSample) -> Result<TruncatedSteadyState> {
    validate_config(cfg)?;
    check_len(sample.detunings(), cfg.n_qubits)?;
    let a = resolvent_diag(cfg, sample.detunings());
    let s = cfg.gamma_t.sqrt();
    let psi1 = a
        .iter()
        .enumerate()
        .map(|(k, &am)| -s * cfg.phase_factor((k + 1) as f64) * am)
        .collect();
    let psi2 = crate::model::PairIndex::new(cfg.n_qubits)
        .pairs()
        .map(|(m, n)| cfg.gamma_t * cfg.phase_factor((m + n) as f64) * a[m - 1] * a[n - 1])
        .collect();
    Ok(TruncatedSteadyState { psi1, psi2 })
}

fn resolvent_diag(cfg: &ChainConfig, delta: &[f64]) -> Vec<C64> {
    let half = 0.5 * cfg.total_decay();
    delta.iter().map(|&d| C64::new(d, -half).inv()).collect()
}

/// Correlation of the non-interacting-path approximation, evaluated from
/// the closed sums without any matrix solve.
pub fn g_noninteracting(cfg: &ChainConfig, sample: &DisorderSample, channel: Channel) -> Result<CorrelationValue> {
    validate_config(cfg)?;
    check_len(sample.detunings(), cfg.n_qubits)?;
    let mut ev = NoninteractingEvaluator::new(cfg)?;
    ev.g(sample.detunings(), channel)
}

/// Allocation-free evaluator for [`g_noninteracting`].
#[derive(Debug, Clone)]
pub struct NoninteractingEvaluator {
    gamma_t: f64,
    half_decay: f64,
    reflection: bool,
    /// e^{2imφ}, m = 1..N.
    twice_phase: Vec<C64>,
}

impl NoninteractingEvaluator {
    pub fn new(cfg: &ChainConfig) -> Result<Self> {
        validate_config(cfg)?;
        Ok(Self {
            gamma_t: cfg.gamma_t,
            half_decay: 0.5 * cfg.total_decay(),
            reflection: cfg.gamma_r > 0.0,
            twice_phase: (1..=cfg.n_qubits)
                .map(|m| cfg.phase_factor(2.0 * m as f64))
                .collect(),
        })
    }

    pub fn g(&mut self, delta: &[f64], channel: Channel) -> Result<CorrelationValue> {
        check_len(delta, self.twice_phase.len())?;
        match channel {
            Channel::Transmission => Ok(self.transmission(delta)),
            Channel::Reflection if self.reflection => Ok(self.reflection(delta)),
            Channel::Reflection => Err(Error::Unsupported(
                "no reflected field when gamma_r = 0".into(),
            )),
        }
    }

    /// |1 + 2iγ_T Σa − 2γ_T² Σ_{m>n} a_m a_n|² / |1 + iγ_T Σa|⁴.
    pub fn transmission(&self, delta: &[f64]) -> CorrelationValue {
        let (sum, pairs) = self.sums(delta, |_| C64::new(1.0, 0.0));
        let g = self.gamma_t;
        let i = C64::i();
        let den = (1.0 + i * g * sum).norm();
        if den < DIVERGENCE_THRESHOLD {
            return CorrelationValue::Divergent;
        }
        let num = (1.0 + 2.0 * i * g * sum - 2.0 * g * g * pairs).norm_sqr();
        CorrelationValue::Finite(num / (den * den * den * den))
    }

    /// |2 Σ_{m>n} e^{2i(m+n)φ} a_m a_n|² / |Σ e^{2imφ} a_m|⁴.
    pub fn reflection(&self, delta: &[f64]) -> CorrelationValue {
        let (sum, pairs) = self.sums(delta, |m| self.twice_phase[m]);
        // The common γ_T scale of the two projections cancels; it only sets
        // the absolute size compared against the divergence threshold.
        let den = (self.gamma_t * sum).norm();
        if den < DIVERGENCE_THRESHOLD {
            return CorrelationValue::Divergent;
        }
        let num = (2.0 * pairs).norm_sqr();
        let s = sum.norm();
        CorrelationValue::Finite(num / (s * s * s * s))
    }

    /// Σ_m b_m and Σ_{m>n} b_m b_n with b_m = w(m)/(Δ_m − iΓ/2), the pair sum
    /// accumulated against running prefix sums.
    #[inline]
    fn sums(&self, delta: &[f64], w: impl Fn(usize) -> C64) -> (C64, C64) {
        let mut sum = C64::new(0.0, 0.0);
        let mut pairs = C64::new(0.0, 0.0);
        for (m, &d) in delta.iter().enumerate() {
            let b = w(m) * C64::new(d, -self.half_decay).inv();
            pairs += b * sum;
            sum += b;
        }
        (sum, pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn finite(v: CorrelationValue) -> f64 {
        v.finite().expect("finite correlation")
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn single_qubit_amplitude() {
        let cfg = ChainConfig::symmetric(1, 0.0);
        let mut ev = Evaluator::new(&cfg).unwrap();
        let psi = ev.solve(&[0.8]).unwrap().psi1[0];
        let expect = -(0.5f64.sqrt()) / C64::new(0.8, -0.5);
        assert!((psi - expect).norm() < 1e-15);
    }

    #[test]
    fn single_qubit_transmission() {
        let cfg = ChainConfig::symmetric(1, 0.0);
        let g = finite(g_transmission(&cfg, &DisorderSample::new(vec![0.5])).unwrap());
        assert!(rel(g, 4.0) < 1e-12);
        assert!(g_transmission(&cfg, &DisorderSample::zeros(1)).unwrap().is_divergent());
    }

    #[test]
    fn single_qubit_reflection_is_zero() {
        let cfg = ChainConfig::symmetric(1, 0.0);
        for d in [-3.0, 0.0, 0.1, 7.0] {
            let g = g_reflection(&cfg, &DisorderSample::new(vec![d])).unwrap();
            assert_eq!(g, CorrelationValue::Finite(0.0));
        }
    }

    #[test]
    fn lossy_single_qubit_on_resonance_is_perfectly_antibunched() {
        let cfg = ChainConfig::symmetric(1, 0.0).with_gamma_nw(1.0);
        let g = finite(g_transmission(&cfg, &DisorderSample::zeros(1)).unwrap());
        assert!(g.abs() < 1e-15);
    }

    #[test]
    fn clean_pair_reflection_is_coherent() {
        for phi in [0.1, 0.3, 1.0, PI / 2.0, 2.5] {
            let g = finite(g_clean(&ChainConfig::symmetric(2, phi), Channel::Reflection).unwrap());
            assert!(rel(g, 1.0) < 1e-10, "phi={phi} g={g}");
        }
    }

    #[test]
    fn clean_pair_at_zero_phase_is_singular() {
        let r = g_clean(&ChainConfig::symmetric(2, 0.0), Channel::Reflection);
        assert!(matches!(r, Err(Error::SingularSector { sector: 1, .. })));
    }

    #[test]
    fn table_anchor() {
        let cfg = ChainConfig::symmetric(3, 0.04 * PI);
        let s = DisorderSample::new(vec![0.148134188883455, -0.055253952848190, 0.144762975264912]);
        let g = finite(g_transmission(&cfg, &s).unwrap());
        assert!((g / 1e-10 - 1.0).abs() < 0.1, "g={g}");
    }

    #[test]
    fn residuals_are_small() {
        let cfg = ChainConfig::symmetric(2, PI / 2.0);
        let sample = DisorderSample::zeros(2);
        let h1 = crate::hamiltonian::build_sector1(&cfg, &sample).unwrap();
        let h2 = crate::hamiltonian::build_sector2(&cfg, &sample).unwrap();
        let drive = build_drive(&cfg);
        let st = solve_steady_state(&h1, Some(&h2), &drive).unwrap();
        let r1: Vec<C64> = h1.0.mul_vec(&st.psi1).iter().zip(&drive.v_plus).map(|(a, b)| a + b).collect();
        let lift = drive.lift(&st.psi1);
        let r2: Vec<C64> = h2.mul_vec(&st.psi2).iter().zip(&lift).map(|(a, b)| a + b).collect();
        assert!(crate::linalg::norm2(&r1) < 1e-10);
        assert!(crate::linalg::norm2(&r2) < 1e-10);
    }

    #[test]
    fn clean_transmission_diverges() {
        for n in 1..=8 {
            for phi in [0.0, 0.1 * PI, 0.4 * PI, 0.5 * PI] {
                match g_clean(&ChainConfig::symmetric(n, phi), Channel::Transmission) {
                    Ok(v) => assert!(v.is_divergent(), "n={n} phi={phi}: {v:?}"),
                    Err(Error::SingularSector { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn clean_reflection_bunching_and_antibunching() {
        for n in 3..=10 {
            let g = finite(g_clean(&ChainConfig::symmetric(n, 0.4 * PI), Channel::Reflection).unwrap());
            assert!(g < 1.0, "n={n} g={g}");
        }
        let g = finite(g_clean(&ChainConfig::symmetric(5, 0.1 * PI), Channel::Reflection).unwrap());
        assert!(g > 1.0);
    }

    #[test]
    fn reflection_needs_backward_coupling() {
        let cfg = ChainConfig::new(3, 0.2, 1.0, 0.0, 0.0);
        assert!(matches!(
            g_reflection(&cfg, &DisorderSample::new(vec![0.1, 0.2, 0.3])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn noninteracting_transmission_zero() {
        // In a three-qubit chain a pair detuned by ±1/2 cancels the
        // two-photon amplitude whatever the third qubit does.
        for (d3, phi) in [(0.0, 0.0), (0.8, 0.9), (-2.5, 0.2)] {
            let cfg = ChainConfig::symmetric(3, phi);
            let s = DisorderSample::new(vec![0.5, -0.5, d3]);
            let g = finite(g_noninteracting(&cfg, &s, Channel::Transmission).unwrap());
            assert!(g < 1e-28, "d3={d3} g={g}");
        }
    }

    #[test]
    fn noninteracting_transmission_pair_alone_is_indeterminate() {
        // For two qubits the same detunings also cancel the single-photon
        // amplitude, so the ratio is 0/0 and reported as divergent.
        let cfg = ChainConfig::symmetric(2, 0.0);
        let g = g_noninteracting(&cfg, &DisorderSample::new(vec![0.5, -0.5]), Channel::Transmission).unwrap();
        assert!(g.is_divergent());
    }

    #[test]
    fn noninteracting_transmission_ignores_phase() {
        let s = DisorderSample::new(vec![0.3, -1.2, 0.7, 2.2]);
        let a = g_noninteracting(&ChainConfig::symmetric(4, 0.0), &s, Channel::Transmission).unwrap();
        let b = g_noninteracting(&ChainConfig::symmetric(4, 0.3 * PI), &s, Channel::Transmission).unwrap();
        assert!(rel(finite(a), finite(b)) < 1e-13);
    }

    #[test]
    fn noninteracting_sums_match_state() {
        let cfg = ChainConfig::new(5, 0.77, 0.6, 0.4, 0.3);
        let s = DisorderSample::new(vec![0.3, -1.2, 0.7, 2.2, -0.05]);
        let st = noninteracting_state(&cfg, &s).unwrap();
        let proj = build_projections(&cfg);
        let (t, r) = correlations_from_state(&st, &proj);
        let t2 = g_noninteracting(&cfg, &s, Channel::Transmission).unwrap();
        let r2 = g_noninteracting(&cfg, &s, Channel::Reflection).unwrap();
        assert!(rel(finite(t), finite(t2)) < 1e-12);
        assert!(rel(finite(r), finite(r2)) < 1e-12);
    }

    #[test]
    fn noninteracting_state_is_first_order_in_hopping() {
        // With vanishing couplings between qubits the exact and
        // non-interacting amplitudes coincide for a single qubit.
        let cfg = ChainConfig::new(1, 0.4, 0.7, 0.2, 0.1);
        let s = DisorderSample::new(vec![0.35]);
        let exact = Evaluator::new(&cfg).unwrap().solve(&[0.35]).unwrap().clone();
        let approx = noninteracting_state(&cfg, &s).unwrap();
        assert!((exact.psi1[0] - approx.psi1[0]).norm() < 1e-15);
    }
}
