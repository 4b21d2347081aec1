//! Single- and two-excitation sectors of the non-Hermitian effective
//! Hamiltonian, drive and projection vectors, and a full-space oracle.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::model::{check_len, pair_index_unchecked, validate_config, ChainConfig, DisorderSample, PairIndex};

/// Sector-2 matrices are stored densely up to this chain length.
pub const N_DENSE: usize = 64;

/// Largest chain accepted by [`brute_force_heff`].
pub const BRUTE_FORCE_MAX_N: usize = 12;

/// Hopping amplitudes between qubits, computed once per configuration.
///
/// `fwd[d]` is the coefficient for an excitation moving from qubit n to
/// qubit n+d, `bwd[d]` for moving from n+d to n.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HopTable {
    pub fwd: Vec<C64>,
    pub bwd: Vec<C64>,
    pub diag_decay: f64,
}

impl HopTable {
    pub fn new(cfg: &ChainConfig) -> Self {
        let n = cfg.n_qubits;
        let mut fwd = Vec::with_capacity(n);
        let mut bwd = Vec::with_capacity(n);
        for d in 0..n {
            let ph = cfg.phase_factor(d as f64);
            fwd.push(C64::new(0.0, -cfg.gamma_t) * ph);
            bwd.push(C64::new(0.0, -cfg.gamma_r) * ph);
        }
        Self {
            fwd,
            bwd,
            diag_decay: cfg.total_decay(),
        }
    }

    /// ⟨m|H|n⟩ for m ≠ n (1-based qubit labels).
    #[inline]
    pub fn hop(&self, m: usize, n: usize) -> C64 {
        if m > n {
            self.fwd[m - n]
        } else {
            self.bwd[n - m]
        }
    }
}

/// Dense N×N single-excitation block.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorOneMatrix(pub DenseMatrix);

impl SectorOneMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Two-excitation block over the pair basis of [`PairIndex`].
#[derive(Debug, Clone, PartialEq)]
pub enum SectorTwoMatrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl SectorTwoMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SectorTwoMatrix::Dense(d) => d.dim(),
            SectorTwoMatrix::Sparse(s) => s.dim(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match self {
            SectorTwoMatrix::Dense(d) => d.get(i, j),
            SectorTwoMatrix::Sparse(s) => s.get(i, j),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            SectorTwoMatrix::Dense(d) => d.clone(),
            SectorTwoMatrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        match self {
            SectorTwoMatrix::Dense(d) => d.mul_vec(x),
            SectorTwoMatrix::Sparse(s) => s.mul_vec(x),
        }
    }
}

pub fn build_sector1(cfg: &ChainConfig, sample: &DisorderSample) -> Result<SectorOneMatrix> {
    validate_config(cfg)?;
    check_len(sample.detunings(), cfg.n_qubits)?;
    let mut m = DenseMatrix::zeros(cfg.n_qubits);
    fill_sector1(&HopTable::new(cfg), sample.detunings(), &mut m);
    Ok(SectorOneMatrix(m))
}

pub(crate) fn fill_sector1(hops: &HopTable, delta: &[f64], out: &mut DenseMatrix) {
    let n = delta.len();
    out.reset(n);
    let half = -0.5 * hops.diag_decay;
    let a = out.as_mut_slice();
    for m in 0..n {
        for q in 0..n {
            a[m * n + q] = if m == q {
                C64::new(delta[m], half)
            } else {
                hops.hop(m + 1, q + 1)
            };
        }
    }
}

/// Builds the two-excitation block, dense for N ≤ [`N_DENSE`].
pub fn build_sector2(cfg: &ChainConfig, sample: &DisorderSample) -> Result<SectorTwoMatrix> {
    build_sector2_with_threshold(cfg, sample, N_DENSE)
}

/// As [`build_sector2`] with an explicit dense/sparse switch-over.
pub fn build_sector2_with_threshold(
    cfg: &ChainConfig,
    sample: &DisorderSample,
    n_dense: usize,
) -> Result<SectorTwoMatrix> {
    validate_config(cfg)?;
    check_len(sample.detunings(), cfg.n_qubits)?;
    if cfg.n_qubits < 2 {
        return Err(Error::Unsupported(
            "the two-excitation sector needs at least two qubits".into(),
        ));
    }
    let hops = HopTable::new(cfg);
    if cfg.n_qubits <= n_dense {
        let mut m = DenseMatrix::zeros(0);
        fill_sector2(&hops, sample.detunings(), &mut m);
        Ok(SectorTwoMatrix::Dense(m))
    } else {
        Ok(SectorTwoMatrix::Sparse(sparse_sector2(&hops, sample.detunings())))
    }
}

/// Nonzero entries of the sector-2 row for the pair {m, n}, m > n, sorted by
/// column. A hop moves one excitation while the other stays put, with the
/// single-excitation amplitude for that move.
fn sector2_row(hops: &HopTable, delta: &[f64], m: usize, n: usize, row: &mut Vec<(usize, C64)>) {
    row.clear();
    let nq = delta.len();
    for b in 1..=nq {
        if b == m || b == n {
            continue;
        }
        // Excitation at m arrived from b; n is the spectator. Vanishing
        // couplings (unidirectional chains) are not stored, so triangular
        // structure is visible to the solver.
        let h = hops.hop(m, b);
        if h != C64::new(0.0, 0.0) {
            row.push((pair_of(b, n), h));
        }
        // Excitation at n arrived from b; m is the spectator.
        let h = hops.hop(n, b);
        if h != C64::new(0.0, 0.0) {
            row.push((pair_of(b, m), h));
        }
    }
    row.push((
        pair_index_unchecked(m, n),
        C64::new(delta[m - 1] + delta[n - 1], -hops.diag_decay),
    ));
    row.sort_unstable_by_key(|&(c, _)| c);
}

#[inline]
fn pair_of(a: usize, b: usize) -> usize {
    if a > b {
        pair_index_unchecked(a, b)
    } else {
        pair_index_unchecked(b, a)
    }
}

pub(crate) fn fill_sector2(hops: &HopTable, delta: &[f64], out: &mut DenseMatrix) {
    let nq = delta.len();
    let dim = nq * nq.saturating_sub(1) / 2;
    out.reset(dim);
    let a = out.as_mut_slice();
    let mut k = 0;
    for m in 2..=nq {
        for n in 1..m {
            let row = &mut a[k * dim..(k + 1) * dim];
            row[k] = C64::new(delta[m - 1] + delta[n - 1], -hops.diag_decay);
            for b in 1..=nq {
                if b == m || b == n {
                    continue;
                }
                row[pair_of(b, n)] = hops.hop(m, b);
                row[pair_of(b, m)] = hops.hop(n, b);
            }
            k += 1;
        }
    }
}

pub(crate) fn sparse_sector2(hops: &HopTable, delta: &[f64]) -> CsrMatrix {
    let nq = delta.len();
    let dim = nq * (nq - 1) / 2;
    let mut csr = CsrMatrix::with_capacity(dim, dim * (2 * (nq - 2) + 1));
    let mut row = Vec::with_capacity(2 * nq);
    for m in 2..=nq {
        for n in 1..m {
            sector2_row(hops, delta, m, n, &mut row);
            csr.push_row(&row);
        }
    }
    csr
}

/// Coherent drive entering the chain from the transmission side.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveVectors {
    /// Component m is √γ_T e^{imφ}.
    pub v_plus: Vec<C64>,
}

impl DriveVectors {
    /// Applies the drive to a single-excitation state, giving the pair
    /// amplitudes √γ_T (e^{imφ} ψ_n + e^{inφ} ψ_m).
    pub fn lift(&self, psi1: &[C64]) -> Vec<C64> {
        let mut out = Vec::new();
        self.lift_into(psi1, &mut out);
        out
    }

    pub(crate) fn lift_into(&self, psi1: &[C64], out: &mut Vec<C64>) {
        let v = &self.v_plus;
        out.clear();
        for m in 1..v.len() {
            for n in 0..m {
                out.push(v[m] * psi1[n] + v[n] * psi1[m]);
            }
        }
    }
}

pub fn build_drive(cfg: &ChainConfig) -> DriveVectors {
    let s = cfg.gamma_t.sqrt();
    DriveVectors {
        v_plus: (1..=cfg.n_qubits)
            .map(|m| cfg.phase_factor(m as f64) * s)
            .collect(),
    }
}

/// Output-mode vectors; the inner product ⟨φ|ψ⟩ conjugates these.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionVectors {
    pub phi1_plus: Vec<C64>,
    pub phi1_minus: Vec<C64>,
    pub phi2_plus: Vec<C64>,
    pub phi2_minus: Vec<C64>,
}

/// ⟨a|b⟩ with the first argument conjugated.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn build_projections(cfg: &ChainConfig) -> ProjectionVectors {
    let n = cfg.n_qubits;
    let s = cfg.gamma_t.sqrt();
    let g2 = 2.0 * cfg.gamma_t;
    let phi1 = |sign: f64| -> Vec<C64> {
        (1..=n)
            .map(|m| cfg.phase_factor(sign * m as f64) * s)
            .collect()
    };
    let phi2 = |sign: f64| -> Vec<C64> {
        PairIndex::new(n)
            .pairs()
            .map(|(m, q)| cfg.phase_factor(sign * (m + q) as f64) * g2)
            .collect()
    };
    ProjectionVectors {
        phi1_plus: phi1(1.0),
        phi1_minus: phi1(-1.0),
        phi2_plus: phi2(1.0),
        phi2_minus: phi2(-1.0),
    }
}

/// The effective Hamiltonian on the full 2^N qubit space.
///
/// Basis state `s` has qubit m excited iff bit m−1 of `s` is set. Built
/// directly from the operator sum, independently of the sector builders.
#[derive(Debug, Clone)]
pub struct FullSpaceHamiltonian {
    pub n_qubits: usize,
    pub matrix: DMatrix<C64>,
    /// Full-space drive operator Σ_m √γ_T e^{imφ} σ⁺_m.
    pub drive: DMatrix<C64>,
    /// Basis labels of the single-excitation states, qubit order.
    pub sector1_states: Vec<usize>,
    /// Basis labels of the two-excitation states, pair-index order.
    pub sector2_states: Vec<usize>,
}

impl FullSpaceHamiltonian {
    fn project(&self, states: &[usize]) -> DenseMatrix {
        let k = states.len();
        let mut out = DenseMatrix::zeros(k);
        for (i, &si) in states.iter().enumerate() {
            for (j, &sj) in states.iter().enumerate() {
                out.set(i, j, self.matrix[(si, sj)]);
            }
        }
        out
    }

    pub fn sector1(&self) -> DenseMatrix {
        self.project(&self.sector1_states)
    }

    pub fn sector2(&self) -> DenseMatrix {
        self.project(&self.sector2_states)
    }

    /// Truncated steady state from full-space resolvents:
    /// ψ¹ = −H⁻¹H₊|G⟩ and ψ² = −H⁻¹H₊ψ¹, with the ground-state block of H
    /// (identically zero) replaced by the identity so the matrix is
    /// invertible. Returns the sector-1 and sector-2 restrictions.
    pub fn steady_state(&self) -> Option<(Vec<C64>, Vec<C64>)> {
        let mut h = self.matrix.clone();
        h[(0, 0)] += C64::new(1.0, 0.0);
        let lu = h.lu();
        let dim = 1usize << self.n_qubits;
        let mut ground = nalgebra::DVector::<C64>::zeros(dim);
        ground[0] = C64::new(1.0, 0.0);
        let x1 = -lu.solve(&(&self.drive * ground))?;
        let x2 = -lu.solve(&(&self.drive * &x1))?;
        let psi1 = self.sector1_states.iter().map(|&s| x1[s]).collect();
        let psi2 = self.sector2_states.iter().map(|&s| x2[s]).collect();
        Some((psi1, psi2))
    }
}

pub fn brute_force_heff(cfg: &ChainConfig, sample: &DisorderSample) -> Result<FullSpaceHamiltonian> {
    validate_config(cfg)?;
    check_len(sample.detunings(), cfg.n_qubits)?;
    let n = cfg.n_qubits;
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge(n));
    }
    let dim = 1usize << n;
    let delta = sample.detunings();
    let gamma = cfg.total_decay();
    // Coupling between qubits m and q (0-based) in the σ⁺_m σ⁻_q term.
    let coupling = |m: usize, q: usize| -> C64 {
        let d = m.abs_diff(q) as f64;
        let rate = if m > q { cfg.gamma_t } else { cfg.gamma_r };
        C64::new(0.0, -rate) * C64::cis(d * cfg.phase)
    };
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let mut drive = DMatrix::<C64>::zeros(dim, dim);
    let sg = cfg.gamma_t.sqrt();
    for s in 0..dim {
        for m in 0..n {
            if s & (1 << m) == 0 {
                drive[(s | (1 << m), s)] += C64::cis((m + 1) as f64 * cfg.phase) * sg;
                continue;
            }
            h[(s, s)] += C64::new(delta[m], -gamma / 2.0);
        }
        for q in 0..n {
            if s & (1 << q) == 0 {
                continue;
            }
            for m in 0..n {
                if m == q || s & (1 << m) != 0 {
                    continue;
                }
                let t = (s & !(1 << q)) | (1 << m);
                h[(t, s)] += coupling(m, q);
            }
        }
    }
    let sector1_states = (0..n).map(|m| 1usize << m).collect();
    let sector2_states = PairIndex::new(n)
        .pairs()
        .map(|(m, q)| (1usize << (m - 1)) | (1usize << (q - 1)))
        .collect();
    Ok(FullSpaceHamiltonian {
        n_qubits: n,
        matrix: h,
        drive,
        sector1_states,
        sector2_states,
    })
}
