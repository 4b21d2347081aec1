use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgcorr::hamiltonian::{build_drive, build_sector1, build_sector2};
use wgcorr::linalg::DenseMatrix;
use wgcorr::montecarlo::{estimate_pdf, McConfig};
use wgcorr::timedomain::{evolve, run_disorder, PulseConfig};
use wgcorr::{ChainConfig, Channel, DisorderSample};

fn shifted(m: &DenseMatrix, shift: C64) -> DMatrix<C64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m.get(i, j) + if i == j { shift } else { C64::new(0.0, 0.0) })
}

/// On the rising flank E = E₀e^{σ(t−t₀)} the driven amplitudes are exact
/// exponentials: c₁ = −E (H₁ − iσ)⁻¹v₊ and c₂ = −E²(H₂ − 2iσ)⁻¹ lift(c₁/E).
#[test]
fn rising_flank_matches_exponential_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let n = rng.random_range(2..=4);
        let cfg = ChainConfig::new(n, rng.random_range(-PI..PI), 0.5, 0.5, rng.random_range(0.0..0.3));
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = rng.random_range(0.05..0.5);
        let mut pulse = PulseConfig::lorentzian(&cfg, sigma);
        // Long enough lead-in for the switch-on transient to die out.
        pulse.t_start = Some(pulse.t0 - 200.0);
        let traj = evolve(&cfg, &delta, &pulse).unwrap();
        let s = DisorderSample::new(delta.clone());
        let h1 = build_sector1(&cfg, &s).unwrap();
        let h2 = build_sector2(&cfg, &s).unwrap().to_dense();
        let drive = build_drive(&cfg);
        let i = C64::i();
        let v = DVector::from_vec(drive.v_plus.clone());
        let a = -shifted(h1.matrix(), -i * sigma).lu().solve(&v).unwrap();
        let lift = DVector::from_vec(drive.lift(a.as_slice()));
        let b = -shifted(&h2, -2.0 * i * sigma).lu().solve(&lift).unwrap();
        let e0 = pulse.envelope_at(pulse.t0);
        let k = traj.index_of(pulse.t0).unwrap();
        let c1 = &traj.c1[k];
        let c2 = &traj.c2[k];
        let err1 = c1.iter().zip(a.iter()).map(|(x, y)| (x - e0 * y).norm()).fold(0.0, f64::max) / (e0 * a.camax());
        let err2 = c2.iter().zip(b.iter()).map(|(x, y)| (x - e0 * e0 * y).norm()).fold(0.0, f64::max) / (e0 * e0 * b.camax());
        assert!(err1 < 1e-6 && err2 < 1e-6, "{err1:e} {err2:e}");
    }
}

#[test]
fn moderate_bandwidth_keeps_deep_antibunching() {
    let cfg = ChainConfig::symmetric(3, 0.5 * PI);
    let mc = McConfig::new(4000, 1.0, 5, Channel::Reflection);
    let pulse = PulseConfig::lorentzian(&cfg, 0.1);
    let td = run_disorder(&cfg, &mc, &pulse, pulse.t0).unwrap().pdf;
    let ss = estimate_pdf(&cfg, &mc).unwrap();
    assert!(td.count_below_edge(1e-2) > 0);
    let (a, b) = (td.mean_density(1e-3, 1e-1), ss.mean_density(1e-3, 1e-1));
    assert!(a > 0.5 * b && a < 2.0 * b, "{a} vs {b}");
}
