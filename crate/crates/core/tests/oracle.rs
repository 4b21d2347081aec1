use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgcorr::closedforms::{gr_n2, gt_n1, gt_n2};
use wgcorr::correlations::{g_channel, Evaluator};
use wgcorr::hamiltonian::{brute_force_heff, build_sector1, build_sector2};
use wgcorr::{ChainConfig, Channel, CorrelationValue, DisorderSample};

fn random_cfg(rng: &mut ChaCha8Rng, n: usize) -> ChainConfig {
    ChainConfig::new(
        n,
        rng.random_range(-PI..PI),
        rng.random_range(0.05..1.0),
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..0.5),
    )
}

fn random_sample(rng: &mut ChaCha8Rng, n: usize, w: f64) -> DisorderSample {
    DisorderSample::new((0..n).map(|_| rng.random_range(-w..w)).collect())
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn sectors_match_full_space_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=8 {
        for _ in 0..100 {
            let cfg = random_cfg(&mut rng, n);
            let s = random_sample(&mut rng, n, 2.0);
            let full = brute_force_heff(&cfg, &s).unwrap();
            let h1 = build_sector1(&cfg, &s).unwrap();
            assert!(max_dev(h1.matrix().as_slice(), full.sector1().as_slice()) < 1e-14);
            if n >= 2 {
                let h2 = build_sector2(&cfg, &s).unwrap().to_dense();
                assert!(max_dev(h2.as_slice(), full.sector2().as_slice()) < 1e-14);
            }
        }
    }
}

#[test]
fn steady_state_matches_full_space_resolvent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=6 {
        for _ in 0..50 {
            let cfg = random_cfg(&mut rng, n);
            let s = random_sample(&mut rng, n, 2.0);
            let (p1, p2) = brute_force_heff(&cfg, &s).unwrap().steady_state().unwrap();
            let mut ev = Evaluator::new(&cfg).unwrap();
            let st = ev.solve(s.detunings()).unwrap();
            let scale1 = p1.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(max_dev(&st.psi1, &p1) <= 1e-9 * scale1);
            if n >= 2 {
                let scale2 = p2.iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(max_dev(&st.psi2, &p2) <= 1e-9 * scale2);
            }
        }
    }
}

fn rel(a: CorrelationValue, b: CorrelationValue) -> f64 {
    match (a, b) {
        (CorrelationValue::Finite(x), CorrelationValue::Finite(y)) if x == y => 0.0,
        (CorrelationValue::Finite(x), CorrelationValue::Finite(y)) => (x - y).abs() / x.abs().max(y.abs()),
        (CorrelationValue::Divergent, CorrelationValue::Divergent) => 0.0,
        _ => f64::INFINITY,
    }
}

#[test]
fn closed_forms_match_matrix_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..1000 {
        let phi = rng.random_range(-PI..PI);
        let (d1, d2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (matrix, closed) = match k % 3 {
            0 => (
                g_channel(&ChainConfig::symmetric(1, phi), &DisorderSample::new(vec![d1]), Channel::Transmission),
                gt_n1(d1),
            ),
            1 => (
                g_channel(&ChainConfig::symmetric(2, phi), &DisorderSample::new(vec![d1, d2]), Channel::Transmission),
                gt_n2(d1, d2, phi),
            ),
            _ => (
                g_channel(&ChainConfig::symmetric(2, phi), &DisorderSample::new(vec![d1, d2]), Channel::Reflection),
                gr_n2(d1, d2, phi),
            ),
        };
        let e = rel(matrix.unwrap(), closed);
        assert!(e <= 1e-9, "point {k}: φ={phi}, Δ=({d1},{d2}), error {e:e}");
    }
}

#[test]
fn periodic_in_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let n = rng.random_range(1..=8);
        let cfg = random_cfg(&mut rng, n);
        let s = random_sample(&mut rng, n, 1.0);
        let shifted = cfg.with_phase(cfg.phase + 2.0 * PI);
        for ch in [Channel::Transmission, Channel::Reflection] {
            if ch == Channel::Reflection && cfg.gamma_r == 0.0 {
                continue;
            }
            let a = g_channel(&cfg, &s, ch).unwrap();
            let b = g_channel(&shifted, &s, ch).unwrap();
            assert!(rel(a, b) <= 1e-10, "{a} vs {b}");
        }
    }
}
