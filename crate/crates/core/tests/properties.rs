use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use wgcorr::analysis::{fidelity_pair, hellinger, powerlaw_fit, Axis, AxisKind, GridCell, SweepGrid};
use wgcorr::correlations::{g_channel, TruncatedSteadyState};
use wgcorr::hamiltonian::{build_sector1, build_sector2};
use wgcorr::montecarlo::{run, McConfig, PdfEstimate};
use wgcorr::{ChainConfig, Channel, CorrelationValue, DisorderSample, PairIndex};

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn histogram(values: &[f64]) -> PdfEstimate {
    let mut p = PdfEstimate::empty("h".into());
    for &v in values {
        p.record(CorrelationValue::Finite(v));
    }
    p
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n).prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_index_is_a_bijection(n in 2usize..40) {
        let p = PairIndex::new(n);
        prop_assert_eq!(p.dim(), n * (n - 1) / 2);
        for k in 0..p.dim() {
            let (m, q) = p.unindex(k).unwrap();
            prop_assert!(m > q && q >= 1 && m <= n);
            prop_assert_eq!(p.index(m, q).unwrap(), k);
        }
    }

    #[test]
    fn hellinger_symmetric_and_bounded(
        a in prop::collection::vec(1e-13f64..1e13, 1..200),
        b in prop::collection::vec(1e-13f64..1e13, 1..200),
    ) {
        let (p, q) = (histogram(&a), histogram(&b));
        let h = hellinger(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert_eq!(h, hellinger(&q, &p).unwrap());
        prop_assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn fidelity_invariant_under_complex_scaling(
        (a, b, c, d) in (2usize..6).prop_flat_map(|n| {
            let m = n * (n - 1) / 2;
            (complex_vec(n), complex_vec(m), complex_vec(n), complex_vec(m))
        }),
        re in -3.0..3.0f64,
        im in -3.0..3.0f64,
    ) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        prop_assume!(a.iter().chain(&b).chain(&c).chain(&d).all(|z| z.norm() > 0.0));
        let s = TruncatedSteadyState { psi1: a, psi2: b };
        let t = TruncatedSteadyState { psi1: c, psi2: d };
        let z = C64::new(re, im);
        let scaled = TruncatedSteadyState {
            psi1: t.psi1.iter().map(|v| v * z).collect(),
            psi2: t.psi2.iter().map(|v| v * z).collect(),
        };
        let (f1, f2) = fidelity_pair(&s, &t).unwrap();
        let (g1, g2) = fidelity_pair(&s, &scaled).unwrap();
        prop_assert!((f1 - g1).abs() < 1e-12 && (f2 - g2).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f1) && (0.0..=1.0).contains(&f2));
    }

    #[test]
    fn power_law_recovers_planted_exponent(
        exponent in -4.0..4.0f64,
        prefactor in 1e-3..1e3f64,
        xs in prop::collection::btree_set(1u32..1000, 3..12),
    ) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| prefactor * x.powf(exponent)).collect();
        let f = powerlaw_fit(&xs, &ys).unwrap();
        prop_assert!((f.exponent - exponent).abs() < 1e-10);
        prop_assert!((f.prefactor / prefactor - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unidirectional_chains_are_triangular(n in 2usize..9, phi in -PI..PI, seed in any::<u64>()) {
        let d = wgcorr::montecarlo::sample_detunings(seed, 0, 1.0, n);
        let s = DisorderSample::new(d);
        let fwd = ChainConfig::new(n, phi, 0.7, 0.0, 0.1);
        let bwd = ChainConfig::new(n, phi, 0.0, 0.7, 0.1);
        prop_assert!(build_sector1(&fwd, &s).unwrap().matrix().is_lower_triangular());
        prop_assert!(build_sector2(&fwd, &s).unwrap().to_dense().is_lower_triangular());
        prop_assert!(build_sector1(&bwd, &s).unwrap().matrix().is_upper_triangular());
        prop_assert!(build_sector2(&bwd, &s).unwrap().to_dense().is_upper_triangular());
    }

    #[test]
    fn correlations_are_non_negative(n in 1usize..7, phi in -PI..PI, seed in any::<u64>(), w in 0.01..10.0f64) {
        let cfg = ChainConfig::symmetric(n, phi);
        let s = DisorderSample::new(wgcorr::montecarlo::sample_detunings(seed, 3, w, n));
        for ch in [Channel::Transmission, Channel::Reflection] {
            if let Ok(CorrelationValue::Finite(g)) = g_channel(&cfg, &s, ch) {
                prop_assert!(g >= 0.0 && g.is_finite());
            }
        }
    }

    #[test]
    fn sweep_csv_roundtrip(values in prop::collection::vec(-1e6..1e6f64, 6)) {
        let mut g = SweepGrid::new(
            vec![
                Axis { kind: AxisKind::Phi, values: vec![0.0, 0.01] },
                Axis { kind: AxisKind::W, values: vec![0.5, 1.0, 2.0] },
            ],
            "pa",
            "cafe",
        );
        g.cells = values.iter().map(|&v| GridCell { value: v, stderr: Some(v.abs() * 1e-3), realizations: 7, seed: 9 }).collect();
        let mut a = Vec::new();
        g.write_csv(&mut a).unwrap();
        let back = SweepGrid::read_csv(std::str::from_utf8(&a).unwrap()).unwrap();
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        prop_assert_eq!(a, b);
        for (x, y) in back.cells.iter().zip(&g.cells) {
            prop_assert!((x.value - y.value).abs() <= 5e-12 * y.value.abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn monte_carlo_independent_of_thread_count(seed in any::<u64>(), k in 1u64..20_000, n in 1usize..5) {
        let cfg = ChainConfig::symmetric(n, 0.3);
        let mc = McConfig::new(k, 0.8, seed, Channel::Transmission);
        let a = pool(1).install(|| run(&cfg, &mc)).unwrap();
        let b = pool(3).install(|| run(&cfg, &mc)).unwrap();
        prop_assert_eq!(a.pdf.to_json(), b.pdf.to_json());
        prop_assert_eq!(a.antibunched, b.antibunched);
    }

    #[test]
    fn shards_merge_to_the_full_run(seed in any::<u64>(), k in 2u64..20_000, cut in 0.0..1.0f64) {
        let cfg = ChainConfig::symmetric(2, 0.9);
        let split = ((k as f64 * cut) as u64).clamp(1, k - 1);
        let full = run(&cfg, &McConfig::new(k, 1.0, seed, Channel::Reflection)).unwrap();
        let a = run(&cfg, &McConfig::new(split, 1.0, seed, Channel::Reflection)).unwrap();
        let b = run(&cfg, &McConfig::new(k - split, 1.0, seed, Channel::Reflection).with_first_index(split)).unwrap();
        let mut merged = a.pdf.clone();
        merged.merge(&b.pdf).unwrap();
        prop_assert_eq!(merged.counts, full.pdf.counts);
        prop_assert_eq!(merged.total, full.pdf.total);
        prop_assert_eq!(merged.seeds, full.pdf.seeds);
        prop_assert_eq!(a.antibunched + b.antibunched, full.antibunched);
    }
}
