use wgcorr::closedforms::pdf_asym_gr_n2;
use wgcorr::montecarlo::{estimate_pa_probability, estimate_pdf, McConfig};
use wgcorr::{ChainConfig, Channel};

/// The reported binomial standard error should match the spread of
/// estimates over independent seeds.
#[test]
fn standard_error_is_calibrated() {
    let cfg = ChainConfig::symmetric(2, 0.0);
    let reps = 60;
    let mut est = Vec::with_capacity(reps);
    let mut reported = 0.0;
    for seed in 0..reps as u64 {
        let pa = estimate_pa_probability(&cfg, &McConfig::new(2000, 1.0, 1000 + seed, Channel::Reflection)).unwrap();
        reported += pa.std_error / reps as f64;
        est.push(pa.probability);
    }
    let mean = est.iter().sum::<f64>() / reps as f64;
    let var = est.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let spread = var.sqrt();
    assert!((mean - 2.0 / 3.0).abs() < 4.0 * reported / (reps as f64).sqrt(), "mean {mean}");
    // The sample standard deviation of 60 draws is itself uncertain by ~9%.
    assert!((spread / reported - 1.0).abs() < 0.3, "spread {spread} vs reported {reported}");
}

/// Small-s onset of the two-qubit reflection density. At W = 1 the
/// asymptote puts ~1e−20 density on [1e−4, 1e−2], so no sample may land
/// there; at W = 10 the onset near s = 1e−2 is resolved.
#[test]
fn pair_reflection_onset_follows_asymptote() {
    let cfg = ChainConfig::symmetric(2, 0.0);
    let pdf = estimate_pdf(&cfg, &McConfig::new(100_000_000, 1.0, 7, Channel::Reflection)).unwrap();
    let expected = 1e8 * 1e-2 * pdf_asym_gr_n2(1e-2, 1.0);
    assert!(expected < 1e-10);
    assert_eq!(pdf.count_below_edge(1e-2), 0);

    let pdf = estimate_pdf(&cfg, &McConfig::new(2_000_000, 10.0, 8, Channel::Reflection)).unwrap();
    let h = 10f64.sqrt();
    let mc = pdf.mean_density(1e-2 / h, 1e-2 * h);
    let asym = pdf_asym_gr_n2(1e-2, 10.0);
    assert!(mc / asym < 1.5 && asym / mc < 1.5, "{mc} vs {asym}");
}
