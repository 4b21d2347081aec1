//! Closed-form correlations and disorder densities for one and two qubits.
//!
//! Everything here is written out independently of the matrix pipeline so
//! the two can check each other. Unless noted, rates are in units of
//! γ = γ_T + γ_R = 1 with γ_T = γ_R.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::model::CorrelationValue;

fn gaussian(x: f64, w: f64) -> f64 {
    (-x * x / (2.0 * w * w)).exp() / ((2.0 * PI).sqrt() * w)
}

/// Single lossless qubit: g_T = (1 + 4Δ²)² / (16Δ⁴).
pub fn gt_n1(delta: f64) -> CorrelationValue {
    if delta == 0.0 {
        return CorrelationValue::Divergent;
    }
    let d2 = delta * delta;
    let num = 1.0 + 4.0 * d2;
    CorrelationValue::Finite(num * num / (16.0 * d2 * d2))
}

/// Two lossless qubits, transmission.
///
/// With S = Δ₁ + Δ₂, c = cos 2φ and σ = sin 2φ:
/// f± = 1 + 2Δ₁² + 2Δ₂² ± 4Δ₁Δ₂c − 2Sσ,
/// g = (8Δ₁²Δ₂² + f₊ − c) (S²(f₋ − c) + 8Δ₁²Δ₂²(1+S²) + 4Δ₁Δ₂Sσ) / (64Δ₁⁴Δ₂⁴(1+S²)).
pub fn gt_n2(d1: f64, d2: f64, phi: f64) -> CorrelationValue {
    let p = d1 * d2;
    if p == 0.0 {
        return CorrelationValue::Divergent;
    }
    let s = d1 + d2;
    let (sn, c) = (2.0 * phi).sin_cos();
    let base = 1.0 + 2.0 * d1 * d1 + 2.0 * d2 * d2 - 2.0 * s * sn;
    let f_plus = base + 4.0 * p * c;
    let f_minus = base - 4.0 * p * c;
    let q = 8.0 * p * p + f_plus - c;
    let r = s * s * (f_minus - c) + 8.0 * p * p * (1.0 + s * s) + 4.0 * p * s * sn;
    CorrelationValue::Finite(q * r / (64.0 * p * p * p * p * (1.0 + s * s)))
}

/// Two lossless qubits, reflection:
/// g = |(−i + ie^{2iφ} + 2Δ₁ + 2Δ₂)(e^{2iφ} + (2Δ₁ − i)(2Δ₂ − i))|²
///     / |(Δ₁ + Δ₂ − i)(2Δ₂ − i + e^{2iφ}(2Δ₁ + i))²|².
pub fn gr_n2(d1: f64, d2: f64, phi: f64) -> CorrelationValue {
    let i = C64::i();
    let e = C64::cis(2.0 * phi);
    let num = (-i + i * e + 2.0 * d1 + 2.0 * d2) * (e + (2.0 * d1 - i) * (2.0 * d2 - i));
    let inner = 2.0 * d2 - i + e * (2.0 * d1 + i);
    let den = (d1 + d2 - i) * inner * inner;
    if den.norm() == 0.0 {
        return CorrelationValue::Divergent;
    }
    CorrelationValue::Finite((num / den).norm_sqr())
}

/// Single qubit with non-waveguide loss γ_nw (γ_T = γ_R = 1/2):
/// g_T = (4Δ² + (γ_nw − 1)²)(4Δ² + (γ_nw + 1)²) / (4Δ² + γ_nw²)².
pub fn gt_n1_lossy(delta: f64, gamma_nw: f64) -> CorrelationValue {
    let x = 4.0 * delta * delta;
    let den = x + gamma_nw * gamma_nw;
    if den == 0.0 {
        return CorrelationValue::Divergent;
    }
    let a = gamma_nw - 1.0;
    let b = gamma_nw + 1.0;
    CorrelationValue::Finite((x + a * a) * (x + b * b) / (den * den))
}

/// Density of g_T for one lossless qubit with Gaussian detuning of width W.
///
/// With u = √s − 1 (so Δ² = 1/(4u)):
/// P(s) = exp(−1/(8W²u)) / (4√(2π) W u^{3/2} √s) for s > 1, zero otherwise.
pub fn pdf_gt_n1(s: f64, w: f64) -> f64 {
    if !(s > 1.0) {
        return 0.0;
    }
    let u = s.sqrt() - 1.0;
    if u <= 0.0 {
        return 0.0;
    }
    let pre = 1.0 / (4.0 * (2.0 * PI).sqrt() * w);
    pre * (-1.0 / (8.0 * w * w * u)).exp() / (u.powf(1.5) * s.sqrt())
}

/// Most probable value of g_T for one lossless qubit.
///
/// Stationary point of ln P in u = √s − 1:
/// 20W²u² − (1 − 12W²)u − 1 = 0, and s_max = (1 + u)².
pub fn pdf_mode_n1(w: f64) -> f64 {
    let w2 = w * w;
    let b = 1.0 - 12.0 * w2;
    let u = (b + (b * b + 80.0 * w2).sqrt()) / (40.0 * w2);
    (1.0 + u) * (1.0 + u)
}

/// Leading large-s behaviour of [`pdf_gt_n1`]: s^{−5/4} / (4√(2π) W).
pub fn pdf_tail_n1(s: f64, w: f64) -> f64 {
    s.powf(-1.25) / (4.0 * (2.0 * PI).sqrt() * w)
}

/// Small-s asymptote of the two-qubit reflection density:
/// P(s) ≈ exp(−1/(2W²s)) / (√(2π) W s).
pub fn pdf_asym_gr_n2(s: f64, w: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    (-1.0 / (2.0 * w * w * s)).exp() / ((2.0 * PI).sqrt() * w * s)
}

/// Probability of antibunching for one lossy qubit:
/// erf(√(γ_nw²/4 − 1/8) / (√2 W)) for γ_nw > 1/√2, zero otherwise.
pub fn pa_prob_n1_lossy(w: f64, gamma_nw: f64) -> f64 {
    let a2 = gamma_nw * gamma_nw / 4.0 - 0.125;
    if a2 <= 0.0 {
        return 0.0;
    }
    libm::erf(a2.sqrt() / (std::f64::consts::SQRT_2 * w))
}

/// Density of g_T for one lossy qubit with Gaussian detuning of width W.
///
/// Writing t = 1/(4Δ² + γ_nw²) ∈ (0, 1/γ_nw²], g = 1 + 2t − c t² with
/// c = 4γ_nw² − 1. Each admissible root t of g = s contributes
/// 2 p(Δ) |dΔ/dt| / |dg/dt| with |dΔ/dt| = 1/(4t²√(1/t − γ_nw²)).
/// For s < 1 only the root t = (1 + √(1 + c(1 − s)))/c can be admissible;
/// the support there is ((γ_nw² − 1)²/γ_nw⁴, 1).
pub fn pdf_gt_n1_lossy(s: f64, w: f64, gamma_nw: f64) -> f64 {
    if !(s >= 0.0) || !s.is_finite() {
        return 0.0;
    }
    let g2 = gamma_nw * gamma_nw;
    let c = 4.0 * g2 - 1.0;
    let roots: [Option<f64>; 2] = if c == 0.0 {
        [Some((s - 1.0) / 2.0), None]
    } else {
        let disc = 1.0 + c * (1.0 - s);
        if disc < 0.0 {
            [None, None]
        } else {
            let r = disc.sqrt();
            [Some((1.0 + r) / c), Some((1.0 - r) / c)]
        }
    };
    let mut total = 0.0;
    for t in roots.into_iter().flatten() {
        if !(t > 0.0) {
            continue;
        }
        let x = 1.0 / t - g2;
        if !(x > 0.0) {
            continue;
        }
        let delta = 0.5 * x.sqrt();
        let dd_dt = 1.0 / (4.0 * t * t * x.sqrt());
        let dg_dt = (2.0 - 2.0 * c * t).abs();
        if dg_dt == 0.0 {
            continue;
        }
        total += 2.0 * gaussian(delta, w) * dd_dt / dg_dt;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(v: CorrelationValue) -> f64 {
        v.finite().unwrap()
    }

    fn simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(g: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = g(lm);
            let frm = g(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = g(a);
        let fb = g(b);
        let fm = g(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(g, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn gt_n1_values() {
        assert!((f(gt_n1(0.5)) - 4.0).abs() < 1e-12);
        assert!((f(gt_n1(0.1)) - 676.0).abs() < 1e-9);
        assert!((f(gt_n1(1e6)) - 1.0).abs() < 1e-11);
        assert!(gt_n1(0.0).is_divergent());
    }

    #[test]
    fn gr_n2_clean_is_coherent() {
        // φ = 0 is the dark-state point where the ratio is 0/0.
        assert!(gr_n2(0.0, 0.0, 0.0).is_divergent());
        for phi in [0.1, 0.7, 1.5, 3.0] {
            assert!((f(gr_n2(0.0, 0.0, phi)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gr_n2_zero_phase_reduction() {
        for (a, b) in [(0.3, -0.1), (1.2, 0.4), (-2.0, 0.5)] {
            let s: f64 = a + b;
            let expect = (s * s + 4.0 * a * a * b * b) / (s * s + s.powi(4));
            assert!((f(gr_n2(a, b, 0.0)) / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gt_n2_never_below_one() {
        let mut x = 0.123456789f64;
        let mut next = || {
            x = (x * 9301.0 + 0.4929).fract();
            x
        };
        for _ in 0..10_000 {
            let d1 = 20.0 * next() - 10.0;
            let d2 = 20.0 * next() - 10.0;
            let phi = 2.0 * PI * next();
            assert!(f(gt_n2(d1, d2, phi)) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn lossy_law_zero_only_at_balanced_loss() {
        assert_eq!(f(gt_n1_lossy(0.0, 1.0)), 0.0);
        assert!(f(gt_n1_lossy(0.01, 1.0)) > 0.0);
        assert!(f(gt_n1_lossy(0.0, 0.99)) > 0.0);
        // On resonance g = (γ² − 1)²/γ⁴, below one iff γ > 1/√2.
        for g in [0.6, 0.7, 0.71, 0.8, 1.5] {
            let v = f(gt_n1_lossy(0.0, g));
            assert!((v - (g * g - 1.0f64).powi(2) / g.powi(4)).abs() < 1e-12);
            assert_eq!(v < 1.0, g > std::f64::consts::FRAC_1_SQRT_2);
        }
    }

    #[test]
    fn n1_pdf_vanishes_below_one() {
        for w in [0.1, 1.0, 10.0] {
            assert_eq!(pdf_gt_n1(0.5, w), 0.0);
            assert_eq!(pdf_gt_n1(1.0, w), 0.0);
        }
    }

    #[test]
    fn n1_pdf_is_normalized_rederived_exponent() {
        // The substitution s = x^{-4} maps (1, ∞) onto (0, 1) and tames the tail.
        for w in [0.3, 1.0, 3.0] {
            let g = |x: f64| {
                if x <= 0.0 || x >= 1.0 {
                    return 0.0;
                }
                pdf_gt_n1(x.powi(-4), w) * 4.0 * x.powi(-5)
            };
            let total = simpson(&g, 0.0, 1.0, 1e-10);
            assert!((total - 1.0).abs() < 1e-6, "w={w} total={total}");
        }
    }

    #[test]
    fn n1_mode_is_the_maximum() {
        for w in [0.05, 0.3, 1.0, 5.0, 100.0] {
            let m = pdf_mode_n1(w);
            let p = pdf_gt_n1(m, w);
            for k in [1.0 - 1e-3, 1.0 + 1e-3] {
                let s = 1.0 + (m - 1.0) * k;
                assert!(pdf_gt_n1(s, w) < p, "w={w}");
            }
        }
    }

    #[test]
    fn n1_mode_scaling() {
        let w = 0.01;
        let m = pdf_mode_n1(w);
        assert!((m * w.powi(4) * 400.0 - 1.0).abs() < 0.01, "m={m}");
        assert!((pdf_mode_n1(100.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn n1_tail_asymptote() {
        for w in [0.5, 1.0, 2.0] {
            let s = 1e16;
            assert!((pdf_gt_n1(s, w) / pdf_tail_n1(s, w) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn asym_density_vanishes_at_zero() {
        assert_eq!(pdf_asym_gr_n2(0.0, 1.0), 0.0);
        assert!(pdf_asym_gr_n2(1e-4, 1.0) < 1e-300);
    }

    #[test]
    fn pa_lossy_limits() {
        assert_eq!(pa_prob_n1_lossy(1.0, 0.5), 0.0);
        assert_eq!(pa_prob_n1_lossy(1.0, std::f64::consts::FRAC_1_SQRT_2 - 1e-12), 0.0);
        assert!((pa_prob_n1_lossy(1e-6, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pa_lossy_matches_detuning_threshold() {
        // g < 1 exactly for Δ² < γ²/4 − 1/8.
        for gnw in [0.8, 1.0, 2.0] {
            let a = (gnw * gnw / 4.0 - 0.125f64).sqrt();
            assert!(f(gt_n1_lossy(a * 0.999, gnw)) < 1.0);
            assert!(f(gt_n1_lossy(a * 1.001, gnw)) > 1.0);
        }
    }

    /// Printed form of the s < 1 density with its surplus (s − 1)² divisor
    /// removed; as printed it does not normalize to the antibunching
    /// probability. Used only as a cross-check.
    fn printed_lossy_pdf(s: f64, w: f64, g: f64) -> f64 {
        let g2 = g * g;
        let r = (s + 4.0 * (1.0 - s) * g2).sqrt();
        let a = -1.0 + (s - 1.0) * g2 + r;
        let den = 4.0
            * a.sqrt()
            * (4.0 * (s - 1.0) * g2 - s + r)
            * (1.0 - s).powf(1.5);
        -(1.0 / ((2.0 * PI).sqrt() * w)) * (-1.0 + r).powi(3) / den * (a / ((8.0 * s - 8.0) * w * w)).exp()
    }

    #[test]
    fn lossy_pdf_below_one_matches_printed_form_up_to_extra_factor() {
        for g in [0.8, 1.0, 1.5] {
            let lo = (g * g - 1.0f64).powi(2) / g.powi(4);
            for k in 1..20 {
                let s = lo + (1.0 - lo) * k as f64 / 20.0;
                for w in [0.3, 1.0] {
                    let a = pdf_gt_n1_lossy(s, w, g);
                    let b = printed_lossy_pdf(s, w, g);
                    assert!((a / b - 1.0).abs() < 1e-9, "g={g} s={s} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn lossy_pdf_normalized_and_consistent_with_pa() {
        for (g, w) in [(1.0, 1.0), (0.8, 0.5), (1.5, 0.7)] {
            let lo = (g * g - 1.0f64).powi(2) / g.powi(4);
            // Substitute s = lo + (1 - lo) y² to remove the edge singularity.
            let h = |y: f64| pdf_gt_n1_lossy(lo + (1.0 - lo) * y * y, w, g) * 2.0 * (1.0 - lo) * y;
            let below = simpson(&h, 0.0, 1.0, 1e-11);
            let expect = pa_prob_n1_lossy(w, g);
            assert!((below - expect).abs() < 1e-6, "g={g} below={below} expect={expect}");
        }
    }

    #[test]
    fn lossy_pdf_balanced_loss_edge() {
        // At γ_nw = 1 the density diverges like 1/(W√s) at s → 0.
        let w = 0.7;
        let r1 = pdf_gt_n1_lossy(1e-8, w, 1.0) * w * 1e-4;
        let r2 = pdf_gt_n1_lossy(1e-10, w, 1.0) * w * 1e-5;
        assert!((r1 / r2 - 1.0).abs() < 1e-3);
    }
}
