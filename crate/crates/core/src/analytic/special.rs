//! Gamma function and the one-parameter family `2F1(1/2, b; 3/2; -w^2)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 10_000_000;

/// Γ(x) for x > 0, Lanczos approximation (g = 7, nine terms).
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    Ok(lanczos(x))
}

fn lanczos(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        return PI / ((PI * x).sin() * lanczos(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (k, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    // Split the power to keep t^(x+1/2) finite near the top of the range.
    let half = t.powf(0.5 * (x + 0.5));
    (2.0 * PI).sqrt() * half * (-t).exp() * half * acc
}

/// `∫_0^{π/2} cos(φ)^{2b-2} dφ = √π Γ(b-1/2) / (2 Γ(b))`, finite for b > 1/2.
pub(crate) fn half_period_cos_integral(b: f64) -> Result<f64> {
    if !(b > 0.5) {
        return Err(Error::Domain(format!(
            "cosine power integral diverges for b = {b} <= 1/2"
        )));
    }
    Ok(PI.sqrt() * gamma_fn(b - 0.5)? / (2.0 * gamma_fn(b)?))
}

/// ₂F₁(1/2, b; 3/2; −w²).
///
/// For |w| ≤ 1 the Gauss series is summed after the Pfaff transformation
/// `z → z/(z−1)`, which maps −w² into [0, 1/2]. For |w| > 1 (and b > 1/2) the
/// value is obtained from the complementary representation
/// `w·F = C_b − u^{2b−1}/(2b−1) · ₂F₁(1/2, b−1/2; b+1/2; u²)` with
/// `u² = 1/(1+w²) < 1/2`, so both series converge at least like 2^{−n}.
pub fn hyp2f1_half(b: f64, w: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Domain(format!("hyp2f1_half requires b > 0, got {b}")));
    }
    if !w.is_finite() {
        return Err(Error::Domain(format!("hyp2f1_half requires finite w, got {w}")));
    }
    let w = w.abs();
    if w == 0.0 {
        return Ok(1.0);
    }
    let w2 = w * w;
    if w <= 1.0 || b <= 0.5 {
        let zeta = w2 / (1.0 + w2);
        let series = gauss_series(1.0, b, 1.5, zeta).map_err(|n| {
            Error::Numeric(format!(
                "Pfaff series for 2F1(1/2, {b}; 3/2; -{w2}) did not converge in {n} terms"
            ))
        })?;
        return Ok((1.0 + w2).powf(-b) * series);
    }
    let u2 = 1.0 / (1.0 + w2);
    let tail = gauss_series(0.5, b - 0.5, b + 0.5, u2).map_err(|n| {
        Error::Numeric(format!(
            "complementary series for b = {b}, w = {w} did not converge in {n} terms"
        ))
    })?;
    let whole = half_period_cos_integral(b)?;
    let wf = whole - u2.powf(b - 0.5) / (2.0 * b - 1.0) * tail;
    let value = wf / w;
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite 2F1(1/2, {b}; 3/2; -w^2) at w = {w}"
        )));
    }
    Ok(value)
}

/// Gauss series Σ (a)_n (b)_n / ((c)_n n!) zⁿ for 0 ≤ z < 1 and positive
/// parameters. Returns the number of terms used on failure.
fn gauss_series(a: f64, b: f64, c: f64, z: f64) -> std::result::Result<f64, usize> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..SERIES_MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term.abs() <= SERIES_REL_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(SERIES_MAX_TERMS)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct summation of the untransformed series; valid for |w| < 1.
    fn direct_series(b: f64, w: f64) -> f64 {
        let z = -w * w;
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 0..100_000 {
            let nf = n as f64;
            term *= (0.5 + nf) * (b + nf) / ((1.5 + nf) * (nf + 1.0)) * z;
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn gamma_classical_values() {
        assert!((gamma_fn(1.0).unwrap() - 1.0).abs() < 1e-15);
        let sqrt_pi = PI.sqrt();
        assert!((gamma_fn(0.5).unwrap() - sqrt_pi).abs() < 1e-14);
        assert!((gamma_fn(1.5).unwrap() - sqrt_pi / 2.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_factorials_relative_error() {
        let mut fact = 1.0_f64;
        for n in 1..=30 {
            let g = gamma_fn(n as f64).unwrap();
            assert!((g - fact).abs() <= 1e-12 * fact, "Γ({n}) = {g}, want {fact}");
            fact *= n as f64;
        }
    }

    #[test]
    fn gamma_half_integers_relative_error() {
        // Γ(n + 1/2) = (2n)! √π / (4ⁿ n!)
        let mut value = PI.sqrt();
        for n in 0..29 {
            let x = n as f64 + 0.5;
            let g = gamma_fn(x).unwrap();
            assert!((g - value).abs() <= 1e-12 * value, "Γ({x}) = {g}, want {value}");
            value *= x;
        }
    }

    #[test]
    fn gamma_small_arguments() {
        // Γ(x) = Γ(x+1)/x
        for &x in &[1e-3, 0.01, 0.1, 0.25, 0.3, 0.49] {
            let lhs = gamma_fn(x).unwrap();
            let rhs = gamma_fn(x + 1.0).unwrap() / x;
            assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs(), "x = {x}");
        }
    }

    #[test]
    fn gamma_rejects_non_positive() {
        assert!(matches!(gamma_fn(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma_fn(-1.5), Err(Error::Domain(_))));
        assert!(matches!(gamma_fn(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn hyp_at_zero_argument() {
        for &b in &[0.1, 0.5, 1.0, 4.0 / 3.0, 2.0] {
            assert_eq!(hyp2f1_half(b, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn hyp_b_one_is_arctan() {
        // Oracle values frozen from direct series summation; closed form arctan(w)/w.
        let v = hyp2f1_half(1.0, 1.0).unwrap();
        assert!((v - 0.785_398_163_397_448_3).abs() < 1e-12);
        for &w in &[0.1_f64, 0.5, 0.9, 1.0, 1.5, 3.0, 20.0, 1e3, 1e8] {
            let want = w.atan() / w;
            let got = hyp2f1_half(1.0, w).unwrap();
            assert!((got - want).abs() < 1e-12, "w = {w}: {got} vs {want}");
        }
    }

    #[test]
    fn hyp_b_three_halves_closed_form() {
        let v = hyp2f1_half(1.5, 1.0).unwrap();
        assert!((v - 0.707_106_781_186_547_5).abs() < 1e-12);
        for &w in &[0.3_f64, 1.0, 2.0, 40.0, 1e6] {
            let want = (1.0 + w * w).powf(-0.5);
            let got = hyp2f1_half(1.5, w).unwrap();
            assert!((got - want).abs() < 1e-12, "w = {w}");
        }
    }

    #[test]
    fn hyp_matches_direct_series_inside_unit_disk() {
        for &b in &[0.3, 0.75, 4.0 / 3.0, 2.0, 4.0, 10.0] {
            for &w in &[0.05, 0.3, 0.6, 0.8] {
                let want = direct_series(b, w);
                let got = hyp2f1_half(b, w).unwrap();
                assert!((got - want).abs() < 1e-13, "b = {b}, w = {w}");
            }
        }
    }

    #[test]
    fn hyp_continuous_across_branch_switch() {
        for &b in &[0.8, 4.0 / 3.0, 2.0, 5.0] {
            let below = hyp2f1_half(b, 1.0).unwrap();
            let above = hyp2f1_half(b, 1.0 + 1e-12).unwrap();
            assert!((below - above).abs() < 1e-11, "b = {b}");
        }
    }

    #[test]
    fn hyp_small_b_large_w_uses_series() {
        // b ≤ 1/2 has no complementary form; Pfaff series still converges for moderate w.
        let b = 0.5;
        let w: f64 = 3.0;
        // 2F1(1/2,1/2;3/2;-w²) = asinh(w)/w
        let want = w.asinh() / w;
        assert!((hyp2f1_half(b, w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn hyp_rejects_bad_input() {
        assert!(hyp2f1_half(0.0, 1.0).is_err());
        assert!(hyp2f1_half(1.0, f64::INFINITY).is_err());
    }
}
