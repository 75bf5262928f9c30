use std::f64::consts::PI;

use crate::error::{Error, NumericContext, Result};

/// Iteration cap shared by the incomplete-gamma series and continued fraction.
pub const MAX_ITERATIONS: usize = 10_000;

/// Both expansions stop once the relative increment falls below this.
pub const RELATIVE_INCREMENT: f64 = 1e-15;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_406;

/// `ln Γ(z)` for `z > 0`.
pub fn log_gamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("log_gamma requires z > 0, got {z}")));
    }
    Ok(libm::lgamma(z))
}

/// Stirling remainder `ln Γ(n+1) - (n + 1/2) ln n + n - ln √(2π)`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;

    if n <= 15.0 {
        return libm::lgamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/m) + m - x`, accurate when `x ≈ m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln(x^s e^{-x} / Γ(s+1))`, the common prefactor of both expansions.
pub(crate) fn log_poisson_kernel(s: f64, x: f64) -> f64 {
    if s < 10.0 {
        s * x.ln() - x - libm::lgamma(s + 1.0)
    } else {
        -stirling_error(s) - deviance(s, x) - 0.5 * (2.0 * PI * s).ln()
    }
}

fn check_domain(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!(
            "incomplete gamma requires s > 0, got {s}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!(
            "incomplete gamma requires x >= 0, got {x}"
        )));
    }
    Ok(())
}

/// `ln P(s, x)` by the power series; valid (and used) for `x < s + 1`.
fn log_lower_series(s: f64, x: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut denom = s;
    for _ in 0..MAX_ITERATIONS {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term < sum * RELATIVE_INCREMENT {
            return Ok(log_poisson_kernel(s, x) + sum.ln());
        }
    }
    Err(Error::numeric(
        NumericContext::new("numerics"),
        format!("incomplete gamma series did not converge for s={s}, x={x}"),
    ))
}

/// `ln Q(s, x)` by the Legendre continued fraction (modified Lentz); used for
/// `x >= s + 1`.
fn log_upper_fraction(s: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITERATIONS {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < RELATIVE_INCREMENT {
            return Ok(log_poisson_kernel(s, x) + s.ln() + h.ln());
        }
    }
    Err(Error::numeric(
        NumericContext::new("numerics"),
        format!("incomplete gamma continued fraction did not converge for s={s}, x={x}"),
    ))
}

/// `(ln P(s,x), ln Q(s,x))`, each computed from whichever expansion is
/// accurate and the other by `ln(1 - e^v)`.
pub fn log_reg_gamma_pair(s: f64, x: f64) -> Result<(f64, f64)> {
    check_domain(s, x)?;
    if x == 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    if x.is_infinite() {
        return Ok((0.0, f64::NEG_INFINITY));
    }
    if x < s + 1.0 {
        let lp = log_lower_series(s, x)?;
        Ok((lp, log1m_exp(lp)))
    } else {
        let lq = log_upper_fraction(s, x)?;
        Ok((log1m_exp(lq), lq))
    }
}

/// `ln(1 - e^v)` for `v <= 0`.
pub(crate) fn log1m_exp(v: f64) -> f64 {
    if v >= 0.0 {
        f64::NEG_INFINITY
    } else if v > -std::f64::consts::LN_2 {
        (-v.exp_m1()).ln()
    } else {
        (-v.exp()).ln_1p()
    }
}

/// `ln P(s, x)` with `P(s, x) = γ(s, x) / Γ(s)`.
pub fn log_reg_lower_gamma(s: f64, x: f64) -> Result<f64> {
    log_reg_gamma_pair(s, x).map(|(lp, _)| lp)
}

/// `ln Q(s, x)` with `Q = 1 - P`.
pub fn log_reg_upper_gamma(s: f64, x: f64) -> Result<f64> {
    log_reg_gamma_pair(s, x).map(|(_, lq)| lq)
}

/// Regularized lower incomplete gamma `P(s, x) ∈ [0, 1]`.
pub fn reg_lower_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(log_reg_lower_gamma(s, x)?.exp().clamp(0.0, 1.0))
}

/// Regularized upper incomplete gamma `Q(s, x) ∈ [0, 1]`.
pub fn reg_upper_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(log_reg_upper_gamma(s, x)?.exp().clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn log_gamma_small_integers() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert_eq!(log_gamma(2.0).unwrap(), 0.0);
        assert!(rel(log_gamma(5.0).unwrap(), 24f64.ln()) < 1e-15);
    }

    #[test]
    fn log_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 0..=20u32 {
            if n > 0 {
                fact *= n as f64;
            }
            let got = log_gamma(n as f64 + 1.0).unwrap().exp();
            assert!(rel(got, fact) <= 1e-12, "n={n}: {got} vs {fact}");
        }
    }

    #[test]
    fn log_gamma_half_integers_and_extremes() {
        // mpmath, 40 digits
        let cases = [
            (1.5, -0.120_782_237_635_245_222_35),
            (2.5, 0.284_682_870_472_919_159_63),
            (10.5, 13.940_625_219_403_763_633),
            (50.5, 146.519_255_490_720_627_22),
            (1e6, 12_815_504.569_147_611_659_98),
            (0.001, 6.907_178_885_383_853_682_5),
        ];
        for (z, want) in cases {
            assert!(rel(log_gamma(z).unwrap(), want) < 1e-12, "z={z}");
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(matches!(log_gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(-2.5), Err(Error::Domain(_))));
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn incomplete_gamma_reference_values() {
        // mpmath gammainc(s, 0, x, regularized=True), 40 digits
        let cases = [
            (2.0, 1.0, 0.264_241_117_657_115_356_81),
            (0.5, 0.3, 0.561_421_973_919_000_136_48),
            (3.7, 2.0, 0.186_274_670_889_053_950_6),
            (10.0, 30.0, 0.999_992_878_249_137_184_42),
            (100.5, 120.0, 0.968_884_931_503_500_868_65),
            (1000.0, 900.0, 0.000_549_902_265_711_782_923_01),
            (1000.0, 1100.0, 0.998_940_676_746_070_022_65),
            (5000.0, 5000.0, 0.501_880_634_033_817_355_35),
            (5000.0, 4800.0, 0.002_102_795_480_730_473_379_9),
            (4999.5, 5000.0, 0.504_701_605_461_316_497_48),
        ];
        for (s, x, want) in cases {
            let got = reg_lower_gamma(s, x).unwrap();
            assert!((got - want).abs() <= 1e-12, "P({s},{x}) = {got}, want {want}");
        }
    }

    #[test]
    fn incomplete_gamma_log_is_relative_in_deep_tail() {
        // ln P(50, 10) = -43.1313793140824281 (mpmath)
        let got = log_reg_lower_gamma(50.0, 10.0).unwrap();
        assert!(rel(got, -43.131_379_314_082_428_1) < 1e-13);
        // ln P(1000, 900)
        let got = log_reg_lower_gamma(1000.0, 900.0).unwrap();
        assert!(rel(got, -7.505_769_994_233_892_399_1) < 1e-12);
    }

    #[test]
    fn incomplete_gamma_closed_forms() {
        for &x0 in &[0.0f64, 1e-8, 0.3, 1.0, 2.5, 7.0, 40.0] {
            let want = -(-x0).exp_m1();
            assert!((reg_lower_gamma(1.0, x0).unwrap() - want).abs() < 1e-15);
        }
        assert_eq!(reg_lower_gamma(3.7, 0.0).unwrap(), 0.0);
        assert_eq!(reg_upper_gamma(3.7, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn incomplete_gamma_rejects_bad_domain() {
        assert!(matches!(reg_lower_gamma(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(reg_lower_gamma(-1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(reg_lower_gamma(1.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn incomplete_gamma_monotone_in_x() {
        for &s in &[0.3, 1.0, 2.5, 17.0, 150.0, 2000.0] {
            let mut prev = 0.0;
            for i in 0..=400 {
                let x = s * 3.0 * i as f64 / 400.0;
                let p = reg_lower_gamma(s, x).unwrap();
                assert!(p >= prev, "s={s} x={x}: {p} < {prev}");
                assert!((0.0..=1.0).contains(&p));
                prev = p;
            }
        }
    }

    #[test]
    fn lower_and_upper_are_complementary() {
        for &(s, x) in &[(0.7, 0.2), (4.0, 4.5), (30.0, 29.0), (30.0, 31.5), (800.0, 830.0)] {
            let p = reg_lower_gamma(s, x).unwrap();
            let q = reg_upper_gamma(s, x).unwrap();
            assert!((p + q - 1.0).abs() < 1e-14);
        }
    }
}
