//! The Borel-Tanner law
//!
//! ```text
//! p_r(x; θ) = c_r(x) θ^(x-r) e^(-θx),   x = r, r+1, ...
//! c_r(x)    = r x^(x-r-1) / (x-r)!
//! ```
//!
//! It is the law of the total progeny of a Galton-Watson process with
//! Poisson(θ) offspring started from `r` ancestors. Two samplers are provided:
//! inverse-cdf on the truncated support, and direct simulation of the
//! branching process, which serves as an independent check of the first.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, NumericContext, Result};
use crate::numerics::{log_gamma, CompensatedSum};

/// Default omitted-mass tolerance for risk computations.
pub const RISK_TAIL_EPS: f64 = 1e-12;

/// Default omitted-mass tolerance for sampling caps.
pub const SAMPLING_TAIL_EPS: f64 = 1e-9;

/// Largest cap [`support_cap`] will search.
pub const MAX_SUPPORT_CAP: u64 = 10_000_000;

/// Total progeny at which [`sample_branching`] gives up.
pub const MAX_PROGENY: u64 = 100_000_000;

/// `(r, θ)` with `r >= 1` and `0 < θ < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtParams {
    r: u64,
    theta: f64,
}

impl BtParams {
    pub fn new(r: u64, theta: f64) -> Result<Self> {
        if r < 1 {
            return Err(Error::domain("Borel-Tanner r must be at least 1"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::domain(format!(
                "Borel-Tanner theta must lie in (0, 1), got {theta}"
            )));
        }
        Ok(Self { r, theta })
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `r / (1 - θ)`
    pub fn mean(&self) -> f64 {
        self.r as f64 / (1.0 - self.theta)
    }

    /// `r θ / (1 - θ)^3`
    pub fn variance(&self) -> f64 {
        self.r as f64 * self.theta / (1.0 - self.theta).powi(3)
    }
}

/// A truncation point of the support `r..=cap` together with an upper bound on
/// the mass lying beyond it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportCap {
    pub r: u64,
    pub cap: u64,
    pub tail_bound: f64,
}

impl SupportCap {
    /// An explicitly chosen cap with no tail guarantee (`tail_bound = 1`).
    pub fn explicit(r: u64, cap: u64) -> Result<Self> {
        if r < 1 || cap < r {
            return Err(Error::domain(format!(
                "support cap needs 1 <= r <= cap, got r={r}, cap={cap}"
            )));
        }
        Ok(Self {
            r,
            cap,
            tail_bound: 1.0,
        })
    }

    /// Number of support points `cap - r + 1`.
    pub fn len(&self) -> usize {
        (self.cap - self.r + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xs(&self) -> std::ops::RangeInclusive<u64> {
        self.r..=self.cap
    }
}

/// `ln c_r(x) = ln r + (x-r-1) ln x - ln (x-r)!`, exactly 0 at `x = r`.
pub fn log_coeff(r: u64, x: u64) -> Result<f64> {
    if r < 1 || x < r {
        return Err(Error::domain(format!(
            "log_coeff needs x >= r >= 1, got r={r}, x={x}"
        )));
    }
    if x == r {
        return Ok(0.0);
    }
    let xf = x as f64;
    Ok((r as f64).ln() + (x - r - 1) as f64 * xf.ln() - log_gamma((x - r + 1) as f64)?)
}

/// `ln c_r(x)` for `x = r..=cap`, indexed by `x - r`.
pub fn log_coeffs(r: u64, cap: u64) -> Result<Vec<f64>> {
    (r..=cap).map(|x| log_coeff(r, x)).collect()
}

/// `ln p_r(x; θ)` given a precomputed `ln c_r(x)`. Also valid at `θ = 1`.
#[inline]
pub(crate) fn log_pmf_with_coeff(r: u64, theta: f64, log_c: f64, x: u64) -> f64 {
    let k = (x - r) as f64;
    let lt = if k == 0.0 { 0.0 } else { k * theta.ln() };
    log_c + lt - theta * x as f64
}

pub fn log_pmf(p: &BtParams, x: u64) -> Result<f64> {
    if x < p.r {
        return Err(Error::domain(format!(
            "log_pmf needs x >= r, got r={}, x={x}",
            p.r
        )));
    }
    Ok(log_pmf_with_coeff(p.r, p.theta, log_coeff(p.r, x)?, x))
}

pub fn pmf(p: &BtParams, x: u64) -> Result<f64> {
    log_pmf(p, x).map(f64::exp)
}

/// `F(x; θ) = Σ_{k=r}^{x} p_r(k; θ)`, zero below `r`.
pub fn cdf(p: &BtParams, x: u64) -> f64 {
    if x < p.r {
        return 0.0;
    }
    let mut acc = CompensatedSum::new();
    for k in p.r..=x {
        // x >= r was checked, so log_coeff cannot fail.
        let lc = log_coeff(p.r, k).expect("k >= r");
        acc.add(log_pmf_with_coeff(p.r, p.theta, lc, k).exp());
    }
    acc.value().min(1.0)
}

/// Smallest `cap` with `1 - F(cap; θ_max) <= eps`.
///
/// The family is stochastically increasing in θ, so this cap bounds the
/// omitted mass for every `θ <= θ_max`.
pub fn support_cap(r: u64, theta_max: f64, eps: f64) -> Result<SupportCap> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("tail eps must lie in (0, 1), got {eps}")));
    }
    let p = BtParams::new(r, theta_max)?;
    let mut acc = CompensatedSum::new();
    for x in r..=MAX_SUPPORT_CAP {
        acc.add(log_pmf_with_coeff(r, p.theta, log_coeff(r, x)?, x).exp());
        if 1.0 - acc.value() <= eps {
            return Ok(SupportCap {
                r,
                cap: x,
                tail_bound: eps,
            });
        }
    }
    Err(Error::numeric(
        NumericContext::new("bt_dist").at_a(theta_max),
        format!("support cap search exceeded {MAX_SUPPORT_CAP} (r={r}, eps={eps:e})"),
    ))
}

/// One draw from the truncated inverse-cdf sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub value: u64,
    /// The uniform variate fell beyond `F(cap)` and the draw was clamped.
    pub truncated: bool,
}

/// Inverse-cdf draw with the default sampling tail tolerance.
pub fn sample_inverse<R: Rng + ?Sized>(p: &BtParams, rng: &mut R) -> Draw {
    sample_inverse_capped(p, SAMPLING_TAIL_EPS, rng)
}

/// Draws `U ~ U(0,1)` and returns the smallest `x` with `F(x) >= U`, scanning
/// upward from `r`. The scan stops at the smallest `x` whose tail is at most
/// `eps`; if `U` lies beyond that point the draw is flagged as truncated.
pub fn sample_inverse_capped<R: Rng + ?Sized>(p: &BtParams, eps: f64, rng: &mut R) -> Draw {
    let u: f64 = rng.random();
    let mut acc = CompensatedSum::new();
    let mut x = p.r;
    loop {
        let lc = log_coeff(p.r, x).expect("x >= r");
        acc.add(log_pmf_with_coeff(p.r, p.theta, lc, x).exp());
        let f = acc.value();
        if f >= u {
            return Draw {
                value: x,
                truncated: false,
            };
        }
        if 1.0 - f <= eps || x >= MAX_SUPPORT_CAP {
            return Draw {
                value: x,
                truncated: true,
            };
        }
        x += 1;
    }
}

/// Prefix-sum cdf table for repeated draws at one `(r, θ)`.
#[derive(Debug, Clone)]
pub struct CdfTable {
    params: BtParams,
    cdf: Vec<f64>,
}

impl CdfTable {
    /// Tabulates `F` up to the smallest cap with tail at most `eps`.
    pub fn new(p: BtParams, eps: f64) -> Result<Self> {
        let cap = support_cap(p.r, p.theta, eps)?;
        let mut acc = CompensatedSum::new();
        let mut cdf = Vec::with_capacity(cap.len());
        for x in cap.xs() {
            acc.add(log_pmf_with_coeff(p.r, p.theta, log_coeff(p.r, x)?, x).exp());
            cdf.push(acc.value());
        }
        Ok(Self { params: p, cdf })
    }

    pub fn params(&self) -> &BtParams {
        &self.params
    }

    pub fn cap(&self) -> u64 {
        self.params.r + self.cdf.len() as u64 - 1
    }

    pub fn cdf(&self, x: u64) -> f64 {
        if x < self.params.r {
            0.0
        } else {
            let i = ((x - self.params.r) as usize).min(self.cdf.len() - 1);
            self.cdf[i]
        }
    }

    /// Same contract as [`sample_inverse_capped`], by binary search.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&f| f < u);
        if i == self.cdf.len() {
            Draw {
                value: self.cap(),
                truncated: true,
            }
        } else {
            Draw {
                value: self.params.r + i as u64,
                truncated: false,
            }
        }
    }
}

/// Total progeny of a Galton-Watson process with `r` ancestors and Poisson(θ)
/// offspring, by direct simulation of the generations.
pub fn sample_branching<R: Rng + ?Sized>(p: &BtParams, rng: &mut R) -> Result<u64> {
    let mut total = p.r;
    let mut generation = p.r;
    while generation > 0 {
        // Sum of `generation` iid Poisson(θ) is Poisson(generation·θ).
        let lambda = generation as f64 * p.theta;
        let poisson = Poisson::new(lambda).map_err(|e| {
            Error::numeric(
                NumericContext::new("bt_dist").at_a(p.theta),
                format!("poisson({lambda}): {e}"),
            )
        })?;
        generation = poisson.sample(rng) as u64;
        total += generation;
        if total > MAX_PROGENY {
            return Err(Error::numeric(
                NumericContext::new("bt_dist").at_a(p.theta),
                format!("branching process exceeded {MAX_PROGENY} individuals"),
            ));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_validation() {
        assert!(BtParams::new(0, 0.5).is_err());
        assert!(BtParams::new(1, 0.0).is_err());
        assert!(BtParams::new(1, 1.0).is_err());
        assert!(BtParams::new(1, f64::NAN).is_err());
        assert!(BtParams::new(3, 0.6).is_ok());
    }

    #[test]
    fn log_coeff_examples() {
        assert_eq!(log_coeff(5, 5).unwrap(), 0.0);
        // c_1(3) = 3^1 / 2! = 1.5; c_3(4) = 3 * 4^0 / 1! = 3
        assert!((log_coeff(1, 3).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        assert!((log_coeff(3, 4).unwrap() - 3f64.ln()).abs() < 1e-15);
        // c_1(1) = c_1(2) = 1
        assert_eq!(log_coeff(1, 1).unwrap(), 0.0);
        assert!(log_coeff(1, 2).unwrap().abs() < 1e-15);
        assert!(matches!(log_coeff(3, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn log_pmf_examples() {
        let p = BtParams::new(3, 0.6).unwrap();
        assert!((log_pmf(&p, 3).unwrap() + 1.8).abs() < 1e-15);
        let p = BtParams::new(1, 0.5).unwrap();
        assert!((log_pmf(&p, 2).unwrap() - (0.5f64.ln() - 1.0)).abs() < 1e-15);
        assert!(log_pmf(&BtParams::new(3, 0.6).unwrap(), 2).is_err());
    }

    #[test]
    fn first_atom_is_exp_minus_r_theta() {
        for r in [1, 2, 3, 7, 20] {
            for theta in [0.01, 0.3, 0.6, 0.95] {
                let p = BtParams::new(r, theta).unwrap();
                let want = (-(r as f64) * theta).exp();
                assert!((pmf(&p, r).unwrap() - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn cdf_examples() {
        let p = BtParams::new(3, 0.6).unwrap();
        assert_eq!(cdf(&p, 2), 0.0);
        assert_eq!(cdf(&p, 0), 0.0);
        assert!((cdf(&p, 3) - (-1.8f64).exp()).abs() < 1e-16);
        let cap = support_cap(3, 0.6, 1e-12).unwrap();
        assert!(cdf(&p, cap.cap) >= 1.0 - 1e-12);
    }

    #[test]
    fn support_cap_examples() {
        let cap = support_cap(3, 0.8, 1e-12).unwrap();
        let p = BtParams::new(3, 0.8).unwrap();
        assert!(1.0 - cdf(&p, cap.cap) <= 1e-12);
        assert!(1.0 - cdf(&p, cap.cap - 1) > 1e-12);

        // p_1(1; 0.1) = e^{-0.1} > 0.5
        assert_eq!(support_cap(1, 0.1, 0.5).unwrap().cap, 1);

        assert!(support_cap(3, 0.8, 1.0).is_err());
        assert!(support_cap(3, 0.8, 0.0).is_err());
        assert!(support_cap(3, 1.0, 0.1).is_err());
    }

    #[test]
    fn inverse_sampler_first_atom() {
        // U below e^{-rθ} must yield r; check by replaying the stream.
        let p = BtParams::new(3, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut replay = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let u: f64 = replay.random();
            let d = sample_inverse(&p, &mut rng);
            if u < (-1.8f64).exp() {
                assert_eq!(d.value, 3);
            } else {
                assert!(d.value > 3);
            }
        }
    }

    #[test]
    fn table_and_scan_samplers_agree_draw_for_draw() {
        let p = BtParams::new(2, 0.7).unwrap();
        let table = CdfTable::new(p, SAMPLING_TAIL_EPS).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5000 {
            assert_eq!(sample_inverse(&p, &mut a), table.sample(&mut b));
        }
    }

    #[test]
    fn branching_with_tiny_theta_is_almost_always_r() {
        let p = BtParams::new(4, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_branching(&p, &mut rng).unwrap(), 4);
        }
    }
}
