use std::ops::{Add, Mul};

use crate::error::{Error, Result};

use super::gamma::{log1m_exp, log_poisson_kernel};

/// The natural logarithm of a nonnegative quantity. `LogReal::ZERO` (stored
/// as `-inf`) is the log of zero: it absorbs under addition and annihilates
/// under multiplication.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogReal(f64);

impl LogReal {
    pub const ZERO: LogReal = LogReal(f64::NEG_INFINITY);
    pub const ONE: LogReal = LogReal(0.0);

    /// Wraps a log value. `+inf` and NaN are rejected.
    pub fn from_ln(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln == f64::INFINITY {
            return Err(Error::domain(format!("not a log of a finite value: {ln}")));
        }
        Ok(LogReal(ln))
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::domain(format!(
                "LogReal needs a finite nonnegative value, got {v}"
            )));
        }
        Ok(LogReal(v.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Add for LogReal {
    type Output = LogReal;

    fn add(self, rhs: LogReal) -> LogReal {
        let (hi, lo) = if self.0 >= rhs.0 {
            (self.0, rhs.0)
        } else {
            (rhs.0, self.0)
        };
        if lo == f64::NEG_INFINITY {
            return LogReal(hi);
        }
        LogReal(hi + (lo - hi).exp().ln_1p())
    }
}

impl Mul for LogReal {
    type Output = LogReal;

    fn mul(self, rhs: LogReal) -> LogReal {
        if self.is_zero() || rhs.is_zero() {
            return LogReal::ZERO;
        }
        LogReal(self.0 + rhs.0)
    }
}

impl std::iter::Sum for LogReal {
    fn sum<I: Iterator<Item = LogReal>>(iter: I) -> LogReal {
        let logs: Vec<f64> = iter.map(LogReal::ln).collect();
        LogReal(log_sum_exp(&logs))
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// `ln Σ e^{l_i}`; empty input gives `-inf`.
pub fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: CompensatedSum = logs.iter().map(|&l| (l - max).exp()).collect();
    max + s.value().ln()
}

/// `ln(e^la - e^lb)` for `la > lb`. `lb = -inf` is allowed.
pub fn log_diff_exp(la: f64, lb: f64) -> Result<f64> {
    if la.is_nan() || lb.is_nan() || !(la > lb) || la == f64::INFINITY {
        return Err(Error::domain(format!(
            "log_diff_exp needs la > lb, got la={la}, lb={lb}"
        )));
    }
    if lb == f64::NEG_INFINITY {
        return Ok(la);
    }
    Ok(la + log1m_exp(lb - la))
}

/// `ln Exp_j(x)` where `Exp_j(x) = Σ_{k=0}^{j} x^k / k!`.
///
/// Summation starts at the largest term `k* = min(j, ⌊x⌋)` and walks outward
/// by the ratio `x/k`, so nothing overflows for large `x`.
pub fn log_exp_partial(j: u64, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "log_exp_partial requires finite x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let kstar = j.min(x.floor() as u64);
    // ln(x^k* / k*!)
    let lead = if kstar == 0 {
        0.0
    } else {
        log_poisson_kernel(kstar as f64, x) + x
    };

    let mut sum = CompensatedSum::new();
    sum.add(1.0);
    let mut t = 1.0;
    for k in (1..=kstar).rev() {
        t *= k as f64 / x;
        sum.add(t);
        if t < 1e-18 * sum.value() {
            break;
        }
    }
    t = 1.0;
    for k in kstar + 1..=j {
        t *= x / k as f64;
        sum.add(t);
        if t < 1e-18 * sum.value() {
            break;
        }
    }
    Ok(lead + sum.value().ln())
}
