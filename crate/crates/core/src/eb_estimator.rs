//! Nonparametric empirical Bayes estimator built from ratios of empirical counts
//!
//! ```text
//! ψ_n(x) = (1/n) Σ_j c_1(X_j - x) I{X_j >= x+1} / c_r(X_j)
//! q_n(x) = (1/n) Σ_j I{X_j = x} / c_r(x)
//! θ_n(x) = min{ ψ_n(x) / q_n(x), 1 }
//! ```
//!
//! and [`EstimatorTable`], the finite `x ↦ estimate` map shared by every rule
//! in the crate.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::bt_dist::log_coeff;
use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;

/// Which rule produced an [`EstimatorTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Eb,
    MonotoneEb,
    Bayes,
    Mle,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Eb => "eb",
            Label::MonotoneEb => "monotone_eb",
            Label::Bayes => "bayes",
            Label::Mle => "mle",
        })
    }
}

/// Estimates of θ for every `x` in `r..=cap`, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTable {
    r: u64,
    cap: u64,
    values: Vec<f64>,
    label: Label,
}

impl EstimatorTable {
    pub fn new(r: u64, cap: u64, values: Vec<f64>, label: Label) -> Result<Self> {
        if r < 1 || cap < r {
            return Err(Error::domain(format!(
                "estimator table needs 1 <= r <= cap, got r={r}, cap={cap}"
            )));
        }
        if values.len() as u64 != cap - r + 1 {
            return Err(Error::usage(format!(
                "estimator table for x={r}..={cap} needs {} values, got {}",
                cap - r + 1,
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::domain(format!(
                "estimate at x={} is {v}, outside [0, 1]",
                r + i as u64
            )));
        }
        Ok(Self {
            r,
            cap,
            values,
            label,
        })
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Estimate at `x`; `None` outside `r..=cap`.
    pub fn get(&self, x: u64) -> Option<f64> {
        if x < self.r || x > self.cap {
            None
        } else {
            Some(self.values[(x - self.r) as usize])
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (self.r..).zip(self.values.iter().copied())
    }

    /// Positions `x` with `θ(x+1) < θ(x) - tol`.
    pub fn descents(&self, tol: f64) -> Vec<u64> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] < w[0] - tol)
            .map(|(i, _)| self.r + i as u64)
            .collect()
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.descents(tol).is_empty()
    }
}

/// Value assigned to `θ_n(x)` where `q_n(x) = 0`, i.e. `x` was never observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QZeroConvention {
    /// θ_n(x) = 1, the limit of min{ψ/q, 1} as q ↓ 0.
    #[default]
    One,
    Zero,
    /// θ_n(x) = (x - r)/x.
    Mle,
}

impl fmt::Display for QZeroConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QZeroConvention::One => "one",
            QZeroConvention::Zero => "zero",
            QZeroConvention::Mle => "mle",
        })
    }
}

impl FromStr for QZeroConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(QZeroConvention::One),
            "zero" => Ok(QZeroConvention::Zero),
            "mle" => Ok(QZeroConvention::Mle),
            other => Err(Error::usage(format!(
                "unknown q-zero convention '{other}' (expected one, zero or mle)"
            ))),
        }
    }
}

/// Past observations `X_1..X_n`, all `>= r`.
#[derive(Debug, Clone, PartialEq)]
pub struct EbHistory {
    r: u64,
    observations: Vec<u64>,
    counts: BTreeMap<u64, u64>,
}

impl EbHistory {
    pub fn new(r: u64, observations: Vec<u64>) -> Result<Self> {
        if r < 1 {
            return Err(Error::domain("history needs r >= 1"));
        }
        if observations.is_empty() {
            return Err(Error::domain("history needs at least one observation"));
        }
        let mut counts = BTreeMap::new();
        for &x in &observations {
            if x < r {
                return Err(Error::domain(format!(
                    "observation {x} is below r={r}"
                )));
            }
            *counts.entry(x).or_insert(0) += 1;
        }
        Ok(Self {
            r,
            observations,
            counts,
        })
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[u64] {
        &self.observations
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn count(&self, x: u64) -> u64 {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    pub fn max_observation(&self) -> u64 {
        *self.counts.keys().next_back().expect("nonempty history")
    }

    fn check_x(&self, x: u64) -> Result<()> {
        if x < self.r {
            return Err(Error::domain(format!(
                "x={x} is below r={}",
                self.r
            )));
        }
        Ok(())
    }

    /// `ln ψ_n(x)`; `-inf` when no observation exceeds `x`.
    pub fn log_psi(&self, x: u64) -> Result<f64> {
        self.check_x(x)?;
        let mut terms = Vec::new();
        for (&y, &count) in self.counts.range(x + 1..) {
            terms.push((count as f64).ln() + log_coeff(1, y - x)? - log_coeff(self.r, y)?);
        }
        Ok(log_sum_exp(&terms) - (self.n() as f64).ln())
    }

    pub fn psi(&self, x: u64) -> Result<f64> {
        self.log_psi(x).map(f64::exp)
    }

    /// `ln q_n(x)`; `-inf` when `x` was never observed.
    pub fn log_q(&self, x: u64) -> Result<f64> {
        self.check_x(x)?;
        let count = self.count(x);
        if count == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok((count as f64).ln() - (self.n() as f64).ln() - log_coeff(self.r, x)?)
    }

    pub fn q(&self, x: u64) -> Result<f64> {
        self.log_q(x).map(f64::exp)
    }
}

/// `θ_n(x)` for `x = r..=cap`, with `conv` filling unobserved `x`.
pub fn eb_table(h: &EbHistory, cap: u64, conv: QZeroConvention) -> Result<EstimatorTable> {
    if cap < h.max_observation() {
        return Err(Error::usage(format!(
            "cap {cap} is below the largest observation {}",
            h.max_observation()
        )));
    }
    let r = h.r;
    // ln c_1(d) for d = 1..=cap-r and ln c_r(y) for each observed y.
    let log_c1: Vec<f64> = (1..=cap - r + 1)
        .map(|d| log_coeff(1, d))
        .collect::<Result<_>>()?;
    let observed: Vec<(u64, f64, f64)> = h
        .counts
        .iter()
        .map(|(&y, &c)| Ok((y, (c as f64).ln(), log_coeff(r, y)?)))
        .collect::<Result<_>>()?;
    let ln_n = (h.n() as f64).ln();

    let mut values = Vec::with_capacity((cap - r + 1) as usize);
    let mut terms = Vec::with_capacity(observed.len());
    for x in r..=cap {
        let here = observed.iter().find(|(y, _, _)| *y == x);
        let value = match here {
            None => match conv {
                QZeroConvention::One => 1.0,
                QZeroConvention::Zero => 0.0,
                QZeroConvention::Mle => (x - r) as f64 / x as f64,
            },
            Some(&(_, ln_count, ln_cr)) => {
                terms.clear();
                terms.extend(
                    observed
                        .iter()
                        .filter(|(y, _, _)| *y > x)
                        .map(|&(y, lc, lcr)| lc + log_c1[(y - x - 1) as usize] - lcr),
                );
                let log_psi = log_sum_exp(&terms) - ln_n;
                let log_q = ln_count - ln_n - ln_cr;
                (log_psi - log_q).exp().min(1.0)
            }
        };
        values.push(value);
    }
    EstimatorTable::new(r, cap, values, Label::Eb)
}
