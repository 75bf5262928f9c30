//! The Bayes rule `θ_G(x) = E[Θ | X = x] = I_1(x) / I_0(x)`, the posterior
//! second moment `I_2/I_0`, the marginal `m(x) = c_r(x) I_0(x)`, and the two
//! closed forms available for Beta(v, w) priors with integer shapes.

use rayon::prelude::*;

use crate::bt_dist::{log_coeff, SupportCap};
use crate::eb_estimator::{EstimatorTable, Label};
use crate::error::{Error, NumericContext, Result};
use crate::numerics::{log_diff_exp, log_exp_partial, log_gamma, log_sum_exp};
use crate::prior::Prior;

/// Largest tolerated cancellation factor in the closed forms.
const MAX_CANCELLATION: f64 = 1e6;

pub fn posterior_mean(g: &Prior, r: u64, x: u64) -> Result<f64> {
    let l0 = g.log_weighted_integral(r, x, 0)?;
    let l1 = g.log_weighted_integral(r, x, 1)?;
    let (lo, hi) = g.support();
    Ok((l1 - l0).exp().clamp(lo, hi))
}

pub fn posterior_second_moment(g: &Prior, r: u64, x: u64) -> Result<f64> {
    let l0 = g.log_weighted_integral(r, x, 0)?;
    let l2 = g.log_weighted_integral(r, x, 2)?;
    let (lo, hi) = g.support();
    Ok((l2 - l0).exp().clamp(lo * lo, hi * hi))
}

/// `ln(e^x - Exp_j(x))`, failing when the subtraction loses more than a
/// factor [`MAX_CANCELLATION`] of relative precision.
fn log_exp_tail(j: u64, x: f64) -> Result<f64> {
    let le = log_exp_partial(j, x)?;
    let d = log_diff_exp(x, le).map_err(|_| {
        Error::numeric(
            NumericContext::new("bayes_rule").at_x(x as u64),
            format!("e^x - Exp_{j}(x) vanished"),
        )
    })?;
    if x - d > MAX_CANCELLATION.ln() {
        return Err(Error::numeric(
            NumericContext::new("bayes_rule").at_x(x as u64),
            format!("e^x - Exp_{j}(x) cancels beyond tolerance"),
        ));
    }
    Ok(d)
}

/// Posterior mean under the Uniform(0,1) prior from the closed form
///
/// ```text
/// θ(x) = (x+1-r)/x · (e^x - Exp_{x+1-r}(x)) / (e^x - Exp_{x-r}(x))
/// ```
///
/// evaluated in log space.
pub fn posterior_mean_uniform01(r: u64, x: u64) -> Result<f64> {
    if r < 1 || x < r {
        return Err(Error::domain(format!(
            "closed form needs x >= r >= 1, got r={r}, x={x}"
        )));
    }
    let xf = x as f64;
    let k = x - r;
    let l = ((k + 1) as f64).ln() - xf.ln() + log_exp_tail(k + 1, xf)? - log_exp_tail(k, xf)?;
    Ok(l.exp())
}

/// Sum of signed log-magnitude terms, returned as a log (the sum must be
/// positive). Positive and negative parts are accumulated separately.
fn signed_log_sum(terms: &[(bool, f64)], x: u64) -> Result<f64> {
    let pos: Vec<f64> = terms.iter().filter(|t| t.0).map(|t| t.1).collect();
    let neg: Vec<f64> = terms.iter().filter(|t| !t.0).map(|t| t.1).collect();
    let lp = log_sum_exp(&pos);
    let ln = log_sum_exp(&neg);
    let total = log_diff_exp(lp, ln).map_err(|_| {
        Error::numeric(
            NumericContext::new("bayes_rule").at_x(x),
            "alternating sum is not positive; use the quadrature path",
        )
    })?;
    if lp - total > MAX_CANCELLATION.ln() {
        return Err(Error::numeric(
            NumericContext::new("bayes_rule").at_x(x),
            "alternating sum cancels catastrophically; use the quadrature path",
        ));
    }
    Ok(total)
}

fn log_binomial(n: u64, k: u64) -> Result<f64> {
    Ok(log_gamma((n + 1) as f64)? - log_gamma((k + 1) as f64)? - log_gamma((n - k + 1) as f64)?)
}

/// Posterior mean under a Beta(v, w) prior with integer shapes from the
/// binomial expansion of `(1-θ)^(w-1)`:
///
/// ```text
///          Σ_k (-1)^k C(w-1,k) (x-r+v+k)!   / x^(k+1) [e^x - Exp_{x-r+v+k}(x)]
/// θ(x) = ---------------------------------------------------------------------
///          Σ_k (-1)^k C(w-1,k) (x-r+v+k-1)! / x^k     [e^x - Exp_{x-r+v+k-1}(x)]
/// ```
pub fn posterior_mean_beta(v: u64, w: u64, r: u64, x: u64) -> Result<f64> {
    if v < 1 || w < 1 {
        return Err(Error::domain(format!(
            "closed form needs integer shapes >= 1, got v={v}, w={w}"
        )));
    }
    if r < 1 || x < r {
        return Err(Error::domain(format!(
            "closed form needs x >= r >= 1, got r={r}, x={x}"
        )));
    }
    let xf = x as f64;
    let lx = xf.ln();
    let base = x - r + v;
    let mut num = Vec::with_capacity(w as usize);
    let mut den = Vec::with_capacity(w as usize);
    for k in 0..w {
        let sign = k % 2 == 0;
        let lb = log_binomial(w - 1, k)?;
        let j = base + k;
        num.push((
            sign,
            lb + log_gamma((j + 1) as f64)? - (k + 1) as f64 * lx + log_exp_tail(j, xf)?,
        ));
        den.push((
            sign,
            lb + log_gamma(j as f64)? - k as f64 * lx + log_exp_tail(j - 1, xf)?,
        ));
    }
    Ok((signed_log_sum(&num, x)? - signed_log_sum(&den, x)?).exp())
}

/// Bayes rule, posterior second moment and marginal for `x = r..=cap`.
#[derive(Debug, Clone)]
pub struct BayesTable {
    r: u64,
    prior: Prior,
    cap: SupportCap,
    theta: Vec<f64>,
    second_moment: Vec<f64>,
    marginal: Vec<f64>,
}

struct Row {
    theta: f64,
    second_moment: f64,
    marginal: f64,
}

fn bayes_row(g: &Prior, r: u64, x: u64) -> Result<Row> {
    let l0 = g.log_weighted_integral(r, x, 0)?;
    let l1 = g.log_weighted_integral(r, x, 1)?;
    let l2 = g.log_weighted_integral(r, x, 2)?;
    let (lo, hi) = g.support();
    Ok(Row {
        theta: (l1 - l0).exp().clamp(lo, hi),
        second_moment: (l2 - l0).exp().clamp(lo * lo, hi * hi),
        marginal: (log_coeff(r, x)? + l0).exp(),
    })
}

/// Tabulates the Bayes rule over the truncated support. Rows are computed in
/// parallel and collected in `x` order.
pub fn build_bayes_table(g: &Prior, r: u64, cap: SupportCap) -> Result<BayesTable> {
    if cap.r != r {
        return Err(Error::usage(format!(
            "support cap was built for r={}, table requested for r={r}",
            cap.r
        )));
    }
    let rows: Vec<Row> = (r..=cap.cap)
        .into_par_iter()
        .map(|x| bayes_row(g, r, x).map_err(|e| e.with_x(x)))
        .collect::<Result<_>>()?;
    let mut theta = Vec::with_capacity(rows.len());
    let mut second_moment = Vec::with_capacity(rows.len());
    let mut marginal = Vec::with_capacity(rows.len());
    for row in rows {
        theta.push(row.theta);
        second_moment.push(row.second_moment);
        marginal.push(row.marginal);
    }
    Ok(BayesTable {
        r,
        prior: g.clone(),
        cap,
        theta,
        second_moment,
        marginal,
    })
}

impl BayesTable {
    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn support_cap(&self) -> SupportCap {
        self.cap
    }

    pub fn cap(&self) -> u64 {
        self.cap.cap
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn theta_at(&self, x: u64) -> Option<f64> {
        self.index(x).map(|i| self.theta[i])
    }

    pub fn marginal_at(&self, x: u64) -> Option<f64> {
        self.index(x).map(|i| self.marginal[i])
    }

    fn index(&self, x: u64) -> Option<usize> {
        (x >= self.r && x <= self.cap.cap).then(|| (x - self.r) as usize)
    }

    pub fn xs(&self) -> std::ops::RangeInclusive<u64> {
        self.r..=self.cap.cap
    }

    /// `Σ m(x)` over the table.
    pub fn marginal_mass(&self) -> f64 {
        self.marginal
            .iter()
            .copied()
            .collect::<crate::numerics::CompensatedSum>()
            .value()
    }

    /// `1 - Σ m(x)`: marginal mass beyond the cap.
    pub fn omitted_mass(&self) -> f64 {
        (1.0 - self.marginal_mass()).max(0.0)
    }

    /// The Bayes rule as an estimator table.
    pub fn as_estimator(&self) -> EstimatorTable {
        EstimatorTable::new(self.r, self.cap.cap, self.theta.clone(), Label::Bayes)
            .expect("posterior means lie in [0, 1]")
    }
}
