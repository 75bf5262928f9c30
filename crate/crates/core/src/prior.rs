//! Priors `G` on θ and the weighted integrals
//! `I_m(x) = ∫ θ^(x-r+m) e^(-xθ) dG(θ)`, `m ∈ {0, 1, 2}`.
//!
//! `I_1/I_0` is the posterior mean and `I_2/I_0` the posterior second moment.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, NumericContext, Result};
use crate::numerics::{log_diff_exp, log_gamma, log_reg_gamma_pair, log_sum_exp, quadrature};

/// Relative tolerance of the beta-prior quadrature.
pub const BETA_QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    /// Uniform on `(a, b)`, `0 <= a < b <= 1`.
    Uniform { a: f64, b: f64 },
    /// Beta(v, w) on `(0, 1)`.
    Beta { v: f64, w: f64 },
    /// Finitely many atoms `(θ, weight)`.
    Grid(Vec<(f64, f64)>),
}

/// A validated prior distribution on the reproduction number.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    kind: PriorKind,
}

impl Prior {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && a < b && b <= 1.0) {
            return Err(Error::domain(format!(
                "uniform prior needs 0 <= a < b <= 1, got a={a}, b={b}"
            )));
        }
        Ok(Self {
            kind: PriorKind::Uniform { a, b },
        })
    }

    pub fn beta(v: f64, w: f64) -> Result<Self> {
        if !(v > 0.0 && w > 0.0 && v.is_finite() && w.is_finite()) {
            return Err(Error::domain(format!(
                "beta prior needs v, w > 0, got v={v}, w={w}"
            )));
        }
        Ok(Self {
            kind: PriorKind::Beta { v, w },
        })
    }

    pub fn grid(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::domain("grid prior needs at least one atom"));
        }
        for &(theta, weight) in &atoms {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::domain(format!(
                    "grid atom theta must lie in (0, 1), got {theta}"
                )));
            }
            if !(weight >= 0.0) {
                return Err(Error::domain(format!(
                    "grid weights must be nonnegative, got {weight}"
                )));
            }
        }
        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "grid weights must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            kind: PriorKind::Grid(atoms),
        })
    }

    /// A point mass at `theta`.
    pub fn point_mass(theta: f64) -> Result<Self> {
        Self::grid(vec![(theta, 1.0)])
    }

    pub fn kind(&self) -> &PriorKind {
        &self.kind
    }

    /// Closed support hull `[inf, sup]`.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            PriorKind::Uniform { a, b } => (*a, *b),
            PriorKind::Beta { .. } => (0.0, 1.0),
            PriorKind::Grid(atoms) => atoms
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| {
                    (lo.min(t), hi.max(t))
                }),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            PriorKind::Uniform { a, b } => 0.5 * (a + b),
            PriorKind::Beta { v, w } => v / (v + w),
            PriorKind::Grid(atoms) => atoms.iter().map(|&(t, w)| t * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.kind {
            PriorKind::Uniform { a, b } => (b - a).powi(2) / 12.0,
            PriorKind::Beta { v, w } => v * w / ((v + w).powi(2) * (v + w + 1.0)),
            PriorKind::Grid(atoms) => {
                let m = self.mean();
                atoms.iter().map(|&(t, w)| w * (t - m).powi(2)).sum()
            }
        }
    }

    /// Draws θ from the prior. Draws landing exactly on 0 or 1 are redrawn so
    /// the result is always a valid Borel-Tanner parameter.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            PriorKind::Uniform { a, b } => loop {
                let u: f64 = rng.random();
                let t = a + (b - a) * u;
                if t > 0.0 && t < 1.0 {
                    return t;
                }
            },
            PriorKind::Beta { v, w } => {
                let beta = Beta::new(*v, *w).expect("validated shapes");
                loop {
                    let t = beta.sample(rng);
                    if t > 0.0 && t < 1.0 {
                        return t;
                    }
                }
            }
            PriorKind::Grid(atoms) => {
                if atoms.len() == 1 {
                    return atoms[0].0;
                }
                let index =
                    WeightedIndex::new(atoms.iter().map(|&(_, w)| w)).expect("validated weights");
                atoms[index.sample(rng)].0
            }
        }
    }

    /// `ln I_m(x)` with `I_m(x) = ∫ θ^(x-r+m) e^(-xθ) dG(θ)`.
    pub fn log_weighted_integral(&self, r: u64, x: u64, m: u32) -> Result<f64> {
        if r < 1 || x < r {
            return Err(Error::domain(format!(
                "weighted integral needs x >= r >= 1, got r={r}, x={x}"
            )));
        }
        if m > 2 {
            return Err(Error::domain(format!("moment order m must be 0, 1 or 2, got {m}")));
        }
        let k = (x - r) as f64 + m as f64;
        let xf = x as f64;
        match &self.kind {
            PriorKind::Uniform { a, b } => uniform_log_integral(*a, *b, k, xf)
                .map_err(|e| annotate(e, x, m)),
            PriorKind::Beta { v, w } => {
                beta_log_integral(*v, *w, k, xf).map_err(|e| annotate(e, x, m))
            }
            PriorKind::Grid(atoms) => {
                let terms: Vec<f64> = atoms
                    .iter()
                    .filter(|&&(_, w)| w > 0.0)
                    .map(|&(t, w)| w.ln() + k * t.ln() - xf * t)
                    .collect();
                Ok(log_sum_exp(&terms))
            }
        }
    }
}

fn annotate(e: Error, x: u64, m: u32) -> Error {
    match e {
        Error::Numeric { context, detail } => Error::Numeric {
            context: NumericContext { x: Some(x), ..context },
            detail: format!("{detail} (moment m={m})"),
        },
        other => other,
    }
}

/// `ln ∫_a^b θ^k e^{-xθ} dθ / (b - a)` via
/// `Γ(k+1) x^{-(k+1)} [P(k+1, bx) - P(k+1, ax)]`.
fn uniform_log_integral(a: f64, b: f64, k: f64, x: f64) -> Result<f64> {
    let s = k + 1.0;
    let (lp_hi, lq_hi) = log_reg_gamma_pair(s, b * x)?;
    let (lp_lo, lq_lo) = log_reg_gamma_pair(s, a * x)?;
    // Both endpoints in the upper tail: the difference is better taken
    // between the complements.
    let diff = if a * x >= s + 1.0 {
        log_diff_exp(lq_lo, lq_hi)
    } else {
        log_diff_exp(lp_hi, lp_lo)
    };
    let diff = diff.map_err(|_| {
        Error::numeric(
            NumericContext::new("prior"),
            format!("incomplete gamma difference cancelled on ({a}, {b}) at s={s}"),
        )
    })?;
    Ok(log_gamma(s)? - s * x.ln() + diff - (b - a).ln())
}

/// `ln ∫_0^1 θ^k e^{-xθ} Beta(θ; v, w) dθ` by adaptive quadrature, scaled by
/// the integrand's peak so the quadrature works on O(1) values.
fn beta_log_integral(v: f64, w: f64, k: f64, x: f64) -> Result<f64> {
    let alpha = k + v - 1.0;
    let beta = w - 1.0;
    let log_kernel = move |t: f64| -> f64 {
        let mut g = -x * t;
        if alpha != 0.0 {
            g += alpha * t.ln();
        }
        if beta != 0.0 {
            g += beta * (-t).ln_1p();
        }
        g
    };

    // Stationary points of the log kernel solve x θ² - (α+β+x) θ + α = 0.
    let mut stationary = Vec::new();
    let bq = alpha + beta + x;
    let disc = bq * bq - 4.0 * x * alpha;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // Numerically stable pair of roots.
        let q = 0.5 * (bq + sq);
        for root in [q / x, if q != 0.0 { alpha / q } else { f64::NAN }] {
            if root > 0.0 && root < 1.0 {
                stationary.push(root);
            }
        }
    }

    let mut points = vec![0.0, 1.0];
    let mut scale = log_kernel(0.5);
    for &c in &stationary {
        scale = scale.max(log_kernel(c));
        let curvature = alpha / (c * c) + beta / ((1.0 - c) * (1.0 - c));
        let width = if curvature.abs() > 0.0 {
            1.0 / curvature.abs().sqrt()
        } else {
            0.1
        };
        points.push(c);
        for j in [1.0, 3.0, 10.0, 30.0] {
            points.push(c - j * width);
            points.push(c + j * width);
        }
    }
    points.retain(|p| (0.0..=1.0).contains(p));
    points.sort_by(f64::total_cmp);
    points.dedup_by(|p, q| (*p - *q).abs() < 1e-14);

    let integral = quadrature::integrate(
        |t| (log_kernel(t) - scale).exp(),
        &points,
        BETA_QUADRATURE_TOL,
        0.0,
    )?;
    if !(integral > 0.0) {
        return Err(Error::numeric(
            NumericContext::new("prior"),
            "beta-prior integral underflowed",
        ));
    }
    let log_beta_fn = log_gamma(v)? + log_gamma(w)? - log_gamma(v + w)?;
    Ok(scale + integral.ln() - log_beta_fn)
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PriorKind::Uniform { a, b } => write!(f, "uniform({a},{b})"),
            PriorKind::Beta { v, w } => write!(f, "beta({v},{w})"),
            PriorKind::Grid(atoms) => {
                write!(f, "grid(")?;
                for (i, (t, w)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}:{w}")?;
                }
                write!(f, ")")
            }
        }
    }
}
