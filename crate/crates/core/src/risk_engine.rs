//! Exact Bayes risk and regret over the truncated support, the MLE baseline,
//! and the replicated Monte Carlo experiment.
//!
//! For a fixed estimator table the regret `S(δ) = R(G, δ) - R(G, θ_G)`
//! collapses to `Σ_x m(x) (δ(x) - θ_G(x))²` because `θ_G` is the posterior
//! mean, so no Monte Carlo over `(X, Θ)` is needed once a history is fixed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bayes_rule::{build_bayes_table, BayesTable};
use crate::bt_dist::{sample_inverse_capped, support_cap, BtParams, SupportCap, SAMPLING_TAIL_EPS};
use crate::eb_estimator::{eb_table, EbHistory, EstimatorTable, Label, QZeroConvention};
use crate::error::{Error, NumericContext, Result};
use crate::monotonizer::{monotonize, ActionGrid, DEFAULT_GRID_INTERVALS};
use crate::numerics::CompensatedSum;
use crate::prior::Prior;

/// `Σ_x m(x) Var(Θ | X = x)` over the table.
pub fn bayes_risk(table: &BayesTable) -> f64 {
    let s: CompensatedSum = table
        .marginal()
        .iter()
        .zip(table.theta().iter().zip(table.second_moment()))
        .map(|(&m, (&t, &t2))| m * (t2 - t * t).max(0.0))
        .collect();
    s.value().max(0.0)
}

fn check_shape(est: &EstimatorTable, bayes: &BayesTable) -> Result<()> {
    if est.r() != bayes.r() || est.cap() != bayes.cap() {
        return Err(Error::usage(format!(
            "estimator covers r={}..={} but the Bayes table covers r={}..={}",
            est.r(),
            est.cap(),
            bayes.r(),
            bayes.cap()
        )));
    }
    Ok(())
}

/// `Σ_x m(x) (est(x) - θ_G(x))²`.
pub fn regret_exact(est: &EstimatorTable, bayes: &BayesTable) -> Result<f64> {
    check_shape(est, bayes)?;
    let s: CompensatedSum = est
        .values()
        .iter()
        .zip(bayes.theta())
        .zip(bayes.marginal())
        .map(|((&e, &t), &m)| m * (e - t) * (e - t))
        .collect();
    Ok(s.value())
}

/// `Σ_x m(x) (est(x) - θ_G(x))`, the signed mean gap.
pub fn mean_gap(est: &EstimatorTable, bayes: &BayesTable) -> Result<f64> {
    check_shape(est, bayes)?;
    let s: CompensatedSum = est
        .values()
        .iter()
        .zip(bayes.theta())
        .zip(bayes.marginal())
        .map(|((&e, &t), &m)| m * (e - t))
        .collect();
    Ok(s.value())
}

/// `θ_mle(x) = (x - r)/x` on `r..=cap`.
pub fn mle_table(r: u64, cap: u64) -> Result<EstimatorTable> {
    if r < 1 || cap < r {
        return Err(Error::domain(format!("mle table needs cap >= r >= 1, got r={r}, cap={cap}")));
    }
    let values = (r..=cap).map(|x| (x - r) as f64 / x as f64).collect();
    EstimatorTable::new(r, cap, values, Label::Mle)
}

/// One experiment: `reps` independent histories of size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub r: u64,
    pub prior: Prior,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub grid_m: usize,
    /// Tail mass allowed beyond the risk cap.
    pub tail_eps: f64,
    pub qzero: QZeroConvention,
    /// Explicit support cap; required when the prior reaches θ = 1.
    pub cap: Option<u64>,
}

impl ExperimentConfig {
    /// The shipped study design: r = 3, uniform(0.5, 0.8), ten replications.
    pub fn study(n: usize) -> Self {
        Self {
            r: 3,
            prior: Prior::uniform(0.5, 0.8).expect("valid bounds"),
            n,
            reps: 10,
            seed: 1,
            grid_m: DEFAULT_GRID_INTERVALS,
            tail_eps: crate::bt_dist::RISK_TAIL_EPS,
            qzero: QZeroConvention::One,
            cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::usage("r must be at least 1"));
        }
        if self.n < 1 {
            return Err(Error::usage("n must be at least 1"));
        }
        if self.reps < 2 {
            return Err(Error::usage(format!(
                "reps must be at least 2 for a standard error, got {}",
                self.reps
            )));
        }
        if !(self.tail_eps > 0.0 && self.tail_eps < 1.0) {
            return Err(Error::usage(format!("tail_eps must lie in (0, 1), got {}", self.tail_eps)));
        }
        ActionGrid::uniform(self.grid_m).map_err(|e| Error::usage(e.to_string()))?;
        if let Some(cap) = self.cap {
            if cap < self.r {
                return Err(Error::usage(format!("cap {cap} is below r={}", self.r)));
            }
        } else if self.prior.support().1 >= 1.0 {
            return Err(Error::usage(
                "the prior reaches theta = 1, so the tail never becomes negligible; set an explicit cap",
            ));
        }
        Ok(())
    }

    /// The shared truncation cap for every table in the experiment.
    pub fn support_cap(&self) -> Result<SupportCap> {
        match self.cap {
            Some(cap) => SupportCap::explicit(self.r, cap),
            None => support_cap(self.r, self.prior.support().1, self.tail_eps),
        }
    }

    pub fn bayes_table(&self) -> Result<BayesTable> {
        build_bayes_table(&self.prior, self.r, self.support_cap()?)
    }
}

/// The RNG for replication `k`: one ChaCha stream per replication under a
/// common seed, so replications can run in any order.
pub fn replication_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Draws `n` pairs `(Θ_i, X_i)` and returns the history plus the number of
/// draws clamped by the sampler's tail cutoff.
pub fn draw_history(
    r: u64,
    prior: &Prior,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(EbHistory, usize)> {
    let mut obs = Vec::with_capacity(n);
    let mut truncated = 0;
    for _ in 0..n {
        let theta = prior.sample_theta(rng);
        let draw = sample_inverse_capped(&BtParams::new(r, theta)?, SAMPLING_TAIL_EPS, rng);
        truncated += usize::from(draw.truncated);
        obs.push(draw.value);
    }
    Ok((EbHistory::new(r, obs)?, truncated))
}

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct Replication {
    pub index: u64,
    pub history: EbHistory,
    pub eb: EstimatorTable,
    pub monotone: EstimatorTable,
    pub regret_eb: f64,
    pub regret_mono: f64,
    pub truncated_draws: usize,
    pub max_adjustment: f64,
}

/// Replication `k` against a prebuilt Bayes table.
pub fn run_replication(cfg: &ExperimentConfig, k: u64, bayes: &BayesTable) -> Result<Replication> {
    let grid = ActionGrid::uniform(cfg.grid_m)?;
    let mut rng = replication_rng(cfg.seed, k);
    let (history, truncated_draws) = draw_history(cfg.r, &cfg.prior, cfg.n, &mut rng)?;
    if history.max_observation() > bayes.cap() {
        return Err(Error::numeric(
            NumericContext::new("risk_engine").at_x(history.max_observation()),
            format!(
                "replication {k} drew an observation beyond the support cap {}",
                bayes.cap()
            ),
        ));
    }
    let eb = eb_table(&history, bayes.cap(), cfg.qzero)?;
    let rule = monotonize(&eb, &grid)?;
    let max_adjustment = rule.max_adjustment();
    let monotone = rule.into_result();
    Ok(Replication {
        index: k,
        regret_eb: regret_exact(&eb, bayes)?,
        regret_mono: regret_exact(&monotone, bayes)?,
        history,
        eb,
        monotone,
        truncated_draws,
        max_adjustment,
    })
}

/// Per-replication line of a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationSummary {
    pub index: u64,
    pub regret_eb: f64,
    pub regret_mono: f64,
    pub truncated_draws: usize,
    pub max_adjustment: f64,
}

/// Truncation bookkeeping for a whole experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub cap: u64,
    /// Marginal mass beyond `cap`.
    pub omitted_mass: f64,
    pub sampling_tail_eps: f64,
    pub truncated_draws: usize,
    pub max_adjustment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub replications: Vec<ReplicationSummary>,
    pub s_eb_mean: f64,
    pub s_eb_se: f64,
    pub s_mono_mean: f64,
    pub s_mono_se: f64,
    pub s_mle: f64,
    /// `Σ m(x)(θ_mle(x) - θ_G(x))`, kept alongside the squared regret.
    pub s_mle_unsquared: f64,
    pub bayes_risk: f64,
    pub diagnostics: Diagnostics,
}

/// Arithmetic mean and `sd / sqrt(len)` with the `len - 1` variance.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let bayes = cfg.bayes_table()?;
    run_experiment_with_table(cfg, &bayes)
}

/// Runs all replications in parallel; any failure aborts the experiment.
pub fn run_experiment_with_table(
    cfg: &ExperimentConfig,
    bayes: &BayesTable,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if bayes.r() != cfg.r || bayes.prior() != &cfg.prior {
        return Err(Error::usage("Bayes table was built for a different r or prior"));
    }
    let replications: Vec<ReplicationSummary> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|k| {
            run_replication(cfg, k, bayes).map(|rep| ReplicationSummary {
                index: rep.index,
                regret_eb: rep.regret_eb,
                regret_mono: rep.regret_mono,
                truncated_draws: rep.truncated_draws,
                max_adjustment: rep.max_adjustment,
            })
        })
        .collect::<Result<_>>()?;

    let eb: Vec<f64> = replications.iter().map(|r| r.regret_eb).collect();
    let mono: Vec<f64> = replications.iter().map(|r| r.regret_mono).collect();
    let (s_eb_mean, s_eb_se) = mean_se(&eb);
    let (s_mono_mean, s_mono_se) = mean_se(&mono);
    let mle = mle_table(cfg.r, bayes.cap())?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        s_eb_mean,
        s_eb_se,
        s_mono_mean,
        s_mono_se,
        s_mle: regret_exact(&mle, bayes)?,
        s_mle_unsquared: mean_gap(&mle, bayes)?,
        bayes_risk: bayes_risk(bayes),
        diagnostics: Diagnostics {
            cap: bayes.cap(),
            omitted_mass: bayes.omitted_mass(),
            sampling_tail_eps: SAMPLING_TAIL_EPS,
            truncated_draws: replications.iter().map(|r| r.truncated_draws).sum(),
            max_adjustment: replications
                .iter()
                .map(|r| r.max_adjustment)
                .fold(0.0, f64::max),
        },
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: 50,
            reps: 3,
            grid_m: 200,
            ..ExperimentConfig::study(50)
        }
    }

    #[test]
    fn point_mass_has_zero_bayes_risk() {
        let g = Prior::point_mass(0.6).unwrap();
        let t = build_bayes_table(&g, 3, support_cap(3, 0.6, 1e-12).unwrap()).unwrap();
        assert!(bayes_risk(&t).abs() < 1e-15);
    }

    #[test]
    fn bayes_risk_is_below_prior_variance() {
        let g = Prior::uniform(0.5, 0.8).unwrap();
        let t = build_bayes_table(&g, 3, support_cap(3, 0.8, 1e-12).unwrap()).unwrap();
        let risk = bayes_risk(&t);
        assert!(risk > 0.0 && risk < g.variance());
    }

    #[test]
    fn regret_of_bayes_rule_and_constant_shift() {
        let g = Prior::uniform(0.5, 0.8).unwrap();
        let t = build_bayes_table(&g, 3, support_cap(3, 0.8, 1e-12).unwrap()).unwrap();
        assert!(regret_exact(&t.as_estimator(), &t).unwrap().abs() < 1e-14);
        let c = 0.05;
        let shifted: Vec<f64> = t.theta().iter().map(|v| v + c).collect();
        let est = EstimatorTable::new(3, t.cap(), shifted, Label::Eb).unwrap();
        let want = c * c * t.marginal_mass();
        assert!((regret_exact(&est, &t).unwrap() - want).abs() < 1e-15);
        assert!((mean_gap(&est, &t).unwrap() - c * t.marginal_mass()).abs() < 1e-14);
        let short = mle_table(3, t.cap() - 1).unwrap();
        assert!(matches!(regret_exact(&short, &t), Err(Error::Usage(_))));
    }

    #[test]
    fn mle_table_values() {
        let t = mle_table(3, 40).unwrap();
        assert_eq!(t.get(3), Some(0.0));
        assert_eq!(t.get(4), Some(0.25));
        assert!(t.is_nondecreasing(0.0));
        assert_eq!(t.label(), Label::Mle);
        assert!(mle_table(3, 2).is_err());
    }

    #[test]
    fn mean_se_convention() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sd = sqrt(5/3), se = sd / 2
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = small_cfg();
        assert!(ok.validate().is_ok());
        assert!(ExperimentConfig { reps: 1, ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { n: 0, ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { grid_m: 50, ..ok.clone() }.validate().is_err());
        assert!(ExperimentConfig { tail_eps: 0.0, ..ok.clone() }.validate().is_err());
        let beta = ExperimentConfig {
            prior: Prior::beta(2.0, 3.0).unwrap(),
            ..ok.clone()
        };
        assert!(matches!(beta.validate(), Err(Error::Usage(_))));
        assert!(ExperimentConfig { cap: Some(400), ..beta }.validate().is_ok());
    }

    #[test]
    fn replications_are_deterministic_and_independent_of_order() {
        let cfg = small_cfg();
        let bayes = cfg.bayes_table().unwrap();
        let a = run_replication(&cfg, 1, &bayes).unwrap();
        let b = run_replication(&cfg, 1, &bayes).unwrap();
        assert_eq!(a.regret_eb.to_bits(), b.regret_eb.to_bits());
        assert_eq!(a.regret_mono.to_bits(), b.regret_mono.to_bits());
        assert_eq!(a.history, b.history);
        let other = run_replication(&cfg, 2, &bayes).unwrap();
        assert_ne!(a.history, other.history);

        let report = run_experiment_with_table(&cfg, &bayes).unwrap();
        assert_eq!(report.replications[1].regret_eb.to_bits(), a.regret_eb.to_bits());
        assert_eq!(report, run_experiment_with_table(&cfg, &bayes).unwrap());
    }

    #[test]
    fn minimal_report_is_well_formed() {
        let cfg = ExperimentConfig { reps: 2, ..small_cfg() };
        let rep = run_experiment(&cfg).unwrap();
        assert_eq!(rep.replications.len(), 2);
        assert!(rep.s_eb_se.is_finite() && rep.s_mono_se.is_finite());
        let eb: Vec<f64> = rep.replications.iter().map(|r| r.regret_eb).collect();
        assert_eq!(rep.s_eb_mean, mean_se(&eb).0);
        assert!(rep.replications.iter().all(|r| r.regret_eb >= 0.0 && r.regret_mono >= 0.0));
        assert!(rep.diagnostics.omitted_mass <= cfg.tail_eps);
    }
}
