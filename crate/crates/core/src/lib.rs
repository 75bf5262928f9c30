//! Bayes, empirical Bayes and monotone empirical Bayes estimation of the
//! reproduction number θ of the Borel-Tanner distribution, with an exact
//! regret-risk engine and a seeded Monte Carlo experiment harness.

pub mod bayes_rule;
pub mod bt_dist;
pub mod eb_estimator;
pub mod error;
pub mod monotonizer;
pub mod numerics;
pub mod prior;
pub mod risk_engine;

pub use error::{Error, NumericContext, Result};
