//! Log-space special functions used by every probability computation in the
//! crate: log-gamma, the regularized incomplete gamma function, partial
//! exponential sums, stable log-differences, compensated summation and an
//! adaptive Gauss–Kronrod integrator.
//!
//! Magnitudes such as `x^(x-r-1)` and `e^x` overflow `f64` long before the
//! supports we care about end, so values are carried as natural logarithms and
//! only exponentiated at module boundaries.

mod gamma;
mod logspace;
pub mod quadrature;

pub use gamma::{
    log_gamma, log_reg_gamma_pair, log_reg_lower_gamma, log_reg_upper_gamma, reg_lower_gamma, reg_upper_gamma,
    MAX_ITERATIONS, RELATIVE_INCREMENT,
};
pub use logspace::{log_diff_exp, log_exp_partial, log_sum_exp, CompensatedSum, LogReal};
