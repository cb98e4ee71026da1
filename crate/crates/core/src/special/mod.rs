//! Scalar special functions.

mod beta;
mod gamma;

pub use beta::{inc_beta, inc_beta_binomial_sum, inc_beta_inverse, BetaParams};
pub use gamma::{log_gamma, log_pochhammer, polygamma};

pub(crate) use beta::{inc_beta_inverse_pair, inc_beta_pair};
pub(crate) use gamma::{lgamma, log1pmx, log_binom_density, lpoch, psi_diff, psi_n, psi_taylor_term};
