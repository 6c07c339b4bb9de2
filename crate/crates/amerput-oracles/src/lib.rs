//! Reference pricers used to check the expansion-based solvers: CRR binomial
//! trees, Black-Scholes and Merton closed forms, Crank-Nicolson finite
//! differences and Monte Carlo.

mod binomial;
mod closed_form;
mod config;
mod fd;
mod mc;

pub use binomial::{binomial_implied_boundary, crr_binomial_put};
pub use closed_form::{black_scholes_put, lognormal_density, lognormal_quantile, merton_mixture_density, merton_series_put, merton_weights};
pub use config::OracleConfig;
pub use fd::{fd_american_put, FdResult};
pub use mc::{mc_european_put, McEstimate, McModel, MAX_EXPLOSIVE_FRACTION};
