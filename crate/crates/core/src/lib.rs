//! qvlab: simulation, estimation, pricing, and forecasting for
//! local-volatility price models whose time-average quadratic variation
//! converges to a known constant at a known rate.
//!
//! Modules:
//!
//! * [`surfaces`] — local-variance families with certified bounds,
//!   analytic time-average envelopes, and the cumulative expected
//!   variance function.
//! * [`engine`] — seeded, thread-count-independent simulation of price
//!   paths (physical and risk-neutral) and centered log returns,
//!   including exact conditional sampling.
//! * [`quadvar`] — realized quadratic variation, convergence-bound
//!   checks, and bound-parameter fitting.
//! * [`pricing`] — Black-Scholes closed forms, implied-vol inversion,
//!   Monte Carlo pricing, and the arbitrage audits.
//! * [`covmodel`] — the wide-sense-Markov covariance model, empirical
//!   covariance estimation, and (alpha, beta) recovery.
//! * [`forecast`] — conditional Gaussian forecasts, log-normal price
//!   forecasts, and portfolio present-value analysis.
//! * [`acceptance`] — the end-to-end verification suites.

pub mod acceptance;
pub mod covmodel;
pub mod engine;
pub mod forecast;
pub mod math;
pub mod pricing;
pub mod quadvar;
pub mod rng;
pub mod surfaces;
