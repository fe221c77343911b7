//! Exponential Ornstein-Uhlenbeck stochastic volatility model.
//!
//! The log-price follows a geometric Brownian motion whose volatility is
//! `m * exp(Y)`, with `Y` a mean-reverting Gaussian (Ornstein-Uhlenbeck)
//! process correlated with the price noise. The crate provides
//!
//! * [`model`]: parameters, derived quantities and exact OU moments,
//! * [`mc`]: Euler-Maruyama path ensembles for the exponential and the
//!   linearised dynamics with per-path reproducible random streams,
//! * [`stats`]: k-statistics, normalised cumulants with confidence
//!   intervals, histograms,
//! * [`edgeworth`]: closed-form cumulants and the Edgeworth density for the
//!   large vol-of-vol regime,
//! * [`linear_cf`]: the exact characteristic function of the linearised
//!   model,
//! * [`inversion`]: FFT / trapezoid inversion of a characteristic function,
//! * [`optimize`]: derivative-free principal-axis minimisation,
//! * [`calibration`]: parameter estimation from daily close prices,
//! * [`reproduce`]: measurements behind the reference tables.

pub mod calibration;
mod cmath;
pub mod edgeworth;
pub mod inversion;
pub mod linear_cf;
pub mod mc;
pub mod model;
pub mod optimize;
pub mod reproduce;
pub mod rng;
pub mod stats;

pub use model::{Horizon, ModelParams, RawParams};
pub use num_complex::Complex64;

/// Version string written into artifact metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
