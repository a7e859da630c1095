//! Monte Carlo asset-allocation engine for a closed portfolio of annuities
//! in payment.
//!
//! The library projects liability cash flows from a mortality table,
//! simulates a two-asset market (CIR short rate driving a cash account,
//! geometric Brownian risky asset) together with an Ornstein-Uhlenbeck
//! inflation driver, evolves the insurer balance sheet along each scenario,
//! and selects the initial risky-asset share by two criteria: a ruin
//! probability cap and economic-capital maximization.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`mortality`]: tables, portfolios, expected / simulated benefit flows,
//!   reserves and duration;
//! - [`market`]: scenario generation for the risky asset, cash account,
//!   short rate and inflation index;
//! - [`balance`]: per-scenario balance-sheet evolution and ruin detection;
//! - [`estimators`]: ruin probabilities, economic reserve, variance
//!   decomposition between financial and mortality risk;
//! - [`optimizer`]: grid search over the risky share plus sensitivity
//!   sweeps;
//! - [`synthetic`]: built-in demonstration data (Makeham-style table,
//!   randomized annuitant portfolio).
//!
//! All simulation entry points take an explicit seed and derive one
//! independent random sub-stream per path index, so results are
//! bit-identical regardless of worker count. Compile without the
//! `parallel` feature (enabled by default) for a single-threaded build
//! with the same outputs.

pub mod balance;
pub mod error;
pub mod estimators;
pub mod market;
pub mod mortality;
pub mod optimizer;
pub(crate) mod parallel;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::AlmError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, AlmError>;
