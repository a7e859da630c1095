//! Balance-sheet evolution along one market scenario.
//!
//! Assets start at `A_0 = (1 + e_0) * L_0` and either stay in a
//! buy-and-hold fund whose units are sold to pay benefits,
//!
//! ```text
//! A_t = (theta X_t + (1-theta) Y_t) [A_0 - sum_{s<=t} P_s / (theta X_s + (1-theta) Y_s)]
//! ```
//!
//! or get rebalanced to the target mix at the start of every year,
//!
//! ```text
//! A_{t+1} = (theta X_{t+1}/X_t + (1-theta) Y_{t+1}/Y_t) A_t - P_{t+1}.
//! ```
//!
//! The paid amounts P and the reserve series L come from a
//! [`LiabilityPath`], which encodes the mortality / indexation mode.
//! Equity is `E_t = A_t - L_t`; accounting ruin is the first date with
//! `E_t < 0` (the scan includes t = 0), economic ruin the first date with
//! `A_t <= 0`. A run keeps going after accounting ruin so that economic
//! ruin and the shortfall magnitude stay observable; after economic ruin
//! the fund no longer earns returns and the remaining payments accrue as
//! unpaid debt.

use crate::error::AlmError;
use crate::market::{inflation_factor, InflationParams, ScenarioPath};
use crate::mortality::{
    conditional_expected_flows, reserve, AnnuityPortfolio, CashFlowSchedule, MortalityPath,
    MortalityTable,
};
use crate::stats;
use crate::Result;

/// How the asset side reacts to benefit payments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DynamicsMode {
    /// Invest once at time zero, sell fund units to pay benefits.
    #[default]
    BuyAndHold,
    /// Restore the target mix at the start of every year.
    Rebalance,
}

/// Which liability model a study runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MortalityMode {
    /// Flows fixed at their expectation (large-book approximation).
    #[default]
    Deterministic,
    /// Flows drawn per annuitant, reserves re-evaluated on survivors.
    Stochastic,
}

/// Per-run knobs: initial risky share, equity cushion, dynamics, flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Initial share invested in the risky asset, in [0, 1].
    pub risky_share: f64,
    /// Initial equity as a fraction of the time-zero reserve. Negative
    /// values are accepted for diagnostics and yield ruin at t = 0.
    pub initial_equity_ratio: f64,
    pub dynamics: DynamicsMode,
    pub indexation: bool,
    pub mortality: MortalityMode,
}

impl RunConfig {
    pub fn new(risky_share: f64, initial_equity_ratio: f64) -> Result<Self> {
        let config = RunConfig {
            risky_share,
            initial_equity_ratio,
            dynamics: DynamicsMode::BuyAndHold,
            indexation: false,
            mortality: MortalityMode::Deterministic,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.risky_share) {
            return Err(AlmError::param(
                "risky_share",
                format!("must lie in [0, 1], got {}", self.risky_share),
            ));
        }
        if !self.initial_equity_ratio.is_finite() {
            return Err(AlmError::param("initial_equity_ratio", "must be finite"));
        }
        Ok(())
    }
}

/// Paid benefit amounts and reserve levels along one liability history,
/// indexed by reporting date (entry 0 is time zero, where nothing is
/// paid). Building one fixes the mortality and indexation mode; the asset
/// recursion is agnostic about how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityPath {
    /// Benefit paid at each date; `paid[0] = 0`.
    pub paid: Vec<f64>,
    /// Reserve carried at each date; `reserve[0]` is the initial reserve.
    pub reserve: Vec<f64>,
}

impl LiabilityPath {
    pub fn horizon(&self) -> usize {
        self.paid.len() - 1
    }

    /// Initial reserve backing the run.
    pub fn initial_reserve(&self) -> f64 {
        self.reserve[0]
    }

    /// Deterministic flows, no indexation. Reserves follow the forward
    /// recursion `L_{t+1} = (1+i) L_t - F_{t+1}`.
    pub fn deterministic(flows: &CashFlowSchedule, technical_rate: f64) -> Self {
        let horizon = flows.horizon();
        let mut paid = Vec::with_capacity(horizon + 1);
        let mut reserves = Vec::with_capacity(horizon + 1);
        paid.push(0.0);
        reserves.push(reserve(flows, technical_rate));
        for t in 1..=horizon {
            paid.push(flows.at_year(t));
            reserves.push((1.0 + technical_rate) * reserves[t - 1] - flows.at_year(t));
        }
        LiabilityPath {
            paid,
            reserve: reserves,
        }
    }

    /// Deterministic flows with indexation along one scenario: paid flows
    /// carry the realized price ratio, reserves the closed-form growth
    /// factor evaluated at the scenario's current driver state.
    pub fn indexed_deterministic(
        flows: &CashFlowSchedule,
        technical_rate: f64,
        inflation: &InflationParams,
        scenario: &ScenarioPath,
    ) -> Result<Self> {
        let horizon = flows.horizon();
        if scenario.risky.len() < horizon + 1 {
            return Err(AlmError::HorizonMismatch {
                scenario: scenario.risky.len() - 1,
                flows: horizon,
            });
        }
        let discount = 1.0 / (1.0 + technical_rate);
        let mut paid = Vec::with_capacity(horizon + 1);
        let mut reserves = Vec::with_capacity(horizon + 1);
        paid.push(0.0);
        for t in 1..=horizon {
            paid.push(flows.at_year(t) * scenario.price_ratio[t]);
        }
        for t in 0..=horizon {
            let state = scenario.driver[t];
            let mut value = 0.0;
            let mut factor = 1.0;
            for k in 1..=(horizon - t) {
                factor *= discount;
                value +=
                    flows.at_year(t + k) * inflation_factor(state, inflation, k as f64) * factor;
            }
            reserves.push(value);
        }
        Ok(LiabilityPath {
            paid,
            reserve: reserves,
        })
    }

    /// Stochastic mortality, flat benefits: realized flows along one
    /// mortality history, reserves re-evaluated each year on the
    /// surviving sub-book.
    pub fn stochastic(
        path: &MortalityPath,
        portfolio: &AnnuityPortfolio,
        table: &MortalityTable,
        technical_rate: f64,
    ) -> Result<Self> {
        let horizon = path.horizon();
        let flows = path.realized_flows(portfolio);
        let mut paid = Vec::with_capacity(horizon + 1);
        let mut reserves = Vec::with_capacity(horizon + 1);
        paid.push(0.0);
        for t in 1..=horizon {
            paid.push(flows.at_year(t));
        }
        for t in 0..=horizon {
            let remaining = conditional_expected_flows(path, portfolio, table, t)?;
            reserves.push(reserve(&remaining, technical_rate));
        }
        Ok(LiabilityPath {
            paid,
            reserve: reserves,
        })
    }

    /// Stochastic mortality and indexation combined.
    pub fn indexed_stochastic(
        path: &MortalityPath,
        portfolio: &AnnuityPortfolio,
        table: &MortalityTable,
        technical_rate: f64,
        inflation: &InflationParams,
        scenario: &ScenarioPath,
    ) -> Result<Self> {
        let horizon = path.horizon();
        if scenario.risky.len() < horizon + 1 {
            return Err(AlmError::HorizonMismatch {
                scenario: scenario.risky.len() - 1,
                flows: horizon,
            });
        }
        let flows = path.realized_flows(portfolio);
        let discount = 1.0 / (1.0 + technical_rate);
        let mut paid = Vec::with_capacity(horizon + 1);
        let mut reserves = Vec::with_capacity(horizon + 1);
        paid.push(0.0);
        for t in 1..=horizon {
            paid.push(flows.at_year(t) * scenario.price_ratio[t]);
        }
        for t in 0..=horizon {
            let remaining = conditional_expected_flows(path, portfolio, table, t)?;
            let state = scenario.driver[t];
            let mut value = 0.0;
            let mut factor = 1.0;
            for (k, amount) in remaining.amounts.iter().enumerate() {
                factor *= discount;
                value += amount * inflation_factor(state, inflation, (k + 1) as f64) * factor;
            }
            reserves.push(value);
        }
        Ok(LiabilityPath {
            paid,
            reserve: reserves,
        })
    }
}

/// Full per-date record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSheetPath {
    pub assets: Vec<f64>,
    pub reserves: Vec<f64>,
    pub equity: Vec<f64>,
    /// First date with negative equity (accounting ruin), if any.
    pub ruin_year: Option<u32>,
    /// First date with non-positive assets (economic ruin), if any.
    pub economic_ruin_year: Option<u32>,
    /// `max(0, -min_t E_t)`: worst accounting shortfall of the run.
    pub max_shortfall: f64,
}

/// Slim per-run outcome for estimator sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub ruin_year: Option<u32>,
    pub economic_ruin_year: Option<u32>,
    pub max_shortfall: f64,
}

impl PathOutcome {
    pub fn ruined(&self) -> bool {
        self.ruin_year.is_some()
    }
}

fn walk<F: FnMut(usize, f64, f64)>(
    scenario: &ScenarioPath,
    liability: &LiabilityPath,
    theta: f64,
    initial_equity_ratio: f64,
    dynamics: DynamicsMode,
    mut visit: F,
) -> Result<()> {
    let horizon = liability.horizon();
    if scenario.risky.len() < horizon + 1 {
        return Err(AlmError::HorizonMismatch {
            scenario: scenario.risky.len() - 1,
            flows: horizon,
        });
    }
    let mut assets = (1.0 + initial_equity_ratio) * liability.initial_reserve();
    visit(0, assets, liability.reserve[0]);
    let mut previous_fund = scenario.fund_value(0, theta);
    for t in 1..=horizon {
        let growth = match dynamics {
            DynamicsMode::BuyAndHold => {
                let fund = scenario.fund_value(t, theta);
                let factor = fund / previous_fund;
                previous_fund = fund;
                factor
            }
            DynamicsMode::Rebalance => {
                theta * scenario.risky[t] / scenario.risky[t - 1]
                    + (1.0 - theta) * scenario.cash[t] / scenario.cash[t - 1]
            }
        };
        if assets <= 0.0 {
            // economic ruin: no further returns, payments pile up unpaid
            assets -= liability.paid[t];
        } else {
            assets = growth * assets - liability.paid[t];
        }
        visit(t, assets, liability.reserve[t]);
    }
    Ok(())
}

/// Evolves the balance sheet along one scenario and liability history.
pub fn run_path(
    scenario: &ScenarioPath,
    liability: &LiabilityPath,
    config: &RunConfig,
) -> Result<BalanceSheetPath> {
    config.validate()?;
    let horizon = liability.horizon();
    let mut assets = Vec::with_capacity(horizon + 1);
    let mut reserves = Vec::with_capacity(horizon + 1);
    let mut equity = Vec::with_capacity(horizon + 1);
    walk(
        scenario,
        liability,
        config.risky_share,
        config.initial_equity_ratio,
        config.dynamics,
        |_, a, l| {
            assets.push(a);
            reserves.push(l);
            equity.push(a - l);
        },
    )?;
    let ruin_year = equity.iter().position(|&e| e < 0.0).map(|t| t as u32);
    let economic_ruin_year = assets.iter().position(|&a| a <= 0.0).map(|t| t as u32);
    let max_shortfall = equity.iter().fold(0.0f64, |worst, &e| worst.max(-e));
    Ok(BalanceSheetPath {
        assets,
        reserves,
        equity,
        ruin_year,
        economic_ruin_year,
        max_shortfall,
    })
}

/// Allocation-free variant of [`run_path`] for estimator sweeps; returns
/// only ruin dates and the worst shortfall.
pub fn ruin_scan(
    scenario: &ScenarioPath,
    liability: &LiabilityPath,
    theta: f64,
    initial_equity_ratio: f64,
    dynamics: DynamicsMode,
) -> Result<PathOutcome> {
    let mut ruin_year = None;
    let mut economic_ruin_year = None;
    let mut worst = 0.0f64;
    walk(
        scenario,
        liability,
        theta,
        initial_equity_ratio,
        dynamics,
        |t, a, l| {
            let e = a - l;
            if e < 0.0 && ruin_year.is_none() {
                ruin_year = Some(t as u32);
            }
            if a <= 0.0 && economic_ruin_year.is_none() {
                economic_ruin_year = Some(t as u32);
            }
            worst = worst.max(-e);
        },
    )?;
    Ok(PathOutcome {
        ruin_year,
        economic_ruin_year,
        max_shortfall: worst,
    })
}

/// Stochastic present value of the paid benefits under the buy-and-hold
/// fund: `sum_t P_t / (theta X_t + (1-theta) Y_t)`.
pub fn liability_present_value(scenario: &ScenarioPath, paid: &[f64], theta: f64) -> f64 {
    let mut total = 0.0;
    for (t, amount) in paid.iter().enumerate().skip(1) {
        if *amount != 0.0 {
            total += amount / scenario.fund_value(t, theta);
        }
    }
    total
}

/// Empirical check of the equity growth property `E[E_1] >= (1+i) E_0`,
/// which holds when the expected fund return dominates the technical rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmartingaleDiagnostic {
    pub initial_equity: f64,
    pub mean_next_equity: f64,
    /// `(1 + i) * E_0`, the level the year-one mean must reach.
    pub required_level: f64,
    pub standard_error: f64,
    /// Passes when the mean clears the required level minus three SE.
    pub passes: bool,
}

/// Runs the growth check on a set of completed balance-sheet paths.
/// All paths must share the same initial equity (same liability model).
pub fn submartingale_check(
    paths: &[BalanceSheetPath],
    technical_rate: f64,
) -> Result<SubmartingaleDiagnostic> {
    if paths.is_empty() {
        return Err(AlmError::DegenerateSample {
            dim: "paths",
            needed: 1,
            got: 0,
        });
    }
    if paths.iter().any(|p| p.equity.len() < 2) {
        return Err(AlmError::DegenerateSample {
            dim: "years",
            needed: 2,
            got: 1,
        });
    }
    let initial_equity = paths[0].equity[0];
    let next: Vec<f64> = paths.iter().map(|p| p.equity[1]).collect();
    let mean_next_equity = stats::mean(&next);
    let standard_error = stats::standard_error(&next);
    let required_level = (1.0 + technical_rate) * initial_equity;
    let passes = mean_next_equity >= required_level - 3.0 * standard_error;
    Ok(SubmartingaleDiagnostic {
        initial_equity,
        mean_next_equity,
        required_level,
        standard_error,
        passes,
    })
}
