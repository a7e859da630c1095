//! Joint market scenario generation.
//!
//! Three drivers on an annual reporting grid with monthly (configurable)
//! sub-steps:
//!
//! - risky asset `X`: geometric Brownian motion, exact discretization;
//! - short rate `r`: square-root mean-reverting diffusion advanced by a
//!   Milstein step with full truncation, feeding the cash account
//!   `Y = exp ∫ r ds` (left-point quadrature on the sub-step grid);
//! - inflation driver `x`: Ornstein-Uhlenbeck with exact transitions,
//!   feeding the consumer-price ratio `I_t / I_0 = exp ∫ (j + x_s) ds`
//!   (trapezoidal quadrature) and a closed-form conditional growth factor.
//!
//! The two market Brownians are correlated; the inflation driver is
//! independent of both and drawn from its own sub-stream per path.

use crate::error::AlmError;
use crate::parallel::map_indexed;
use crate::rng::{inflation_stream, market_stream, Gaussians};
use crate::Result;
use rand_chacha::rand_core::RngCore;
use std::io::Write;

/// Coefficients of the two-asset market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Instantaneous drift of the risky asset (per year).
    pub drift: f64,
    /// Volatility of the risky asset (per sqrt-year).
    pub volatility: f64,
    /// Short rate at time zero.
    pub initial_rate: f64,
    /// Long-run level the short rate reverts to.
    pub long_run_rate: f64,
    /// Mean-reversion speed of the short rate.
    pub rate_reversion: f64,
    /// Volatility of the short rate.
    pub rate_volatility: f64,
    /// Correlation between the two market Brownians, in [-1, 1].
    pub correlation: f64,
    /// Technical discount rate for reserves (annual, discrete).
    pub technical_rate: f64,
}

/// Soft diagnostics from parameter validation. These flag configurations
/// the model accepts but whose standing assumptions no longer hold, e.g.
/// during sensitivity sweeps that push the risky drift below the long-run
/// rate.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamWarning {
    /// The ordering drift >= long-run rate >= ln(1 + technical rate) >= 0
    /// fails; the equity submartingale argument needs it.
    ReturnOrderingViolated { detail: String },
    /// Reversion speed below half the squared rate volatility.
    LowReversionSpeed { detail: String },
}

impl MarketParams {
    /// Validated constructor. Rejects parameter sets that break hard
    /// invariants; soft diagnostics remain available via [`Self::warnings`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        drift: f64,
        volatility: f64,
        initial_rate: f64,
        long_run_rate: f64,
        rate_reversion: f64,
        rate_volatility: f64,
        correlation: f64,
        technical_rate: f64,
    ) -> Result<Self> {
        let params = MarketParams {
            drift,
            volatility,
            initial_rate,
            long_run_rate,
            rate_reversion,
            rate_volatility,
            correlation,
            technical_rate,
        };
        params.validate()?;
        Ok(params)
    }

    /// Hard invariants: finite fields, correlation in [-1, 1],
    /// non-negative volatilities, positivity condition for the rate
    /// process (2 a r_inf >= sigma_r^2), technical rate > -1.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("drift", self.drift),
            ("volatility", self.volatility),
            ("initial_rate", self.initial_rate),
            ("long_run_rate", self.long_run_rate),
            ("rate_reversion", self.rate_reversion),
            ("rate_volatility", self.rate_volatility),
            ("correlation", self.correlation),
            ("technical_rate", self.technical_rate),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(AlmError::param(name, "must be finite"));
            }
        }
        if self.volatility < 0.0 {
            return Err(AlmError::param("volatility", "must be non-negative"));
        }
        if self.rate_volatility < 0.0 {
            return Err(AlmError::param("rate_volatility", "must be non-negative"));
        }
        if self.initial_rate < 0.0 {
            return Err(AlmError::param("initial_rate", "must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(AlmError::param(
                "correlation",
                format!("must lie in [-1, 1], got {}", self.correlation),
            ));
        }
        if self.technical_rate <= -1.0 {
            return Err(AlmError::param("technical_rate", "must exceed -1"));
        }
        let feller = 2.0 * self.rate_reversion * self.long_run_rate;
        if feller < self.rate_volatility * self.rate_volatility {
            return Err(AlmError::param(
                "rate_volatility",
                format!(
                    "positivity condition 2*a*r_inf >= sigma_r^2 fails: {feller:.6} < {:.6}",
                    self.rate_volatility * self.rate_volatility
                ),
            ));
        }
        Ok(())
    }

    /// Soft diagnostics (run them after `validate`).
    pub fn warnings(&self) -> Vec<ParamWarning> {
        let mut warnings = Vec::new();
        let log_technical = (1.0 + self.technical_rate).ln();
        if !(self.drift >= self.long_run_rate
            && self.long_run_rate >= log_technical
            && log_technical >= 0.0)
        {
            warnings.push(ParamWarning::ReturnOrderingViolated {
                detail: format!(
                    "drift {:.6} >= long_run_rate {:.6} >= ln(1+i) {:.6} >= 0 does not hold",
                    self.drift, self.long_run_rate, log_technical
                ),
            });
        }
        if self.rate_reversion < self.rate_volatility * self.rate_volatility / 2.0 {
            warnings.push(ParamWarning::LowReversionSpeed {
                detail: format!(
                    "rate_reversion {:.6} < sigma_r^2/2 = {:.6}",
                    self.rate_reversion,
                    self.rate_volatility * self.rate_volatility / 2.0
                ),
            });
        }
        warnings
    }

    /// Reference calibration used throughout the examples: 7% expected
    /// equity return with 25% volatility, short rate starting at 3% and
    /// reverting to 4.62% at speed 0.5 with 2% volatility, correlation
    /// -0.1, technical rate 2.5%.
    pub fn canonical() -> Self {
        MarketParams {
            drift: (1.07f64).ln(),
            volatility: 0.25,
            initial_rate: (1.03f64).ln(),
            long_run_rate: (1.0462f64).ln(),
            rate_reversion: 0.5,
            rate_volatility: 0.02,
            correlation: -0.1,
            technical_rate: 0.025,
        }
    }
}

/// Ornstein-Uhlenbeck inflation driver around a deterministic trend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationParams {
    /// Mean instantaneous price growth (per year).
    pub mean_rate: f64,
    /// Reversion speed of the fluctuation process (> 0).
    pub reversion_speed: f64,
    /// Volatility of the fluctuation process (>= 0).
    pub volatility: f64,
    /// Fluctuation state at time zero.
    pub initial_state: f64,
}

impl InflationParams {
    pub fn new(
        mean_rate: f64,
        reversion_speed: f64,
        volatility: f64,
        initial_state: f64,
    ) -> Result<Self> {
        let params = InflationParams {
            mean_rate,
            reversion_speed,
            volatility,
            initial_state,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mean_rate", self.mean_rate),
            ("reversion_speed", self.reversion_speed),
            ("volatility", self.volatility),
            ("initial_state", self.initial_state),
        ] {
            if !value.is_finite() {
                return Err(AlmError::param(name, "must be finite"));
            }
        }
        if self.reversion_speed <= 0.0 {
            return Err(AlmError::param("reversion_speed", "must be positive"));
        }
        if self.volatility < 0.0 {
            return Err(AlmError::param("volatility", "must be non-negative"));
        }
        Ok(())
    }

    /// Reference calibration fitted on French consumer-price data:
    /// 2.79% mean rate, reversion 0.7369, volatility 0.56%.
    pub fn canonical() -> Self {
        InflationParams {
            mean_rate: 0.0279,
            reversion_speed: 0.7369,
            volatility: 0.0056,
            initial_state: 0.0,
        }
    }
}

/// Exact geometric-Brownian step.
pub fn gbm_step(value: f64, drift: f64, volatility: f64, dt: f64, z: f64) -> f64 {
    debug_assert!(value > 0.0 && dt > 0.0);
    value * ((drift - 0.5 * volatility * volatility) * dt + volatility * dt.sqrt() * z).exp()
}

/// Milstein step for the square-root rate process with full truncation:
/// the rate is floored at zero inside drift and diffusion, and the result
/// is floored at zero again.
pub fn cir_step(rate: f64, reversion: f64, long_run: f64, volatility: f64, dt: f64, z: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let floored = rate.max(0.0);
    let increment = reversion * (long_run - floored) * dt
        + volatility * floored.sqrt() * dt.sqrt() * z
        + 0.25 * volatility * volatility * dt * (z * z - 1.0);
    (rate + increment).max(0.0)
}

/// Exact Ornstein-Uhlenbeck transition over `dt`.
pub fn ou_step(state: f64, reversion: f64, volatility: f64, dt: f64, z: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let decay = (-reversion * dt).exp();
    let std = volatility * ((1.0 - decay * decay) / (2.0 * reversion)).sqrt();
    state * decay + std * z
}

/// One year of cash-account growth from the sub-step rates observed at the
/// left end of each sub-interval of length `dt`.
pub fn cash_account_step(value: f64, left_rates: &[f64], dt: f64) -> f64 {
    debug_assert!(value > 0.0);
    let integral: f64 = left_rates.iter().map(|r| r * dt).sum();
    value * integral.exp()
}

/// Correlated standard-normal pair (`z_rate`, `z_risky`) with the given
/// correlation; both components come from one Box-Muller pair.
pub fn correlated_normals<R: RngCore>(source: &mut Gaussians<R>, correlation: f64) -> (f64, f64) {
    debug_assert!((-1.0..=1.0).contains(&correlation));
    let (z_rate, independent) = source.pair();
    let z_risky = correlation * z_rate + (1.0 - correlation * correlation).sqrt() * independent;
    (z_rate, z_risky)
}

/// Conditional expectation of the price-index ratio over `horizon` years
/// given the current driver state: the closed form
/// `exp{ j*d + x*(1-e^{-ad})/a + (sigma^2 / 2a^2)(d - (1-e^{-ad})/a - (1-e^{-ad})^2/(2a)) }`.
pub fn inflation_factor(state: f64, params: &InflationParams, horizon: f64) -> f64 {
    debug_assert!(horizon > 0.0);
    let a = params.reversion_speed;
    let decay_gap = 1.0 - (-a * horizon).exp();
    let mean_term = state * decay_gap / a;
    let var_term = params.volatility * params.volatility / (2.0 * a * a)
        * (horizon - decay_gap / a - decay_gap * decay_gap / (2.0 * a));
    (params.mean_rate * horizon + mean_term + var_term).exp()
}

/// One year of realized price-index growth from the driver states observed
/// at every sub-step boundary (`sub_steps + 1` points, trapezoidal
/// quadrature of `j + x_s`).
pub fn realized_inflation_step(ratio: f64, states: &[f64], mean_rate: f64, dt: f64) -> f64 {
    debug_assert!(ratio > 0.0);
    debug_assert!(states.len() >= 2);
    let mut integral = 0.0;
    for pair in states.windows(2) {
        integral += 0.5 * (pair[0] + pair[1]) * dt;
    }
    ratio * (mean_rate * (states.len() - 1) as f64 * dt + integral).exp()
}

/// Annual series of one simulated scenario; index 0 is time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    /// Risky-asset value, starts at 1.
    pub risky: Vec<f64>,
    /// Cash-account value, starts at 1.
    pub cash: Vec<f64>,
    /// Short rate at each reporting date.
    pub rate: Vec<f64>,
    /// Inflation driver state at each reporting date.
    pub driver: Vec<f64>,
    /// Price-index ratio I_t / I_0, starts at 1.
    pub price_ratio: Vec<f64>,
}

impl ScenarioPath {
    /// Portfolio growth factor theta*X_t + (1-theta)*Y_t.
    pub fn fund_value(&self, t: usize, risky_share: f64) -> f64 {
        risky_share * self.risky[t] + (1.0 - risky_share) * self.cash[t]
    }
}

/// A reproducible set of joint market scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub paths: Vec<ScenarioPath>,
    pub horizon: usize,
    pub sub_steps: usize,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// Audit dump: one row per (path, year) with the five stored series.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "path,year,risky,cash,rate,driver,price_ratio")?;
        for (p, path) in self.paths.iter().enumerate() {
            for t in 0..=self.horizon {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p,
                    t,
                    path.risky[t],
                    path.cash[t],
                    path.rate[t],
                    path.driver[t],
                    path.price_ratio[t]
                )?;
            }
        }
        Ok(())
    }
}

/// Generates `n_paths` joint scenarios over `horizon` years.
///
/// Market draws and inflation draws come from separate per-path
/// sub-streams, so a set generated without inflation parameters matches
/// the market series of one generated with them, and regeneration from the
/// same arguments is bit-identical at any worker count.
pub fn generate_scenarios(
    market: &MarketParams,
    inflation: Option<&InflationParams>,
    n_paths: usize,
    horizon: usize,
    sub_steps: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    market.validate()?;
    if let Some(params) = inflation {
        params.validate()?;
    }
    if n_paths == 0 {
        return Err(AlmError::param("n_paths", "must be at least 1"));
    }
    if horizon == 0 {
        return Err(AlmError::param("horizon", "must be at least 1"));
    }
    if sub_steps == 0 {
        return Err(AlmError::param("sub_steps", "must be at least 1"));
    }
    let market = *market;
    let inflation = inflation.copied();
    let paths = map_indexed(n_paths, |p| {
        simulate_path(&market, inflation.as_ref(), horizon, sub_steps, seed, p)
    });
    Ok(ScenarioSet {
        paths,
        horizon,
        sub_steps,
        seed,
    })
}

fn simulate_path(
    market: &MarketParams,
    inflation: Option<&InflationParams>,
    horizon: usize,
    sub_steps: usize,
    seed: u64,
    path_index: usize,
) -> ScenarioPath {
    let dt = 1.0 / sub_steps as f64;
    let mut market_normals = Gaussians::new(market_stream(seed, path_index));
    let mut inflation_normals = Gaussians::new(inflation_stream(seed, path_index));

    let mut risky = Vec::with_capacity(horizon + 1);
    let mut cash = Vec::with_capacity(horizon + 1);
    let mut rate = Vec::with_capacity(horizon + 1);
    let mut driver = Vec::with_capacity(horizon + 1);
    let mut price_ratio = Vec::with_capacity(horizon + 1);

    let mut x = 1.0;
    let mut y = 1.0;
    let mut r = market.initial_rate;
    let mut state = inflation.map_or(0.0, |p| p.initial_state);
    let mut ratio = 1.0;

    risky.push(x);
    cash.push(y);
    rate.push(r);
    driver.push(state);
    price_ratio.push(ratio);

    let mut left_rates = vec![0.0; sub_steps];
    let mut states = vec![0.0; sub_steps + 1];

    for _ in 0..horizon {
        for left_rate in left_rates.iter_mut() {
            let (z_rate, z_risky) = correlated_normals(&mut market_normals, market.correlation);
            *left_rate = r;
            r = cir_step(
                r,
                market.rate_reversion,
                market.long_run_rate,
                market.rate_volatility,
                dt,
                z_rate,
            );
            x = gbm_step(x, market.drift, market.volatility, dt, z_risky);
        }
        y = cash_account_step(y, &left_rates, dt);

        if let Some(params) = inflation {
            states[0] = state;
            for step in 0..sub_steps {
                state = ou_step(
                    state,
                    params.reversion_speed,
                    params.volatility,
                    dt,
                    inflation_normals.draw(),
                );
                states[step + 1] = state;
            }
            ratio = realized_inflation_step(ratio, &states, params.mean_rate, dt);
        }

        risky.push(x);
        cash.push(y);
        rate.push(r);
        driver.push(state);
        price_ratio.push(ratio);
    }

    ScenarioPath {
        risky,
        cash,
        rate,
        driver,
        price_ratio,
    }
}
