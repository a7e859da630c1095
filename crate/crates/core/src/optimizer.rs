//! Grid search over the initial risky share.
//!
//! Two programs are solved on a shared estimate table: the largest share
//! whose ruin probability stays under a cap, and the share minimizing the
//! expected economic reserve (equivalently maximizing economic equity).
//! Ties and flat stretches resolve toward the smaller share. One-parameter
//! sensitivity sweeps re-run the second program per swept value.

use crate::balance::{DynamicsMode, LiabilityPath};
use crate::error::AlmError;
use crate::estimators::{
    economic_reserve, ruin_probability, EconomicReserveEstimate, LiabilityModel, RuinEstimate,
};
use crate::market::{generate_scenarios, MarketParams};
use crate::mortality::CashFlowSchedule;
use crate::rng::derive_seed;
use crate::Result;

/// Evenly spaced allocation grid over [0, 1]: `theta_k = k / divisions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaGrid {
    divisions: usize,
}

impl ThetaGrid {
    /// Grid from a requested step; the step is snapped to `1/round(1/step)`
    /// so that both endpoints are exact.
    pub fn from_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(AlmError::param(
                "theta_grid_step",
                format!("must lie in (0, 1], got {step}"),
            ));
        }
        let divisions = (1.0 / step).round().max(1.0) as usize;
        Ok(ThetaGrid { divisions })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.divisions as f64
    }

    pub fn len(&self) -> usize {
        self.divisions + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.divisions).map(move |k| k as f64 / self.divisions as f64)
    }
}

/// Which program produced an [`AllocationResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    RuinCap,
    EconomicCapital,
}

/// Outcome of one allocation program on a grid of estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub criterion: Criterion,
    pub theta_star: f64,
    /// Ruin cap: the selected share itself. Economic capital: the minimal
    /// expected reserve.
    pub objective_at_star: f64,
    pub ruin_prob_at_star: Option<f64>,
    /// Monte Carlo error of the ruin probability at the optimum, surfaced
    /// so cap-violation risk is visible.
    pub ruin_se_at_star: Option<f64>,
    pub grid_step: f64,
    /// Ruin cap only: false when no grid point satisfies the cap (the
    /// reported share is then the minimal-ruin point).
    pub feasible: bool,
    /// The optimum sits on a grid endpoint.
    pub boundary: bool,
    /// The objective is constant over the grid to machine precision.
    pub flat: bool,
}

fn grid_step_of(thetas: &[f64]) -> f64 {
    if thetas.len() >= 2 {
        thetas[1] - thetas[0]
    } else {
        0.0
    }
}

fn is_flat(values: &[f64]) -> bool {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (max - min).abs() <= 1e-12 * max.abs().max(1.0)
}

/// Largest grid share whose estimated ruin probability stays at or below
/// `pi_max`. Estimates must be sorted by ascending share.
pub fn optimize_ruin_cap(estimates: &[RuinEstimate], pi_max: f64) -> Result<AllocationResult> {
    if estimates.is_empty() {
        return Err(AlmError::EmptyGrid);
    }
    if !(0.0..=1.0).contains(&pi_max) {
        return Err(AlmError::param(
            "pi_max",
            format!("must lie in [0, 1], got {pi_max}"),
        ));
    }
    debug_assert!(estimates.windows(2).all(|w| w[0].theta <= w[1].theta));
    let thetas: Vec<f64> = estimates.iter().map(|e| e.theta).collect();
    let probabilities: Vec<f64> = estimates.iter().map(|e| e.probability).collect();

    let chosen = estimates.iter().rev().find(|e| e.probability <= pi_max);
    let (pick, feasible) = match chosen {
        Some(estimate) => (estimate, true),
        None => {
            // infeasible: fall back to the minimal-ruin share as a diagnostic
            let best = estimates
                .iter()
                .min_by(|a, b| {
                    a.probability
                        .partial_cmp(&b.probability)
                        .expect("probabilities are finite")
                })
                .unwrap();
            (best, false)
        }
    };
    Ok(AllocationResult {
        criterion: Criterion::RuinCap,
        theta_star: pick.theta,
        objective_at_star: pick.theta,
        ruin_prob_at_star: Some(pick.probability),
        ruin_se_at_star: Some(pick.standard_error),
        grid_step: grid_step_of(&thetas),
        feasible,
        boundary: pick.theta == thetas[0] || pick.theta == *thetas.last().unwrap(),
        flat: is_flat(&probabilities),
    })
}

/// Grid share minimizing the expected economic reserve. Ties break toward
/// the smaller share. Estimates must be sorted by ascending share.
pub fn optimize_mfpe(estimates: &[EconomicReserveEstimate]) -> Result<AllocationResult> {
    if estimates.is_empty() {
        return Err(AlmError::EmptyGrid);
    }
    debug_assert!(estimates.windows(2).all(|w| w[0].theta <= w[1].theta));
    let thetas: Vec<f64> = estimates.iter().map(|e| e.theta).collect();
    let objectives: Vec<f64> = estimates.iter().map(|e| e.lambda_mean).collect();

    let mut pick = &estimates[0];
    for estimate in &estimates[1..] {
        if estimate.lambda_mean < pick.lambda_mean {
            pick = estimate;
        }
    }
    Ok(AllocationResult {
        criterion: Criterion::EconomicCapital,
        theta_star: pick.theta,
        objective_at_star: pick.lambda_mean,
        ruin_prob_at_star: None,
        ruin_se_at_star: None,
        grid_step: grid_step_of(&thetas),
        feasible: true,
        boundary: pick.theta == thetas[0] || pick.theta == *thetas.last().unwrap(),
        flat: is_flat(&objectives),
    })
}

/// Parameter swept by [`sensitivity_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Risky-asset drift.
    Drift,
    /// Risky-asset volatility.
    Volatility,
}

/// Fixed inputs of a sensitivity sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup<'a> {
    pub market: MarketParams,
    pub flows: &'a CashFlowSchedule,
    pub initial_equity_ratio: f64,
    pub n_paths: usize,
    pub sub_steps: usize,
    /// Master seed; each sweep point derives its own scenario seed.
    pub seed: u64,
    pub grid: ThetaGrid,
    pub dynamics: DynamicsMode,
}

/// One row of a sweep: swept value, re-optimized share and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub theta_star: f64,
    pub lambda_at_star: f64,
    pub ruin_at_star: f64,
    pub boundary: bool,
    pub flat: bool,
}

/// Re-optimizes the economic-capital program for each swept parameter
/// value, regenerating scenarios per point from seeds derived off the
/// master seed, and reports the ruin probability at each optimum.
pub fn sensitivity_sweep(
    setup: &SweepSetup,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(AlmError::EmptyGrid);
    }
    let horizon = setup.flows.horizon();
    let mut points = Vec::with_capacity(values.len());
    for (index, &value) in values.iter().enumerate() {
        let mut market = setup.market;
        match param {
            SweepParam::Drift => market.drift = value,
            SweepParam::Volatility => market.volatility = value,
        }
        market.validate()?;
        let seed = derive_seed(setup.seed, index as u64 + 1);
        let set = generate_scenarios(&market, None, setup.n_paths, horizon, setup.sub_steps, seed)?;
        let estimates: Vec<EconomicReserveEstimate> = setup
            .grid
            .values()
            .map(|theta| {
                economic_reserve(
                    &set,
                    setup.flows,
                    theta,
                    market.technical_rate,
                    setup.initial_equity_ratio,
                )
            })
            .collect::<Result<_>>()?;
        let best = optimize_mfpe(&estimates)?;
        let model = LiabilityModel::Shared(LiabilityPath::deterministic(
            setup.flows,
            market.technical_rate,
        ));
        let ruin = ruin_probability(
            &set,
            &model,
            best.theta_star,
            setup.initial_equity_ratio,
            setup.dynamics,
        )?;
        points.push(SweepPoint {
            value,
            theta_star: best.theta_star,
            lambda_at_star: best.objective_at_star,
            ruin_at_star: ruin.probability,
            boundary: best.boundary,
            flat: best.flat,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ruin_estimate(theta: f64, probability: f64) -> RuinEstimate {
        RuinEstimate {
            theta,
            probability,
            standard_error: 0.01,
            mean_ruin_year: None,
            mean_ruin_magnitude: None,
            economic_ruin_probability: 0.0,
        }
    }

    fn reserve_estimate(theta: f64, lambda: f64) -> EconomicReserveEstimate {
        EconomicReserveEstimate {
            theta,
            lambda_mean: lambda,
            lambda_std_error: 0.1,
            economic_equity: 0.0,
            initial_reserve: 100.0,
            initial_equity: 4.0,
        }
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let grid = ThetaGrid::from_step(0.0005).unwrap();
        let values: Vec<f64> = grid.values().collect();
        assert_eq!(values.len(), 2001);
        assert_eq!(values[0], 0.0);
        assert_eq!(*values.last().unwrap(), 1.0);
        assert!((grid.step() - 0.0005).abs() < 1e-18);
    }

    #[test]
    fn ruin_cap_hand_grid() {
        let estimates = vec![
            ruin_estimate(0.0, 0.00),
            ruin_estimate(0.5, 0.03),
            ruin_estimate(1.0, 0.20),
        ];
        let result = optimize_ruin_cap(&estimates, 0.05).unwrap();
        assert_eq!(result.theta_star, 0.5);
        assert!(result.feasible);
        assert!(!result.boundary);
    }

    #[test]
    fn permissive_cap_selects_full_risky_share() {
        let estimates = vec![
            ruin_estimate(0.0, 0.0),
            ruin_estimate(0.5, 0.4),
            ruin_estimate(1.0, 0.9),
        ];
        let result = optimize_ruin_cap(&estimates, 1.0).unwrap();
        assert_eq!(result.theta_star, 1.0);
        assert!(result.boundary);
    }

    #[test]
    fn riskless_curve_selects_full_risky_share() {
        let estimates = vec![
            ruin_estimate(0.0, 0.0),
            ruin_estimate(0.5, 0.0),
            ruin_estimate(1.0, 0.0),
        ];
        let result = optimize_ruin_cap(&estimates, 0.01).unwrap();
        assert_eq!(result.theta_star, 1.0);
        assert!(result.flat);
    }

    #[test]
    fn infeasible_cap_reports_minimal_ruin_share() {
        let estimates = vec![
            ruin_estimate(0.0, 0.08),
            ruin_estimate(0.5, 0.05),
            ruin_estimate(1.0, 0.30),
        ];
        let result = optimize_ruin_cap(&estimates, 0.01).unwrap();
        assert!(!result.feasible);
        assert_eq!(result.theta_star, 0.5);
    }

    #[test]
    fn mfpe_hand_grid() {
        let estimates = vec![
            reserve_estimate(0.0, 101.0),
            reserve_estimate(0.5, 99.0),
            reserve_estimate(1.0, 100.0),
        ];
        let result = optimize_mfpe(&estimates).unwrap();
        assert_eq!(result.theta_star, 0.5);
        assert_eq!(result.objective_at_star, 99.0);
        assert!(!result.flat);
    }

    #[test]
    fn flat_objective_resolves_to_smallest_share() {
        let estimates = vec![
            reserve_estimate(0.0, 100.0),
            reserve_estimate(0.5, 100.0),
            reserve_estimate(1.0, 100.0),
        ];
        let result = optimize_mfpe(&estimates).unwrap();
        assert_eq!(result.theta_star, 0.0);
        assert!(result.flat);
        assert!(result.boundary);
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(matches!(optimize_mfpe(&[]), Err(AlmError::EmptyGrid)));
        assert!(matches!(
            optimize_ruin_cap(&[], 0.5),
            Err(AlmError::EmptyGrid)
        ));
    }

    proptest! {
        #[test]
        fn mfpe_is_scale_invariant(scale in 0.1f64..50.0,
                                   lambdas in proptest::collection::vec(1.0f64..100.0, 3..20)) {
            let estimates: Vec<EconomicReserveEstimate> = lambdas.iter().enumerate()
                .map(|(k, &l)| reserve_estimate(k as f64 / (lambdas.len() - 1) as f64, l))
                .collect();
            let scaled: Vec<EconomicReserveEstimate> = estimates.iter()
                .map(|e| EconomicReserveEstimate { lambda_mean: e.lambda_mean * scale, ..e.clone() })
                .collect();
            let a = optimize_mfpe(&estimates).unwrap();
            let b = optimize_mfpe(&scaled).unwrap();
            prop_assert_eq!(a.theta_star, b.theta_star);
        }

        #[test]
        fn ruin_cap_is_monotone_in_the_cap(
            probs in proptest::collection::vec(0.0f64..1.0, 3..20),
            cap_lo in 0.0f64..1.0, bump in 0.0f64..0.5)
        {
            let estimates: Vec<RuinEstimate> = probs.iter().enumerate()
                .map(|(k, &p)| ruin_estimate(k as f64 / (probs.len() - 1) as f64, p))
                .collect();
            let lo = optimize_ruin_cap(&estimates, cap_lo).unwrap();
            let hi = optimize_ruin_cap(&estimates, (cap_lo + bump).min(1.0)).unwrap();
            if lo.feasible {
                prop_assert!(hi.theta_star >= lo.theta_star);
            }
        }
    }
}
