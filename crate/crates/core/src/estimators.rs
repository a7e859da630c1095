//! Statistical aggregation across scenario sets.
//!
//! Every estimator reuses one [`ScenarioSet`] for all candidate
//! allocations (common random numbers), so comparisons across the risky
//! share are not polluted by sampling noise, and repeated evaluation at
//! a given share is bit-identical.
//!
//! With stochastic mortality, `N` market paths are crossed with `M`
//! liability paths in a full factorial design. Standard errors then
//! cluster by market path: the per-market-path averages are the
//! independent samples.

use crate::balance::{ruin_scan, DynamicsMode, LiabilityPath};
use crate::error::AlmError;
use crate::market::ScenarioSet;
use crate::mortality::{simulate_flow_set, AnnuityPortfolio, CashFlowSchedule, MortalityTable};
use crate::parallel::map_indexed;
use crate::rng::derive_seed;
use crate::stats;
use crate::Result;

/// Liability side fed to the estimators, fixing mortality/indexation mode.
#[derive(Debug, Clone)]
pub enum LiabilityModel {
    /// Deterministic flows, flat benefits: one history for every path.
    Shared(LiabilityPath),
    /// Indexed benefits on deterministic mortality: one history per
    /// market path (same ordering as the scenario set).
    PerMarketPath(Vec<LiabilityPath>),
    /// Stochastic mortality, flat benefits: `M` histories crossed with
    /// every market path.
    PerMortalityPath(Vec<LiabilityPath>),
}

impl LiabilityModel {
    /// Reserve backing the balance sheet at time zero. Identical across
    /// paths in all three variants (no deaths and a known driver state at
    /// the valuation date).
    pub fn initial_reserve(&self) -> f64 {
        match self {
            LiabilityModel::Shared(path) => path.initial_reserve(),
            LiabilityModel::PerMarketPath(paths) => paths[0].initial_reserve(),
            LiabilityModel::PerMortalityPath(paths) => paths[0].initial_reserve(),
        }
    }

    fn check(&self, set: &ScenarioSet) -> Result<()> {
        let horizon_ok = |path: &LiabilityPath| {
            if path.horizon() > set.horizon {
                Err(AlmError::HorizonMismatch {
                    scenario: set.horizon,
                    flows: path.horizon(),
                })
            } else {
                Ok(())
            }
        };
        match self {
            LiabilityModel::Shared(path) => horizon_ok(path),
            LiabilityModel::PerMarketPath(paths) => {
                if paths.len() != set.n_paths() {
                    return Err(AlmError::DegenerateSample {
                        dim: "per-market liability paths",
                        needed: set.n_paths(),
                        got: paths.len(),
                    });
                }
                paths.iter().try_for_each(horizon_ok)
            }
            LiabilityModel::PerMortalityPath(paths) => {
                if paths.is_empty() {
                    return Err(AlmError::DegenerateSample {
                        dim: "mortality paths",
                        needed: 1,
                        got: 0,
                    });
                }
                paths.iter().try_for_each(horizon_ok)
            }
        }
    }
}

/// Ruin statistics for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RuinEstimate {
    pub theta: f64,
    /// Probability that equity ever turns negative over the run-off.
    pub probability: f64,
    pub standard_error: f64,
    /// Mean first accounting-ruin date over ruined paths, if any ruined.
    pub mean_ruin_year: Option<f64>,
    /// Mean worst shortfall over ruined paths, if any ruined.
    pub mean_ruin_magnitude: Option<f64>,
    /// Probability that assets are ever exhausted.
    pub economic_ruin_probability: f64,
}

/// Economic-reserve statistics for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomicReserveEstimate {
    pub theta: f64,
    /// Mean discounted benefit cost under the fund's return.
    pub lambda_mean: f64,
    pub lambda_std_error: f64,
    /// `E_0 + L_0 - lambda_mean`.
    pub economic_equity: f64,
    pub initial_reserve: f64,
    pub initial_equity: f64,
}

/// Split of the benefit-cost variance into financial and mortality parts.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    pub theta: f64,
    /// Sum of the two components.
    pub total_variance: f64,
    /// Between-market-path variance of the conditional mean cost.
    pub financial_component: f64,
    /// Mean within-market-path variance across mortality draws.
    pub mortality_component: f64,
    /// `financial / (financial + mortality)`, zero when both vanish.
    pub financial_share: f64,
}

/// Base-versus-replicated decomposition pair from a mutualization run.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualizationComparison {
    pub replication: usize,
    pub base: VarianceDecomposition,
    pub replicated: VarianceDecomposition,
}

struct PathRuinStats {
    ruin_fraction: f64,
    econ_fraction: f64,
    ruined_count: f64,
    ruin_year_sum: f64,
    magnitude_sum: f64,
}

impl PathRuinStats {
    fn single(outcome: crate::balance::PathOutcome) -> Self {
        PathRuinStats {
            ruin_fraction: outcome.ruined() as u8 as f64,
            econ_fraction: outcome.economic_ruin_year.is_some() as u8 as f64,
            ruined_count: outcome.ruined() as u8 as f64,
            ruin_year_sum: outcome.ruin_year.map_or(0.0, f64::from),
            magnitude_sum: if outcome.ruined() {
                outcome.max_shortfall
            } else {
                0.0
            },
        }
    }
}

/// Estimates the ruin probability at allocation `theta`.
pub fn ruin_probability(
    set: &ScenarioSet,
    model: &LiabilityModel,
    theta: f64,
    initial_equity_ratio: f64,
    dynamics: DynamicsMode,
) -> Result<RuinEstimate> {
    model.check(set)?;
    let per_path: Vec<PathRuinStats> = match model {
        LiabilityModel::Shared(path) => map_indexed(set.n_paths(), |n| {
            let outcome = ruin_scan(&set.paths[n], path, theta, initial_equity_ratio, dynamics)
                .expect("horizon checked above");
            PathRuinStats::single(outcome)
        }),
        LiabilityModel::PerMarketPath(paths) => map_indexed(set.n_paths(), |n| {
            let outcome = ruin_scan(
                &set.paths[n],
                &paths[n],
                theta,
                initial_equity_ratio,
                dynamics,
            )
            .expect("horizon checked above");
            PathRuinStats::single(outcome)
        }),
        LiabilityModel::PerMortalityPath(liabilities) => {
            return ruin_probability_crossed(
                set,
                liabilities,
                theta,
                initial_equity_ratio,
                dynamics,
            );
        }
    };

    let fractions: Vec<f64> = per_path.iter().map(|s| s.ruin_fraction).collect();
    let probability = stats::mean(&fractions);
    let standard_error = stats::standard_error(&fractions);
    let econ_fractions: Vec<f64> = per_path.iter().map(|s| s.econ_fraction).collect();
    let economic_ruin_probability = stats::mean(&econ_fractions);

    let ruined_total =
        stats::pairwise_sum(&per_path.iter().map(|s| s.ruined_count).collect::<Vec<_>>());
    let (mean_ruin_year, mean_ruin_magnitude) = if ruined_total > 0.0 {
        let year_sum =
            stats::pairwise_sum(&per_path.iter().map(|s| s.ruin_year_sum).collect::<Vec<_>>());
        let magnitude_sum =
            stats::pairwise_sum(&per_path.iter().map(|s| s.magnitude_sum).collect::<Vec<_>>());
        (
            Some(year_sum / ruined_total),
            Some(magnitude_sum / ruined_total),
        )
    } else {
        (None, None)
    };

    Ok(RuinEstimate {
        theta,
        probability,
        standard_error,
        mean_ruin_year,
        mean_ruin_magnitude,
        economic_ruin_probability,
    })
}

/// N x M factorial: every liability history against every market path.
/// The standard error combines both cluster dimensions, since mortality
/// draws are shared across market paths.
fn ruin_probability_crossed(
    set: &ScenarioSet,
    liabilities: &[LiabilityPath],
    theta: f64,
    initial_equity_ratio: f64,
    dynamics: DynamicsMode,
) -> Result<RuinEstimate> {
    struct CrossedRow {
        indicators: Vec<u8>,
        econ_fraction: f64,
        ruin_year_sum: f64,
        magnitude_sum: f64,
    }
    let m = liabilities.len();
    let rows: Vec<CrossedRow> = map_indexed(set.n_paths(), |n| {
        let mut indicators = Vec::with_capacity(m);
        let mut econ = 0.0;
        let mut year_sum = 0.0;
        let mut magnitude_sum = 0.0;
        for liability in liabilities {
            let outcome = ruin_scan(
                &set.paths[n],
                liability,
                theta,
                initial_equity_ratio,
                dynamics,
            )
            .expect("horizon checked above");
            indicators.push(outcome.ruined() as u8);
            if let Some(year) = outcome.ruin_year {
                year_sum += f64::from(year);
                magnitude_sum += outcome.max_shortfall;
            }
            econ += outcome.economic_ruin_year.is_some() as u8 as f64;
        }
        CrossedRow {
            indicators,
            econ_fraction: econ / m as f64,
            ruin_year_sum: year_sum,
            magnitude_sum,
        }
    });

    let row_fractions: Vec<f64> = rows
        .iter()
        .map(|r| r.indicators.iter().map(|&i| i as f64).sum::<f64>() / m as f64)
        .collect();
    let column_fractions: Vec<f64> = (0..m)
        .map(|col| rows.iter().map(|r| r.indicators[col] as f64).sum::<f64>() / rows.len() as f64)
        .collect();
    let probability = stats::mean(&row_fractions);
    let standard_error = (stats::standard_error(&row_fractions).powi(2)
        + stats::standard_error(&column_fractions).powi(2))
    .sqrt();
    let econ_fractions: Vec<f64> = rows.iter().map(|r| r.econ_fraction).collect();
    let economic_ruin_probability = stats::mean(&econ_fractions);

    let ruined_total = stats::pairwise_sum(
        &rows
            .iter()
            .map(|r| r.indicators.iter().map(|&i| i as f64).sum::<f64>())
            .collect::<Vec<_>>(),
    );
    let (mean_ruin_year, mean_ruin_magnitude) = if ruined_total > 0.0 {
        let year_sum =
            stats::pairwise_sum(&rows.iter().map(|r| r.ruin_year_sum).collect::<Vec<_>>());
        let magnitude_sum =
            stats::pairwise_sum(&rows.iter().map(|r| r.magnitude_sum).collect::<Vec<_>>());
        (
            Some(year_sum / ruined_total),
            Some(magnitude_sum / ruined_total),
        )
    } else {
        (None, None)
    };

    Ok(RuinEstimate {
        theta,
        probability,
        standard_error,
        mean_ruin_year,
        mean_ruin_magnitude,
        economic_ruin_probability,
    })
}

/// Economic reserve with deterministic flows: the default estimator even
/// under stochastic mortality, since independence of flows and returns
/// makes the expectation separable.
pub fn economic_reserve(
    set: &ScenarioSet,
    flows: &CashFlowSchedule,
    theta: f64,
    technical_rate: f64,
    initial_equity_ratio: f64,
) -> Result<EconomicReserveEstimate> {
    let model = LiabilityModel::Shared(LiabilityPath::deterministic(flows, technical_rate));
    economic_reserve_with(set, &model, theta, initial_equity_ratio)
}

/// Economic reserve under an arbitrary liability model.
pub fn economic_reserve_with(
    set: &ScenarioSet,
    model: &LiabilityModel,
    theta: f64,
    initial_equity_ratio: f64,
) -> Result<EconomicReserveEstimate> {
    model.check(set)?;
    let per_path: Vec<f64> = match model {
        LiabilityModel::Shared(path) => map_indexed(set.n_paths(), |n| {
            crate::balance::liability_present_value(&set.paths[n], &path.paid, theta)
        }),
        LiabilityModel::PerMarketPath(paths) => map_indexed(set.n_paths(), |n| {
            crate::balance::liability_present_value(&set.paths[n], &paths[n].paid, theta)
        }),
        LiabilityModel::PerMortalityPath(liabilities) => {
            // crossed design: mortality draws are shared across market
            // paths, so their sampling noise is invisible to the per-path
            // cluster error and needs its own cluster dimension
            let rows: Vec<Vec<f64>> = map_indexed(set.n_paths(), |n| {
                liabilities
                    .iter()
                    .map(|l| crate::balance::liability_present_value(&set.paths[n], &l.paid, theta))
                    .collect()
            });
            let m = liabilities.len();
            let row_means: Vec<f64> = rows.iter().map(|row| stats::mean(row)).collect();
            let column_means: Vec<f64> = (0..m)
                .map(|col| {
                    let column: Vec<f64> = rows.iter().map(|row| row[col]).collect();
                    stats::mean(&column)
                })
                .collect();
            let market_term = stats::standard_error(&row_means).powi(2);
            let mortality_term = stats::standard_error(&column_means).powi(2);
            let lambda_mean = stats::mean(&row_means);
            let initial_reserve = model.initial_reserve();
            let initial_equity = initial_equity_ratio * initial_reserve;
            return Ok(EconomicReserveEstimate {
                theta,
                lambda_mean,
                lambda_std_error: (market_term + mortality_term).sqrt(),
                economic_equity: initial_equity + initial_reserve - lambda_mean,
                initial_reserve,
                initial_equity,
            });
        }
    };
    let lambda_mean = stats::mean(&per_path);
    let lambda_std_error = stats::standard_error(&per_path);
    let initial_reserve = model.initial_reserve();
    let initial_equity = initial_equity_ratio * initial_reserve;
    Ok(EconomicReserveEstimate {
        theta,
        lambda_mean,
        lambda_std_error,
        economic_equity: initial_equity + initial_reserve - lambda_mean,
        initial_reserve,
        initial_equity,
    })
}

/// Splits the variance of the discounted benefit cost into its financial
/// (between market paths) and mortality (within market path) components.
pub fn variance_decomposition(
    set: &ScenarioSet,
    realized_flows: &[CashFlowSchedule],
    theta: f64,
) -> Result<VarianceDecomposition> {
    let n = set.n_paths();
    let m = realized_flows.len();
    if n < 2 {
        return Err(AlmError::DegenerateSample {
            dim: "market paths",
            needed: 2,
            got: n,
        });
    }
    if m < 2 {
        return Err(AlmError::DegenerateSample {
            dim: "mortality paths",
            needed: 2,
            got: m,
        });
    }
    let flow_horizon = realized_flows.iter().map(|f| f.horizon()).max().unwrap();
    if flow_horizon > set.horizon {
        return Err(AlmError::HorizonMismatch {
            scenario: set.horizon,
            flows: flow_horizon,
        });
    }

    // one row per market path: (conditional mean over m, within-row variance)
    let rows: Vec<(f64, f64)> = map_indexed(n, |path_index| {
        let scenario = &set.paths[path_index];
        let weights: Vec<f64> = (1..=flow_horizon)
            .map(|t| 1.0 / scenario.fund_value(t, theta))
            .collect();
        let costs: Vec<f64> = realized_flows
            .iter()
            .map(|flows| {
                let mut cost = 0.0;
                for (t, w) in weights.iter().enumerate() {
                    cost += flows.at_year(t + 1) * w;
                }
                cost
            })
            .collect();
        (stats::mean(&costs), stats::sample_variance(&costs))
    });

    let conditional_means: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let within: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mortality_component = stats::mean(&within);
    let financial_component = stats::sample_variance(&conditional_means);
    let total_variance = financial_component + mortality_component;
    let financial_share = if total_variance > 0.0 {
        financial_component / total_variance
    } else {
        0.0
    };
    Ok(VarianceDecomposition {
        theta,
        total_variance,
        financial_component,
        mortality_component,
        financial_share,
    })
}

/// Runs the decomposition on the base book and on a `k`-fold replication
/// against the same market paths. Replication multiplies independent
/// lives, so the financial component scales like k^2 while the mortality
/// component scales like k and the financial share rises.
pub fn mutualization_study(
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
    replication: usize,
    set: &ScenarioSet,
    mortality_paths: usize,
    seed: u64,
    theta: f64,
) -> Result<MutualizationComparison> {
    if replication == 0 {
        return Err(AlmError::param("replication", "must be at least 1"));
    }
    let base_flows = simulate_flow_set(portfolio, table, mortality_paths, derive_seed(seed, 1))?;
    let base = variance_decomposition(set, &base_flows, theta)?;
    let replicated = if replication == 1 {
        base.clone()
    } else {
        let big = portfolio.replicate(replication);
        let big_flows = simulate_flow_set(&big, table, mortality_paths, derive_seed(seed, 2))?;
        variance_decomposition(set, &big_flows, theta)?
    };
    Ok(MutualizationComparison {
        replication,
        base,
        replicated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_scenarios, MarketParams, ScenarioPath};
    use crate::mortality::{expected_flows, Annuitant, MortalityTable};

    fn path_from(risky: Vec<f64>, cash: Vec<f64>) -> ScenarioPath {
        let n = risky.len();
        ScenarioPath {
            risky,
            cash,
            rate: vec![0.0; n],
            driver: vec![0.0; n],
            price_ratio: vec![1.0; n],
        }
    }

    fn two_path_set() -> ScenarioSet {
        // path 0 collapses, path 1 rides high
        ScenarioSet {
            paths: vec![
                path_from(vec![1.0, 0.2, 0.1], vec![1.0, 1.01, 1.02]),
                path_from(vec![1.0, 1.5, 2.0], vec![1.0, 1.01, 1.02]),
            ],
            horizon: 2,
            sub_steps: 1,
            seed: 0,
        }
    }

    #[test]
    fn hand_crafted_paths_give_half_probability() {
        let set = two_path_set();
        let flows = CashFlowSchedule::new(vec![30.0, 30.0]);
        let model = LiabilityModel::Shared(LiabilityPath::deterministic(&flows, 0.0));
        let estimate = ruin_probability(&set, &model, 1.0, 0.04, DynamicsMode::BuyAndHold).unwrap();
        assert_eq!(estimate.probability, 0.5);
        // sample-std-based error on {0, 1}: sqrt(1/2)/sqrt(2) = 0.5
        assert!((estimate.standard_error - 0.5).abs() < 1e-15);
        assert!(estimate.mean_ruin_year.is_some());
        assert!(estimate.economic_ruin_probability <= estimate.probability);
    }

    #[test]
    fn riskless_world_with_positive_equity_never_ruins() {
        let growth: Vec<f64> = (0..=3).map(|t| (1.025f64).powi(t)).collect();
        let set = ScenarioSet {
            paths: vec![path_from(growth.clone(), growth)],
            horizon: 3,
            sub_steps: 1,
            seed: 0,
        };
        let flows = CashFlowSchedule::new(vec![10.0, 10.0, 10.0]);
        let model = LiabilityModel::Shared(LiabilityPath::deterministic(&flows, 0.025));
        let estimate = ruin_probability(&set, &model, 0.5, 0.04, DynamicsMode::BuyAndHold).unwrap();
        assert_eq!(estimate.probability, 0.0);
        assert_eq!(estimate.mean_ruin_year, None);
    }

    #[test]
    fn negative_initial_equity_ruins_every_path() {
        let set = two_path_set();
        let flows = CashFlowSchedule::new(vec![5.0, 5.0]);
        let model = LiabilityModel::Shared(LiabilityPath::deterministic(&flows, 0.0));
        let estimate =
            ruin_probability(&set, &model, 0.5, -0.01, DynamicsMode::BuyAndHold).unwrap();
        assert_eq!(estimate.probability, 1.0);
        assert_eq!(estimate.mean_ruin_year, Some(0.0));
    }

    #[test]
    fn economic_reserve_single_flow_cash_only() {
        let y1 = (0.03f64).exp();
        let set = ScenarioSet {
            paths: vec![path_from(vec![1.0, 1.2], vec![1.0, y1])],
            horizon: 1,
            sub_steps: 1,
            seed: 0,
        };
        let flows = CashFlowSchedule::new(vec![100.0]);
        let estimate = economic_reserve(&set, &flows, 0.0, 0.025, 0.04).unwrap();
        assert!((estimate.lambda_mean - 100.0 * (-0.03f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn economic_equity_identity_holds() {
        let set = two_path_set();
        let flows = CashFlowSchedule::new(vec![10.0, 20.0]);
        let estimate = economic_reserve(&set, &flows, 0.3, 0.025, 0.04).unwrap();
        let rebuilt = estimate.initial_equity + estimate.initial_reserve - estimate.lambda_mean;
        assert!((estimate.economic_equity - rebuilt).abs() <= 1e-12 * rebuilt.abs().max(1.0));
    }

    #[test]
    fn identical_assets_make_theta_irrelevant() {
        let values = vec![1.0, 1.06, 1.13, 1.19];
        let set = ScenarioSet {
            paths: vec![path_from(values.clone(), values)],
            horizon: 3,
            sub_steps: 1,
            seed: 0,
        };
        let flows = CashFlowSchedule::new(vec![10.0, 10.0, 10.0]);
        let a = economic_reserve(&set, &flows, 0.0, 0.025, 0.04).unwrap();
        let b = economic_reserve(&set, &flows, 1.0, 0.025, 0.04).unwrap();
        let c = economic_reserve(&set, &flows, 0.61, 0.025, 0.04).unwrap();
        assert_eq!(a.lambda_mean, b.lambda_mean);
        assert_eq!(a.lambda_mean, c.lambda_mean);
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let set = two_path_set();
        let flows = CashFlowSchedule::new(vec![30.0, 30.0]);
        let model = LiabilityModel::Shared(LiabilityPath::deterministic(&flows, 0.0));
        let a = ruin_probability(&set, &model, 0.7, 0.04, DynamicsMode::BuyAndHold).unwrap();
        let b = ruin_probability(&set, &model, 0.7, 0.04, DynamicsMode::BuyAndHold).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_reconciles_with_pooled_variance_on_hand_grid() {
        // 3 market paths x 3 mortality draws; brute-force oracle below
        let set = ScenarioSet {
            paths: vec![
                path_from(vec![1.0, 1.1], vec![1.0, 1.02]),
                path_from(vec![1.0, 0.9], vec![1.0, 1.03]),
                path_from(vec![1.0, 1.4], vec![1.0, 1.01]),
            ],
            horizon: 1,
            sub_steps: 1,
            seed: 0,
        };
        let flows = vec![
            CashFlowSchedule::new(vec![10.0]),
            CashFlowSchedule::new(vec![12.0]),
            CashFlowSchedule::new(vec![7.0]),
        ];
        let theta = 0.35;
        let decomp = variance_decomposition(&set, &flows, theta).unwrap();

        // direct lambda grid
        let mut grid = Vec::new();
        for path in &set.paths {
            for f in &flows {
                grid.push(f.at_year(1) / path.fund_value(1, theta));
            }
        }
        let pooled = stats::sample_variance(&grid);
        let (n, m) = (3.0, 3.0);
        // (NM-1) S^2 = N(M-1) mort + M(N-1) fin
        let lhs = (n * m - 1.0) * pooled;
        let rhs =
            n * (m - 1.0) * decomp.mortality_component + m * (n - 1.0) * decomp.financial_component;
        assert!(
            (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn deterministic_flows_have_zero_mortality_component() {
        let set = two_path_set();
        let flows = CashFlowSchedule::new(vec![10.0, 10.0]);
        let copies = vec![flows.clone(), flows.clone(), flows];
        let decomp = variance_decomposition(&set, &copies, 0.4).unwrap();
        // identical rows leave only one-ulp mean-rounding residue
        assert!(decomp.mortality_component <= 1e-12 * decomp.financial_component);
        assert!(decomp.financial_component > 0.0);
        assert!(decomp.financial_share > 1.0 - 1e-12);
    }

    #[test]
    fn deterministic_market_has_zero_financial_component() {
        let fixed = path_from(vec![1.0, 1.05], vec![1.0, 1.05]);
        let set = ScenarioSet {
            paths: vec![fixed.clone(), fixed],
            horizon: 1,
            sub_steps: 1,
            seed: 0,
        };
        let flows = vec![
            CashFlowSchedule::new(vec![10.0]),
            CashFlowSchedule::new(vec![14.0]),
        ];
        let decomp = variance_decomposition(&set, &flows, 0.4).unwrap();
        assert_eq!(decomp.financial_component, 0.0);
        assert!(decomp.mortality_component > 0.0);
        assert_eq!(decomp.financial_share, 0.0);
    }

    #[test]
    fn degenerate_sample_sizes_are_rejected() {
        let set = two_path_set();
        let one_flow = vec![CashFlowSchedule::new(vec![10.0])];
        assert!(matches!(
            variance_decomposition(&set, &one_flow, 0.4),
            Err(AlmError::DegenerateSample { .. })
        ));
    }

    #[test]
    fn mutualization_with_identity_replication_is_a_no_op() {
        let table = MortalityTable::new(60, vec![1000.0, 800.0, 500.0, 0.0]).unwrap();
        let portfolio = AnnuityPortfolio::new(vec![
            Annuitant {
                age: 60,
                annual_payment: 100.0,
            },
            Annuitant {
                age: 61,
                annual_payment: 300.0,
            },
        ]);
        let market = MarketParams::canonical();
        let set = generate_scenarios(&market, None, 16, 3, 4, 5).unwrap();
        let comparison = mutualization_study(&portfolio, &table, 1, &set, 8, 44, 0.3).unwrap();
        assert_eq!(comparison.base, comparison.replicated);
    }

    #[test]
    fn mutualization_raises_financial_share() {
        let table = MortalityTable::new(60, vec![1000.0, 900.0, 750.0, 500.0, 250.0, 0.0]).unwrap();
        let portfolio = AnnuityPortfolio::new(
            (0..20)
                .map(|k| Annuitant {
                    age: 60 + (k % 3),
                    annual_payment: 100.0 + 40.0 * k as f64,
                })
                .collect(),
        );
        let market = MarketParams::canonical();
        let set = generate_scenarios(&market, None, 200, 5, 4, 6).unwrap();
        let comparison = mutualization_study(&portfolio, &table, 10, &set, 50, 3, 0.164).unwrap();
        assert!(
            comparison.replicated.financial_share > comparison.base.financial_share,
            "base {} vs replicated {}",
            comparison.base.financial_share,
            comparison.replicated.financial_share
        );
    }

    #[test]
    fn stochastic_liability_model_crosses_every_pair() {
        let table = MortalityTable::new(60, vec![1000.0, 500.0, 0.0]).unwrap();
        let portfolio = AnnuityPortfolio::new(vec![Annuitant {
            age: 60,
            annual_payment: 40.0,
        }]);
        let market = MarketParams::canonical();
        let set = generate_scenarios(&market, None, 32, 2, 4, 9).unwrap();
        let mortality =
            crate::mortality::simulate_mortality_set(&portfolio, &table, 10, 17).unwrap();
        let liabilities: Vec<LiabilityPath> = mortality
            .iter()
            .map(|p| LiabilityPath::stochastic(p, &portfolio, &table, 0.025).unwrap())
            .collect();
        let model = LiabilityModel::PerMortalityPath(liabilities);
        let flat = expected_flows(&portfolio, &table).unwrap();
        let stochastic = economic_reserve_with(&set, &model, 0.3, 0.04).unwrap();
        let deterministic = economic_reserve(&set, &flat, 0.3, 0.025, 0.04).unwrap();
        // same market paths: only mortality noise separates the two
        let gap = (stochastic.lambda_mean - deterministic.lambda_mean).abs();
        let combined =
            (stochastic.lambda_std_error.powi(2) + deterministic.lambda_std_error.powi(2)).sqrt();
        assert!(
            gap < 3.0 * combined.max(1e-12),
            "gap {gap} combined {combined}"
        );

        let ruin = ruin_probability(&set, &model, 0.3, 0.04, DynamicsMode::BuyAndHold).unwrap();
        assert!((0.0..=1.0).contains(&ruin.probability));
        assert!(ruin.economic_ruin_probability <= ruin.probability + 1e-15);
    }
}
