//! Study orchestration: wiring configs to the estimator layer and
//! emitting the results table, run manifest and optional audit dumps.
//!
//! All simulation outputs are written with shortest round-trip float
//! formatting, so a rerun with the same config and seed produces
//! byte-identical CSV files at any worker count. Wall-clock time goes to
//! the manifest only.

use crate::config::{StudyConfig, StudyKind};
use alm_core::balance::{run_path, LiabilityPath, MortalityMode, RunConfig};
use alm_core::estimators::{
    economic_reserve_with, ruin_probability, variance_decomposition, LiabilityModel,
    VarianceDecomposition,
};
use alm_core::market::{generate_scenarios, ScenarioSet};
use alm_core::mortality::{
    expected_flows, indexed_schedule, macaulay_duration, reserve, simulate_flow_set,
    AnnuityPortfolio, CashFlowSchedule, MortalityTable,
};
use alm_core::optimizer::{
    optimize_mfpe, optimize_ruin_cap, sensitivity_sweep, AllocationResult, SweepParam, SweepSetup,
    ThetaGrid,
};
use alm_core::rng::derive_seed;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    /// Bad inputs: unreadable or malformed data files, config-level
    /// inconsistencies. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failures during simulation or output writing. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl From<std::io::Error> for RunError {
    fn from(err: std::io::Error) -> Self {
        RunError::Runtime(err.to_string())
    }
}

fn validation(err: impl std::fmt::Display) -> RunError {
    RunError::Validation(err.to_string())
}

fn runtime(err: impl std::fmt::Display) -> RunError {
    RunError::Runtime(err.to_string())
}

/// One row of the results table. Studies fill the columns they produce;
/// the rest stay empty in the CSV.
#[derive(Debug, Clone, Default)]
struct ResultRow {
    block: Option<&'static str>,
    theta: f64,
    ruin_prob: Option<f64>,
    ruin_se: Option<f64>,
    lambda_mean: Option<f64>,
    lambda_se: Option<f64>,
    fin_var: Option<f64>,
    mort_var: Option<f64>,
    fin_share: Option<f64>,
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| v.to_string())
}

/// What `run` prints and what the tests inspect.
#[derive(Debug, Clone)]
pub struct StudySummary {
    pub study: StudyKind,
    pub initial_reserve: f64,
    pub duration: Option<f64>,
    pub indexed_initial_reserve: Option<f64>,
    pub indexed_duration: Option<f64>,
    pub allocation: Option<AllocationResult>,
    pub rows_written: usize,
    pub notes: Vec<String>,
}

struct LoadedInputs {
    table: MortalityTable,
    portfolio: AnnuityPortfolio,
    flows: CashFlowSchedule,
    horizon: usize,
}

fn load_inputs(config: &StudyConfig) -> Result<LoadedInputs, RunError> {
    let table_text = fs::read_to_string(&config.mortality_table).map_err(|e| {
        validation(format!(
            "cannot read mortality table {}: {e}",
            config.mortality_table.display()
        ))
    })?;
    let table = MortalityTable::from_csv(&table_text).map_err(validation)?;
    let portfolio_text = fs::read_to_string(&config.portfolio).map_err(|e| {
        validation(format!(
            "cannot read portfolio {}: {e}",
            config.portfolio.display()
        ))
    })?;
    let portfolio = AnnuityPortfolio::from_csv(&portfolio_text).map_err(validation)?;
    if portfolio.is_empty() {
        return Err(validation("portfolio has no annuitants"));
    }
    let flows = expected_flows(&portfolio, &table).map_err(validation)?;
    let horizon = flows.horizon().max(1);
    Ok(LoadedInputs {
        table,
        portfolio,
        flows,
        horizon,
    })
}

/// Runs the configured study and writes `results.csv` plus `manifest.txt`
/// (and optional audit dumps) into `out_dir`.
pub fn run_study(config: &StudyConfig, out_dir: &Path) -> Result<StudySummary, RunError> {
    let started = Instant::now();
    config.validate().map_err(validation)?;
    for warning in config.market.warnings() {
        eprintln!("warning: {warning:?}");
    }
    let inputs = load_inputs(config)?;
    let grid = ThetaGrid::from_step(config.theta_grid_step).map_err(validation)?;

    let initial_reserve = reserve(&inputs.flows, config.market.technical_rate);
    let duration = macaulay_duration(&inputs.flows, config.market.technical_rate).ok();

    let needs_inflation = matches!(
        config.study,
        StudyKind::IndexedRuinCurve | StudyKind::IndexedMfpe
    );
    let set = generate_scenarios(
        &config.market,
        if needs_inflation {
            config.inflation.as_ref()
        } else {
            None
        },
        config.n_paths,
        inputs.horizon,
        config.sub_steps,
        config.seed,
    )
    .map_err(runtime)?;

    let mut summary = StudySummary {
        study: config.study,
        initial_reserve,
        duration,
        indexed_initial_reserve: None,
        indexed_duration: None,
        allocation: None,
        rows_written: 0,
        notes: Vec::new(),
    };

    let mut header =
        String::from("theta,ruin_prob,ruin_se,lambda_mean,lambda_se,fin_var,mort_var,fin_share");
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut sensitivity_lines: Option<(String, Vec<String>)> = None;
    // model used for optional balance dumps
    let mut dump_model: Option<LiabilityModel> = None;

    match config.study {
        StudyKind::RuinCurve
        | StudyKind::IndexedRuinCurve
        | StudyKind::MfpeCurve
        | StudyKind::IndexedMfpe => {
            let model = build_liability_model(config, &inputs, &set)?;
            let is_ruin = matches!(
                config.study,
                StudyKind::RuinCurve | StudyKind::IndexedRuinCurve
            );
            if is_ruin {
                let mut estimates = Vec::with_capacity(grid.len());
                for theta in grid.values() {
                    let estimate =
                        ruin_probability(&set, &model, theta, config.e0_ratio, config.dynamics)
                            .map_err(runtime)?;
                    rows.push(ResultRow {
                        theta,
                        ruin_prob: Some(estimate.probability),
                        ruin_se: Some(estimate.standard_error),
                        ..ResultRow::default()
                    });
                    estimates.push(estimate);
                }
                let allocation = optimize_ruin_cap(&estimates, config.pi_max).map_err(runtime)?;
                if !allocation.feasible {
                    summary.notes.push(format!(
                        "no allocation satisfies the ruin cap {}; reporting the minimal-ruin share",
                        config.pi_max
                    ));
                }
                summary.allocation = Some(allocation);
            } else {
                let mut estimates = Vec::with_capacity(grid.len());
                for theta in grid.values() {
                    let estimate = economic_reserve_with(&set, &model, theta, config.e0_ratio)
                        .map_err(runtime)?;
                    rows.push(ResultRow {
                        theta,
                        lambda_mean: Some(estimate.lambda_mean),
                        lambda_se: Some(estimate.lambda_std_error),
                        ..ResultRow::default()
                    });
                    estimates.push(estimate);
                }
                let mut allocation = optimize_mfpe(&estimates).map_err(runtime)?;
                let at_star = ruin_probability(
                    &set,
                    &model,
                    allocation.theta_star,
                    config.e0_ratio,
                    config.dynamics,
                )
                .map_err(runtime)?;
                allocation.ruin_prob_at_star = Some(at_star.probability);
                allocation.ruin_se_at_star = Some(at_star.standard_error);
                if let (Some(year), Some(magnitude)) =
                    (at_star.mean_ruin_year, at_star.mean_ruin_magnitude)
                {
                    summary.notes.push(format!(
                        "at theta*: mean ruin year {year:.2}, mean shortfall {magnitude:.2}, \
                         economic ruin probability {}",
                        at_star.economic_ruin_probability
                    ));
                }
                summary.allocation = Some(allocation);
            }
            if config.study == StudyKind::IndexedRuinCurve || config.study == StudyKind::IndexedMfpe
            {
                let inflation = config.inflation.as_ref().expect("validated");
                let scaled = indexed_schedule(&inputs.flows, inflation, inflation.initial_state);
                summary.indexed_initial_reserve = Some(model.initial_reserve());
                summary.indexed_duration =
                    macaulay_duration(&scaled, config.market.technical_rate).ok();
            }
            dump_model = Some(model);
        }
        StudyKind::VarianceDecomp => {
            let realized = simulate_flow_set(
                &inputs.portfolio,
                &inputs.table,
                config.m_mortality_paths,
                derive_seed(config.seed, 1),
            )
            .map_err(runtime)?;
            let mut decomps = Vec::with_capacity(grid.len());
            for theta in grid.values() {
                let decomp = variance_decomposition(&set, &realized, theta).map_err(runtime)?;
                rows.push(decomp_row(None, &decomp));
                decomps.push(decomp);
            }
            note_share_range(&mut summary, "financial share", &decomps);
        }
        StudyKind::Mutualization => {
            // same market paths for both blocks; independent mortality draws
            let base_flows = simulate_flow_set(
                &inputs.portfolio,
                &inputs.table,
                config.m_mortality_paths,
                derive_seed(config.seed, 1),
            )
            .map_err(runtime)?;
            let replicated_portfolio = inputs.portfolio.replicate(config.k_replication);
            let replicated_flows = simulate_flow_set(
                &replicated_portfolio,
                &inputs.table,
                config.m_mortality_paths,
                derive_seed(config.seed, 2),
            )
            .map_err(runtime)?;
            let mut base_decomps = Vec::with_capacity(grid.len());
            let mut replicated_decomps = Vec::with_capacity(grid.len());
            for theta in grid.values() {
                base_decomps
                    .push(variance_decomposition(&set, &base_flows, theta).map_err(runtime)?);
                replicated_decomps
                    .push(variance_decomposition(&set, &replicated_flows, theta).map_err(runtime)?);
            }
            for decomp in &base_decomps {
                rows.push(decomp_row(Some("base"), decomp));
            }
            for decomp in &replicated_decomps {
                rows.push(decomp_row(Some("replicated"), decomp));
            }
            header.insert_str(0, "block,");
            let mid = grid.len() / 2;
            summary.notes.push(format!(
                "financial share at theta={}: base {}, x{} replicated {}",
                base_decomps[mid].theta,
                base_decomps[mid].financial_share,
                config.k_replication,
                replicated_decomps[mid].financial_share
            ));
        }
        StudyKind::Sensitivity => {
            let sweep = config.sweep.as_ref().expect("validated");
            let param = match sweep.param.as_str() {
                "drift" => SweepParam::Drift,
                _ => SweepParam::Volatility,
            };
            let setup = SweepSetup {
                market: config.market,
                flows: &inputs.flows,
                initial_equity_ratio: config.e0_ratio,
                n_paths: config.n_paths,
                sub_steps: config.sub_steps,
                seed: config.seed,
                grid,
                dynamics: config.dynamics,
            };
            let points = sensitivity_sweep(&setup, param, &sweep.values()).map_err(runtime)?;
            let lines: Vec<String> = points
                .iter()
                .map(|p| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        sweep.param,
                        p.value,
                        p.theta_star,
                        p.lambda_at_star,
                        p.ruin_at_star,
                        p.boundary,
                        p.flat
                    )
                })
                .collect();
            summary.notes.push(format!(
                "theta* range over the sweep: [{}, {}]",
                points
                    .iter()
                    .map(|p| p.theta_star)
                    .fold(f64::INFINITY, f64::min),
                points
                    .iter()
                    .map(|p| p.theta_star)
                    .fold(f64::NEG_INFINITY, f64::max)
            ));
            sensitivity_lines = Some((
                "sweep_param,sweep_value,theta_star,lambda_at_star,ruin_at_star,boundary,flat"
                    .to_string(),
                lines,
            ));
        }
    }

    fs::create_dir_all(out_dir)?;
    let results_path = out_dir.join("results.csv");
    let mut csv = String::new();
    let rows_written = if let Some((sweep_header, lines)) = sensitivity_lines {
        writeln!(csv, "{sweep_header}").expect("string write");
        for line in &lines {
            writeln!(csv, "{line}").expect("string write");
        }
        lines.len()
    } else {
        let expected = match config.study {
            StudyKind::Mutualization => 2 * grid.len(),
            _ => grid.len(),
        };
        if rows.len() != expected {
            return Err(runtime(format!(
                "internal row-count mismatch: {} rows for {} grid slots",
                rows.len(),
                expected
            )));
        }
        writeln!(csv, "{header}").expect("string write");
        for row in &rows {
            let mut line = String::new();
            if let Some(block) = row.block {
                write!(line, "{block},").expect("string write");
            }
            write!(
                line,
                "{},{},{},{},{},{},{},{}",
                row.theta,
                fmt_opt(row.ruin_prob),
                fmt_opt(row.ruin_se),
                fmt_opt(row.lambda_mean),
                fmt_opt(row.lambda_se),
                fmt_opt(row.fin_var),
                fmt_opt(row.mort_var),
                fmt_opt(row.fin_share)
            )
            .expect("string write");
            writeln!(csv, "{line}").expect("string write");
        }
        rows.len()
    };
    fs::write(&results_path, csv)?;
    summary.rows_written = rows_written;

    if config.dump_paths {
        let mut out = Vec::new();
        set.write_csv(&mut out)?;
        fs::write(out_dir.join("paths.csv"), out)?;
    }
    if let Some(theta) = config.dump_balance_theta {
        if let Some(model) = &dump_model {
            write_balance_dump(out_dir, &set, model, theta, config)?;
        }
    }

    let manifest = manifest_text(config, rows_written, started.elapsed().as_millis());
    fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(summary)
}

fn build_liability_model(
    config: &StudyConfig,
    inputs: &LoadedInputs,
    set: &ScenarioSet,
) -> Result<LiabilityModel, RunError> {
    let rate = config.market.technical_rate;
    let indexed = matches!(
        config.study,
        StudyKind::IndexedRuinCurve | StudyKind::IndexedMfpe
    );
    if indexed {
        let inflation = config.inflation.as_ref().expect("validated");
        let paths = set
            .paths
            .iter()
            .map(|scenario| {
                LiabilityPath::indexed_deterministic(&inputs.flows, rate, inflation, scenario)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime)?;
        return Ok(LiabilityModel::PerMarketPath(paths));
    }
    match config.mortality_mode {
        MortalityMode::Deterministic => Ok(LiabilityModel::Shared(LiabilityPath::deterministic(
            &inputs.flows,
            rate,
        ))),
        MortalityMode::Stochastic => {
            let mortality = alm_core::mortality::simulate_mortality_set(
                &inputs.portfolio,
                &inputs.table,
                config.m_mortality_paths,
                derive_seed(config.seed, 3),
            )
            .map_err(runtime)?;
            let paths = mortality
                .iter()
                .map(|path| LiabilityPath::stochastic(path, &inputs.portfolio, &inputs.table, rate))
                .collect::<Result<Vec<_>, _>>()
                .map_err(runtime)?;
            Ok(LiabilityModel::PerMortalityPath(paths))
        }
    }
}

fn decomp_row(block: Option<&'static str>, decomp: &VarianceDecomposition) -> ResultRow {
    ResultRow {
        block,
        theta: decomp.theta,
        fin_var: Some(decomp.financial_component),
        mort_var: Some(decomp.mortality_component),
        fin_share: Some(decomp.financial_share),
        ..ResultRow::default()
    }
}

fn note_share_range(summary: &mut StudySummary, label: &str, decomps: &[VarianceDecomposition]) {
    let min = decomps
        .iter()
        .map(|d| d.financial_share)
        .fold(f64::INFINITY, f64::min);
    let max = decomps
        .iter()
        .map(|d| d.financial_share)
        .fold(f64::NEG_INFINITY, f64::max);
    summary
        .notes
        .push(format!("{label} spans [{min}, {max}] over the grid"));
}

fn write_balance_dump(
    out_dir: &Path,
    set: &ScenarioSet,
    model: &LiabilityModel,
    theta: f64,
    config: &StudyConfig,
) -> Result<(), RunError> {
    let run_config = RunConfig {
        risky_share: theta,
        initial_equity_ratio: config.e0_ratio,
        dynamics: config.dynamics,
        indexation: matches!(
            config.study,
            StudyKind::IndexedRuinCurve | StudyKind::IndexedMfpe
        ),
        mortality: config.mortality_mode,
    };
    let mut out = String::from("path,year,assets,reserve,equity\n");
    for (index, scenario) in set.paths.iter().enumerate() {
        let liability = match model {
            LiabilityModel::Shared(path) => path,
            LiabilityModel::PerMarketPath(paths) => &paths[index],
            // crossed designs dump against the first mortality history
            LiabilityModel::PerMortalityPath(paths) => &paths[0],
        };
        let sheet = run_path(scenario, liability, &run_config).map_err(runtime)?;
        for t in 0..sheet.assets.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                index, t, sheet.assets[t], sheet.reserves[t], sheet.equity[t]
            )
            .expect("string write");
        }
    }
    fs::write(out_dir.join("balance.csv"), out)?;
    Ok(())
}

fn fnv1a64(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn manifest_text(config: &StudyConfig, rows: usize, wall_ms: u128) -> String {
    format!(
        "study = {}\nseed = {}\nn_paths = {}\nconfig_hash = {:016x}\nversion = {}\nrows = {}\nwall_ms = {}\n",
        config.study,
        config.seed,
        config.n_paths,
        fnv1a64(&config.emit()),
        env!("CARGO_PKG_VERSION"),
        rows,
        wall_ms
    )
}

/// Human-readable closing report; `None` (or a zero-row summary) states
/// explicitly that nothing ran.
pub fn emit_summary(summary: Option<&StudySummary>) -> String {
    let Some(summary) = summary else {
        return "no study run\n".to_string();
    };
    if summary.rows_written == 0 {
        return "no study run\n".to_string();
    }
    let mut out = String::new();
    let _ = writeln!(out, "study: {}", summary.study);
    let _ = writeln!(out, "initial reserve: {:.2}", summary.initial_reserve);
    if let Some(duration) = summary.duration {
        let _ = writeln!(out, "duration: {duration:.2} years");
    }
    if let Some(indexed) = summary.indexed_initial_reserve {
        let _ = writeln!(
            out,
            "indexed initial reserve: {:.2} (x{:.4} of flat)",
            indexed,
            indexed / summary.initial_reserve
        );
    }
    if let Some(duration) = summary.indexed_duration {
        let _ = writeln!(out, "indexed duration: {duration:.2} years");
    }
    if let Some(allocation) = &summary.allocation {
        let criterion = match allocation.criterion {
            alm_core::optimizer::Criterion::RuinCap => "ruin cap",
            alm_core::optimizer::Criterion::EconomicCapital => "economic capital",
        };
        let _ = writeln!(
            out,
            "theta* ({criterion}): {}  objective {:.6}",
            allocation.theta_star, allocation.objective_at_star
        );
        if let Some(prob) = allocation.ruin_prob_at_star {
            let _ = writeln!(
                out,
                "ruin probability at theta*: {prob}{}",
                allocation
                    .ruin_se_at_star
                    .map_or_else(String::new, |se| format!(" (se {se:.6})")),
            );
        }
        if allocation.boundary {
            let _ = writeln!(out, "flag: boundary solution");
        }
        if allocation.flat {
            let _ = writeln!(out, "flag: flat objective (tie resolved to smaller share)");
        }
        if !allocation.feasible {
            let _ = writeln!(out, "flag: cap infeasible on the grid");
        }
    }
    for note in &summary.notes {
        let _ = writeln!(out, "note: {note}");
    }
    let _ = writeln!(out, "rows written: {}", summary.rows_written);
    out
}
