//! Study configuration: a flat `key = value` text file.
//!
//! Lines starting with `#` are comments. Unknown and duplicate keys are
//! rejected with their line number. [`StudyConfig::emit`] writes the full
//! key set back out; parsing that text reproduces the config exactly
//! (values use shortest round-trip float formatting).

use alm_core::balance::{DynamicsMode, MortalityMode};
use alm_core::market::{InflationParams, MarketParams};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("study `{study}` requires {requirement}")]
    StudyRequirement {
        study: &'static str,
        requirement: String,
    },
    #[error(transparent)]
    Core(#[from] alm_core::AlmError),
}

/// The seven runnable studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    RuinCurve,
    MfpeCurve,
    VarianceDecomp,
    Mutualization,
    IndexedRuinCurve,
    IndexedMfpe,
    Sensitivity,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::RuinCurve => "ruin_curve",
            StudyKind::MfpeCurve => "mfpe_curve",
            StudyKind::VarianceDecomp => "variance_decomp",
            StudyKind::Mutualization => "mutualization",
            StudyKind::IndexedRuinCurve => "indexed_ruin_curve",
            StudyKind::IndexedMfpe => "indexed_mfpe",
            StudyKind::Sensitivity => "sensitivity",
        }
    }

    fn parse(value: &str) -> Option<Self> {
        Some(match value {
            "ruin_curve" => StudyKind::RuinCurve,
            "mfpe_curve" => StudyKind::MfpeCurve,
            "variance_decomp" => StudyKind::VarianceDecomp,
            "mutualization" => StudyKind::Mutualization,
            "indexed_ruin_curve" => StudyKind::IndexedRuinCurve,
            "indexed_mfpe" => StudyKind::IndexedMfpe,
            "sensitivity" => StudyKind::Sensitivity,
            _ => return None,
        })
    }

    fn needs_inflation(&self) -> bool {
        matches!(self, StudyKind::IndexedRuinCurve | StudyKind::IndexedMfpe)
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Swept parameter and range for the sensitivity study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// `drift` or `volatility`.
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.from];
        }
        (0..self.points)
            .map(|k| self.from + (self.to - self.from) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

/// Everything a study run needs, resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub portfolio: PathBuf,
    pub mortality_table: PathBuf,
    pub seed: u64,
    pub n_paths: usize,
    pub m_mortality_paths: usize,
    pub sub_steps: usize,
    pub theta_grid_step: f64,
    pub pi_max: f64,
    pub e0_ratio: f64,
    pub dynamics: DynamicsMode,
    pub mortality_mode: MortalityMode,
    pub market: MarketParams,
    pub inflation: Option<InflationParams>,
    pub k_replication: usize,
    pub sweep: Option<SweepSpec>,
    pub dump_paths: bool,
    pub dump_balance_theta: Option<f64>,
}

impl StudyConfig {
    /// Parses and validates the documented key set.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    message: "expected `key = value`".to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if entries.insert(key, (line, value)).is_some() {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Self::from_entries(&entries)
    }

    fn from_entries(entries: &BTreeMap<&str, (usize, &str)>) -> Result<Self, ConfigError> {
        fn get<'a>(entries: &BTreeMap<&str, (usize, &'a str)>, key: &str) -> Option<&'a str> {
            entries.get(key).map(|(_, v)| *v)
        }
        fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Invalid {
                key: key.to_string(),
                message: format!("cannot parse `{value}`"),
            })
        }
        fn opt<T: std::str::FromStr>(
            entries: &BTreeMap<&str, (usize, &str)>,
            key: &str,
            default: T,
        ) -> Result<T, ConfigError> {
            match get(entries, key) {
                Some(value) => parse_as(key, value),
                None => Ok(default),
            }
        }

        let study = match get(entries, "study") {
            Some(value) => StudyKind::parse(value).ok_or_else(|| ConfigError::Invalid {
                key: "study".to_string(),
                message: format!(
                    "unknown study `{value}` (expected one of ruin_curve, mfpe_curve, \
                     variance_decomp, mutualization, indexed_ruin_curve, indexed_mfpe, \
                     sensitivity)"
                ),
            })?,
            None => return Err(ConfigError::Missing("study")),
        };
        let portfolio =
            PathBuf::from(get(entries, "portfolio").ok_or(ConfigError::Missing("portfolio"))?);
        let mortality_table = PathBuf::from(
            get(entries, "mortality_table").ok_or(ConfigError::Missing("mortality_table"))?,
        );

        let canonical = MarketParams::canonical();
        let market = MarketParams {
            drift: opt(entries, "drift", canonical.drift)?,
            volatility: opt(entries, "volatility", canonical.volatility)?,
            initial_rate: opt(entries, "initial_rate", canonical.initial_rate)?,
            long_run_rate: opt(entries, "long_run_rate", canonical.long_run_rate)?,
            rate_reversion: opt(entries, "rate_reversion", canonical.rate_reversion)?,
            rate_volatility: opt(entries, "rate_volatility", canonical.rate_volatility)?,
            correlation: opt(entries, "correlation", canonical.correlation)?,
            technical_rate: opt(entries, "technical_rate", canonical.technical_rate)?,
        };

        let inflation_keys = [
            "inflation_mean_rate",
            "inflation_reversion",
            "inflation_volatility",
            "inflation_initial_state",
        ];
        let inflation = if inflation_keys.iter().any(|k| entries.contains_key(k)) {
            let fallback = InflationParams::canonical();
            Some(InflationParams {
                mean_rate: opt(entries, "inflation_mean_rate", fallback.mean_rate)?,
                reversion_speed: opt(entries, "inflation_reversion", fallback.reversion_speed)?,
                volatility: opt(entries, "inflation_volatility", fallback.volatility)?,
                initial_state: opt(entries, "inflation_initial_state", 0.0)?,
            })
        } else {
            None
        };

        let dynamics = match get(entries, "dynamics").unwrap_or("buy_and_hold") {
            "buy_and_hold" => DynamicsMode::BuyAndHold,
            "rebalance" => DynamicsMode::Rebalance,
            other => {
                return Err(ConfigError::Invalid {
                    key: "dynamics".to_string(),
                    message: format!("`{other}` (expected buy_and_hold or rebalance)"),
                })
            }
        };
        let mortality_mode = match get(entries, "mortality_mode").unwrap_or("deterministic") {
            "deterministic" => MortalityMode::Deterministic,
            "stochastic" => MortalityMode::Stochastic,
            other => {
                return Err(ConfigError::Invalid {
                    key: "mortality_mode".to_string(),
                    message: format!("`{other}` (expected deterministic or stochastic)"),
                })
            }
        };

        let sweep_keys = ["sweep_param", "sweep_from", "sweep_to", "sweep_points"];
        let sweep = if sweep_keys.iter().any(|k| entries.contains_key(k)) {
            let param = get(entries, "sweep_param")
                .ok_or(ConfigError::Missing("sweep_param"))?
                .to_string();
            if param != "drift" && param != "volatility" {
                return Err(ConfigError::Invalid {
                    key: "sweep_param".to_string(),
                    message: format!("`{param}` (expected drift or volatility)"),
                });
            }
            Some(SweepSpec {
                param,
                from: parse_as(
                    "sweep_from",
                    get(entries, "sweep_from").ok_or(ConfigError::Missing("sweep_from"))?,
                )?,
                to: parse_as(
                    "sweep_to",
                    get(entries, "sweep_to").ok_or(ConfigError::Missing("sweep_to"))?,
                )?,
                points: opt(entries, "sweep_points", 11)?,
            })
        } else {
            None
        };

        let config = StudyConfig {
            study,
            portfolio,
            mortality_table,
            seed: opt(entries, "seed", 1)?,
            n_paths: opt(entries, "n_paths", 10_000)?,
            m_mortality_paths: opt(entries, "m_mortality_paths", 100)?,
            sub_steps: opt(entries, "sub_steps", 12)?,
            theta_grid_step: opt(entries, "theta_grid_step", 0.0005)?,
            pi_max: opt(entries, "pi_max", 0.01)?,
            e0_ratio: opt(entries, "e0_ratio", 0.04)?,
            dynamics,
            mortality_mode,
            market,
            inflation,
            k_replication: opt(entries, "k_replication", 10)?,
            sweep,
            dump_paths: opt(entries, "dump_paths", false)?,
            dump_balance_theta: match get(entries, "dump_balance_theta") {
                Some(value) => Some(parse_as("dump_balance_theta", value)?),
                None => None,
            },
        };
        config.validate()?;
        Ok(config)
    }

    /// Field-level invariants plus per-study requirements.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market.validate()?;
        if let Some(inflation) = &self.inflation {
            inflation.validate()?;
        }
        let positive = [
            ("n_paths", self.n_paths),
            ("sub_steps", self.sub_steps),
            ("k_replication", self.k_replication),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(ConfigError::Invalid {
                    key: key.to_string(),
                    message: "must be at least 1".to_string(),
                });
            }
        }
        if self.m_mortality_paths < 2 {
            return Err(ConfigError::Invalid {
                key: "m_mortality_paths".to_string(),
                message: "must be at least 2".to_string(),
            });
        }
        if !(self.theta_grid_step > 0.0 && self.theta_grid_step <= 1.0) {
            return Err(ConfigError::Invalid {
                key: "theta_grid_step".to_string(),
                message: format!("must lie in (0, 1], got {}", self.theta_grid_step),
            });
        }
        if !(0.0..=1.0).contains(&self.pi_max) {
            return Err(ConfigError::Invalid {
                key: "pi_max".to_string(),
                message: format!("must lie in [0, 1], got {}", self.pi_max),
            });
        }
        if !(self.e0_ratio.is_finite() && self.e0_ratio >= 0.0) {
            return Err(ConfigError::Invalid {
                key: "e0_ratio".to_string(),
                message: format!("must be non-negative, got {}", self.e0_ratio),
            });
        }
        if let Some(theta) = self.dump_balance_theta {
            if !(0.0..=1.0).contains(&theta) {
                return Err(ConfigError::Invalid {
                    key: "dump_balance_theta".to_string(),
                    message: format!("must lie in [0, 1], got {theta}"),
                });
            }
        }
        if self.study.needs_inflation() && self.inflation.is_none() {
            return Err(ConfigError::StudyRequirement {
                study: self.study.name(),
                requirement: "the inflation_* keys".to_string(),
            });
        }
        if self.study == StudyKind::Sensitivity {
            match &self.sweep {
                None => {
                    return Err(ConfigError::StudyRequirement {
                        study: self.study.name(),
                        requirement: "the sweep_* keys".to_string(),
                    })
                }
                Some(sweep) if sweep.points == 0 => {
                    return Err(ConfigError::Invalid {
                        key: "sweep_points".to_string(),
                        message: "must be at least 1".to_string(),
                    })
                }
                _ => {}
            }
        }
        if self.study == StudyKind::Mutualization && self.k_replication < 2 {
            return Err(ConfigError::Invalid {
                key: "k_replication".to_string(),
                message: "must be at least 2 for the mutualization study".to_string(),
            });
        }
        Ok(())
    }

    /// Canonical serialization: every key, fixed order. Parsing the output
    /// reproduces this config exactly.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut push = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        push("study", self.study.name().to_string());
        push("portfolio", self.portfolio.display().to_string());
        push(
            "mortality_table",
            self.mortality_table.display().to_string(),
        );
        push("seed", self.seed.to_string());
        push("n_paths", self.n_paths.to_string());
        push("m_mortality_paths", self.m_mortality_paths.to_string());
        push("sub_steps", self.sub_steps.to_string());
        push("theta_grid_step", self.theta_grid_step.to_string());
        push("pi_max", self.pi_max.to_string());
        push("e0_ratio", self.e0_ratio.to_string());
        push(
            "dynamics",
            match self.dynamics {
                DynamicsMode::BuyAndHold => "buy_and_hold".to_string(),
                DynamicsMode::Rebalance => "rebalance".to_string(),
            },
        );
        push(
            "mortality_mode",
            match self.mortality_mode {
                MortalityMode::Deterministic => "deterministic".to_string(),
                MortalityMode::Stochastic => "stochastic".to_string(),
            },
        );
        push("drift", self.market.drift.to_string());
        push("volatility", self.market.volatility.to_string());
        push("initial_rate", self.market.initial_rate.to_string());
        push("long_run_rate", self.market.long_run_rate.to_string());
        push("rate_reversion", self.market.rate_reversion.to_string());
        push("rate_volatility", self.market.rate_volatility.to_string());
        push("correlation", self.market.correlation.to_string());
        push("technical_rate", self.market.technical_rate.to_string());
        if let Some(inflation) = &self.inflation {
            push("inflation_mean_rate", inflation.mean_rate.to_string());
            push("inflation_reversion", inflation.reversion_speed.to_string());
            push("inflation_volatility", inflation.volatility.to_string());
            push(
                "inflation_initial_state",
                inflation.initial_state.to_string(),
            );
        }
        push("k_replication", self.k_replication.to_string());
        if let Some(sweep) = &self.sweep {
            push("sweep_param", sweep.param.clone());
            push("sweep_from", sweep.from.to_string());
            push("sweep_to", sweep.to.to_string());
            push("sweep_points", sweep.points.to_string());
        }
        push("dump_paths", self.dump_paths.to_string());
        if let Some(theta) = self.dump_balance_theta {
            push("dump_balance_theta", theta.to_string());
        }
        out
    }
}

const KNOWN_KEYS: &[&str] = &[
    "study",
    "portfolio",
    "mortality_table",
    "seed",
    "n_paths",
    "m_mortality_paths",
    "sub_steps",
    "theta_grid_step",
    "pi_max",
    "e0_ratio",
    "dynamics",
    "mortality_mode",
    "drift",
    "volatility",
    "initial_rate",
    "long_run_rate",
    "rate_reversion",
    "rate_volatility",
    "correlation",
    "technical_rate",
    "inflation_mean_rate",
    "inflation_reversion",
    "inflation_volatility",
    "inflation_initial_state",
    "k_replication",
    "sweep_param",
    "sweep_from",
    "sweep_to",
    "sweep_points",
    "dump_paths",
    "dump_balance_theta",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        "study = mfpe_curve\nportfolio = p.csv\nmortality_table = t.csv\n".to_string()
    }

    #[test]
    fn defaults_are_the_canonical_calibration() {
        let config = StudyConfig::parse(&minimal()).unwrap();
        assert_eq!(config.market, MarketParams::canonical());
        assert_eq!(config.n_paths, 10_000);
        assert_eq!(config.theta_grid_step, 0.0005);
        assert_eq!(config.e0_ratio, 0.04);
        assert!(config.inflation.is_none());
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let text = format!("{}frobnicate = 1\n", minimal());
        let err = StudyConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = format!("{}seed = 2\nseed = 3\n", minimal());
        let err = StudyConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn correlation_invariant_names_the_field() {
        let text = format!("{}correlation = 1.5\n", minimal());
        let err = StudyConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("correlation"), "{err}");
    }

    #[test]
    fn indexed_study_requires_inflation_block() {
        let text = minimal().replace("mfpe_curve", "indexed_mfpe");
        let err = StudyConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("inflation"), "{err}");
        let ok = format!("{text}inflation_mean_rate = 0.0279\n");
        assert!(StudyConfig::parse(&ok).is_ok());
    }

    #[test]
    fn sensitivity_requires_sweep_block() {
        let text = minimal().replace("mfpe_curve", "sensitivity");
        assert!(StudyConfig::parse(&text).is_err());
        let ok = format!(
            "{text}sweep_param = drift\nsweep_from = 0.03\nsweep_to = 0.12\nsweep_points = 5\n"
        );
        let config = StudyConfig::parse(&ok).unwrap();
        assert_eq!(config.sweep.as_ref().unwrap().values().len(), 5);
    }

    #[test]
    fn emit_parse_round_trip_is_identity() {
        let mut config = StudyConfig::parse(&minimal()).unwrap();
        config.inflation = Some(InflationParams::canonical());
        config.sweep = Some(SweepSpec {
            param: "volatility".to_string(),
            from: 0.05,
            to: 0.4,
            points: 8,
        });
        config.dump_balance_theta = Some(0.164);
        config.seed = 987_654_321;
        let reparsed = StudyConfig::parse(&config.emit()).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# header comment\n\n{}  # trailing\n", minimal());
        assert!(StudyConfig::parse(&text).is_ok());
    }

    #[test]
    fn shipped_configs_parse_to_the_canonical_calibration() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in [
            "ruin_curve.conf",
            "mfpe_curve.conf",
            "variance_decomp.conf",
            "mutualization.conf",
            "indexed_mfpe.conf",
            "indexed_ruin_curve.conf",
            "sensitivity_drift.conf",
        ] {
            let text = std::fs::read_to_string(root.join(name)).unwrap();
            let config = StudyConfig::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(config.market, MarketParams::canonical(), "{name}");
            assert_eq!(config.e0_ratio, 0.04, "{name}");
        }
        let indexed =
            StudyConfig::parse(&std::fs::read_to_string(root.join("indexed_mfpe.conf")).unwrap())
                .unwrap();
        assert_eq!(indexed.inflation, Some(InflationParams::canonical()));
    }
}
