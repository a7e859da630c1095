//! Mortality tables, annuitant portfolios and liability cash flows.
//!
//! A closed book of single-life annuities is valued against a survivor
//! table `l_x`. Expected benefit flows for year `t >= 1` are
//!
//! ```text
//! F_t = sum_j f_j * l_{x_j + t} / l_{x_j}
//! ```
//!
//! and the reserve discounts them at the technical rate `i`. Payments fall
//! at the start of each year; the year-`t` payment requires survival past
//! `t`. The table closes with a zero survivor count at its terminal age,
//! which truncates every sum at a finite horizon.

use crate::error::AlmError;
use crate::market::{inflation_factor, InflationParams};
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, stream_rng, unit_f64};
use crate::Result;
use rand_chacha::rand_core::RngCore;

/// Survivor counts per integer age, radix 100 000 at age 0.
///
/// Ages run contiguously from `base_age` to the terminal age, where the
/// count must reach exactly zero. Non-integer counts are accepted
/// (prospective tables usually carry them).
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityTable {
    base_age: u32,
    survivors: Vec<f64>,
}

impl MortalityTable {
    pub fn new(base_age: u32, survivors: Vec<f64>) -> Result<Self> {
        if survivors.len() < 2 {
            return Err(AlmError::InvalidTable("need at least two ages".to_string()));
        }
        for pair in survivors.windows(2) {
            if pair[1] > pair[0] {
                return Err(AlmError::InvalidTable(
                    "survivor counts must be non-increasing in age".to_string(),
                ));
            }
        }
        if survivors.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(AlmError::InvalidTable(
                "survivor counts must be finite and non-negative".to_string(),
            ));
        }
        if *survivors.last().unwrap() != 0.0 {
            return Err(AlmError::InvalidTable(
                "table must close with a zero survivor count at the terminal age".to_string(),
            ));
        }
        Ok(MortalityTable {
            base_age,
            survivors,
        })
    }

    pub fn min_age(&self) -> u32 {
        self.base_age
    }

    /// Terminal age (first age with zero survivors is at or before this).
    pub fn max_age(&self) -> u32 {
        self.base_age + self.survivors.len() as u32 - 1
    }

    /// Survivor count at `age`; zero beyond the terminal age.
    pub fn survivors_at(&self, age: u32) -> Result<f64> {
        if age < self.base_age {
            return Err(AlmError::AgeOutOfRange {
                age,
                min: self.base_age,
                max: self.max_age(),
            });
        }
        let idx = (age - self.base_age) as usize;
        Ok(self.survivors.get(idx).copied().unwrap_or(0.0))
    }

    /// Conditional probability of surviving one more year from `age`.
    pub fn annual_survival(&self, age: u32) -> Result<f64> {
        let now = self.survivors_at(age)?;
        if now == 0.0 {
            return Ok(0.0);
        }
        Ok(self.survivors_at(age + 1)? / now)
    }

    fn check_age(&self, age: u32) -> Result<()> {
        if age < self.base_age || age > self.max_age() {
            return Err(AlmError::AgeOutOfRange {
                age,
                min: self.base_age,
                max: self.max_age(),
            });
        }
        Ok(())
    }

    /// Parses the delimited format: header row, then `age,lx` with
    /// contiguous ages.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_start().to_lowercase().starts_with("age") => {}
            _ => {
                return Err(AlmError::InvalidTable(
                    "missing header row (expected `age,lx`)".to_string(),
                ))
            }
        }
        let mut base_age = None;
        let mut survivors = Vec::new();
        for (index, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let age: u32 = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| {
                    AlmError::InvalidTable(format!("line {}: bad age field", index + 1))
                })?;
            let count: f64 = fields
                .next()
                .ok_or_else(|| {
                    AlmError::InvalidTable(format!("line {}: missing lx field", index + 1))
                })?
                .trim()
                .parse()
                .map_err(|_| AlmError::InvalidTable(format!("line {}: bad lx field", index + 1)))?;
            match base_age {
                None => base_age = Some(age),
                Some(base) => {
                    if age != base + survivors.len() as u32 {
                        return Err(AlmError::InvalidTable(format!(
                            "line {}: ages must be contiguous (expected {})",
                            index + 1,
                            base + survivors.len() as u32
                        )));
                    }
                }
            }
            survivors.push(count);
        }
        match base_age {
            Some(base) => MortalityTable::new(base, survivors),
            None => Err(AlmError::InvalidTable("no data rows".to_string())),
        }
    }

    /// Serializes to the `age,lx` format accepted by [`Self::from_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("age,lx\n");
        for (offset, count) in self.survivors.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.base_age + offset as u32, count));
        }
        out
    }
}

/// One annuitant: integer age at valuation and annual benefit amount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annuitant {
    pub age: u32,
    pub annual_payment: f64,
}

/// The closed set of annuitants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnuityPortfolio {
    pub annuitants: Vec<Annuitant>,
}

impl AnnuityPortfolio {
    pub fn new(annuitants: Vec<Annuitant>) -> Self {
        AnnuityPortfolio { annuitants }
    }

    pub fn len(&self) -> usize {
        self.annuitants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annuitants.is_empty()
    }

    /// `k` identical copies of the book, used in mutualization studies.
    pub fn replicate(&self, k: usize) -> AnnuityPortfolio {
        let mut annuitants = Vec::with_capacity(self.len() * k);
        for _ in 0..k {
            annuitants.extend_from_slice(&self.annuitants);
        }
        AnnuityPortfolio { annuitants }
    }

    pub fn mean_age(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.annuitants.iter().map(|a| a.age as f64).sum::<f64>() / self.len() as f64
    }

    pub fn mean_payment(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.annuitants
            .iter()
            .map(|a| a.annual_payment)
            .sum::<f64>()
            / self.len() as f64
    }

    /// Years until the youngest annuitant reaches the terminal age; the
    /// horizon of every flow schedule derived from this book.
    pub fn horizon(&self, table: &MortalityTable) -> Result<usize> {
        let mut horizon = 0usize;
        for a in &self.annuitants {
            table.check_age(a.age)?;
            if a.annual_payment < 0.0 || !a.annual_payment.is_finite() {
                return Err(AlmError::param(
                    "annual_payment",
                    format!("must be finite and non-negative, got {}", a.annual_payment),
                ));
            }
            horizon = horizon.max((table.max_age() - a.age) as usize);
        }
        Ok(horizon)
    }

    /// Parses the delimited format: header row, then `age,annual_annuity`,
    /// one row per annuitant. Fractional ages round down to the last
    /// integer birthday.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_start().to_lowercase().starts_with("age") => {}
            _ => {
                return Err(AlmError::param(
                    "portfolio",
                    "missing header row (expected `age,annual_annuity`)",
                ))
            }
        }
        let mut annuitants = Vec::new();
        for (index, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let age: f64 = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| {
                    AlmError::param("portfolio", format!("line {}: bad age field", index + 1))
                })?;
            let payment: f64 = fields
                .next()
                .ok_or_else(|| {
                    AlmError::param(
                        "portfolio",
                        format!("line {}: missing annuity field", index + 1),
                    )
                })?
                .trim()
                .parse()
                .map_err(|_| {
                    AlmError::param(
                        "portfolio",
                        format!("line {}: bad annuity field", index + 1),
                    )
                })?;
            if !(age.is_finite() && age >= 0.0) {
                return Err(AlmError::param(
                    "portfolio",
                    format!("line {}: age must be non-negative", index + 1),
                ));
            }
            if !(payment.is_finite() && payment >= 0.0) {
                return Err(AlmError::param(
                    "portfolio",
                    format!("line {}: annuity must be non-negative", index + 1),
                ));
            }
            annuitants.push(Annuitant {
                age: age.floor() as u32,
                annual_payment: payment,
            });
        }
        Ok(AnnuityPortfolio::new(annuitants))
    }

    /// Serializes to the `age,annual_annuity` format accepted by
    /// [`Self::from_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("age,annual_annuity\n");
        for a in &self.annuitants {
            out.push_str(&format!("{},{}\n", a.age, a.annual_payment));
        }
        out
    }
}

/// Benefit amounts per year, index 0 holding the year-1 flow.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CashFlowSchedule {
    pub amounts: Vec<f64>,
}

impl CashFlowSchedule {
    pub fn new(amounts: Vec<f64>) -> Self {
        CashFlowSchedule { amounts }
    }

    /// Number of years carrying a (possibly zero) flow.
    pub fn horizon(&self) -> usize {
        self.amounts.len()
    }

    /// Flow of year `t` (1-based); zero past the horizon.
    pub fn at_year(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.amounts.get(t - 1).copied().unwrap_or(0.0)
    }

    /// Remaining flows seen from time `t`: year `k` of the tail is year
    /// `t + k` of the original schedule.
    pub fn tail(&self, t: usize) -> CashFlowSchedule {
        if t >= self.amounts.len() {
            return CashFlowSchedule::default();
        }
        CashFlowSchedule::new(self.amounts[t..].to_vec())
    }

    pub fn scaled(&self, factor: f64) -> CashFlowSchedule {
        CashFlowSchedule::new(self.amounts.iter().map(|f| f * factor).collect())
    }
}

/// Expected benefit flows of the book, one value per year up to the
/// portfolio horizon.
pub fn expected_flows(
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
) -> Result<CashFlowSchedule> {
    if portfolio.is_empty() {
        return Err(AlmError::EmptyPortfolio);
    }
    let horizon = portfolio.horizon(table)?;
    let mut amounts = vec![0.0; horizon];
    for a in &portfolio.annuitants {
        let base = table.survivors_at(a.age)?;
        if base == 0.0 {
            continue;
        }
        for (k, slot) in amounts.iter_mut().enumerate() {
            let t = k as u32 + 1;
            let alive = table.survivors_at(a.age + t)?;
            if alive == 0.0 {
                break;
            }
            *slot += a.annual_payment * alive / base;
        }
    }
    Ok(CashFlowSchedule::new(amounts))
}

/// Present value of a schedule at annual discount rate `rate` (> -1),
/// payments at the start of years 1, 2, ...
pub fn reserve(schedule: &CashFlowSchedule, rate: f64) -> f64 {
    assert!(rate > -1.0, "discount rate must exceed -1");
    let discount = 1.0 / (1.0 + rate);
    let mut factor = 1.0;
    let mut total = 0.0;
    for amount in &schedule.amounts {
        factor *= discount;
        total += amount * factor;
    }
    total
}

/// Macaulay duration: present-value-weighted mean payment date.
pub fn macaulay_duration(schedule: &CashFlowSchedule, rate: f64) -> Result<f64> {
    assert!(rate > -1.0, "discount rate must exceed -1");
    let discount = 1.0 / (1.0 + rate);
    let mut factor = 1.0;
    let mut value = 0.0;
    let mut weighted = 0.0;
    for (k, amount) in schedule.amounts.iter().enumerate() {
        factor *= discount;
        value += amount * factor;
        weighted += (k as f64 + 1.0) * amount * factor;
    }
    if value <= 0.0 {
        return Err(AlmError::UndefinedDuration);
    }
    Ok(weighted / value)
}

/// Reserve of indexed benefits: each year-`k` flow is scaled by the
/// conditional price-index growth factor for horizon `k` given the current
/// inflation driver state.
pub fn indexed_reserve(
    schedule: &CashFlowSchedule,
    rate: f64,
    inflation: &InflationParams,
    driver_state: f64,
) -> f64 {
    reserve(&indexed_schedule(schedule, inflation, driver_state), rate)
}

/// Scales a schedule of expected flows by the closed-form index growth
/// factor per year; feeds both the indexed reserve and its duration.
pub fn indexed_schedule(
    schedule: &CashFlowSchedule,
    inflation: &InflationParams,
    driver_state: f64,
) -> CashFlowSchedule {
    let amounts = schedule
        .amounts
        .iter()
        .enumerate()
        .map(|(k, f)| f * inflation_factor(driver_state, inflation, (k + 1) as f64))
        .collect();
    CashFlowSchedule::new(amounts)
}

/// One realized mortality history of the book.
///
/// `death_year[j]` is the first year in which annuitant `j` receives no
/// payment: the year-1 payment is made when `death_year > 1`, and in
/// general the year-`t` payment when `death_year > t`. The terminal table
/// age bounds every death year.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityPath {
    pub death_years: Vec<u32>,
    horizon: usize,
}

impl MortalityPath {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alive_at(&self, annuitant: usize, t: usize) -> bool {
        self.death_years[annuitant] as usize > t
    }

    /// Realized benefit flows along this history.
    pub fn realized_flows(&self, portfolio: &AnnuityPortfolio) -> CashFlowSchedule {
        let mut amounts = vec![0.0; self.horizon];
        for (j, a) in portfolio.annuitants.iter().enumerate() {
            let last_paid_year = (self.death_years[j] as usize).saturating_sub(1);
            for slot in amounts.iter_mut().take(last_paid_year) {
                *slot += a.annual_payment;
            }
        }
        CashFlowSchedule::new(amounts)
    }

    /// Number of annuitants still alive at integer time `t`.
    pub fn survivors_at(&self, t: usize) -> usize {
        self.death_years.iter().filter(|&&d| d as usize > t).count()
    }
}

/// Draws one mortality history by iterating annual survival Bernoulli
/// trials per annuitant (heterogeneous benefit amounts rule out aggregate
/// binomial sampling).
pub fn simulate_mortality<R: RngCore>(
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
    rng: &mut R,
) -> Result<MortalityPath> {
    if portfolio.is_empty() {
        return Err(AlmError::EmptyPortfolio);
    }
    let horizon = portfolio.horizon(table)?;
    let mut death_years = Vec::with_capacity(portfolio.len());
    for a in &portfolio.annuitants {
        let mut year = 1u32;
        loop {
            let p = table.annual_survival(a.age + year - 1)?;
            // p = 0 past the terminal age, so the loop always ends.
            if p == 0.0 || unit_f64(rng) >= p {
                break;
            }
            year += 1;
        }
        death_years.push(year);
    }
    Ok(MortalityPath {
        death_years,
        horizon,
    })
}

/// Draws one mortality history and returns its realized flows.
pub fn simulate_flows<R: RngCore>(
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
    rng: &mut R,
) -> Result<CashFlowSchedule> {
    Ok(simulate_mortality(portfolio, table, rng)?.realized_flows(portfolio))
}

/// Simulates `count` independent mortality histories, one sub-stream per
/// path, derived from `seed`.
pub fn simulate_mortality_set(
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
    count: usize,
    seed: u64,
) -> Result<Vec<MortalityPath>> {
    if portfolio.is_empty() {
        return Err(AlmError::EmptyPortfolio);
    }
    portfolio.horizon(table)?;
    let seed = derive_seed(seed, 0x6d_6f_72_74); // "mort" domain
    let paths = map_indexed(count, |m| {
        let mut rng = stream_rng(seed, m as u64);
        simulate_mortality(portfolio, table, &mut rng).expect("inputs validated above")
    });
    Ok(paths)
}

/// Realized flow schedules of `count` simulated mortality histories.
pub fn simulate_flow_set(
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
    count: usize,
    seed: u64,
) -> Result<Vec<CashFlowSchedule>> {
    Ok(simulate_mortality_set(portfolio, table, count, seed)?
        .iter()
        .map(|p| p.realized_flows(portfolio))
        .collect())
}

/// Expected flows of the surviving sub-book at time `t`, aged forward by
/// `t` years: year `k` of the result is calendar year `t + k`.
pub fn conditional_expected_flows(
    path: &MortalityPath,
    portfolio: &AnnuityPortfolio,
    table: &MortalityTable,
    t: usize,
) -> Result<CashFlowSchedule> {
    let horizon = portfolio.horizon(table)?;
    let remaining = horizon.saturating_sub(t);
    let mut amounts = vec![0.0; remaining];
    for (j, a) in portfolio.annuitants.iter().enumerate() {
        if !path.alive_at(j, t) {
            continue;
        }
        let aged = a.age + t as u32;
        if aged >= table.max_age() {
            continue;
        }
        let base = table.survivors_at(aged)?;
        if base == 0.0 {
            continue;
        }
        for (k, slot) in amounts.iter_mut().enumerate() {
            let alive = table.survivors_at(aged + k as u32 + 1)?;
            if alive == 0.0 {
                break;
            }
            *slot += a.annual_payment * alive / base;
        }
    }
    Ok(CashFlowSchedule::new(amounts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use proptest::prelude::*;

    fn two_step_table() -> MortalityTable {
        MortalityTable::new(60, vec![100_000.0, 50_000.0, 0.0]).unwrap()
    }

    fn single(age: u32, payment: f64) -> AnnuityPortfolio {
        AnnuityPortfolio::new(vec![Annuitant {
            age,
            annual_payment: payment,
        }])
    }

    #[test]
    fn table_rejects_increasing_counts() {
        let err = MortalityTable::new(60, vec![100.0, 150.0, 0.0]).unwrap_err();
        assert!(matches!(err, AlmError::InvalidTable(_)));
    }

    #[test]
    fn table_csv_round_trip_and_errors() {
        let table = two_step_table();
        assert_eq!(MortalityTable::from_csv(&table.to_csv()).unwrap(), table);
        assert!(MortalityTable::from_csv("60,100\n61,0\n").is_err()); // no header
        assert!(MortalityTable::from_csv("age,lx\n60,100\n63,0\n").is_err()); // gap
        let err = MortalityTable::from_csv("age,lx\n60,abc\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn portfolio_csv_round_trip_and_floor() {
        let portfolio = AnnuityPortfolio::new(vec![
            Annuitant {
                age: 60,
                annual_payment: 1250.5,
            },
            Annuitant {
                age: 71,
                annual_payment: 900.0,
            },
        ]);
        assert_eq!(
            AnnuityPortfolio::from_csv(&portfolio.to_csv()).unwrap(),
            portfolio
        );
        // fractional ages round down to the last integer birthday
        let parsed = AnnuityPortfolio::from_csv("age,annual_annuity\n63.9,100\n").unwrap();
        assert_eq!(parsed.annuitants[0].age, 63);
        assert!(AnnuityPortfolio::from_csv("age,annual_annuity\n63,-5\n").is_err());
    }

    #[test]
    fn table_rejects_open_tail() {
        let err = MortalityTable::new(60, vec![100.0, 50.0]).unwrap_err();
        assert!(matches!(err, AlmError::InvalidTable(_)));
    }

    #[test]
    fn expected_flows_hand_case() {
        // one annuitant at 60 paying 1000: F = [1000 * 0.5, 0]
        let flows = expected_flows(&single(60, 1000.0), &two_step_table()).unwrap();
        assert_eq!(flows.amounts, vec![500.0, 0.0]);
    }

    #[test]
    fn annuitant_at_terminal_age_has_zero_schedule() {
        let flows = expected_flows(&single(62, 1000.0), &two_step_table()).unwrap();
        assert!(flows.amounts.iter().all(|&f| f == 0.0));
        assert_eq!(reserve(&flows, 0.025), 0.0);
        assert!(matches!(
            macaulay_duration(&flows, 0.025),
            Err(AlmError::UndefinedDuration)
        ));
    }

    #[test]
    fn duplicated_annuitant_doubles_flows() {
        let one = expected_flows(&single(60, 1000.0), &two_step_table()).unwrap();
        let two = expected_flows(&single(60, 1000.0).replicate(2), &two_step_table()).unwrap();
        for (a, b) in one.amounts.iter().zip(&two.amounts) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn age_outside_table_is_an_error() {
        let err = expected_flows(&single(40, 100.0), &two_step_table()).unwrap_err();
        assert!(matches!(err, AlmError::AgeOutOfRange { .. }));
    }

    #[test]
    fn reserve_hand_cases() {
        assert!((reserve(&CashFlowSchedule::new(vec![105.0]), 0.05) - 100.0).abs() < 1e-12);
        assert_eq!(
            reserve(&CashFlowSchedule::new(vec![100.0, 100.0]), 0.0),
            200.0
        );
        let r = reserve(&CashFlowSchedule::new(vec![100.0, 100.0]), 0.025);
        assert!((r - 192.74241522903034).abs() < 1e-10, "got {r}");
    }

    #[test]
    fn macaulay_hand_cases() {
        let single_flow = CashFlowSchedule::new(vec![0.0, 0.0, 0.0, 0.0, 7.0]);
        assert!((macaulay_duration(&single_flow, 0.07).unwrap() - 5.0).abs() < 1e-12);
        let level = CashFlowSchedule::new(vec![100.0, 100.0]);
        assert!((macaulay_duration(&level, 0.0).unwrap() - 1.5).abs() < 1e-12);
        let d = macaulay_duration(&level, 0.025).unwrap();
        assert!((d - 1.4938271604938271).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn certain_death_gives_zero_schedule() {
        let table = MortalityTable::new(60, vec![100_000.0, 0.0]).unwrap();
        let mut rng = stream_rng(1, 0);
        let flows = simulate_flows(&single(60, 500.0), &table, &mut rng).unwrap();
        assert!(flows.amounts.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn certain_survival_reproduces_expected_flows() {
        let table = MortalityTable::new(60, vec![100.0, 100.0, 100.0, 0.0]).unwrap();
        let portfolio = single(60, 250.0);
        let mut rng = stream_rng(2, 0);
        let simulated = simulate_flows(&portfolio, &table, &mut rng).unwrap();
        let expected = expected_flows(&portfolio, &table).unwrap();
        assert_eq!(simulated, expected);
    }

    #[test]
    fn simulated_first_year_flow_matches_binomial_oracle() {
        // q = 0.5, payment 1000: E[F_1] = 500, SE = 1000*0.5/sqrt(n)
        let table = two_step_table();
        let portfolio = single(60, 1000.0);
        let n = 10_000;
        let flows = simulate_flow_set(&portfolio, &table, n, 77).unwrap();
        let first: Vec<f64> = flows.iter().map(|f| f.at_year(1)).collect();
        let mean = stats::mean(&first);
        let se = 1000.0 * 0.5 / (n as f64).sqrt();
        assert!((mean - 500.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn monte_carlo_flows_converge_to_expected_flows() {
        let table =
            MortalityTable::new(60, vec![100_000.0, 90_000.0, 70_000.0, 30_000.0, 0.0]).unwrap();
        let portfolio = AnnuityPortfolio::new(vec![
            Annuitant {
                age: 60,
                annual_payment: 1200.0,
            },
            Annuitant {
                age: 61,
                annual_payment: 800.0,
            },
            Annuitant {
                age: 62,
                annual_payment: 3000.0,
            },
        ]);
        let expected = expected_flows(&portfolio, &table).unwrap();
        let n = 10_000;
        let sims = simulate_flow_set(&portfolio, &table, n, 5).unwrap();
        for t in 1..=expected.horizon() {
            let sample: Vec<f64> = sims.iter().map(|s| s.at_year(t)).collect();
            let mean = stats::mean(&sample);
            let se = stats::standard_error(&sample).max(1e-9);
            assert!(
                (mean - expected.at_year(t)).abs() < 4.0 * se,
                "year {t}: mean {mean} vs expected {}",
                expected.at_year(t)
            );
        }
    }

    #[test]
    fn conditional_flows_with_no_deaths_rescale_the_tail() {
        let table =
            MortalityTable::new(60, vec![100_000.0, 80_000.0, 55_000.0, 20_000.0, 0.0]).unwrap();
        let portfolio = single(60, 1000.0);
        let path = MortalityPath {
            death_years: vec![u32::MAX],
            horizon: portfolio.horizon(&table).unwrap(),
        };
        let t = 2;
        let conditional = conditional_expected_flows(&path, &portfolio, &table, t).unwrap();
        let base = expected_flows(&portfolio, &table).unwrap();
        // E[F_{t+k} | alive at t] = F_{t+k} * l_x / l_{x+t}
        let rescale = 100_000.0 / 55_000.0;
        for (k, got) in conditional.amounts.iter().enumerate() {
            let want = base.at_year(t + k + 1) * rescale;
            assert!((got - want).abs() < 1e-9, "k={k} got {got} want {want}");
        }
    }

    #[test]
    fn conditional_flows_at_time_zero_equal_expected_flows() {
        let table = two_step_table();
        let portfolio = single(60, 1000.0);
        let path = MortalityPath {
            death_years: vec![u32::MAX],
            horizon: portfolio.horizon(&table).unwrap(),
        };
        let conditional = conditional_expected_flows(&path, &portfolio, &table, 0).unwrap();
        assert_eq!(conditional, expected_flows(&portfolio, &table).unwrap());
    }

    #[test]
    fn conditional_flows_all_dead_is_zero() {
        let table = two_step_table();
        let portfolio = single(60, 1000.0);
        let path = MortalityPath {
            death_years: vec![1],
            horizon: 2,
        };
        let conditional = conditional_expected_flows(&path, &portfolio, &table, 1).unwrap();
        assert!(conditional.amounts.iter().all(|&f| f == 0.0));
        assert_eq!(reserve(&conditional, 0.025), 0.0);
    }

    #[test]
    fn indexed_reserve_degenerate_cases() {
        let flows = CashFlowSchedule::new(vec![100.0]);
        let flat = InflationParams {
            mean_rate: 0.0,
            reversion_speed: 0.7,
            volatility: 0.0,
            initial_state: 0.0,
        };
        assert!(
            (indexed_reserve(&flows, 0.025, &flat, 0.0) - reserve(&flows, 0.025)).abs() < 1e-12
        );

        let pure_trend = InflationParams {
            mean_rate: (1.02f64).ln(),
            reversion_speed: 0.7,
            volatility: 0.0,
            initial_state: 0.0,
        };
        assert!((indexed_reserve(&flows, 0.0, &pure_trend, 0.0) - 102.0).abs() < 1e-12);
    }

    #[test]
    fn indexed_reserve_matches_closed_form_hand_value() {
        let flows = CashFlowSchedule::new(vec![100.0]);
        let params = InflationParams::canonical();
        let got = indexed_reserve(&flows, 0.0, &params, 0.0);
        assert!((got - 102.82960559206533).abs() < 1e-3, "got {got}");
        assert!((got / 100.0 - 1.02830).abs() < 5e-6);
    }

    proptest! {
        #[test]
        fn reserve_decreases_in_rate(flows in proptest::collection::vec(0.0f64..1000.0, 1..30),
                                     lo in 0.0f64..0.05, bump in 0.001f64..0.05) {
            prop_assume!(flows.iter().any(|&f| f > 0.0));
            let schedule = CashFlowSchedule::new(flows);
            prop_assert!(reserve(&schedule, lo) > reserve(&schedule, lo + bump));
        }

        #[test]
        fn duration_is_in_range_and_decreasing_in_rate(
            flows in proptest::collection::vec(0.01f64..1000.0, 1..30),
            lo in 0.0f64..0.05, bump in 0.001f64..0.05)
        {
            let schedule = CashFlowSchedule::new(flows);
            let d_lo = macaulay_duration(&schedule, lo).unwrap();
            let d_hi = macaulay_duration(&schedule, lo + bump).unwrap();
            prop_assert!(d_lo >= 1.0 - 1e-12);
            prop_assert!(d_lo <= schedule.horizon() as f64 + 1e-12);
            prop_assert!(d_hi <= d_lo + 1e-12);
        }

        #[test]
        fn replication_is_linear(k in 1usize..5) {
            let table = MortalityTable::new(60,
                vec![100_000.0, 90_000.0, 40_000.0, 10_000.0, 0.0]).unwrap();
            let portfolio = AnnuityPortfolio::new(vec![
                Annuitant { age: 60, annual_payment: 100.0 },
                Annuitant { age: 62, annual_payment: 450.0 },
            ]);
            let base = expected_flows(&portfolio, &table).unwrap();
            let repl = expected_flows(&portfolio.replicate(k), &table).unwrap();
            for (a, b) in base.amounts.iter().zip(&repl.amounts) {
                prop_assert!((b - k as f64 * a).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn indexed_reserve_dominates_flat_reserve(
            state in 0.0f64..0.05,
            trend in 0.0f64..0.04,
            vol in 0.0f64..0.02)
        {
            let flows = CashFlowSchedule::new(vec![50.0, 75.0, 100.0]);
            let params = InflationParams {
                mean_rate: trend,
                reversion_speed: 0.7369,
                volatility: vol,
                initial_state: 0.0,
            };
            prop_assert!(indexed_reserve(&flows, 0.025, &params, state)
                >= reserve(&flows, 0.025) - 1e-12);
        }
    }
}
