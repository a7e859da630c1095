//! Built-in demonstration data.
//!
//! Real annuity books are confidential, so the examples and tests run on
//! a synthetic Makeham-style survivor table and a randomized portfolio
//! whose summary statistics (mean age 63.8, mean annual benefit 5 491)
//! match a typical closed book of pensioners in payment.

use crate::mortality::{Annuitant, AnnuityPortfolio, MortalityTable};
use crate::rng::{stream_rng, unit_f64, Gaussians};

/// Makeham hazard constants: mu(x) = A + B * C^x.
const MAKEHAM_A: f64 = 2.0e-4;
const MAKEHAM_B: f64 = 1.2e-5;
const MAKEHAM_C: f64 = 1.105;
/// Terminal age of the synthetic table; the survivor count is forced to
/// zero there (the Makeham column is ~3e-3 lives out of 100 000 by 119).
const TERMINAL_AGE: u32 = 120;
const RADIX: f64 = 100_000.0;

/// Survivor table from the Makeham law, radix 100 000 at age 0, closed at
/// age 120.
pub fn makeham_table() -> MortalityTable {
    let ln_c = MAKEHAM_C.ln();
    let mut survivors: Vec<f64> = (0..TERMINAL_AGE)
        .map(|age| {
            let x = age as f64;
            RADIX * (-MAKEHAM_A * x - MAKEHAM_B * (MAKEHAM_C.powf(x) - 1.0) / ln_c).exp()
        })
        .collect();
    survivors.push(0.0);
    MortalityTable::new(0, survivors).expect("constants produce a valid table")
}

/// Mean age and mean annual benefit targeted by [`annuitant_portfolio`].
pub const TARGET_MEAN_AGE: f64 = 63.8;
pub const TARGET_MEAN_BENEFIT: f64 = 5_491.0;

/// Randomized closed book of `count` annuitants.
///
/// Ages are drawn around the target mean with a 7-year spread, clipped to
/// [40, 95], then shifted so the realized mean lands within half a year of
/// the target. Benefits are lognormal and rescaled so their mean equals
/// the target exactly. Reproducible from the seed.
pub fn annuitant_portfolio(count: usize, seed: u64) -> AnnuityPortfolio {
    assert!(count > 0, "portfolio must hold at least one annuitant");
    let mut normals = Gaussians::new(stream_rng(seed, 0));
    let mut benefits_rng = stream_rng(seed, 1);

    let mut ages: Vec<i64> = (0..count)
        .map(|_| {
            (TARGET_MEAN_AGE + 7.0 * normals.draw())
                .clamp(40.0, 95.0)
                .floor() as i64
        })
        .collect();
    // integer shift toward the target mean (floor() above biases it down)
    let mean = ages.iter().sum::<i64>() as f64 / count as f64;
    let shift = (TARGET_MEAN_AGE - mean).round() as i64;
    for age in &mut ages {
        *age = (*age + shift).clamp(40, 95);
    }

    let raw_benefits: Vec<f64> = (0..count)
        .map(|_| {
            // lognormal with ln-space sd 0.5
            let z = {
                let u1 = 1.0 - unit_f64(&mut benefits_rng);
                let u2 = unit_f64(&mut benefits_rng);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            (0.5 * z).exp()
        })
        .collect();
    let scale = TARGET_MEAN_BENEFIT * count as f64 / raw_benefits.iter().sum::<f64>();

    AnnuityPortfolio::new(
        ages.iter()
            .zip(&raw_benefits)
            .map(|(&age, &raw)| Annuitant {
                age: age as u32,
                annual_payment: raw * scale,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mortality::{expected_flows, macaulay_duration, reserve};

    #[test]
    fn table_is_valid_and_longevity_shaped() {
        let table = makeham_table();
        assert_eq!(table.min_age(), 0);
        assert_eq!(table.max_age(), 120);
        // most lives reach 60, few reach 100
        assert!(table.survivors_at(60).unwrap() > 80_000.0);
        assert!(table.survivors_at(100).unwrap() < 10_000.0);
        assert_eq!(table.survivors_at(120).unwrap(), 0.0);
    }

    #[test]
    fn portfolio_matches_summary_statistics() {
        let portfolio = annuitant_portfolio(374, 1);
        assert_eq!(portfolio.len(), 374);
        assert!((portfolio.mean_payment() - TARGET_MEAN_BENEFIT).abs() < 1e-9);
        assert!((portfolio.mean_age() - TARGET_MEAN_AGE).abs() <= 0.5);
        assert_eq!(portfolio, annuitant_portfolio(374, 1));
        assert_ne!(portfolio, annuitant_portfolio(374, 2));
    }

    #[test]
    fn book_values_have_plausible_magnitudes() {
        let table = makeham_table();
        let portfolio = annuitant_portfolio(374, 1);
        let flows = expected_flows(&portfolio, &table).unwrap();
        let initial_reserve = reserve(&flows, 0.025);
        // ~374 * 5491 * (annuity factor ~ 12-18)
        assert!(
            initial_reserve > 15.0e6 && initial_reserve < 45.0e6,
            "reserve {initial_reserve}"
        );
        let duration = macaulay_duration(&flows, 0.025).unwrap();
        assert!(duration > 8.0 && duration < 18.0, "duration {duration}");
    }
}
