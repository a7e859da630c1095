//! Throughput benches for the two hot stages: scenario generation and
//! the ruin sweep over a grid of allocations with shared paths.
//!
//! Build with default features for the rayon path; rerun with
//! `--no-default-features` for the sequential fallback. Within a parallel
//! build, the `*_one_worker` variants pin a single-thread pool as an
//! in-run baseline.

use alm_core::balance::{DynamicsMode, LiabilityPath};
use alm_core::estimators::{ruin_probability, LiabilityModel};
use alm_core::market::{generate_scenarios, MarketParams};
use alm_core::mortality::expected_flows;
use alm_core::optimizer::ThetaGrid;
use alm_core::synthetic::{annuitant_portfolio, makeham_table};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;
use std::time::Duration;

const N_PATHS: usize = 1_000;
const SUB_STEPS: usize = 12;

fn scenario_generation(c: &mut Criterion) {
    let market = MarketParams::canonical();
    let mut group = c.benchmark_group("generate_scenarios");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    group.bench_function("default_workers", |b| {
        b.iter(|| {
            black_box(
                generate_scenarios(&market, None, N_PATHS, 40, SUB_STEPS, black_box(7)).unwrap(),
            )
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("one_worker", |b| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        b.iter(|| {
            pool.install(|| {
                black_box(
                    generate_scenarios(&market, None, N_PATHS, 40, SUB_STEPS, black_box(7))
                        .unwrap(),
                )
            })
        })
    });
    group.finish();
}

fn ruin_sweep(c: &mut Criterion) {
    let market = MarketParams::canonical();
    let table = makeham_table();
    let portfolio = annuitant_portfolio(100, 3);
    let flows = expected_flows(&portfolio, &table).unwrap();
    let set = generate_scenarios(&market, None, N_PATHS, flows.horizon(), SUB_STEPS, 8).unwrap();
    let model = LiabilityModel::Shared(LiabilityPath::deterministic(&flows, market.technical_rate));
    let grid = ThetaGrid::from_step(0.02).unwrap();

    let sweep = |set: &alm_core::market::ScenarioSet, model: &LiabilityModel| {
        grid.values()
            .map(|theta| {
                ruin_probability(set, model, theta, 0.04, DynamicsMode::BuyAndHold)
                    .unwrap()
                    .probability
            })
            .sum::<f64>()
    };

    let mut group = c.benchmark_group("ruin_sweep_51_thetas");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    group.bench_function("default_workers", |b| {
        b.iter_batched(
            || (),
            |_| black_box(sweep(&set, &model)),
            BatchSize::SmallInput,
        )
    });
    #[cfg(feature = "parallel")]
    group.bench_function("one_worker", |b| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        b.iter(|| pool.install(|| black_box(sweep(&set, &model))))
    });
    group.finish();
}

criterion_group!(benches, scenario_generation, ruin_sweep);
criterion_main!(benches);
