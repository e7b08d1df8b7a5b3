use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use failcast_core::bayesnet::{BnPosterior, NetworkData, ObservationMask, PriorConfig};
use failcast_core::domain::{assemble_sets, TimeStamp, Window, WindowKind};
use failcast_core::forecast::{expected_failures_with, FleetState, ForecastMode};
use failcast_core::fusion::{fit_case1_with, FitSettings};
use failcast_core::mcmc::{run_mh_with, McmcConfig, Target};
use failcast_core::par::Execution;
use failcast_core::simulator::{simulate_fleet, FleetConfig};
use failcast_core::{seed, WeibullParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn chains(c: &mut Criterion) {
    let fleet = FleetConfig { n_units: 400, ..FleetConfig::default() };
    let (log, _) = simulate_fleet(&fleet).unwrap();
    let ds = assemble_sets(&log, &fleet.observation_window, 0, 0).unwrap();
    let target = BnPosterior::new(NetworkData::from_dataset(&ds), ObservationMask::FULL, PriorConfig::default()).unwrap();
    let init = target.draw_initial(&mut seed::rng(1, &[3])).unwrap();
    let cfg = McmcConfig { n_iterations: 2000, burn_in: 1000, seed: 1, ..McmcConfig::default() };

    let mut group = c.benchmark_group("mcmc_chains");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_mh_with(&target, black_box(&init), &cfg, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("case1_fit");
    group.sample_size(10);
    for (name, exec) in MODES {
        let settings = FitSettings { mcmc: cfg.clone(), exec, ..FitSettings::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| fit_case1_with(black_box(&ds), &settings).unwrap()));
    }
    group.finish();
}

fn forecast(c: &mut Criterion) {
    let fleet = FleetConfig { n_units: 5000, ..FleetConfig::default() };
    let (log, _) = simulate_fleet(&fleet).unwrap();
    let state = FleetState::from_log(&log, fleet.n_parts);
    let params: Vec<WeibullParams> = fleet.true_params.clone();
    let window = Window::new(
        TimeStamp::from_ymd(2013, 1, 1).unwrap(),
        TimeStamp::from_ymd(2014, 1, 1).unwrap(),
        WindowKind::Forecast,
    )
    .unwrap();

    let mut group = c.benchmark_group("forecast");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| expected_failures_with(black_box(&params), &state, &window, ForecastMode::Conditional, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, chains, forecast);
criterion_main!(benches);
