use std::time::Duration;

use ceei::data::synth_market;
use ceei::debias::{debias_valuations, DebiasConfig};
use ceei::spl::{spl_curve, Mechanism, MisreportGrid, SplExperimentConfig};
use ceei::{solve_eg, Execution, MarketInstance, MetricsReport, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn desk() -> MarketInstance {
    synth_market(100, 100, 0.5, 0).unwrap()
}

fn solver(c: &mut Criterion) {
    let market = desk();
    let mut group = c.benchmark_group("solve_eg_100x100");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for exec in MODES {
        let config = SolverConfig::default().with_execution(exec);
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| solve_eg(&market, &config).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let market = desk();
    let sol = solve_eg(&market, &SolverConfig::default()).unwrap();
    let mut group = c.benchmark_group("metrics_100x100");
    group.sample_size(10);
    for exec in MODES {
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| MetricsReport::compute(&market, &sol.allocation, &sol.prices, &sol.allocation, exec).unwrap())
        });
    }
    group.finish();
}

fn debias(c: &mut Criterion) {
    let market = desk();
    let mut group = c.benchmark_group("debias_100x100_100_steps");
    group.sample_size(10);
    for exec in MODES {
        let config = DebiasConfig {
            steps: 100,
            execution: exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| debias_valuations(&market, &config).unwrap())
        });
    }
    group.finish();
}

fn spl_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("spl_ceei_trials");
    group.sample_size(10);
    for exec in MODES {
        let config = SplExperimentConfig {
            sizes: vec![10, 20],
            trials: 8,
            grid: MisreportGrid {
                directions: 4,
                ..Default::default()
            },
            execution: exec,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| spl_curve(&config, &Mechanism::Ceei, &SolverConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solver, metrics, debias, spl_trials);
criterion_main!(benches);
