use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ybus_bench::{measurements, scenario};
use ybus_core::estimators::{estimate_ols, estimate_tls, fisher_mle};
use ybus_core::simulator::run_scenario;
use ybus_core::solvers::{estimate_mle, Problem};
use ybus_core::{Algorithm, PriorStack, ReductionMap, SolverConfig};

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for nodes in [9, 15] {
        let s = scenario(nodes, 400);
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &s, |b, s| b.iter(|| run_scenario(s).expect("runs")));
    }
    group.finish();
}

fn closed_forms(c: &mut Criterion) {
    let meas = measurements(15, 4000);
    c.bench_function("ols_15_bus_4000", |b| b.iter(|| estimate_ols(&meas.v, &meas.i).expect("ols")));
    c.bench_function("tls_15_bus_4000", |b| b.iter(|| estimate_tls(&meas.v, &meas.i).expect("tls")));
    let y = estimate_tls(&meas.v, &meas.i).expect("tls").matrix.into_entries();
    c.bench_function("fisher_15_bus_4000", |b| {
        b.iter(|| fisher_mle(&meas.v, &y, &meas.sigma_v, &meas.sigma_i).expect("fisher"))
    });
}

fn likelihood(c: &mut Criterion) {
    let meas = measurements(9, 400);
    let problem = Problem::new(&meas, ReductionMap::full(meas.n()), PriorStack::new()).expect("problem");
    let y = ReductionMap::full(meas.n())
        .reduce_matrix(estimate_tls(&meas.v, &meas.i).expect("tls").matrix.entries())
        .expect("reduce");
    c.bench_function("profile_objective_9_bus_400", |b| b.iter(|| problem.profile_objective(&y).expect("objective")));
    let mut group = c.benchmark_group("mle");
    group.sample_size(10);
    group.bench_function("bar_9_bus_400", |b| {
        b.iter(|| estimate_mle(&meas, &SolverConfig::new(Algorithm::Bar)).expect("mle"))
    });
    group.finish();
}

criterion_group!(benches, simulate, closed_forms, likelihood);
criterion_main!(benches);
