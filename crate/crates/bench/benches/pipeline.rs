use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hchain_bench::scenario;
use hchain_core::simnet::{run_scenario, AdversaryKind, AdversaryPolicy, ScenarioSpec, Simulation};

fn scenarios(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    group.bench_function("clean_1x20", |b| b.iter(|| run_scenario(scenario(1, 20)).unwrap()));
    group.bench_function("clean_4x40", |b| b.iter(|| run_scenario(scenario(4, 40)).unwrap()));
    let tamper = AdversaryPolicy::always(AdversaryKind::TamperRandomByte, 5);
    group.bench_function("tamper_1x20", |b| {
        b.iter(|| run_scenario(ScenarioSpec { adversary: tamper, ..scenario(1, 20) }).unwrap())
    });
    group.finish();
}

fn setup_vs_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("bootstrap", |b| b.iter(|| Simulation::new(scenario(4, 20), None).unwrap()));
    group.bench_function("run_only", |b| {
        b.iter_batched(|| Simulation::new(scenario(4, 20), None).unwrap(), |mut sim| sim.run(), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, scenarios, setup_vs_run);
criterion_main!(benches);
