use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use zdmix_core::mixing::correlation_integral;
use zdmix_core::observables::{make_observable, ObservableOptions};
use zdmix_core::oracle::{exact_distribution, DEFAULT_CELL_BUDGET};
use zdmix_core::{BilliardTable, ExtensionSystem, MarkovExtension, ObservableSpec, RngSpec};

fn billiard_steps(c: &mut Criterion) {
    let table = BilliardTable::default_table().unwrap();
    let mut rng = RngSpec::new(1, 0).rng();
    c.bench_function("billiard/1000 steps", |b| {
        b.iter_batched(
            || table.sample_mu_bar(&mut rng),
            |mut x| {
                for _ in 0..1000 {
                    x = table.step(&x).unwrap().next;
                }
                black_box(x)
            },
            BatchSize::SmallInput,
        )
    });
}

fn kernel_dp(c: &mut Criterion) {
    let srw = MarkovExtension::simple_random_walk();
    let chain = MarkovExtension::random(4, 9);
    let mut g = c.benchmark_group("kernel");
    g.bench_function("srw n=200", |b| b.iter(|| exact_distribution(&srw, black_box(200), DEFAULT_CELL_BUDGET).unwrap()));
    g.bench_function("random(4) n=100", |b| {
        b.iter(|| exact_distribution(&chain, black_box(100), DEFAULT_CELL_BUDGET).unwrap())
    });
    g.finish();
}

fn correlation_ensemble(c: &mut Criterion) {
    let table = BilliardTable::default_table().unwrap();
    let opts = ObservableOptions {
        n_integral: 10_000,
        ..Default::default()
    };
    let u = make_observable(&table, &ObservableSpec::indicator_cell(), &opts).unwrap();
    let mut g = c.benchmark_group("correlation");
    g.sample_size(10);
    g.bench_function("billiard n=50 N=10^4", |b| {
        b.iter(|| correlation_integral(&table, &u, &u, 50, 10_000, black_box(3)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, billiard_steps, kernel_dp, correlation_ensemble);
criterion_main!(benches);
