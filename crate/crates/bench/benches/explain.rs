use criterion::{black_box, criterion_group, criterion_main, Criterion};
use explainkit::pdice::pd_ice;
use explainkit::shapley::{shapley_exact, shapley_sampled, treeinterpreter_path};
use explainkit::Marginalization;
use explainkit_bench::{simulated, small_config, trained};

fn fit(c: &mut Criterion) {
    let (train, valid) = simulated(4000);
    let config = small_config(20);
    c.bench_function("fit_gbm 2800 rows x 20 rounds", |b| {
        b.iter(|| explainkit::fit_gbm(&train, &valid, &config, &[]).unwrap())
    });
}

fn shapley(c: &mut Criterion) {
    let (model, data) = trained(4000, 50);
    let x = data.row(0);
    let mut g = c.benchmark_group("shapley one row");
    g.bench_function("exact", |b| {
        b.iter(|| shapley_exact(&model, black_box(&x), None, Marginalization::PathDependent).unwrap())
    });
    g.bench_function("sampled 200", |b| {
        b.iter(|| shapley_sampled(&model, black_box(&x), None, Marginalization::PathDependent, 200, 1).unwrap())
    });
    g.bench_function("path", |b| b.iter(|| treeinterpreter_path(&model, black_box(&x)).unwrap()));
    g.finish();
}

fn pd(c: &mut Criterion) {
    let (model, data) = trained(4000, 50);
    c.bench_function("pd_ice 20 grid points", |b| {
        b.iter(|| pd_ice(&model, &data, 8, 20, None).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = fit, shapley, pd
}
criterion_main!(benches);
