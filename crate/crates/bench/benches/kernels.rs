use std::hint::black_box;

use anosov_bench::{cat_assembly, points, synchronizer, Jet};
use anosov_core::contact::{strad_predicates, ContactTolerances};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn jets(c: &mut Criterion) {
    let q = Jet::seed([0.1, 0.2, 0.3], 3);
    c.bench_function("jet_product_order3", |b| b.iter(|| black_box(q[0]) * black_box(q[1]) + q[2].sin()));
    let f = (q[0] * q[1]).exp() + q[2].cos();
    let inner = [q[1].sin(), q[2], q[0] + q[1]];
    c.bench_function("jet_compose_order3", |b| b.iter(|| black_box(&f).compose(black_box(&inner))));
}

fn sync_point(c: &mut Criterion) {
    let sample = points(64);
    for t in [1.0, 8.0] {
        c.bench_function(&format!("sync_eval_T{t}"), |b| {
            b.iter_batched(|| synchronizer(t, &sample), |s| s.eval(&sample[3]).unwrap(), BatchSize::SmallInput)
        });
    }
}

fn strad(c: &mut Criterion) {
    let sample = points(200);
    let asm = cat_assembly(0.01, &sample);
    let tol = ContactTolerances::default();
    c.bench_function("strad_200_points", |b| b.iter(|| strad_predicates(&asm, &sample, &tol)));
}

criterion_group!(benches, jets, sync_point, strad);
criterion_main!(benches);
