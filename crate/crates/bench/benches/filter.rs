use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dynscene_bench::{passing_scene, two_person_frame};
use dynscene_core::DualBoxFilter;

fn filter(c: &mut Criterion) {
    let scene = passing_scene();
    let (depth, dets) = two_person_frame(&scene, 2.0);
    let f = DualBoxFilter::default();
    c.bench_function("dual_box_filter_640x480_2_people", |b| {
        b.iter(|| f.apply(black_box(&depth), black_box(&dets)).unwrap())
    });
}

criterion_group!(benches, filter);
criterion_main!(benches);
