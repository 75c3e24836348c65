use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fshift_core::config::sample;
use fshift_core::factormaps::{timar_bits, FactorMap, OwMap, StarMap};
use fshift_core::freegroup::{ball, shared_ball};
use fshift_core::{Alphabet, Distribution};

fn balls(c: &mut Criterion) {
    let mut g = c.benchmark_group("ball");
    for r in [4u32, 8, 10] {
        g.bench_function(format!("r={r}"), |b| b.iter(|| ball(black_box(r)).unwrap()));
    }
    g.finish();
}

fn maps(c: &mut Criterion) {
    let b6 = shared_ball(6).unwrap();
    let x = sample(&Distribution::uniform(Alphabet::U2), &b6, 1);
    c.bench_function("ow/ball(6)", |b| b.iter(|| OwMap.apply(black_box(&x)).unwrap()));
    c.bench_function("timar:3/ball(6)", |b| b.iter(|| timar_bits(black_box(&x), 3).unwrap()));

    let star = StarMap::new(0.25).unwrap();
    let y = sample(&Distribution::star_input(0.25).unwrap(), &b6, 1);
    c.bench_function("star:0.25/ball(6)", |b| b.iter(|| star.apply(black_box(&y)).unwrap()));
}

criterion_group!(benches, balls, maps);
criterion_main!(benches);
