use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fshift_core::entropy::solve_p;
use fshift_core::factormaps::{OwMap, StarMap};
use fshift_core::verify::{exact_pushforward, mc_pushforward, McConfig};

fn exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact");
    g.sample_size(10);
    for threads in [1usize, 4] {
        g.bench_function(format!("ow rin=2 rout=1 threads={threads}"), |b| {
            b.iter(|| exact_pushforward(&OwMap, 2, 1, threads).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let star = StarMap::new(0.25).unwrap();
    let mut g = c.benchmark_group("mc");
    g.sample_size(10);
    for threads in [1usize, 4] {
        let cfg = McConfig { samples: 50_000, seed: 1, threshold: None, threads };
        g.bench_function(format!("star r=30 N=5e4 threads={threads}"), |b| {
            b.iter(|| mc_pushforward(&star, 30, 0, &cfg).unwrap())
        });
    }
    g.finish();
}

fn solver(c: &mut Criterion) {
    c.bench_function("solve_p(0.5)", |b| b.iter(|| solve_p(black_box(0.5)).unwrap()));
}

criterion_group!(benches, exact, monte_carlo, solver);
criterion_main!(benches);
