use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use genmarket_bench::{gaussian_pair, ou2d, training_batch};
use genmarket_core::gdn::gdn_gradient;
use genmarket_core::{
    empirical_w2, price_claim, pushforward_sample, w2_distance, ClipConfig, GdnParams, MarginalPropagator, Payoff,
};
use nalgebra::DVector;

fn gelbrich(c: &mut Criterion) {
    let mut group = c.benchmark_group("w2_distance");
    for d in [2, 5, 10] {
        let (a, b) = gaussian_pair(d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |bench, _| {
            bench.iter(|| w2_distance(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn marginal(c: &mut Criterion) {
    let s = ou2d();
    let coeffs = s.validate().unwrap();
    let x0 = DVector::from_vec(vec![0.2, -0.3]);
    c.bench_function("exact_marginal/ou2d", |bench| {
        bench.iter(|| {
            MarginalPropagator::new(&coeffs, black_box(0.7), s.quad_steps)
                .unwrap()
                .law(&x0)
                .unwrap()
        })
    });
}

fn network(c: &mut Criterion) {
    let s = ou2d();
    let params = GdnParams::with_architecture(2, 64, 4, s.training.activation, 1).unwrap();
    let batch = training_batch(&s, 8, 2);
    c.bench_function("gdn/forward", |bench| {
        bench.iter(|| params.forward(black_box(&[0.1, -0.2]), black_box(0.5)).unwrap())
    });
    c.bench_function("gdn/gradient_batch16", |bench| {
        bench.iter(|| gdn_gradient(black_box(&params), black_box(&batch)).unwrap())
    });
}

fn transport(c: &mut Criterion) {
    let clip = ClipConfig::new(2.0, 2).unwrap();
    let (a, b) = gaussian_pair(2);
    let mut group = c.benchmark_group("empirical_w2");
    group.sample_size(10);
    for n in [500, 10_000] {
        let xa = pushforward_sample(&a, &clip, n, 1).unwrap();
        let xb = pushforward_sample(&b, &clip, n, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| empirical_w2(black_box(&xa), black_box(&xb)).unwrap())
        });
    }
    group.finish();
}

fn pricing(c: &mut Criterion) {
    let s = ou2d();
    let clip = s.clip().unwrap();
    let payoff = Payoff::new(s.payoff.clone().unwrap(), &clip).unwrap();
    let params = GdnParams::with_architecture(2, 64, 4, s.training.activation, 1).unwrap();
    let mut group = c.benchmark_group("price_claim");
    group.sample_size(20);
    group.bench_function("gdn_n1e5", |bench| {
        bench.iter(|| {
            price_claim(
                &params,
                &[0.0, 0.0],
                1.0,
                &payoff,
                100_000,
                black_box(3),
                &clip,
                Some(0.05),
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, gelbrich, marginal, network, transport, pricing);
criterion_main!(benches);
