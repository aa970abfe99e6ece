use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pbco_core::environments::LossBounds;
use pbco_core::geometry::build_net;
use pbco_core::kernel1d::smooth;
use pbco_core::kexp::kexp_defaults;
use pbco_core::ogd::ogd_defaults;
use pbco_core::{BinnedDensity, KexpLearner, OgdLearner, PredictionRange, ProblemConfig};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn bench_smooth(c: &mut Criterion) {
    let mut group = c.benchmark_group("smooth");
    for bins in [64usize, 1024, 16_384] {
        let q = BinnedDensity::uniform(PredictionRange::new(-1.0, 1.0, bins).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(bins), &q, |b, q| b.iter(|| smooth(q, 1e-3).unwrap()));
    }
    group.finish();
}

fn bench_kexp_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("kexp_step");
    for (d, step) in [(2usize, 0.05), (3, 0.1)] {
        let cfg = ProblemConfig::linear_ball(d, 10_000, 1.0, 1.0, 4.0, 4.0).unwrap();
        let net = build_net(&cfg, step).unwrap();
        let mut learner = KexpLearner::new(net, kexp_defaults(&cfg), LossBounds::up_to(4.0)).unwrap();
        let x = vec![1.0 / (d as f64).sqrt(); d];
        let mut rng = StdRng::seed_from_u64(1);
        group.bench_function(BenchmarkId::from_parameter(d), |b| {
            b.iter(|| learner.step(&x, &mut |y: f64| (y - 0.3) * (y - 0.3), &mut rng).unwrap())
        });
    }
    group.finish();
}

fn bench_ogd_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("ogd_step");
    for d in [10usize, 40, 160] {
        let cfg = ProblemConfig::linear_ball(d, 50_000, 1.0, 1.0, 4.0, 4.0).unwrap();
        let mut learner = OgdLearner::new(cfg, ogd_defaults(&cfg), LossBounds::up_to(4.0)).unwrap();
        let x = vec![1.0 / (d as f64).sqrt(); d];
        let mut rng = StdRng::seed_from_u64(2);
        group.bench_function(BenchmarkId::from_parameter(d), |b| {
            b.iter(|| learner.step(&x, &mut |y: f64| (y - 0.3) * (y - 0.3), &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_smooth, bench_kexp_step, bench_ogd_step);
criterion_main!(benches);
