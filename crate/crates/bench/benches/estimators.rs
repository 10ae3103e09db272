use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use pairwise_em::estimators::{covariance_pseudoinverse, em_step, run_with_cov, spectral_init};
use pairwise_em::model::{generate, random_init, sample_covariance, DesignKind, GroundTruthSpec};
use pairwise_em::rng::rng_from_seed;
use pairwise_em::{pseudoinverse, EstimatorKind, Instance, IterationConfig};

fn instance(d: usize, n: usize) -> Instance {
    generate(
        d,
        n,
        0.1,
        &GroundTruthSpec::Linear(d),
        DesignKind::PairwiseUniform,
        1,
    )
    .unwrap()
}

fn start(inst: &Instance) -> DVector<f64> {
    let mut rng = rng_from_seed(2);
    random_init(&inst.theta_star, 0.3, &mut rng)
        .unwrap()
        .into_vector()
}

fn bench_steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("em_step");
    for (d, n) in [(50, 1000), (100, 5000)] {
        let inst = instance(d, n);
        let cov = covariance_pseudoinverse(&inst).unwrap();
        let t = start(&inst);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("d{d}_n{n}")),
            &t,
            |b, t| b.iter(|| em_step(&inst, t, &cov).unwrap()),
        );
    }
    g.finish();
}

fn bench_pseudoinverse(c: &mut Criterion) {
    let mut g = c.benchmark_group("pseudoinverse");
    for d in [50, 100, 200] {
        let s = sample_covariance(&instance(d, 20 * d));
        g.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| {
            b.iter(|| pseudoinverse(s, 1e-10).unwrap())
        });
    }
    g.finish();
}

fn bench_spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral_init");
    for d in [50, 100] {
        let inst = instance(d, 20 * d);
        g.bench_with_input(BenchmarkId::from_parameter(d), &inst, |b, inst| {
            b.iter(|| spectral_init(inst).unwrap())
        });
    }
    g.finish();
}

fn bench_run(c: &mut Criterion) {
    let inst = instance(50, 1000);
    let cov = covariance_pseudoinverse(&inst).unwrap();
    let t = start(&inst);
    let cfg = IterationConfig {
        max_steps: 20,
        ..IterationConfig::default()
    };
    c.bench_function("em_run_20_steps_d50_n1000", |b| {
        b.iter(|| run_with_cov(&inst, &t, EstimatorKind::Em, &cfg, &cov).unwrap())
    });
}

criterion_group!(
    benches,
    bench_steps,
    bench_pseudoinverse,
    bench_spectral,
    bench_run
);
criterion_main!(benches);
