use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tukey_em_bench::tukey_em::baselines::{ssp_regression, DataBounds};
use tukey_em_bench::tukey_em::depth::{compute_log_volumes, perturb_models, sorted_projections};
use tukey_em_bench::tukey_em::ptr::ptr_check_with_noise;
use tukey_em_bench::tukey_em::regression::{generate_synthetic, partition_fit, Dataset};
use tukey_em_bench::tukey_em::sampler::sample_point_with_depth;
use tukey_em_bench::tukey_em::{tukey_em, PrivacyBudget, RngHandle, SyntheticSpec};

fn synthetic(n: usize, d: usize) -> Dataset {
    let spec = SyntheticSpec::new(n, d, 10.0).unwrap();
    generate_synthetic(&spec, &mut RngHandle::new(1))
        .unwrap()
        .0
        .with_intercept()
}

fn budget() -> PrivacyBudget {
    PrivacyBudget::new(3f64.ln(), 1e-5).unwrap()
}

fn end_to_end(c: &mut Criterion) {
    let data = synthetic(22_000, 10);
    let mut group = c.benchmark_group("tukey_em");
    for m in [250, 500, 1000, 2000] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            let mut rng = RngHandle::new(2);
            b.iter(|| tukey_em(&data, m, budget(), &mut rng).unwrap());
        });
    }
    group.finish();

    c.bench_function("ssp/22000x11", |b| {
        let bounds = DataBounds::from_data(&data).unwrap();
        let mut rng = RngHandle::new(3);
        b.iter(|| ssp_regression(&data, budget(), bounds, &mut rng).unwrap());
    });
}

fn stages(c: &mut Criterion) {
    let data = synthetic(22_000, 10);
    let mut rng = RngHandle::new(4);
    let models = partition_fit(&data, 1000, &mut rng).unwrap();
    let proj = sorted_projections(&perturb_models(&models, &mut rng));
    let vols = compute_log_volumes(&proj);

    c.bench_function("partition_fit/m=1000", |b| {
        b.iter(|| partition_fit(&data, 1000, &mut rng).unwrap())
    });
    c.bench_function("volumes/m=1000", |b| {
        b.iter(|| compute_log_volumes(&sorted_projections(black_box(&models))))
    });
    c.bench_function("ptr_bound/m=1000", |b| {
        b.iter(|| {
            ptr_check_with_noise(black_box(&vols), budget().half_epsilon(), 1e-5, 0.0).unwrap()
        })
    });
    c.bench_function("sample_point/depth=400", |b| {
        b.iter(|| sample_point_with_depth(&proj, 400, &mut rng).unwrap())
    });
}

criterion_group!(benches, end_to_end, stages);
criterion_main!(benches);
