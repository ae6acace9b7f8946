use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fgma_bench::{reference_config, reference_sample, synthetic_criterion};
use fgma_core::averaging::minimize_over_hn;
use fgma_core::covest::estimate_inverse;
use fgma_core::harness::{run_replication_in, SampleContext};
use fgma_core::timeseries::{autocovariances, levinson_durbin, ErrorProcessSpec};
use fgma_core::OptimizerSettings;

fn levinson(c: &mut Criterion) {
    let spec = ErrorProcessSpec::arma(&[-0.5], &[0.4], 100, 1.0).unwrap();
    let mut g = c.benchmark_group("levinson_durbin");
    for order in [10, 100, 400] {
        let acf = autocovariances(&spec, order);
        g.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &k| {
            b.iter(|| levinson_durbin(&acf, k, |a, v| { black_box((a.len(), v)); }).unwrap())
        });
    }
    g.finish();
}

fn covariance(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_inverse");
    g.sample_size(20);
    for n in [200, 800, 1600] {
        let ds = reference_sample(n);
        let r = reference_config(n).resolve(n).unwrap();
        let (y, x) = (ds.y_vector(), ds.x_matrix());
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| estimate_inverse(&y, &x, r.d, r.q).unwrap()));
    }
    g.finish();
}

fn optimizer(c: &mut Criterion) {
    let mut g = c.benchmark_group("minimize_over_hn");
    let s = OptimizerSettings::default();
    for m in [9, 20] {
        let crit = synthetic_criterion(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| b.iter(|| minimize_over_hn(&crit, &s).unwrap()));
    }
    g.finish();
}

fn replication(c: &mut Criterion) {
    let mut g = c.benchmark_group("replication");
    g.sample_size(10);
    for n in [200, 800] {
        let cfg = reference_config(n);
        let ctx = SampleContext::new(&cfg, n).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| run_replication_in(&cfg, &ctx, 0)));
    }
    g.finish();
}

criterion_group!(benches, levinson, covariance, optimizer, replication);
criterion_main!(benches);
