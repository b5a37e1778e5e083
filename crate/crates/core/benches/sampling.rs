//! Single-thread pool against the default pool for the sampling hot paths.
//! Built without the `parallel` feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ggdp::accountant::{discretize_from_samples, AccountantConfig};
use ggdp::{GGParams, LossSampleDirection, MechanismSpec};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn gg_draws(c: &mut Criterion) {
    let noise = GGParams::new(1.5, 2.0).unwrap();
    let mut g = c.benchmark_group("gg_sample_1e6");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| noise.sample_seeded(7, 1_000_000)))
        });
    }
    g.finish();
}

fn prv_discretize(c: &mut Criterion) {
    let spec = MechanismSpec::new(GGParams::new(2.0, 2.0).unwrap(), 1.0, Some(0.01), 1).unwrap();
    let prv = spec.prv(LossSampleDirection::Remove);
    let cfg = AccountantConfig::with_bins(4.0, 1 << 14, 1_000_000).unwrap();
    let mut g = c.benchmark_group("prv_discretize_1e6");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| discretize_from_samples(&prv, &cfg, 11).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, gg_draws, prv_discretize);
criterion_main!(benches);
