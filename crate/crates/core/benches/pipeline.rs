//! Parallel vs sequential execution of a small batch of independent training
//! jobs (one FHN time-scale value per job).

use criterion::{criterion_group, criterion_main, Criterion};
use nullfit::dataset::PairOptions;
use nullfit::harness::{self, RunConfig};
use nullfit::net::TrainConfig;
use nullfit::parallel;
use nullfit::systems::ModelKind;

fn job(cfg: &RunConfig, eps: f64) -> f64 {
    let model = harness::fhn_at_eps(cfg, eps).expect("valid model");
    harness::run_pipeline(&model, cfg.combination, &cfg.train, &cfg.pairs, cfg.grid_n)
        .expect("pipeline runs")
        .eval
        .mse_in_cycle
}

fn bench(c: &mut Criterion) {
    let mut cfg = RunConfig::new(ModelKind::Fhn);
    cfg.train = TrainConfig { epochs: 20, ..cfg.train };
    cfg.pairs = PairOptions { max_pairs: Some(1000), ..cfg.pairs };
    let eps = [0.1, 0.2, 0.5, 1.0];
    let mut group = c.benchmark_group(format!("sweep_4_jobs_parallel_feature_{}", parallel::is_parallel()));
    group.sample_size(10);
    group.bench_function("map", |b| b.iter(|| parallel::map(&eps, |&e| job(&cfg, e))));
    group.bench_function("map_sequential", |b| b.iter(|| parallel::map_sequential(&eps, |&e| job(&cfg, e))));
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
