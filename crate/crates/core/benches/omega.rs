use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hergm_core::block_em::{omega, omega_naive, update_pi, DyadSupport, VariationalState};
use hergm_core::mple::{build_design, fit_logistic, Group, Sampling, Terms};
use hergm_core::simulator::{generate_dataset, CovariateSpec, DatasetConfig, SimStrategy};
use hergm_core::{CovariateSet, ModelParams};

fn dataset(n: usize, k: usize, p: usize) -> hergm_core::simulator::Dataset {
    let params = ModelParams {
        beta_w: vec![0.4; p],
        beta_b: vec![0.4; p],
        ..ModelParams::simple(-1.5, -4.0, -0.02, 0.1)
    };
    let cfg = DatasetConfig {
        n,
        k,
        eta: vec![1.0 / k as f64; k],
        params,
        covariates: (0..p)
            .map(|s| CovariateSpec {
                name: format!("c{s}"),
                categories: 8,
                block_affinity: 0.3,
            })
            .collect(),
        strategy: SimStrategy::Factorized { sweeps: 5 },
        seed: 1,
    };
    generate_dataset(&cfg).expect("valid config")
}

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    let build = |t| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
    };
    [("parallel", build(0)), ("sequential", build(1))]
}

fn bench_omega(c: &mut Criterion) {
    let mut group = c.benchmark_group("omega");
    group.sample_size(10);
    for &(n, k, p) in &[(1000, 50, 0), (2000, 20, 2)] {
        let data = dataset(n, k, p);
        let labels: Vec<usize> = data.z.labels().to_vec();
        let xi = VariationalState::smoothed_one_hot(&labels, k, 0.1);
        let support = DyadSupport::new(&data.graph, &data.covariates, usize::MAX).unwrap();
        let pi = update_pi(&support, xi.view());
        let id = format!("n{n}_k{k}_p{p}");
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, &id), &(), |b, _| {
                pool.install(|| b.iter(|| omega(&support, xi.view(), &pi)))
            });
        }
        if n <= 1000 {
            group.bench_with_input(BenchmarkId::new("naive", &id), &(), |b, _| {
                b.iter(|| omega_naive(&data.graph, &data.covariates, xi.view(), &pi).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_update_pi(c: &mut Criterion) {
    let mut group = c.benchmark_group("update_pi");
    group.sample_size(10);
    let data = dataset(4000, 20, 2);
    let xi = VariationalState::smoothed_one_hot(data.z.labels(), 20, 0.1);
    let support = DyadSupport::new(&data.graph, &data.covariates, usize::MAX).unwrap();
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            pool.install(|| b.iter(|| update_pi(&support, xi.view())))
        });
    }
    group.finish();
}

fn bench_design(c: &mut Criterion) {
    let mut group = c.benchmark_group("mple_between_design");
    group.sample_size(10);
    let data = dataset(3000, 20, 2);
    let x: &CovariateSet = &data.covariates;
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            pool.install(|| {
                b.iter(|| {
                    let d = build_design(
                        &data.graph,
                        x,
                        &data.z,
                        Group::Between,
                        Sampling::All,
                        Terms::default(),
                        0,
                    )
                    .unwrap();
                    fit_logistic(&d).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_omega, bench_update_pi, bench_design);
criterion_main!(benches);
