use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rbcopula::copulas::CopulaFamily;
use rbcopula::diagnostics::{default_grid, predictive_envelopes};
use rbcopula::exec::{stream_rng, Exec};
use rbcopula::mcmc::{run_chains, ChainConfig};
use rbcopula::model::{simulate_dataset, RandomEffectsMode};
use rbcopula::simstudy::Scenario;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn chains(c: &mut Criterion) {
    let sc = Scenario::new(0.05, 0.05, 0.25, 100);
    let spec = sc.spec();
    let data = simulate_dataset(&sc.truth(), &spec, &sc.covariates().unwrap(), RandomEffectsMode::Supplied, &mut stream_rng(1, 0)).unwrap();
    let mut g = c.benchmark_group("run_chains");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ChainConfig { n_chains: 4, n_iter: 600, burn_in: 200, thin: 1, exec, ..ChainConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| b.iter(|| run_chains(&data, &spec, cfg).unwrap()));
    }
    g.finish();
}

fn envelopes(c: &mut Criterion) {
    let grid = default_grid();
    let taus = [0.2, 0.25, 0.3];
    let mut g = c.benchmark_group("predictive_envelopes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| predictive_envelopes(CopulaFamily::Clayton, &taus, 500, 200, &grid, 1, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, chains, envelopes);
criterion_main!(benches);
