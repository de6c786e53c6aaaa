use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use wacm_core::fixtures::constant_colors;
use wacm_core::imaging::to_gray;
use wacm_core::sampler::{chain_rng, colorize_stacks, SamplerConfig};
use wacm_core::score::{train_mlp, Dataset, DsmConfig, MlpScore, ParzenScore};
use wacm_core::wavelet::stack;
use wacm_core::{Exec, GrayOp, NoiseSchedule, ScoreModel};

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn parzen(k: usize, size: usize) -> (ParzenScore, Vec<Vec<f64>>) {
    let set = constant_colors(k, size, GrayOp::Mean, 0.5, 0).unwrap();
    let stacks: Vec<Vec<f64>> = set.iter().map(|f| stack(&f.image).unwrap().into_vec()).collect();
    (ParzenScore::new(Dataset::from_points(&stacks).unwrap()), stacks)
}

fn colorize_chains(c: &mut Criterion) {
    let set = constant_colors(8, 8, GrayOp::Mean, 0.1, 0).unwrap();
    let (model, _) = parzen(8, 8);
    let y = to_gray(&set[3].image, GrayOp::Mean).unwrap();
    let cfg = SamplerConfig {
        steps_per_level: 20,
        ..SamplerConfig::default()
    };
    let schedule = cfg.schedule().unwrap();
    let mut g = c.benchmark_group("colorize_8_chains");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| b.iter(|| colorize_stacks(&y, &model, &cfg, &schedule, 8, exec).unwrap()));
    }
    g.finish();
}

fn parzen_scores(c: &mut Criterion) {
    let mut g = c.benchmark_group("parzen_score_batch");
    for k in [8, 64] {
        let (model, stacks) = parzen(k, 16);
        for (name, exec) in STRATEGIES {
            g.bench_with_input(BenchmarkId::new(name, k), &k, |b, _| {
                b.iter(|| exec.map(stacks.len(), |i| model.score(&stacks[i], 0.1).unwrap()))
            });
        }
    }
    g.finish();
}

fn dsm_training(c: &mut Criterion) {
    let (_, stacks) = parzen(8, 4);
    let data = Dataset::from_points(&stacks).unwrap();
    let schedule = NoiseSchedule::geometric(1.0, 0.01, 10).unwrap();
    let mut g = c.benchmark_group("dsm_20_iterations");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        let cfg = DsmConfig {
            iterations: 20,
            batch_size: 64,
            exec,
            ..DsmConfig::default()
        };
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut rng = chain_rng(0);
                let net = MlpScore::new(data.dim(), &[64, 64], &mut rng).unwrap();
                train_mlp(net, &data, &schedule, &cfg, &mut rng).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, colorize_chains, parzen_scores, dsm_training);
criterion_main!(benches);
