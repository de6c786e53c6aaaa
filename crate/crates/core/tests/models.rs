use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wacm_core::fixtures::constant_colors;
use wacm_core::metrics::mse;
use wacm_core::sampler::{chain_rng, colorize_stacks, sample_images, SamplerConfig};
use wacm_core::score::{dsm_loss, train_mlp, Dataset, DsmConfig, MlpScore, ParzenScore, Weighting};
use wacm_core::wavelet::stack;
use wacm_core::{imaging, Exec, GrayOp, NoiseSchedule, Result, ScoreModel};

struct Zero(usize);

impl ScoreModel for Zero {
    fn dim(&self) -> usize {
        self.0
    }

    fn score_into(&self, _x: &[f64], _sigma: f64, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

fn circle(n: usize) -> Dataset {
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    Dataset::from_points(&pts).unwrap()
}

fn repeated(data: &Dataset, times: usize) -> Dataset {
    let mut v = Vec::with_capacity(data.as_slice().len() * times);
    for _ in 0..times {
        v.extend_from_slice(data.as_slice());
    }
    Dataset::new(data.dim(), v).unwrap()
}

#[test]
fn parzen_samples_land_on_training_images() {
    let train = constant_colors(4, 4, GrayOp::Mean, 0.9, 3).unwrap();
    let stacks: Vec<Vec<f64>> = train.iter().map(|f| stack(&f.image).unwrap().into_vec()).collect();
    let model = ParzenScore::new(Dataset::from_points(&stacks).unwrap());
    let cfg = SamplerConfig::default();
    let samples = sample_images(&model, &cfg, &cfg.schedule().unwrap(), 100, 4, 4, Exec::default()).unwrap();
    let near = samples
        .iter()
        .filter(|s| train.iter().any(|t| mse(s, &t.image).unwrap().sqrt() <= 0.1))
        .count();
    assert!(near >= 95, "{near} of 100 samples within 0.1 RMS");
}

#[test]
fn empirical_optimum_beats_trained_network() {
    let data = circle(8);
    let schedule = NoiseSchedule::geometric(1.0, 0.1, 2).unwrap();
    let cfg = DsmConfig {
        iterations: 2000,
        ..DsmConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = MlpScore::new(2, &[32, 32], &mut rng).unwrap();
    let net = train_mlp(net, &data, &schedule, &cfg, &mut rng).unwrap().model;
    let parzen = ParzenScore::new(data.clone());
    let eval = repeated(&data, 500);
    let w = Weighting::SigmaSquared;
    let lp = dsm_loss(&parzen, &eval, &schedule, w, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let ln = dsm_loss(&net, &eval, &schedule, w, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert!(lp <= ln, "parzen {lp} vs network {ln}");
}

#[test]
fn weighted_loss_of_zero_score_is_half_the_dimension_at_every_level() {
    let data = circle(8);
    let eval = repeated(&data, 2000);
    for sigma in [0.01, 0.1, 1.0, 10.0] {
        let schedule = NoiseSchedule::geometric(sigma, sigma * (1.0 - 1e-12), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = dsm_loss(&Zero(2), &eval, &schedule, Weighting::SigmaSquared, &mut rng).unwrap();
        assert!((zero - 1.0).abs() < 0.05, "sigma {sigma}: {zero}");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = dsm_loss(&ParzenScore::new(data.clone()), &eval, &schedule, Weighting::SigmaSquared, &mut rng).unwrap();
        assert!(p <= zero, "sigma {sigma}: parzen {p} vs zero {zero}");
    }
}

#[test]
fn network_learns_single_point_score() {
    let x0 = [0.3, -0.2];
    let data = Dataset::from_points(&[x0]).unwrap();
    let schedule = NoiseSchedule::geometric(1.0, 0.5, 2).unwrap();
    let cfg = DsmConfig {
        iterations: 4000,
        linear_decay: true,
        ..DsmConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = MlpScore::new(2, &[32, 32], &mut rng).unwrap();
    let net = train_mlp(net, &data, &schedule, &cfg, &mut rng).unwrap().model;
    let at = net.score(&x0, 1.0).unwrap();
    let norm = at.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 0.05, "score norm at the point {norm}");

    let parzen = ParzenScore::new(data);
    let mut se = 0.0;
    let mut n = 0;
    for i in -2..=2 {
        for j in -2..=2 {
            let x = [x0[0] + 0.5 * i as f64, x0[1] + 0.5 * j as f64];
            let a = net.score(&x, 1.0).unwrap();
            let b = parzen.score(&x, 1.0).unwrap();
            se += a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
            n += 2;
        }
    }
    let rmse = (se / n as f64).sqrt();
    assert!(rmse <= 0.1, "rmse {rmse}");
}

#[test]
fn execution_strategy_does_not_change_results() {
    let train = constant_colors(3, 4, GrayOp::Luma, 0.5, 0).unwrap();
    let stacks: Vec<Vec<f64>> = train.iter().map(|f| stack(&f.image).unwrap().into_vec()).collect();
    let model = ParzenScore::new(Dataset::from_points(&stacks).unwrap());
    let cfg = SamplerConfig {
        gray_op: GrayOp::Luma,
        steps_per_level: 20,
        seed: 4,
        ..SamplerConfig::default()
    };
    let schedule = cfg.schedule().unwrap();
    let y = imaging::to_gray(&train[1].image, GrayOp::Luma).unwrap();
    let seq = colorize_stacks(&y, &model, &cfg, &schedule, 4, Exec::Sequential).unwrap();
    let par = colorize_stacks(&y, &model, &cfg, &schedule, 4, Exec::Parallel).unwrap();
    assert_eq!(seq, par);

    let data = circle(6);
    let sched = NoiseSchedule::geometric(1.0, 0.1, 3).unwrap();
    let run = |exec| {
        let mut rng = chain_rng(8);
        let net = MlpScore::new(2, &[16], &mut rng).unwrap();
        let cfg = DsmConfig {
            iterations: 50,
            exec,
            ..DsmConfig::default()
        };
        train_mlp(net, &data, &sched, &cfg, &mut rng).unwrap()
    };
    let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
    assert_eq!(a.model, b.model);
    assert_eq!(a.losses, b.losses);
}
