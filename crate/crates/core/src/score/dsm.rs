//! Multi-level denoising score matching and Adam training of [`MlpScore`].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::schedule::NoiseSchedule;

use super::{Dataset, MlpScore, ScoreModel};

/// Per-level loss weight `lambda(sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `lambda = sigma^2`; the summand becomes `1/2 |sigma S + z|^2`.
    #[default]
    SigmaSquared,
    Unit,
}

impl Weighting {
    pub fn lambda(self, sigma: f64) -> f64 {
        match self {
            Weighting::SigmaSquared => sigma * sigma,
            Weighting::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsmConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weighting: Weighting,
    /// Linearly anneal the learning rate to zero over the run.
    pub linear_decay: bool,
    pub exec: Exec,
}

impl Default for DsmConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            iterations: 5000,
            learning_rate: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weighting: Weighting::SigmaSquared,
            linear_decay: false,
            exec: Exec::default(),
        }
    }
}

impl DsmConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

/// One denoising pair: `lambda(sigma)/2 * |S(x~, sigma) + (x~ - x)/sigma^2|^2`.
pub fn dsm_term<M: ScoreModel + ?Sized>(
    model: &M,
    clean: &[f64],
    noisy: &[f64],
    sigma: f64,
    weighting: Weighting,
) -> Result<f64> {
    let s = model.score(noisy, sigma)?;
    if clean.len() != s.len() {
        return Err(Error::shape("clean and noisy vectors differ in length"));
    }
    let s2 = sigma * sigma;
    let sq: f64 = s
        .iter()
        .zip(noisy.iter().zip(clean))
        .map(|(si, (n, c))| (si + (n - c) / s2).powi(2))
        .sum();
    Ok(0.5 * weighting.lambda(sigma) * sq)
}

/// Stochastic estimate of the multi-level objective over `batch`: each point
/// gets a level drawn uniformly from `schedule` and a Gaussian perturbation.
pub fn dsm_loss<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    batch: &Dataset,
    schedule: &NoiseSchedule,
    weighting: Weighting,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for x in batch.points() {
        let sigma = schedule.sigmas()[rng.random_range(0..schedule.len())];
        let noisy: Vec<f64> = x
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + sigma * z
            })
            .collect();
        total += dsm_term(model, x, &noisy, sigma, weighting)?;
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpScore,
    /// Mean batch loss at every iteration.
    pub losses: Vec<f64>,
}

// Samples per gradient work item; partial sums are reduced in chunk order.
const GRAD_CHUNK: usize = 8;

/// Adam on the multi-level DSM objective. All randomness is drawn from
/// `rng` on the calling thread, so the result does not depend on `exec`.
pub fn train_mlp<R: Rng + ?Sized>(
    model: MlpScore,
    data: &Dataset,
    schedule: &NoiseSchedule,
    config: &DsmConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if data.dim() != model.dim() {
        return Err(Error::shape(format!(
            "model dimension {} vs data dimension {}",
            model.dim(),
            data.dim()
        )));
    }
    let mut model = model;
    let n_params = model.n_params();
    let (b, dim) = (config.batch_size, data.dim());
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut losses = Vec::with_capacity(config.iterations);
    let mut picks = vec![(0usize, 0.0f64); b];
    let mut noise = vec![0.0; b * dim];

    for it in 0..config.iterations {
        for (p, z) in picks.iter_mut().zip(noise.chunks_exact_mut(dim)) {
            let idx = rng.random_range(0..data.len());
            let sigma = schedule.sigmas()[rng.random_range(0..schedule.len())];
            *p = (idx, sigma);
            z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        }

        let n_chunks = b.div_ceil(GRAD_CHUNK);
        let net = &model;
        let parts = config.exec.map(n_chunks, |c| {
            let mut grad = vec![0.0; n_params];
            let mut acts = Vec::new();
            let mut loss = 0.0;
            for k in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(b) {
                let (idx, sigma) = picks[k];
                loss += net.accumulate_dsm_grad(
                    data.point(idx),
                    &noise[k * dim..(k + 1) * dim],
                    sigma,
                    config.weighting.lambda(sigma),
                    &mut grad,
                    &mut acts,
                );
            }
            (grad, loss)
        });
        let mut grad = vec![0.0; n_params];
        let mut loss = 0.0;
        for (g, l) in &parts {
            for (a, v) in grad.iter_mut().zip(g) {
                *a += v;
            }
            loss += l;
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: it, loss });
        }
        losses.push(loss);

        let t = (it + 1) as i32;
        let lr = if config.linear_decay {
            config.learning_rate * (1.0 - it as f64 / config.iterations as f64)
        } else {
            config.learning_rate
        };
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        let inv_b = 1.0 / b as f64;
        for (((p, g), m), v) in model
            .params_mut()
            .iter_mut()
            .zip(&grad)
            .zip(&mut m1)
            .zip(&mut m2)
        {
            let g = g * inv_b;
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + config.epsilon);
        }
    }
    Ok(TrainOutcome { model, losses })
}
