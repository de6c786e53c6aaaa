//! Annealed Langevin sampling of wavelet stacks, optionally steered by data
//! consistency (DC) with an observed grayscale and structure consistency (SC)
//! of the detail-band means.
//!
//! One run:
//!
//! 1. `X ~ U(-1, 1)` elementwise.
//! 2. For each level `i`: `alpha_i = eps * sigma_i^2 / sigma_L^2`, then `T`
//!    steps of `X += alpha_i/2 * S(X, sigma_i) - w1 * DC(X) + sqrt(alpha_i) z`.
//! 3. After the inner loop of every level, shift each detail channel so its
//!    mean moves toward the matching gray band mean (weight `w2`).
//!
//! Chains are sequential; independent chains (samples, images) fan out over
//! [`Exec`] with per-chain seeds `seed + k`.

mod config;

pub use config::{ConfigFile, DcBroadcast, SamplerConfig, W1Rule};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imaging::{clamp, GrayOp, Image};
use crate::schedule::{step_size, NoiseSchedule};
use crate::score::ScoreModel;
use crate::wavelet::{gray_wavelet, unstack, Band, WaveletBands, WaveletStack};

/// Random generator used by every chain: ChaCha8 seeded from a `u64`.
/// Normal variates come from `rand_distr::StandardNormal` (ziggurat).
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The observation a colorization is conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct DcContext {
    pub gray_bands: WaveletBands,
    pub op: GrayOp,
    pub broadcast: DcBroadcast,
}

impl DcContext {
    pub fn new(gray_bands: WaveletBands, op: GrayOp, broadcast: DcBroadcast) -> Self {
        Self {
            gray_bands,
            op,
            broadcast,
        }
    }

    /// Context for a grayscale image `y`: its Haar bands `W(y)`.
    pub fn from_gray(y: &Image, op: GrayOp, broadcast: DcBroadcast) -> Result<Self> {
        Ok(Self::new(gray_wavelet(y)?, op, broadcast))
    }

    fn check(&self, x: &WaveletStack) -> Result<()> {
        if self.gray_bands.rows() != x.rows() || self.gray_bands.cols() != x.cols() {
            return Err(Error::shape(format!(
                "gray bands are {}x{} but the stack is {}x{}",
                self.gray_bands.rows(),
                self.gray_bands.cols(),
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// Data-consistency residual spread back over the 12 channels.
///
/// Per band `b` the residual field is `r_b = sum_c w_c X_{c,b} - W(y)_b`.
/// With [`DcBroadcast::Adjoint`] channel `(c, b)` receives `w_c * r_b`, the
/// gradient of `1/2 |F(X) - W(y)|^2`; with [`DcBroadcast::Replicate`] it
/// receives `r_b` unchanged.
pub fn dc_residual(x: &WaveletStack, ctx: &DcContext) -> Result<WaveletStack> {
    ctx.check(x)?;
    let mut out = WaveletStack::zeros(x.rows(), x.cols());
    dc_residual_into(x, ctx, &mut out);
    Ok(out)
}

fn dc_residual_into(x: &WaveletStack, ctx: &DcContext, out: &mut WaveletStack) {
    let w = ctx.op.weights();
    let n = x.channel_len();
    let mut r = vec![0.0; n];
    for b in Band::ALL {
        r.copy_from_slice(&ctx.gray_bands.band(b).data);
        r.iter_mut().for_each(|v| *v = -*v);
        for (c, &wc) in w.iter().enumerate() {
            for (ri, &xi) in r.iter_mut().zip(x.band(c, b)) {
                *ri += wc * xi;
            }
        }
        for (c, &wc) in w.iter().enumerate() {
            let scale = match ctx.broadcast {
                DcBroadcast::Adjoint => wc,
                DcBroadcast::Replicate => 1.0,
            };
            let dst = out.channel_mut(WaveletStack::index(c, b));
            for (d, &ri) in dst.iter_mut().zip(&r) {
                *d = scale * ri;
            }
        }
    }
}

/// Structure consistency: each detail channel `(c, b)` is shifted by
/// `-w2 * (mean(X_{c,b}) - mean(W(y)_b))`. Approximation channels are
/// left untouched.
pub fn sc_apply(x: &WaveletStack, gray_bands: &WaveletBands, w2: f64) -> Result<WaveletStack> {
    let mut out = x.clone();
    sc_apply_in_place(&mut out, gray_bands, w2)?;
    Ok(out)
}

pub fn sc_apply_in_place(x: &mut WaveletStack, gray_bands: &WaveletBands, w2: f64) -> Result<()> {
    if gray_bands.rows() != x.rows() || gray_bands.cols() != x.cols() {
        return Err(Error::shape("gray bands and stack differ in size"));
    }
    for b in Band::DETAIL {
        let target = gray_bands.band(b).mean();
        for c in 0..3 {
            let ch = x.channel_mut(WaveletStack::index(c, b));
            let mean = ch.iter().sum::<f64>() / ch.len() as f64;
            let shift = w2 * (mean - target);
            ch.iter_mut().for_each(|v| *v -= shift);
        }
    }
    Ok(())
}

/// Scratch buffers reused across steps of one chain.
struct StepBuffers {
    score: Vec<f64>,
    dc: WaveletStack,
}

impl StepBuffers {
    fn new(x: &WaveletStack) -> Self {
        Self {
            score: vec![0.0; x.len()],
            dc: WaveletStack::zeros(x.rows(), x.cols()),
        }
    }
}

/// One Langevin update
/// `X += alpha/2 * S(X, sigma) - w1 * DC(X) + sqrt(alpha) * z`.
/// The DC term is dropped when `dc` is `None`.
pub fn langevin_step<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    x: &mut WaveletStack,
    sigma: f64,
    alpha: f64,
    model: &M,
    dc: Option<(&DcContext, f64)>,
    rng: &mut R,
) -> Result<()> {
    if let Some((ctx, _)) = dc {
        ctx.check(x)?;
    }
    let mut buf = StepBuffers::new(x);
    step(x, sigma, alpha, model, dc, rng, &mut buf)
}

fn step<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    x: &mut WaveletStack,
    sigma: f64,
    alpha: f64,
    model: &M,
    dc: Option<(&DcContext, f64)>,
    rng: &mut R,
    buf: &mut StepBuffers,
) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {alpha}")));
    }
    model.score_into(x.as_slice(), sigma, &mut buf.score)?;
    if buf.score.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("score output at sigma = {sigma}")));
    }
    let w1 = match dc {
        Some((ctx, w1)) => {
            dc_residual_into(x, ctx, &mut buf.dc);
            w1
        }
        None => 0.0,
    };
    let half = 0.5 * alpha;
    let noise = alpha.sqrt();
    for ((xi, &si), &di) in x
        .as_mut_slice()
        .iter_mut()
        .zip(&buf.score)
        .zip(buf.dc.as_slice())
    {
        let z: f64 = StandardNormal.sample(rng);
        *xi += half * si - w1 * di + noise * z;
    }
    Ok(())
}

/// Full annealed run for a `12 x rows x cols` stack. With a context, DC
/// enters every step and SC runs after every level; without one both are
/// skipped.
pub fn anneal_sample<M: ScoreModel + ?Sized>(
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    model: &M,
    ctx: Option<&DcContext>,
    rows: usize,
    cols: usize,
) -> Result<WaveletStack> {
    config.validate()?;
    let mut x = WaveletStack::zeros(rows, cols);
    if model.dim() != x.len() {
        return Err(Error::shape(format!(
            "model expects {} values but a 12x{rows}x{cols} stack has {}",
            model.dim(),
            x.len()
        )));
    }
    if let Some(ctx) = ctx {
        ctx.check(&x)?;
    }
    let mut rng = chain_rng(config.seed);
    x.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    let mut buf = StepBuffers::new(&x);
    let sigma_last = schedule.last();
    for &sigma in schedule.sigmas() {
        let alpha = step_size(config.epsilon, sigma, sigma_last)?;
        let dc = ctx.map(|c| (c, config.w1.weight(alpha, sigma)));
        for _ in 0..config.steps_per_level {
            step(&mut x, sigma, alpha, model, dc, &mut rng, &mut buf)?;
        }
        if let Some(ctx) = ctx {
            sc_apply_in_place(&mut x, &ctx.gray_bands, config.w2)?;
        }
    }
    Ok(x)
}

fn check_model_fits<M: ScoreModel + ?Sized>(model: &M, rows: usize, cols: usize) -> Result<()> {
    let need = crate::wavelet::STACK_CHANNELS * (rows / 2) * (cols / 2);
    if model.dim() != need {
        return Err(Error::shape(format!(
            "model resolution does not match a {rows}x{cols} image (model dimension {}, need {need})",
            model.dim()
        )));
    }
    Ok(())
}

/// Colorizes `y` `n_samples` times (chain `k` seeded with `seed + k`) and
/// returns the stacks before inversion alongside the clamped RGB images.
pub fn colorize_stacks<M: ScoreModel + ?Sized>(
    y: &Image,
    model: &M,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    n_samples: usize,
    exec: Exec,
) -> Result<Vec<(WaveletStack, Image)>> {
    if y.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            got: y.channels(),
        });
    }
    let ctx = DcContext::from_gray(y, config.gray_op, config.dc_broadcast)?;
    check_model_fits(model, y.rows(), y.cols())?;
    exec.try_map(n_samples, |k| {
        let cfg = config.with_seed(config.seed.wrapping_add(k as u64));
        let x = anneal_sample(&cfg, schedule, model, Some(&ctx), y.rows() / 2, y.cols() / 2)?;
        let img = clamp(&unstack(&x)?, 0.0, 1.0)?;
        Ok((x, img))
    })
}

/// Colorizations of the grayscale `y`, clamped to `[0, 1]`.
pub fn colorize<M: ScoreModel + ?Sized>(
    y: &Image,
    model: &M,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    n_samples: usize,
) -> Result<Vec<Image>> {
    Ok(colorize_stacks(y, model, config, schedule, n_samples, Exec::default())?
        .into_iter()
        .map(|(_, img)| img)
        .collect())
}

/// Unconditional samples of `rows x cols` RGB images.
pub fn sample_images<M: ScoreModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    schedule: &NoiseSchedule,
    n_samples: usize,
    rows: usize,
    cols: usize,
    exec: Exec,
) -> Result<Vec<Image>> {
    if !rows.is_multiple_of(2) || !cols.is_multiple_of(2) {
        return Err(Error::OddDimensions { rows, cols });
    }
    check_model_fits(model, rows, cols)?;
    exec.try_map(n_samples, |k| {
        let cfg = config.with_seed(config.seed.wrapping_add(k as u64));
        let x = anneal_sample(&cfg, schedule, model, None, rows / 2, cols / 2)?;
        clamp(&unstack(&x)?, 0.0, 1.0)
    })
}

/// Largest `|F(x) - y|` over all pixels.
pub fn max_gray_residual(x: &Image, y: &Image, op: GrayOp) -> Result<f64> {
    let g = crate::imaging::to_gray(x, op)?;
    if !g.same_shape(y) {
        return Err(Error::shape("colorization and grayscale differ in size"));
    }
    Ok(g.data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
