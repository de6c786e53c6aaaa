//! Fully connected noise-conditioned score network.
//!
//! Input is `[x, ln sigma]`, hidden layers use `tanh`, the output layer is
//! linear and its result is divided by `sigma`, so the network itself
//! predicts `sigma * score`, a quantity of order one at every noise level.
//! Parameters live in one flat buffer: per layer the `out x in` weight
//! matrix (row-major) followed by the `out` biases.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::{check_args, ScoreModel};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpScore {
    widths: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl MlpScore {
    /// Network for `dim`-vectors with the given hidden widths; weights are
    /// drawn from `N(0, 1/fan_in)`, biases start at zero.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(dim + 1);
        widths.extend_from_slice(hidden);
        widths.push(dim);
        let mut params = Vec::with_capacity(param_count(&widths));
        for w in widths.windows(2) {
            let scale = (1.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(rng);
                params.push(scale * z);
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self { widths, params })
    }

    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        if widths[0] != widths[widths.len() - 1] + 1 {
            return Err(Error::invalid(format!(
                "input width must be output width + 1 (got {widths:?})"
            )));
        }
        if params.len() != param_count(&widths) {
            return Err(Error::shape(format!(
                "{} parameters for widths {widths:?} (need {})",
                params.len(),
                param_count(&widths)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameter".into()));
        }
        Ok(Self { widths, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Runs the network; `acts[l]` receives the input of layer `l` and the
    /// last entry the raw (unscaled) output.
    fn forward(&self, x: &[f64], sigma: f64, acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.widths.len(), Vec::new);
        let input = &mut acts[0];
        input.clear();
        input.extend_from_slice(x);
        input.push(sigma.ln());
        let mut off = 0;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w, rest) = self.params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            off += n_out * (n_in + 1);
            let (head, tail) = acts.split_at_mut(l + 1);
            let (a_in, a_out) = (&head[l], &mut tail[0]);
            a_out.clear();
            let last = l + 1 == self.layers();
            for (row, &bias) in w.chunks_exact(n_in).zip(b) {
                let pre: f64 = bias + row.iter().zip(a_in).map(|(p, q)| p * q).sum::<f64>();
                a_out.push(if last { pre } else { pre.tanh() });
            }
        }
    }

    /// Adds `d loss / d params` to `grad` for one denoising pair and returns
    /// that pair's loss `lambda/2 * |S(x + sigma z) + z / sigma|^2`.
    pub(crate) fn accumulate_dsm_grad(
        &self,
        x: &[f64],
        z: &[f64],
        sigma: f64,
        lambda: f64,
        grad: &mut [f64],
        acts: &mut Vec<Vec<f64>>,
    ) -> f64 {
        let noisy: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + sigma * b).collect();
        self.forward(&noisy, sigma, acts);
        let out = &acts[self.layers()];
        // residual r = out/sigma + z/sigma; loss = lambda/2 |r|^2
        let mut g: Vec<f64> = out.iter().zip(z).map(|(o, zi)| (o + zi) / sigma).collect();
        let loss = 0.5 * lambda * g.iter().map(|r| r * r).sum::<f64>();
        g.iter_mut().for_each(|r| *r *= lambda / sigma);
        self.backward(acts, g, grad);
        loss
    }

    fn backward(&self, acts: &[Vec<f64>], mut g: Vec<f64>, grad: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers());
        let mut off = 0;
        for l in 0..self.layers() {
            offsets.push(off);
            off += self.widths[l + 1] * (self.widths[l] + 1);
        }
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            if l + 1 != self.layers() {
                for (gi, a) in g.iter_mut().zip(&acts[l + 1]) {
                    *gi *= 1.0 - a * a;
                }
            }
            let off = offsets[l];
            let w = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grad[off..off + n_out * (n_in + 1)].split_at_mut(n_in * n_out);
            for (o, &go) in g.iter().enumerate() {
                gb[o] += go;
                for (gwi, &a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(&acts[l]) {
                    *gwi += go * a;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; n_in];
                for (o, &go) in g.iter().enumerate() {
                    for (nx, &wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *nx += go * wi;
                    }
                }
                g = next;
            }
        }
    }
}

impl ScoreModel for MlpScore {
    fn dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        check_args(self.dim(), x, sigma, out)?;
        let mut acts = Vec::new();
        self.forward(x, sigma, &mut acts);
        for (o, &v) in out.iter_mut().zip(&acts[self.layers()]) {
            *o = v / sigma;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(())
    }
}
