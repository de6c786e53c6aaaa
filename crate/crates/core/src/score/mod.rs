//! Score models: maps `(x, sigma)` to an estimate of `grad log q_sigma(x)`.

mod dsm;
mod io;
mod mlp;
mod parzen;

pub use dsm::{dsm_loss, dsm_term, train_mlp, DsmConfig, TrainOutcome, Weighting};
pub use io::{decode_model, encode_model, load_model, save_model, AnyModel, Resolution, StoredModel};
pub use mlp::MlpScore;
pub use parzen::{Dataset, ParzenScore};

use crate::error::{Error, Result};

pub trait ScoreModel: Send + Sync {
    /// Length of the flat vectors the model accepts.
    fn dim(&self) -> usize;

    /// Writes the score at `x` for noise level `sigma` into `out`.
    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()>;

    fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, sigma, &mut out)?;
        Ok(out)
    }
}

pub(crate) fn check_args(dim: usize, x: &[f64], sigma: f64, out: &[f64]) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if x.len() != dim || out.len() != dim {
        return Err(Error::shape(format!(
            "score model of dimension {dim} given input {} / output {}",
            x.len(),
            out.len()
        )));
    }
    Ok(())
}

/// Score of an isotropic Gaussian `N(mean, var * I)`, independent of `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScore {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl GaussianScore {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::invalid(format!("variance must be positive, got {var}")));
        }
        Ok(Self { mean, var })
    }
}

impl ScoreModel for GaussianScore {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        check_args(self.dim(), x, sigma, out)?;
        for ((o, &xi), &m) in out.iter_mut().zip(x).zip(&self.mean) {
            *o = -(xi - m) / self.var;
        }
        Ok(())
    }
}

impl<T: ScoreModel + ?Sized> ScoreModel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        (**self).score_into(x, sigma, out)
    }
}

impl<T: ScoreModel + ?Sized> ScoreModel for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        (**self).score_into(x, sigma, out)
    }
}
