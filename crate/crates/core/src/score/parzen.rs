//! Exact score of a Gaussian-smoothed empirical distribution.
//!
//! For data points `X_1..X_N` the smoothed density is
//! `q(x) = (1/N) sum_j N(x; X_j, sigma^2 I)` and its score is
//! `sum_j w_j (X_j - x) / sigma^2` with `w = softmax(-|x - X_j|^2 / (2 sigma^2))`.
//! This is the minimizer of the denoising score matching objective on the
//! same data.

use crate::error::{Error, Result};
use crate::exec::Exec;

use super::{check_args, ScoreModel};

/// `N` flat vectors of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "dataset of {} values cannot hold dimension-{dim} points",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset value".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| Error::invalid("dataset is empty"))?;
        if let Some(bad) = points.iter().find(|p| p.as_ref().len() != dim) {
            return Err(Error::shape(format!(
                "dataset points have dimensions {dim} and {}",
                bad.as_ref().len()
            )));
        }
        Self::new(dim, points.iter().flat_map(|p| p.as_ref().iter().copied()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParzenScore {
    data: Dataset,
}

// Below this many multiply-adds the distance pass stays on the calling thread.
const PARALLEL_WORK: usize = 1 << 16;

impl ParzenScore {
    pub fn new(data: Dataset) -> Self {
        Self { data }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn logits(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let inv = -0.5 / (sigma * sigma);
        let dist = |j: usize| {
            let d2: f64 = self
                .data
                .point(j)
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2 * inv
        };
        let exec = if self.data.as_slice().len() >= PARALLEL_WORK {
            Exec::default()
        } else {
            Exec::Sequential
        };
        exec.map(self.data.len(), dist)
    }
}

impl ScoreModel for ParzenScore {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        check_args(self.dim(), x, sigma, out)?;
        let logits = self.logits(x, sigma);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("Parzen log-weights".into()));
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut total = 0.0;
        for (p, &l) in self.data.points().zip(&logits) {
            let w = (l - max).exp();
            total += w;
            for (o, &v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        let s2 = sigma * sigma;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = (*o / total - xi) / s2;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // independent route: log of the smoothed density, differentiated numerically
    fn log_density(data: &Dataset, x: &[f64], sigma: f64) -> f64 {
        let terms: Vec<f64> = data
            .points()
            .map(|p| -p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * sigma * sigma))
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + (terms.iter().map(|t| (t - m).exp()).sum::<f64>() / data.len() as f64).ln()
    }

    #[test]
    fn single_point_closed_form() {
        let m = ParzenScore::new(Dataset::new(3, vec![0.0; 3]).unwrap());
        assert_eq!(m.score(&[1.0, 0.0, 0.0], 1.0).unwrap(), vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_pair_cancels() {
        let m = ParzenScore::new(Dataset::from_points(&[[0.3, -0.7], [-0.3, 0.7]]).unwrap());
        let s = m.score(&[0.0, 0.0], 0.4).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn errors() {
        let m = ParzenScore::new(Dataset::new(2, vec![0.0; 4]).unwrap());
        assert!(matches!(m.score(&[0.0, 0.0], 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(m.score(&[0.0, 0.0], -1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(m.score(&[0.0], 1.0), Err(Error::ShapeMismatch(_))));
        assert!(Dataset::new(2, vec![]).is_err());
        assert!(Dataset::from_points(&[vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = Dataset::new(5, (0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
        let m = ParzenScore::new(data.clone());
        let h = 1e-5;
        for sigma in [1.0, 0.1, 0.01] {
            for _ in 0..10 {
                let j = rng.random_range(0..data.len());
                let x: Vec<f64> = data.point(j).iter().map(|v| v + sigma * (rng.random::<f64>() - 0.5)).collect();
                let s = m.score(&x, sigma).unwrap();
                for k in 0..5 {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (log_density(&data, &xp, sigma) - log_density(&data, &xm, sigma)) / (2.0 * h);
                    assert!((fd - s[k]).abs() <= 1e-6, "sigma {sigma}: {fd} vs {}", s[k]);
                }
            }
        }
    }

    #[test]
    fn large_sigma_points_to_data_mean() {
        let data = Dataset::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.7, 0.9]]).unwrap();
        let diameter = 2f64.sqrt();
        let sigma = 1e3 * diameter;
        let m = ParzenScore::new(data.clone());
        let x = [0.4, -0.2];
        let s = m.score(&x, sigma).unwrap();
        let mean = data.mean();
        let err: f64 = s
            .iter()
            .zip(&mean)
            .zip(&x)
            .map(|((s, m), x)| (sigma * sigma * s - (m - x)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn far_probe_stays_finite() {
        let m = ParzenScore::new(Dataset::from_points(&[[0.0], [1.0]]).unwrap());
        let s = m.score(&[500.0], 0.01).unwrap();
        assert!((s[0] - (1.0 - 500.0) / 1e-4).abs() < 1e-6);
    }
}
