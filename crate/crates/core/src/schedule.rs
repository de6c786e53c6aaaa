//! Geometric noise schedules and the annealed step size.

use crate::error::{Error, Result};

/// Strictly decreasing geometric sequence `sigma_1 > ... > sigma_L > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// `sigma_i = begin * r^(i-1)` with `r = (end / begin)^(1 / (levels - 1))`.
    pub fn geometric(begin: f64, end: f64, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid(format!("need at least 2 noise levels, got {levels}")));
        }
        if !(begin.is_finite() && end.is_finite() && end > 0.0 && begin > end) {
            return Err(Error::invalid(format!(
                "noise levels must satisfy sigma_begin > sigma_end > 0 (got {begin}, {end})"
            )));
        }
        let ratio = (end / begin).powf(1.0 / (levels - 1) as f64);
        let mut sigmas: Vec<f64> = (0..levels).map(|i| begin * ratio.powi(i as i32)).collect();
        // pin the endpoint so sigma_L is exactly what was asked for
        sigmas[levels - 1] = end;
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn last(&self) -> f64 {
        self.sigmas[self.sigmas.len() - 1]
    }

    /// Ratio `sigma_{i+1} / sigma_i` (< 1).
    pub fn ratio(&self) -> f64 {
        self.sigmas[1] / self.sigmas[0]
    }
}

/// Convenience wrapper over [`NoiseSchedule::geometric`].
pub fn make_schedule(begin: f64, end: f64, levels: usize) -> Result<NoiseSchedule> {
    NoiseSchedule::geometric(begin, end, levels)
}

/// Annealed step size `alpha_i = eps * sigma_i^2 / sigma_L^2`.
pub fn step_size(eps: f64, sigma: f64, sigma_last: f64) -> Result<f64> {
    if !(eps > 0.0 && sigma > 0.0 && sigma_last > 0.0) {
        return Err(Error::invalid(format!(
            "step size inputs must be positive (eps={eps}, sigma={sigma}, sigma_L={sigma_last})"
        )));
    }
    Ok(eps * sigma * sigma / (sigma_last * sigma_last))
}
