//! PSNR and SSIM over `[0, 1]` images.

use crate::error::{Error, Result};
use crate::imaging::Image;

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.rows(),
            a.cols(),
            b.channels(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Mean squared error over all channels and pixels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// `10 log10(peak^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gy * gx);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM over all valid 11x11 Gaussian-weighted windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1); color images average the
/// per-channel values.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    if a.rows() < SSIM_WINDOW || a.cols() < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let w = gaussian_window();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let (rows, cols) = (a.rows(), a.cols());
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let (pa, pb) = (a.plane(ch), b.plane(ch));
        let mut sum = 0.0;
        let mut count = 0usize;
        for r0 in 0..=rows - SSIM_WINDOW {
            for c0 in 0..=cols - SSIM_WINDOW {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dr in 0..SSIM_WINDOW {
                    let row = (r0 + dr) * cols + c0;
                    let wr = &w[dr * SSIM_WINDOW..(dr + 1) * SSIM_WINDOW];
                    for ((&wk, &x), &y) in wr.iter().zip(&pa[row..row + SSIM_WINDOW]).zip(&pb[row..row + SSIM_WINDOW]) {
                        mx += wk * x;
                        my += wk * y;
                        sxx += wk * x * x;
                        syy += wk * y * y;
                        sxy += wk * (x * y);
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / a.channels() as f64)
}

/// PSNR and SSIM for a set of image pairs plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_image: Vec<(f64, f64)>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl MetricReport {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a Image, &'a Image)>) -> Result<Self> {
        let per_image = pairs
            .into_iter()
            .map(|(a, b)| Ok((psnr(a, b, 1.0)?, ssim(a, b)?)))
            .collect::<Result<Vec<_>>>()?;
        if per_image.is_empty() {
            return Err(Error::invalid("no image pairs"));
        }
        let n = per_image.len() as f64;
        Ok(Self {
            mean_psnr: per_image.iter().map(|p| p.0).sum::<f64>() / n,
            mean_ssim: per_image.iter().map(|p| p.1).sum::<f64>() / n,
            per_image,
        })
    }
}
