//! Small synthetic image sets used for desk-scale training and checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{GrayOp, Image};

/// An image and the colors it was painted with.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureImage {
    pub image: Image,
    pub colors: Vec<[f64; 3]>,
}

/// A random color `c` with `op(c) = gray`, as saturated as the unit cube
/// allows along a random chroma direction, scaled by `saturation`.
fn color_with_gray<R: Rng>(gray: f64, op: GrayOp, saturation: f64, rng: &mut R) -> [f64; 3] {
    let w = op.weights();
    let wsum: f64 = w.iter().sum();
    let base = gray / wsum;
    loop {
        let r: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let t = (w[0] * r[0] + w[1] * r[1] + w[2] * r[2]) / wsum;
        let d: [f64; 3] = std::array::from_fn(|i| r[i] - t);
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        let mut s = f64::INFINITY;
        for &di in &d {
            if di > 0.0 {
                s = s.min((1.0 - base) / di);
            } else if di < 0.0 {
                s = s.min(-base / di);
            }
        }
        return std::array::from_fn(|i| base + saturation * s * d[i]);
    }
}

fn check_saturation(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!("saturation must lie in [0, 1], got {s}")));
    }
    Ok(())
}

/// `k` constant-color images whose gray levels are evenly spaced in
/// `[0.15, 0.85]`. `saturation` in `[0, 1]` scales the chroma from gray
/// (0) to the edge of the unit cube (1).
pub fn constant_colors(k: usize, size: usize, op: GrayOp, saturation: f64, seed: u64) -> Result<Vec<FixtureImage>> {
    check_saturation(saturation)?;
    if k == 0 {
        return Err(Error::invalid("need at least one image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| {
            let gray = if k == 1 {
                0.5
            } else {
                0.15 + 0.7 * i as f64 / (k - 1) as f64
            };
            let c = color_with_gray(gray, op, saturation, &mut rng);
            Ok(FixtureImage {
                image: Image::solid_rgb(size, size, c)?,
                colors: vec![c],
            })
        })
        .collect()
}

/// Two-tone texture masks. Both alternate their phase from one 2x2 block to
/// the next, so every Haar detail band averages to zero over the image.
fn texture_mask(kind: usize, size: usize) -> Vec<bool> {
    (0..size * size)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            let block = (r / 2 + c / 2) % 2 == 1;
            let cell = match kind % 2 {
                0 => (r + c) % 2 == 1,
                _ => c % 2 == 1,
            };
            cell ^ block
        })
        .collect()
}

/// `k` textured images, each painted with two random colors of distinct
/// gray level.
pub fn two_tone(k: usize, size: usize, op: GrayOp, saturation: f64, seed: u64) -> Result<Vec<FixtureImage>> {
    check_saturation(saturation)?;
    if k == 0 {
        return Err(Error::invalid("need at least one image"));
    }
    if !size.is_multiple_of(2) {
        return Err(Error::OddDimensions { rows: size, cols: size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| {
            let g0 = rng.random_range(0.2..0.45);
            let g1 = rng.random_range(0.55..0.8);
            let a = color_with_gray(g0, op, saturation, &mut rng);
            let b = color_with_gray(g1, op, saturation, &mut rng);
            let mask = texture_mask(i, size);
            let n = size * size;
            let mut data = vec![0.0; 3 * n];
            for (p, &m) in mask.iter().enumerate() {
                let c = if m { b } else { a };
                for ch in 0..3 {
                    data[ch * n + p] = c[ch];
                }
            }
            Ok(FixtureImage {
                image: Image::new(3, size, size, data)?,
                colors: vec![a, b],
            })
        })
        .collect()
}

/// Two constant images whose colors differ but share one gray level under
/// `op`. Under `Mean` these are `(0.9, 0.3, 0.3)` and `(0.3, 0.9, 0.3)`.
pub fn metamer_pair(size: usize, op: GrayOp) -> Result<Vec<FixtureImage>> {
    let w = op.weights();
    let first = [0.9, 0.3, 0.3];
    // move along (-w_G, w_R, 0), which keeps the gray level fixed
    let t = 0.6 / w[1];
    let second = [first[0] - t * w[1], first[1] + t * w[0], first[2]];
    [first, second]
        .into_iter()
        .map(|c| {
            Ok(FixtureImage {
                image: Image::solid_rgb(size, size, c)?,
                colors: vec![c],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{stack, Band, WaveletStack};

    #[test]
    fn constant_colors_have_distinct_requested_grays() {
        for op in [GrayOp::Mean, GrayOp::Luma] {
            let set = constant_colors(8, 8, op, 0.9, 3).unwrap();
            assert_eq!(set.len(), 8);
            for (i, f) in set.iter().enumerate() {
                let c = f.colors[0];
                assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!((op.apply(c) - (0.15 + 0.1 * i as f64)).abs() < 1e-12);
            }
        }
        assert_eq!(constant_colors(8, 8, GrayOp::Mean, 0.9, 3).unwrap(), constant_colors(8, 8, GrayOp::Mean, 0.9, 3).unwrap());
    }

    #[test]
    fn zero_saturation_gives_grays() {
        for f in constant_colors(4, 4, GrayOp::Luma, 0.0, 9).unwrap() {
            let c = f.colors[0];
            assert!((c[0] - c[1]).abs() < 1e-12 && (c[1] - c[2]).abs() < 1e-12);
        }
        assert!(constant_colors(4, 4, GrayOp::Mean, 1.5, 0).is_err());
    }

    #[test]
    fn metamers_share_gray() {
        let m = metamer_pair(4, GrayOp::Mean).unwrap();
        let (a, b) = (m[0].colors[0], m[1].colors[0]);
        assert!((a[1] - 0.3).abs() < 1e-12 && (b[0] - 0.3).abs() < 1e-12 && (b[1] - 0.9).abs() < 1e-12);
        assert!((GrayOp::Mean.apply(a) - 0.5).abs() < 1e-12);
        assert!((GrayOp::Mean.apply(b) - 0.5).abs() < 1e-12);
        let m = metamer_pair(4, GrayOp::Luma).unwrap();
        assert!((GrayOp::Luma.apply(m[0].colors[0]) - GrayOp::Luma.apply(m[1].colors[0])).abs() < 1e-12);
        assert!(m[1].colors[0].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn two_tone_detail_bands_average_to_zero() {
        for f in two_tone(4, 16, GrayOp::Mean, 0.9, 1).unwrap() {
            let x = stack(&f.image).unwrap();
            for c in 0..3 {
                for b in Band::DETAIL {
                    let ch = x.channel(WaveletStack::index(c, b));
                    assert!(ch.iter().sum::<f64>().abs() < 1e-12);
                }
            }
            let textured = (0..3).any(|c| {
                Band::DETAIL
                    .iter()
                    .any(|&b| x.channel(WaveletStack::index(c, b)).iter().any(|v| v.abs() > 0.05))
            });
            assert!(textured);
        }
    }
}
