//! Wavelet-domain score-based colorization.
//!
//! An RGB image is mapped to a 12-channel Haar stack ([`wavelet`]); a score
//! model ([`score`]) estimates the gradient of the log density of such stacks
//! under Gaussian smoothing; annealed Langevin dynamics ([`sampler`]) draws
//! stacks whose gray projection agrees with an observed grayscale, and the
//! inverse transform turns them back into color images.

mod codec;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod imaging;
pub mod metrics;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod wavelet;

pub use error::{Error, ErrorKind, Result};
pub use exec::Exec;
pub use imaging::{GrayOp, Image};
pub use schedule::NoiseSchedule;
pub use score::ScoreModel;
pub use wavelet::{WaveletBands, WaveletStack};
