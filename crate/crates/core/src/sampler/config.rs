use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayOp;
use crate::schedule::NoiseSchedule;

/// How the 4-band DC residual is spread over the 12 stack channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DcBroadcast {
    #[default]
    Adjoint,
    Replicate,
}

impl std::str::FromStr for DcBroadcast {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjoint" => Ok(DcBroadcast::Adjoint),
            "replicate" => Ok(DcBroadcast::Replicate),
            other => Err(Error::invalid(format!("unknown DC broadcast {other:?}"))),
        }
    }
}

/// Weight of the DC term at a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum W1Rule {
    /// `w1 = alpha_i / sigma_i^2`
    StepRatio,
    Fixed(f64),
}

impl W1Rule {
    pub fn weight(self, alpha: f64, sigma: f64) -> f64 {
        match self {
            W1Rule::StepRatio => alpha / (sigma * sigma),
            W1Rule::Fixed(w) => w,
        }
    }
}

/// Everything that determines a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sigma_begin: f64,
    pub sigma_end: f64,
    pub levels: usize,
    pub steps_per_level: usize,
    pub epsilon: f64,
    pub w1: W1Rule,
    pub w2: f64,
    pub seed: u64,
    pub gray_op: GrayOp,
    pub dc_broadcast: DcBroadcast,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sigma_begin: 1.0,
            sigma_end: 0.01,
            levels: 10,
            steps_per_level: 100,
            epsilon: 1.56e-5,
            w1: W1Rule::StepRatio,
            w2: 1.0,
            seed: 0,
            gray_op: GrayOp::Mean,
            dc_broadcast: DcBroadcast::Adjoint,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 || self.steps_per_level < 1 {
            return Err(Error::invalid("levels and steps_per_level must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.w2 >= 0.0 && self.w2.is_finite()) {
            return Err(Error::invalid(format!("w2 must be non-negative, got {}", self.w2)));
        }
        if let W1Rule::Fixed(w) = self.w1 {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("w1 must be non-negative, got {w}")));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::geometric(self.sigma_begin, self.sigma_end, self.levels)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Overlays the keys present in `file`.
    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = file.$field { self.$field = v; })*
            };
        }
        take!(sigma_begin, sigma_end, levels, steps_per_level, epsilon, w2, seed);
        if let Some(w) = file.w1 {
            self.w1 = W1Rule::Fixed(w);
        }
        if let Some(op) = &file.gray_op {
            self.gray_op = op.parse()?;
        }
        if let Some(b) = &file.dc_broadcast {
            self.dc_broadcast = b.parse()?;
        }
        Ok(())
    }
}

/// Flat `key = value` config file (TOML). Absent keys keep their defaults;
/// `w1` absent means `alpha_i / sigma_i^2`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sigma_begin: Option<f64>,
    pub sigma_end: Option<f64>,
    pub levels: Option<usize>,
    pub steps_per_level: Option<usize>,
    pub epsilon: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub seed: Option<u64>,
    pub gray_op: Option<String>,
    pub dc_broadcast: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_settings() {
        let c = SamplerConfig::default();
        assert_eq!((c.sigma_begin, c.sigma_end, c.levels, c.steps_per_level), (1.0, 0.01, 10, 100));
        assert_eq!((c.epsilon, c.w2), (1.56e-5, 1.0));
        assert_eq!(c.w1, W1Rule::StepRatio);
        // alpha_i / sigma_i^2 is eps / sigma_L^2 at every level
        assert!((c.w1.weight(0.156, 1.0) - 0.156).abs() < 1e-15);
    }

    #[test]
    fn config_file_overrides() {
        let f = ConfigFile::parse(
            "sigma_begin = 2.0\nlevels = 4\nseed = 17\ngray_op = \"luma\"\ndc_broadcast = \"replicate\"\nw1 = 0.5\n",
        )
        .unwrap();
        let mut c = SamplerConfig::default();
        c.apply(&f).unwrap();
        assert_eq!(c.sigma_begin, 2.0);
        assert_eq!(c.levels, 4);
        assert_eq!(c.seed, 17);
        assert_eq!(c.gray_op, GrayOp::Luma);
        assert_eq!(c.dc_broadcast, DcBroadcast::Replicate);
        assert_eq!(c.w1, W1Rule::Fixed(0.5));
        assert_eq!(c.sigma_end, 0.01);
    }

    #[test]
    fn config_file_errors() {
        assert!(ConfigFile::parse("nonsense_key = 1").is_err());
        assert!(ConfigFile::parse("levels = \"ten\"").is_err());
        let f = ConfigFile::parse("gray_op = \"sepia\"").unwrap();
        assert!(SamplerConfig::default().apply(&f).is_err());
    }

    #[test]
    fn validation() {
        let bad = SamplerConfig {
            steps_per_level: 0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            w2: -1.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            epsilon: 0.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
