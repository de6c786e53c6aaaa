use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use wacm_core::sampler::{ConfigFile, DcBroadcast, SamplerConfig, W1Rule};
use wacm_core::GrayOp;

#[derive(Debug, Parser)]
#[command(name = "wacm", version, about = "Wavelet-domain score-based image colorization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Haar-transform an image into a tensor file
    Dwt(DwtArgs),
    /// Invert a tensor file back into an image
    Idwt(IdwtArgs),
    /// Write a synthetic training set
    MakeDataset(MakeDatasetArgs),
    /// Build a score model from a directory of images
    TrainScore(TrainArgs),
    /// Draw unconditional samples from a score model
    Sample(SampleArgs),
    /// Colorize a grayscale (or degraded color) image
    Colorize(ColorizeArgs),
    /// PSNR and SSIM between reference and candidate images
    Metrics(MetricsArgs),
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct Common {
    /// TOML file with sampler settings; command-line flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for all randomness in the run
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Repeat the run recorded in a manifest (other flags except --out are ignored)
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

impl Common {
    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("--out DIR is required")
    }

    pub fn config_file(&self) -> Result<Option<ConfigFile>> {
        self.config
            .as_ref()
            .map(|p| ConfigFile::load(p).with_context(|| format!("loading config {}", p.display())))
            .transpose()
    }
}

/// Sampler settings; each overrides the config file, which overrides the defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SamplerFlags {
    #[arg(long)]
    pub sigma_begin: Option<f64>,
    #[arg(long)]
    pub sigma_end: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub steps_per_level: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Fixed DC weight; by default alpha_i / sigma_i^2
    #[arg(long)]
    pub w1: Option<f64>,
    /// SC weight
    #[arg(long)]
    pub w2: Option<f64>,
    /// mean, luma or luma-corrected
    #[arg(long)]
    pub gray_op: Option<GrayOp>,
    /// adjoint or replicate
    #[arg(long)]
    pub dc_broadcast: Option<DcBroadcast>,
}

impl SamplerFlags {
    /// Defaults, then the config file, then these flags and `seed`.
    pub fn resolve(&self, common: &Common) -> Result<SamplerConfig> {
        let mut cfg = SamplerConfig::default();
        if let Some(file) = common.config_file()? {
            cfg.apply(&file)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(sigma_begin, sigma_end, levels, steps_per_level, epsilon, w2, gray_op, dc_broadcast);
        if let Some(w) = self.w1 {
            cfg.w1 = W1Rule::Fixed(w);
        }
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flags that pin every setting of `cfg`.
    pub fn pinned(cfg: &SamplerConfig) -> Self {
        Self {
            sigma_begin: Some(cfg.sigma_begin),
            sigma_end: Some(cfg.sigma_end),
            levels: Some(cfg.levels),
            steps_per_level: Some(cfg.steps_per_level),
            epsilon: Some(cfg.epsilon),
            w1: match cfg.w1 {
                W1Rule::StepRatio => None,
                W1Rule::Fixed(w) => Some(w),
            },
            w2: Some(cfg.w2),
            gray_op: Some(cfg.gray_op),
            dc_broadcast: Some(cfg.dc_broadcast),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFormat {
    #[default]
    Pnm,
    Png,
}

impl ImageFormat {
    pub fn extension(self, channels: usize) -> &'static str {
        match (self, channels) {
            (ImageFormat::Png, _) => "png",
            (ImageFormat::Pnm, 1) => "pgm",
            (ImageFormat::Pnm, _) => "ppm",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DwtArgs {
    /// Image to transform (PGM, PPM or PNG)
    #[arg(required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    /// Center-crop to even dimensions instead of failing
    #[arg(long)]
    pub crop_even: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IdwtArgs {
    /// Tensor file written by `dwt`
    #[arg(required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ImageFormat,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Solid images with evenly spaced gray levels
    Constant,
    /// Two-color textures
    TwoTone,
    /// Two solid colors sharing one gray level
    Metamer,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MakeDatasetArgs {
    #[arg(value_enum, required_unless_present = "manifest")]
    pub generator: Option<Generator>,
    /// Number of images (metamer sets always have two)
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Side length in pixels
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    /// Chroma of random colors, from gray (0) to the edge of the RGB cube (1)
    #[arg(long, default_value_t = 0.1)]
    pub saturation: f64,
    #[arg(long)]
    pub gray_op: Option<GrayOp>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Directory of same-sized color images
    #[arg(required_unless_present = "manifest")]
    pub dataset: Option<PathBuf>,
    /// Package the images as an exact Parzen score instead of training an MLP
    #[arg(long)]
    pub parzen: bool,
    /// Hidden layer widths
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.005)]
    pub learning_rate: f64,
    /// Anneal the learning rate linearly to zero
    #[arg(long)]
    pub lr_decay: bool,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Model file written by `train-score`
    #[arg(long, required_unless_present = "manifest")]
    pub model: Option<PathBuf>,
    /// Number of samples
    #[arg(short, long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: ImageFormat,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ColorizeArgs {
    /// Grayscale image, or a color image to degrade with the gray operator
    #[arg(required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub model: Option<PathBuf>,
    /// Number of colorizations
    #[arg(short, long, default_value_t = 1)]
    pub n: usize,
    /// Center-crop to even dimensions instead of failing
    #[arg(long)]
    pub crop_even: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: ImageFormat,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    /// Reference image or directory
    #[arg(required_unless_present = "manifest")]
    pub reference: Option<PathBuf>,
    /// Candidate image or directory (matched to the reference by file name)
    #[arg(required_unless_present = "manifest")]
    pub candidate: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}
