use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use wacm_core::fixtures::{self, FixtureImage};
use wacm_core::imaging::{dequantize, load_raster, quantize, save_raster, to_gray, write_atomic};
use wacm_core::metrics::{psnr, ssim, SSIM_WINDOW};
use wacm_core::sampler::{self, chain_rng, max_gray_residual, SamplerConfig};
use wacm_core::score::{
    load_model, save_model, train_mlp, AnyModel, Dataset, DsmConfig, MlpScore, ParzenScore, Resolution, StoredModel,
};
use wacm_core::wavelet::{self, load_tensor, save_bands, save_stack, WaveletTensor, STACK_CHANNELS};
use wacm_core::{Exec, GrayOp, Image};

use crate::args::*;
use crate::manifest::{FileRecord, RunManifest};

const MODEL_FILE: &str = "model.bin";
const DATASET_FILE: &str = "dataset.json";

trait Replayable: Serialize + DeserializeOwned {
    const NAME: &'static str;
    fn common(&mut self) -> &mut Common;
}

macro_rules! replayable {
    ($($ty:ty => $name:literal),* $(,)?) => {
        $(impl Replayable for $ty {
            const NAME: &'static str = $name;
            fn common(&mut self) -> &mut Common {
                &mut self.common
            }
        })*
    };
}

replayable!(
    DwtArgs => "dwt",
    IdwtArgs => "idwt",
    MakeDatasetArgs => "make-dataset",
    TrainArgs => "train-score",
    SampleArgs => "sample",
    ColorizeArgs => "colorize",
    MetricsArgs => "metrics",
);

/// With `--manifest`, swaps in the recorded arguments (keeping `--out` if
/// given); otherwise returns `args` unchanged.
fn replay<A: Replayable>(mut args: A) -> Result<A> {
    let Some(path) = args.common().manifest.take() else {
        return Ok(args);
    };
    let out = args.common().out.take();
    let mut recorded: A = RunManifest::load(&path)?.replay_args(A::NAME)?;
    if out.is_some() {
        recorded.common().out = out;
    }
    Ok(recorded)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out_dir()?.to_path_buf();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string())
}

fn is_raster(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["ppm", "pgm", "png"].contains(&e.to_ascii_lowercase().as_str()))
}

fn raster_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    files.retain(|p| p.is_file() && is_raster(p));
    files.sort();
    Ok(files)
}

/// The image exactly as it reads back after an 8-bit save.
fn as_saved(img: &Image) -> Result<Image> {
    Ok(img.map(|v| dequantize(quantize(v)))?)
}

/// Pins sampler settings and seed so the recorded arguments stand alone.
fn pin_sampler(flags: &mut SamplerFlags, common: &mut Common, m: &mut RunManifest, cfg: &SamplerConfig) -> Result<()> {
    if let Some(p) = &common.config {
        m.config_file = Some(FileRecord::of(p)?);
    }
    *flags = SamplerFlags::pinned(cfg);
    common.config = None;
    common.seed = Some(cfg.seed);
    m.seed = Some(cfg.seed);
    m.config = Some(cfg.clone());
    m.schedule = Some(cfg.schedule()?.sigmas().to_vec());
    Ok(())
}

fn load_stack_model(path: &Path) -> Result<StoredModel> {
    let model = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
    if model.resolution.channels != STACK_CHANNELS {
        bail!(
            "model {} was built for {}-channel vectors, not wavelet stacks",
            path.display(),
            model.resolution.channels
        );
    }
    Ok(model)
}

pub fn dwt(args: DwtArgs) -> Result<()> {
    let args = replay(args)?;
    let input = args.input.clone().context("missing input")?;
    let out = out_dir(&args.common)?;
    let mut m = RunManifest::new(DwtArgs::NAME, &args)?;
    m.input(&input)?;
    let mut img = m.timed("load", || load_raster(&input))?;
    if args.crop_even {
        img = img.crop_even()?;
    }
    let path = out.join(format!("{}.wacm", stem(&input)));
    m.timed("transform", || -> Result<()> {
        if img.channels() == 3 {
            save_stack(&wavelet::stack(&img)?, &path)?;
        } else {
            save_bands(&wavelet::gray_wavelet(&img)?, &path)?;
        }
        Ok(())
    })?;
    m.output(&path)?;
    m.results = json!({ "rows": img.rows(), "cols": img.cols(), "channels": img.channels() });
    m.write(&out)?;
    println!("{}", path.display());
    Ok(())
}

pub fn idwt(args: IdwtArgs) -> Result<()> {
    let args = replay(args)?;
    let input = args.input.clone().context("missing input")?;
    let out = out_dir(&args.common)?;
    let mut m = RunManifest::new(IdwtArgs::NAME, &args)?;
    m.input(&input)?;
    let img = m.timed("inverse", || -> Result<Image> {
        Ok(match load_tensor(&input)? {
            WaveletTensor::Stack(x) => wavelet::unstack(&x)?,
            WaveletTensor::Bands(b) => {
                let g = wacm_core::wavelet::idwt2_haar(&b)?;
                Image::new(1, g.rows, g.cols, g.data)?
            }
        })
    })?;
    let path = out.join(format!("{}.{}", stem(&input), args.format.extension(img.channels())));
    save_raster(&img, &path)?;
    m.output(&path)?;
    m.write(&out)?;
    println!("{}", path.display());
    Ok(())
}

pub fn make_dataset(args: MakeDatasetArgs) -> Result<()> {
    let mut args = replay(args)?;
    let generator = args.generator.context("missing generator")?;
    let file = args.common.config_file()?.unwrap_or_default();
    let op = match (args.gray_op, &file.gray_op) {
        (Some(op), _) => op,
        (None, Some(s)) => s.parse()?,
        (None, None) => GrayOp::default(),
    };
    let seed = args.common.seed.or(file.seed).unwrap_or(0);
    args.gray_op = Some(op);
    args.common.seed = Some(seed);
    args.common.config = None;
    let out = out_dir(&args.common)?;
    let mut m = RunManifest::new(MakeDatasetArgs::NAME, &args)?;
    m.seed = Some(seed);

    let (name, set): (&str, Vec<FixtureImage>) = match generator {
        Generator::Constant => ("constant", fixtures::constant_colors(args.count, args.size, op, args.saturation, seed)?),
        Generator::TwoTone => ("two-tone", fixtures::two_tone(args.count, args.size, op, args.saturation, seed)?),
        Generator::Metamer => ("metamer", fixtures::metamer_pair(args.size, op)?),
    };
    let mut listing = Vec::new();
    for (i, f) in set.iter().enumerate() {
        let file = format!("{name}_{i:03}.ppm");
        let path = out.join(&file);
        save_raster(&f.image, &path)?;
        m.output(&path)?;
        listing.push(json!({
            "file": file,
            "colors": f.colors,
            "gray": f.colors.iter().map(|&c| op.apply(c)).collect::<Vec<_>>(),
        }));
    }
    let index = json!({
        "generator": name,
        "gray_op": op,
        "size": args.size,
        "saturation": args.saturation,
        "seed": seed,
        "images": listing,
    });
    let path = out.join(DATASET_FILE);
    write_atomic(&path, format!("{}\n", serde_json::to_string_pretty(&index)?).as_bytes())?;
    m.output(&path)?;
    m.write(&out)?;
    println!("{} images in {}", set.len(), out.display());
    Ok(())
}

/// Loads every image in `dir` and checks they share one even RGB size.
fn load_training_images(dir: &Path) -> Result<(Vec<PathBuf>, Vec<Image>)> {
    let files = raster_files(dir)?;
    if files.is_empty() {
        bail!("no PGM/PPM/PNG images in {}", dir.display());
    }
    let mut images = Vec::with_capacity(files.len());
    for f in &files {
        let img = load_raster(f).with_context(|| format!("loading {}", f.display()))?;
        if img.channels() != 3 {
            bail!("{} is not a color image", f.display());
        }
        if let Some(first) = images.first() {
            let first: &Image = first;
            if (first.rows(), first.cols()) != (img.rows(), img.cols()) {
                bail!(
                    "mixed resolutions: {} is {}x{} but {} is {}x{}",
                    f.display(),
                    img.rows(),
                    img.cols(),
                    files[0].display(),
                    first.rows(),
                    first.cols()
                );
            }
        }
        images.push(img);
    }
    Ok((files, images))
}

/// Mean of `losses` over the first and last tenth of training.
fn loss_trend(losses: &[f64]) -> (f64, f64) {
    let w = (losses.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&losses[..w]), mean(&losses[losses.len() - w..]))
}

pub fn train_score(args: TrainArgs) -> Result<()> {
    let mut args = replay(args)?;
    let dir = args.dataset.clone().context("missing dataset directory")?;
    let cfg = args.sampler.resolve(&args.common)?;
    let out = out_dir(&args.common)?;
    let mut m = RunManifest::new(TrainArgs::NAME, &())?;
    pin_sampler(&mut args.sampler, &mut args.common, &mut m, &cfg)?;
    m.args = serde_json::to_value(&args)?;

    let (files, images) = m.timed("load", || load_training_images(&dir))?;
    for f in &files {
        m.input(f)?;
    }
    let stacks = images
        .iter()
        .map(|img| Ok(wavelet::stack(img)?.into_vec()))
        .collect::<Result<Vec<_>>>()?;
    let (rows, cols) = (images[0].rows() / 2, images[0].cols() / 2);
    let data = Dataset::from_points(&stacks)?;
    let resolution = Resolution::stack(rows, cols);

    let model = if args.parzen {
        m.results = json!({ "kind": "parzen", "points": data.len(), "dim": data.dim() });
        AnyModel::Parzen(ParzenScore::new(data))
    } else {
        let schedule = cfg.schedule()?;
        let mut rng = chain_rng(cfg.seed);
        let net = MlpScore::new(data.dim(), &args.hidden, &mut rng)?;
        let dsm = DsmConfig {
            batch_size: args.batch_size,
            iterations: args.iterations,
            learning_rate: args.learning_rate,
            linear_decay: args.lr_decay,
            ..DsmConfig::default()
        };
        let trained = m.timed("train", || train_mlp(net, &data, &schedule, &dsm, &mut rng))?;
        let (first, last) = if trained.losses.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            loss_trend(&trained.losses)
        };
        m.results = json!({
            "kind": "mlp",
            "points": data.len(),
            "dim": data.dim(),
            "widths": trained.model.widths(),
            "loss_first_tenth": first,
            "loss_last_tenth": last,
            "losses": trained.losses,
        });
        AnyModel::Mlp(trained.model)
    };
    let path = out.join(MODEL_FILE);
    save_model(&StoredModel::new(resolution, model)?, &path)?;
    m.output(&path)?;
    m.write(&out)?;
    println!("{}", path.display());
    Ok(())
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let mut args = replay(args)?;
    let model_path = args.model.clone().context("missing --model")?;
    let cfg = args.sampler.resolve(&args.common)?;
    let out = out_dir(&args.common)?;
    let mut m = RunManifest::new(SampleArgs::NAME, &())?;
    pin_sampler(&mut args.sampler, &mut args.common, &mut m, &cfg)?;
    m.args = serde_json::to_value(&args)?;
    m.model = Some(FileRecord::of(&model_path)?);

    let model = load_stack_model(&model_path)?;
    let (rows, cols) = (2 * model.resolution.rows, 2 * model.resolution.cols);
    let schedule = cfg.schedule()?;
    let images = m.timed("sample", || {
        sampler::sample_images(&model, &cfg, &schedule, args.n, rows, cols, Exec::default())
    })?;
    for (k, img) in images.iter().enumerate() {
        let path = out.join(format!("sample_{k:03}.{}", args.format.extension(3)));
        save_raster(img, &path)?;
        m.output(&path)?;
    }
    m.results = json!({ "samples": images.len(), "rows": rows, "cols": cols });
    m.write(&out)?;
    println!("{} samples in {}", images.len(), out.display());
    Ok(())
}

pub fn colorize(args: ColorizeArgs) -> Result<()> {
    let mut args = replay(args)?;
    let input = args.input.clone().context("missing input")?;
    let model_path = args.model.clone().context("missing --model")?;
    let cfg = args.sampler.resolve(&args.common)?;
    let out = out_dir(&args.common)?;
    let mut m = RunManifest::new(ColorizeArgs::NAME, &())?;
    pin_sampler(&mut args.sampler, &mut args.common, &mut m, &cfg)?;
    m.args = serde_json::to_value(&args)?;
    m.input(&input)?;
    m.model = Some(FileRecord::of(&model_path)?);

    let mut img = load_raster(&input).with_context(|| format!("loading {}", input.display()))?;
    if args.crop_even {
        img = img.crop_even()?;
    }
    let (gray, truth) = if img.channels() == 3 {
        (to_gray(&img, cfg.gray_op)?, Some(img))
    } else {
        (img, None)
    };
    if gray.rows() % 2 != 0 || gray.cols() % 2 != 0 {
        return Err(wacm_core::Error::OddDimensions {
            rows: gray.rows(),
            cols: gray.cols(),
        }
        .into());
    }
    let model = load_stack_model(&model_path)?;
    let res = model.resolution;
    if (2 * res.rows, 2 * res.cols) != (gray.rows(), gray.cols()) {
        bail!(
            "model was trained on {}x{} images but the input is {}x{}",
            2 * res.rows,
            2 * res.cols,
            gray.rows(),
            gray.cols()
        );
    }
    let schedule = cfg.schedule()?;
    let results = m.timed("sample", || {
        sampler::colorize_stacks(&gray, &model, &cfg, &schedule, args.n, Exec::default())
    })?;

    let mut per_sample = Vec::new();
    for (k, (_, color)) in results.iter().enumerate() {
        let path = out.join(format!("colorized_{k:03}.{}", args.format.extension(3)));
        save_raster(color, &path)?;
        m.output(&path)?;
        let saved = as_saved(color)?;
        let mut entry = json!({
            "file": path,
            "dc_residual": max_gray_residual(color, &gray, cfg.gray_op)?,
        });
        if let Some(t) = &truth {
            entry["psnr_db"] = json!(psnr(t, &saved, 1.0)?);
            if t.rows() >= SSIM_WINDOW && t.cols() >= SSIM_WINDOW {
                entry["ssim"] = json!(ssim(t, &saved)?);
            }
        }
        per_sample.push(entry);
    }
    let max_dc = per_sample
        .iter()
        .filter_map(|e| e["dc_residual"].as_f64())
        .fold(0.0, f64::max);
    m.results = json!({
        "mode": if truth.is_some() { "test" } else { "blind" },
        "max_dc_residual": max_dc,
        "samples": per_sample,
    });
    m.write(&out)?;
    println!("{} colorizations in {} (max DC residual {max_dc:.2e})", results.len(), out.display());
    Ok(())
}

fn metric_pairs(reference: &Path, candidate: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if !reference.is_dir() {
        return Ok(vec![(reference.to_path_buf(), candidate.to_path_buf())]);
    }
    let pairs: Vec<_> = raster_files(reference)?
        .into_iter()
        .map(|r| {
            let c = candidate.join(r.file_name().expect("listed file has a name"));
            (r, c)
        })
        .collect();
    if pairs.is_empty() {
        bail!("no images in {}", reference.display());
    }
    if let Some((_, c)) = pairs.iter().find(|(_, c)| !c.is_file()) {
        bail!("no candidate {} for the reference image of the same name", c.display());
    }
    Ok(pairs)
}

fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn metrics(args: MetricsArgs) -> Result<()> {
    let args = replay(args)?;
    let reference = args.reference.clone().context("missing reference")?;
    let candidate = args.candidate.clone().context("missing candidate")?;
    let mut m = RunManifest::new(MetricsArgs::NAME, &args)?;
    let pairs = metric_pairs(&reference, &candidate)?;
    let mut lines = Vec::new();
    let (mut sum_p, mut sum_s) = (0.0, 0.0);
    for (r, c) in &pairs {
        m.input(r)?;
        m.input(c)?;
        let (a, b) = (load_raster(r)?, load_raster(c)?);
        let (p, s) = (psnr(&a, &b, 1.0)?, ssim(&a, &b)?);
        sum_p += p;
        sum_s += s;
        lines.push(format!("{}\t{}\t{s:.6}", c.display(), format_db(p)));
    }
    let n = pairs.len() as f64;
    lines.push(format!("mean\t{}\t{:.6}", format_db(sum_p / n), sum_s / n));
    let table = lines.join("\n") + "\n";
    print!("{table}");
    if let Some(dir) = &args.common.out {
        fs::create_dir_all(dir)?;
        let path = dir.join("metrics.tsv");
        write_atomic(&path, table.as_bytes())?;
        m.output(&path)?;
        m.results = json!({ "pairs": pairs.len(), "mean_psnr_db": sum_p / n, "mean_ssim": sum_s / n });
        m.write(dir)?;
    }
    Ok(())
}
