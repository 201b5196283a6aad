//! The five batch commands behind the `mgmatte` binary. Each takes a
//! resolved [`RunConfig`] and explicit paths, and writes byte-deterministic
//! outputs for fixed inputs and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{DataSource, RunConfig, TrainTarget};
use crate::datagen::{build_pools, synthesize};
use crate::error::{MatteError, Result};
use crate::guidance::{binarize, cutmask, dilate, encode_guidance_matte, erode, odd_kernel};
use crate::io::{self, BitDepth};
use crate::matte::{composite, AlphaMatte, ImagePlane, MattingSample, RegionMask};
use crate::metrics::{self, sad, CorpusRow};
use crate::prn::{ColorNet, PrnModel};
use crate::trainer::{
    train_color, train_matte, FixedSamples, RabStream, RunOptions, SampleSource, SyntheticStream, TrainOutcome,
};

/// Largest per-pixel composite error accepted when re-validating a dataset
/// read back from 16-bit PNGs.
pub const DATASET_TOLERANCE: f64 = 4.0 / 65535.0;

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| MatteError::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub composite_exact: bool,
    pub has_detail_region: bool,
}

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub samples: Vec<ManifestEntry>,
    pub config: RunConfig,
}

const PLANE_DIRS: [&str; 6] = ["image", "alpha", "fg", "bg", "guidance", "regions"];

fn sample_id(i: usize) -> String {
    format!("{i:04}")
}

/// Writes samples in the dataset layout: `image/`, `alpha/`, `fg/`, `bg/`,
/// `guidance/` as 16-bit PNGs, `regions/NNNN_unknown.png` (and
/// `NNNN_detail.png`) as 8-bit masks, plus `manifest.json`.
pub fn write_dataset(samples: &[MattingSample], cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let first = samples
        .first()
        .ok_or_else(|| MatteError::Data("no samples to write".into()))?;
    for d in PLANE_DIRS {
        fs::create_dir_all(out.join(d))?;
    }
    let entries = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let id = sample_id(i);
            let file = format!("{id}.png");
            io::write_rgb(&s.image, &out.join("image").join(&file), BitDepth::Sixteen)?;
            io::write_matte(&s.alpha, &out.join("alpha").join(&file), BitDepth::Sixteen)?;
            io::write_rgb(&s.foreground, &out.join("fg").join(&file), BitDepth::Sixteen)?;
            io::write_rgb(&s.background, &out.join("bg").join(&file), BitDepth::Sixteen)?;
            io::write_matte(&s.guidance, &out.join("guidance").join(&file), BitDepth::Sixteen)?;
            let unknown = s.unknown_region.clone().unwrap_or_else(|| s.alpha.transition_region());
            io::write_mask(&unknown, &out.join("regions").join(format!("{id}_unknown.png")))?;
            if let Some(d) = &s.detail_region {
                io::write_mask(d, &out.join("regions").join(format!("{id}_detail.png")))?;
            }
            Ok(ManifestEntry {
                id,
                composite_exact: s.composite_exact,
                has_detail_region: s.detail_region.is_some(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        count: samples.len(),
        height: first.height(),
        width: first.width(),
        seed: cfg.synth.rng_seed,
        samples: entries,
        config: cfg.clone(),
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| MatteError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| MatteError::Data(format!("{}: {e}", path.display())))
}

/// Reads every sample of a dataset directory, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Vec<MattingSample>> {
    let manifest = read_manifest(dir)?;
    manifest
        .samples
        .par_iter()
        .map(|e| {
            let file = format!("{}.png", e.id);
            let detail = dir.join("regions").join(format!("{}_detail.png", e.id));
            Ok(MattingSample {
                image: io::read_rgb(&dir.join("image").join(&file))?,
                alpha: io::read_matte(&dir.join("alpha").join(&file))?,
                foreground: io::read_rgb(&dir.join("fg").join(&file))?,
                background: io::read_rgb(&dir.join("bg").join(&file))?,
                guidance: io::read_matte(&dir.join("guidance").join(&file))?,
                unknown_region: Some(io::read_mask(
                    &dir.join("regions").join(format!("{}_unknown.png", e.id)),
                )?),
                detail_region: if e.has_detail_region {
                    Some(io::read_mask(&detail)?)
                } else {
                    None
                },
                composite_exact: e.composite_exact,
            })
        })
        .collect()
}

/// Generates `cfg.synth.count` samples into `out`. With `validate`, the
/// directory is read back and every sample is checked against the
/// compositing invariant.
pub fn cmd_synth(cfg: &RunConfig, out: &Path, validate: bool) -> Result<Manifest> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let (_, samples) = synthesize(&cfg.synth, &cfg.augment)?;
        let manifest = write_dataset(&samples, cfg, out)?;
        if validate {
            for (i, s) in load_dataset(out)?.iter().enumerate() {
                s.validate(DATASET_TOLERANCE)
                    .map_err(|e| MatteError::Data(format!("sample {}: {e}", sample_id(i))))?;
            }
        }
        Ok(manifest)
    })?
}

fn matte_source(cfg: &RunConfig) -> Result<Box<dyn SampleSource>> {
    Ok(match &cfg.data.source {
        DataSource::Synthetic => {
            let pools = build_pools(&cfg.synth, &cfg.augment.background_source)?;
            Box::new(SyntheticStream {
                foregrounds: pools.foregrounds,
                backgrounds: pools.backgrounds,
                augment: cfg.augment.clone(),
            })
        }
        DataSource::Directory(dir) => Box::new(FixedSamples {
            samples: load_dataset(dir)?,
            reperturb: cfg.data.reperturb.then(|| cfg.augment.perturb.clone()),
        }),
    })
}

fn color_source(cfg: &RunConfig) -> Result<Box<dyn SampleSource>> {
    Ok(match &cfg.data.source {
        DataSource::Synthetic => {
            let pools = build_pools(&cfg.synth, &cfg.augment.background_source)?;
            Box::new(RabStream {
                foregrounds: pools.colors(),
                alphas: pools.alphas(),
                backgrounds: pools.backgrounds,
            })
        }
        DataSource::Directory(dir) => {
            let samples = load_dataset(dir)?;
            Box::new(RabStream {
                foregrounds: samples.iter().map(|s| s.foreground.clone()).collect(),
                alphas: samples.iter().map(|s| s.alpha.clone()).collect(),
                backgrounds: samples.iter().map(|s| s.background.clone()).collect(),
            })
        }
    })
}

/// Trains the model selected by `cfg.target` into the run directory `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let opts = RunOptions {
        out_dir: Some(out.to_path_buf()),
        resume: resume.map(Path::to_path_buf),
        workers: cfg.workers,
        stop_at: None,
        config_echo: Some(serde_json::to_value(cfg)?),
    };
    let source = with_workers(cfg.workers, || match cfg.target {
        TrainTarget::Matte => matte_source(cfg),
        TrainTarget::Color => color_source(cfg),
    })??;
    Ok(match cfg.target {
        TrainTarget::Matte => train_matte(source.as_ref(), &cfg.model, &cfg.train, &opts)?.1,
        TrainTarget::Color => {
            train_color(
                source.as_ref(),
                &cfg.color_model,
                &cfg.train,
                cfg.color_supervision,
                &opts,
            )?
            .1
        }
    })
}

/// Where `eval` takes predicted mattes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictor {
    /// Refine each sample's stored guidance with a matting checkpoint.
    Checkpoint(PathBuf),
    /// Read `NNNN.png` mattes from a directory, e.g. a dataset's `alpha/`.
    Directory(PathBuf),
}

/// Scores predictions on a dataset directory; writes `metrics.csv` and
/// `aggregate.json` to `out` and returns the rows in sample order.
pub fn cmd_eval(cfg: &RunConfig, predictor: &Predictor, data_dir: &Path, out: &Path) -> Result<Vec<CorpusRow>> {
    cfg.validate()?;
    let regions = cfg.eval.regions.clone();
    let rows = with_workers(cfg.workers, || -> Result<Vec<CorpusRow>> {
        let manifest = read_manifest(data_dir)?;
        let samples = load_dataset(data_dir)?;
        let model = match predictor {
            Predictor::Checkpoint(p) => Some(PrnModel::from_checkpoint(&Checkpoint::load(p)?)?),
            Predictor::Directory(_) => None,
        };
        let per_sample = samples
            .par_iter()
            .zip(&manifest.samples)
            .map(|(s, e)| {
                let pred = match (&model, predictor) {
                    (Some(m), _) => m.refine(&s.image, &s.guidance)?,
                    (None, Predictor::Directory(d)) => io::read_matte(&d.join(format!("{}.png", e.id)))?,
                    (None, Predictor::Checkpoint(_)) => unreachable!(),
                };
                let reports = metrics::evaluate(&pred, &s.alpha, s, &regions)
                    .map_err(|err| MatteError::Data(format!("sample {}: {err}", e.id)))?;
                Ok(reports
                    .into_iter()
                    .map(|report| CorpusRow {
                        sample: e.id.clone(),
                        report,
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_sample.into_iter().flatten().collect())
    })??;
    fs::create_dir_all(out)?;
    metrics::write_csv(&rows, &out.join("metrics.csv"))?;
    metrics::write_aggregate_json(&rows, &out.join("aggregate.json"))?;
    Ok(rows)
}

/// One guidance edit for `perturb` and `refine --perturb`.
#[derive(Clone, Debug, PartialEq)]
pub enum PerturbOp {
    Binarize(f64),
    /// Kernel sizes are rounded up to odd.
    Dilate(usize),
    Erode(usize),
    /// Patch side as a fraction of each dimension, and an RNG seed.
    Cutmask {
        fraction: f64,
        seed: u64,
    },
}

impl FromStr for PerturbOp {
    type Err = MatteError;

    /// Parses `binarize:T`, `dilate:K`, `erode:K` or `cutmask:F:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || MatteError::Param(format!("malformed perturbation `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| parts.get(i).ok_or_else(bad);
        let op = match (parts[0], parts.len()) {
            ("binarize", 2) => Self::Binarize(num(1)?.parse().map_err(|_| bad())?),
            ("dilate", 2) => Self::Dilate(num(1)?.parse().map_err(|_| bad())?),
            ("erode", 2) => Self::Erode(num(1)?.parse().map_err(|_| bad())?),
            ("cutmask", 3) => Self::Cutmask {
                fraction: num(1)?.parse().map_err(|_| bad())?,
                seed: num(2)?.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        match op {
            Self::Binarize(t) if !(0.0..=1.0).contains(&t) => Err(bad()),
            Self::Dilate(0) | Self::Erode(0) => Err(bad()),
            Self::Cutmask { fraction, .. } if !(fraction > 0.0 && fraction <= 1.0) => Err(bad()),
            op => Ok(op),
        }
    }
}

/// Applies `ops` left to right. Morphology and CutMask need a binary input,
/// so a soft matte must be binarized first.
pub fn apply_perturb_ops(input: &AlphaMatte, ops: &[PerturbOp]) -> Result<AlphaMatte> {
    let mut cur = input.clone();
    for op in ops {
        if let PerturbOp::Binarize(t) = op {
            cur = binarize(&cur, *t).to_matte();
            continue;
        }
        if cur.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(MatteError::Param(format!(
                "{op:?} needs a binary mask; add binarize:T first"
            )));
        }
        let mask = binarize(&cur, 0.5);
        cur = match op {
            PerturbOp::Dilate(k) => dilate(&mask, odd_kernel(*k))?,
            PerturbOp::Erode(k) => erode(&mask, odd_kernel(*k))?,
            PerturbOp::Cutmask { fraction, seed } => {
                cutmask(&mask, (*fraction, *fraction), &mut ChaCha8Rng::seed_from_u64(*seed))?.0
            }
            PerturbOp::Binarize(_) => unreachable!(),
        }
        .to_matte();
    }
    Ok(cur)
}

/// Reads a mask or matte, applies `ops` and writes an 8-bit PNG.
pub fn cmd_perturb(input: &Path, ops: &[PerturbOp], out: &Path) -> Result<AlphaMatte> {
    let result = apply_perturb_ops(&io::read_matte(input)?, ops)?;
    io::write_matte(&result, out, BitDepth::Eight)?;
    Ok(result)
}

#[derive(Clone, Debug, Default)]
pub struct RefineOptions {
    /// Edits applied to the guidance before encoding.
    pub perturb: Vec<PerturbOp>,
    /// Also write `<stem>_panel.png`.
    pub panel: bool,
    /// Colour checkpoint; when set, `<stem>_fg.png` is written and used in
    /// the panel composite.
    pub color_checkpoint: Option<PathBuf>,
    /// Ground-truth matte for scoring the perturbation effect.
    pub reference: Option<PathBuf>,
}

/// Whole-image SAD against a reference matte with and without the guidance edits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSad {
    pub clean: f64,
    pub perturbed: f64,
}

impl ReferenceSad {
    pub fn relative_change(&self) -> f64 {
        (self.perturbed - self.clean).abs() / self.clean.max(f64::MIN_POSITIVE)
    }
}

/// Effect of the guidance edits on the refined matte.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbEffect {
    /// Whole-image SAD between the outputs for edited and unedited guidance.
    pub sad_between: f64,
    pub reference: Option<ReferenceSad>,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub alpha: AlphaMatte,
    pub foreground: Option<ImagePlane>,
    pub written: Vec<PathBuf>,
    /// Present when guidance edits were requested.
    pub perturb_effect: Option<PerturbEffect>,
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("alpha");
    out.with_file_name(format!("{stem}_{suffix}.png"))
}

/// Horizontal strip: input, guidance, alpha, composite over a solid colour.
pub fn refine_panel(
    image: &ImagePlane,
    guidance: &AlphaMatte,
    alpha: &AlphaMatte,
    fg: &ImagePlane,
    bg: [f64; 3],
) -> Result<ImagePlane> {
    let (h, w) = (image.height(), image.width());
    let solid = ImagePlane::from_rgb_fn(h, w, |_, _| bg);
    let comp = composite(alpha, fg, &solid)?;
    let tiles = [image.clone(), guidance.to_plane(), alpha.to_plane(), comp];
    Ok(ImagePlane::from_rgb_fn(h, 4 * w, |y, x| {
        let t = &tiles[x / w];
        let xx = x % w;
        if t.channels() == 1 {
            [t.get(0, y, xx); 3]
        } else {
            [t.get(0, y, xx), t.get(1, y, xx), t.get(2, y, xx)]
        }
    }))
}

/// Refines one image and writes the alpha as an 8-bit PNG at `out`.
pub fn cmd_refine(
    cfg: &RunConfig,
    checkpoint: &Path,
    image: &Path,
    guidance: &Path,
    out: &Path,
    opts: &RefineOptions,
) -> Result<RefineOutcome> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.kind != ModelKind::Prn {
        return Err(MatteError::Checkpoint(format!(
            "{} is not a matting checkpoint",
            checkpoint.display()
        )));
    }
    let model = PrnModel::from_checkpoint(&ckpt)?;
    let img = io::read_rgb(image)?;
    let original = io::read_matte(guidance)?;
    if (original.height(), original.width()) != (img.height(), img.width()) {
        return Err(MatteError::Data("image and guidance sizes differ".into()));
    }
    let raw = apply_perturb_ops(&original, &opts.perturb)?;
    let guide = encode_guidance_matte(&raw, cfg.refine.mode)?;
    let alpha = model.refine(&img, &guide)?;
    let perturb_effect = if opts.perturb.is_empty() {
        None
    } else {
        let clean = model.refine(&img, &encode_guidance_matte(&original, cfg.refine.mode)?)?;
        let whole = RegionMask::ones(img.height(), img.width());
        let reference = match &opts.reference {
            Some(p) => {
                let gt = io::read_matte(p)?;
                Some(ReferenceSad {
                    clean: sad(&clean, &gt, &whole)?,
                    perturbed: sad(&alpha, &gt, &whole)?,
                })
            }
            None => None,
        };
        Some(PerturbEffect {
            sad_between: sad(&alpha, &clean, &whole)?,
            reference,
        })
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    io::write_matte(&alpha, out, BitDepth::Eight)?;
    let mut written = vec![out.to_path_buf()];
    let foreground = match &opts.color_checkpoint {
        Some(p) => {
            let net = ColorNet::from_checkpoint(&Checkpoint::load(p)?)?;
            let fg = net.predict(&img, &alpha)?;
            let path = sibling(out, "fg");
            io::write_rgb(&fg, &path, BitDepth::Eight)?;
            written.push(path);
            Some(fg)
        }
        None => None,
    };
    if opts.panel {
        let fg = foreground.as_ref().unwrap_or(&img);
        let panel = refine_panel(&img, &guide, &alpha, fg, cfg.refine.panel_background)?;
        let path = sibling(out, "panel");
        io::write_rgb(&panel, &path, BitDepth::Eight)?;
        written.push(path);
    }
    Ok(RefineOutcome {
        alpha,
        foreground,
        written,
        perturb_effect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_parsing() {
        assert_eq!("binarize:0.5".parse::<PerturbOp>().unwrap(), PerturbOp::Binarize(0.5));
        assert_eq!("dilate:15".parse::<PerturbOp>().unwrap(), PerturbOp::Dilate(15));
        assert_eq!(
            "cutmask:0.25:9".parse::<PerturbOp>().unwrap(),
            PerturbOp::Cutmask {
                fraction: 0.25,
                seed: 9
            }
        );
        for bad in [
            "dilate",
            "dilate:x",
            "erode:0",
            "binarize:2",
            "cutmask:0.3",
            "blur:3",
            "",
        ] {
            assert!(bad.parse::<PerturbOp>().is_err(), "{bad}");
        }
    }

    #[test]
    fn ops_compose_like_the_library() {
        let a = AlphaMatte::from_fn(20, 20, |y, x| {
            ((y as f64 - 10.0).hypot(x as f64 - 10.0) / 10.0).min(1.0)
        });
        let out = apply_perturb_ops(&a, &[PerturbOp::Binarize(0.5), PerturbOp::Dilate(5)]).unwrap();
        assert_eq!(out, dilate(&binarize(&a, 0.5), 5).unwrap().to_matte());
        let m = binarize(&a, 0.5).to_matte();
        assert_eq!(apply_perturb_ops(&m, &[PerturbOp::Dilate(1)]).unwrap(), m);
        assert!(apply_perturb_ops(&a, &[PerturbOp::Erode(3)]).is_err());
    }
}
