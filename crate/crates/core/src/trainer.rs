//! Training loops for the matting and colour networks: guidance curriculum,
//! warmup plus cosine learning rate, batched Adam steps, checkpointing,
//! JSON-lines logging and resume.
//!
//! Every sample of iteration `i`, batch slot `s` draws from its own RNG
//! stream `i * 1024 + s`, and batch gradients are summed in slot order, so
//! a run is a pure function of `(config, seed)` regardless of thread count,
//! and resuming only needs the next iteration index.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::datagen::{make_rab_sample, make_training_sample, stream_rng, AugmentConfig, Foreground};
use crate::error::{MatteError, Result};
use crate::guidance::{cutmask_random, odd_kernel, perturb_guidance_with, PerturbConfig};
use crate::losses::{color_loss, total_loss_eval, LossWeights, Supervision};
use crate::matte::{AlphaMatte, ImagePlane, MattingSample, RegionMask};
use crate::nn::{Adam, AdamConfig, Grads, ParamStore, Tape};
use crate::prn::{self_guidance_from, ColorNet, ColorNetConfig, PrnConfig, PrnModel, SelfGuidance};

/// Streams per iteration; bounds the batch size.
pub const STREAMS_PER_ITER: u64 = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub warmup_iters: usize,
    pub peak_lr: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Iterations guided by ground truth only.
    pub gt_phase_end: usize,
    /// End of the half ground-truth, half self-guided phase.
    pub mixed_phase_end: usize,
    /// Training-time self-guidance dilation ranges, drawn per sample.
    pub dilation_k1_range: (usize, usize),
    pub dilation_k2_range: (usize, usize),
    pub loss: LossWeights,
    /// Checkpoint cadence; `None` means every `max(total / 20, 1)` iterations.
    pub checkpoint_every: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iters: 2000,
            warmup_iters: 100,
            peak_lr: 1e-3,
            adam: AdamConfig::default(),
            batch_size: 4,
            gt_phase_end: 200,
            mixed_phase_end: 600,
            dilation_k1_range: (1, 30),
            dilation_k2_range: (1, 15),
            loss: LossWeights::default(),
            checkpoint_every: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MatteError::Config(m));
        if self.total_iters == 0 {
            return bad("total_iters must be >= 1".into());
        }
        if self.warmup_iters >= self.total_iters {
            return bad(format!(
                "warmup_iters {} must be < total_iters {}",
                self.warmup_iters, self.total_iters
            ));
        }
        if !(self.gt_phase_end <= self.mixed_phase_end && self.mixed_phase_end <= self.total_iters) {
            return bad("need gt_phase_end <= mixed_phase_end <= total_iters".into());
        }
        if self.batch_size == 0 || self.batch_size as u64 > STREAMS_PER_ITER {
            return bad(format!("batch_size must be in 1..={STREAMS_PER_ITER}"));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be finite and >= 0".into());
        }
        for (lo, hi) in [self.dilation_k1_range, self.dilation_k2_range] {
            if lo == 0 || lo > hi {
                return bad("dilation ranges need 1 <= lo <= hi".into());
            }
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be >= 1".into());
        }
        self.loss.validate()
    }

    pub fn checkpoint_interval(&self) -> usize {
        self.checkpoint_every.unwrap_or((self.total_iters / 20).max(1))
    }
}

/// Where an iteration's refinement guidance comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceOrigin {
    GroundTruth,
    SelfPrediction,
}

/// Curriculum phase of `iter`. The mixed phase flips a fair coin with `rng`;
/// the other phases draw nothing.
pub fn guidance_source<R: Rng + ?Sized>(iter: usize, cfg: &TrainConfig, rng: &mut R) -> GuidanceOrigin {
    if iter < cfg.gt_phase_end {
        GuidanceOrigin::GroundTruth
    } else if iter < cfg.mixed_phase_end {
        if rng.random_bool(0.5) {
            GuidanceOrigin::GroundTruth
        } else {
            GuidanceOrigin::SelfPrediction
        }
    } else {
        GuidanceOrigin::SelfPrediction
    }
}

/// Linear warmup to `peak_lr`, then cosine decay to zero.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    if iter < cfg.warmup_iters {
        return cfg.peak_lr * iter as f64 / cfg.warmup_iters as f64;
    }
    let span = (cfg.total_iters - cfg.warmup_iters) as f64;
    let t = (iter - cfg.warmup_iters) as f64 / span;
    cfg.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Deterministic supplier of training samples.
pub trait SampleSource: Send + Sync {
    /// Sample for `(iter, slot)`; `rng` is that slot's private stream.
    fn sample(&self, iter: usize, slot: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<MattingSample>;
}

/// A fixed list visited cyclically; optionally redraws each guidance mask
/// from the ground-truth alpha with the perturbation pipeline.
pub struct FixedSamples {
    pub samples: Vec<MattingSample>,
    pub reperturb: Option<PerturbConfig>,
}

impl SampleSource for FixedSamples {
    fn sample(&self, iter: usize, slot: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<MattingSample> {
        if self.samples.is_empty() {
            return Err(MatteError::Data("empty training set".into()));
        }
        let mut s = self.samples[(iter * batch_size + slot) % self.samples.len()].clone();
        if let Some(p) = &self.reperturb {
            let (mut mask, _) = perturb_guidance_with(&s.alpha, p, rng)?;
            if rng.random_bool(p.cutmask_prob) {
                mask = cutmask_random(&mask, p, rng)?.0;
            }
            s.guidance = mask.to_matte();
        }
        Ok(s)
    }
}

/// Freshly augmented composites drawn from foreground/background pools.
pub struct SyntheticStream {
    pub foregrounds: Vec<Foreground>,
    pub backgrounds: Vec<ImagePlane>,
    pub augment: AugmentConfig,
}

impl SampleSource for SyntheticStream {
    fn sample(&self, _iter: usize, _slot: usize, _batch: usize, rng: &mut ChaCha8Rng) -> Result<MattingSample> {
        make_training_sample(&self.foregrounds, &self.backgrounds, &self.augment, rng)
    }
}

/// Random Alpha Blending samples for the colour network.
pub struct RabStream {
    pub foregrounds: Vec<ImagePlane>,
    pub alphas: Vec<AlphaMatte>,
    pub backgrounds: Vec<ImagePlane>,
}

impl SampleSource for RabStream {
    fn sample(&self, _iter: usize, _slot: usize, _batch: usize, rng: &mut ChaCha8Rng) -> Result<MattingSample> {
        Ok(make_rab_sample(&self.foregrounds, &self.alphas, &self.backgrounds, rng)?.sample)
    }
}

/// Pixels supervised by the colour loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSupervision {
    /// Every pixel, as Random Alpha Blending allows.
    #[default]
    Full,
    /// Only `alpha > 0`, the conventional foreground-only ablation.
    ForegroundOnly,
}

impl ColorSupervision {
    pub fn mask(self, alpha: &AlphaMatte) -> RegionMask {
        match self {
            Self::Full => RegionMask::ones(alpha.height(), alpha.width()),
            Self::ForegroundOnly => RegionMask::from_predicate(alpha, |a| a > 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_per_level: Vec<f64>,
}

/// Output location, resume point and thread count of a run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Run directory for `config.json`, `log.jsonl` and `ckpt_*.bin`.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Rayon threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Stop after this iteration count instead of `total_iters`; the
    /// schedule still spans `total_iters`.
    pub stop_at: Option<usize>,
    /// Document written as `config.json`; defaults to the model and
    /// training configs.
    pub config_echo: Option<serde_json::Value>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<LogEntry>,
    pub checkpoints: Vec<PathBuf>,
    /// State after the last completed iteration.
    pub last: Checkpoint,
}

struct SampleResult {
    loss: f64,
    per_level: Vec<f64>,
    grads: Grads,
}

trait Trainable: Sync {
    const KIND: ModelKind;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn config_value(&self) -> serde_json::Value;
}

impl Trainable for PrnModel {
    const KIND: ModelKind = ModelKind::Prn;
    fn params(&self) -> &ParamStore {
        PrnModel::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        PrnModel::params_mut(self)
    }
    fn config_value(&self) -> serde_json::Value {
        serde_json::to_value(self.config()).expect("config serializes")
    }
}

impl Trainable for ColorNet {
    const KIND: ModelKind = ModelKind::Color;
    fn params(&self) -> &ParamStore {
        ColorNet::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        ColorNet::params_mut(self)
    }
    fn config_value(&self) -> serde_json::Value {
        serde_json::to_value(self.config()).expect("config serializes")
    }
}

fn draw_odd<R: Rng + ?Sized>(range: (usize, usize), rng: &mut R) -> usize {
    odd_kernel(rng.random_range(range.0..=range.1))
}

/// One matting sample: forward, level-weighted loss and gradients.
fn matte_sample_step(
    model: &PrnModel,
    sample: &MattingSample,
    cfg: &TrainConfig,
    iter: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampleResult> {
    let origin = guidance_source(iter, cfg, rng);
    let k1 = draw_odd(cfg.dilation_k1_range, rng);
    let k2 = draw_odd(cfg.dilation_k2_range, rng);
    let mode = match origin {
        GuidanceOrigin::GroundTruth => SelfGuidance::Override([
            self_guidance_from(&sample.alpha, k1)?,
            self_guidance_from(&sample.alpha, k2)?,
        ]),
        GuidanceOrigin::SelfPrediction => SelfGuidance::Computed { k1, k2 },
    };
    let mut tape = Tape::new(model.params());
    let vars = model.record(&mut tape, &sample.image, &sample.guidance, &mode)?;
    let (h, w) = (sample.height(), sample.width());
    let fused: Vec<AlphaMatte> = vars
        .fused
        .iter()
        .map(|&v| AlphaMatte::new(h, w, tape.value(v).data.clone()))
        .collect::<Result<_>>()?;
    let sup = Supervision {
        gt: &sample.alpha,
        fg: &sample.foreground,
        bg: &sample.background,
        image: &sample.image,
    };
    let mut weights = cfg.loss;
    if !sample.composite_exact {
        weights.term_weights.comp = 0.0;
    }
    let m = &vars.masks;
    let eval = total_loss_eval([&fused[0], &fused[1], &fused[2]], [&m[0], &m[1], &m[2]], &sup, &weights)?;
    let seeds: Vec<_> = vars.fused.iter().zip(eval.grads).map(|(&v, g)| (v, g)).collect();
    Ok(SampleResult {
        loss: eval.total,
        per_level: eval.per_level.to_vec(),
        grads: tape.backward(&seeds),
    })
}

fn color_sample_step(
    model: &ColorNet,
    sample: &MattingSample,
    cfg: &TrainConfig,
    supervision: ColorSupervision,
) -> Result<SampleResult> {
    let mut tape = Tape::new(model.params());
    let out = model.record(&mut tape, &sample.image, &sample.alpha)?;
    let pred = ImagePlane::new(sample.height(), sample.width(), 3, tape.value(out).data.clone())?;
    let mask = supervision.mask(&sample.alpha);
    let mut terms = cfg.loss.term_weights;
    if !sample.composite_exact {
        terms.comp = 0.0;
    }
    let (loss, grad) = color_loss(
        &pred,
        &sample.alpha,
        &sample.foreground,
        &sample.background,
        &sample.image,
        &mask,
        terms,
        cfg.loss.laplacian_levels,
    )?;
    Ok(SampleResult {
        loss,
        per_level: vec![loss],
        grads: tape.backward(&[(out, grad)]),
    })
}

fn write_log(path: &Path, entries: &[LogEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for e in entries {
        writeln!(f, "{}", serde_json::to_string(e)?)?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a run's `log.jsonl`.
pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let f = BufReader::new(fs::File::open(path)?);
    f.lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

fn checkpoint_of<M: Trainable>(model: &M, adam: &Adam, cfg: &TrainConfig, next_iter: usize) -> Checkpoint {
    Checkpoint {
        kind: M::KIND,
        model_config: model.config_value(),
        params: model.params().clone(),
        optimizer: Some(adam.state.clone()),
        meta: json!({
            "next_iter": next_iter,
            "train_config": cfg,
            "rng": {"algorithm": "chacha8", "seed": cfg.seed, "next_iter": next_iter, "streams_per_iter": STREAMS_PER_ITER},
        }),
    }
}

fn resume_point(ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<usize> {
    let bad = |m: &str| MatteError::Checkpoint(m.to_string());
    let meta_cfg: TrainConfig = serde_json::from_value(ckpt.meta["train_config"].clone())
        .map_err(|e| MatteError::Checkpoint(format!("train config in checkpoint: {e}")))?;
    if &meta_cfg != cfg {
        return Err(bad("training config differs from the checkpointed run"));
    }
    ckpt.meta["next_iter"]
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| bad("checkpoint has no next_iter"))
}

fn run_loop<M: Trainable>(
    model: &mut M,
    cfg: &TrainConfig,
    opts: &RunOptions,
    step: &(dyn Fn(&M, usize, usize, &mut ChaCha8Rng) -> Result<SampleResult> + Sync),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut adam = Adam::new(cfg.adam.clone(), model.params());
    let mut start = 0;
    let mut log = Vec::new();
    if let Some(path) = &opts.resume {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.kind != M::KIND || ckpt.model_config != model.config_value() {
            return Err(MatteError::Checkpoint(
                "checkpoint does not match the model being trained".into(),
            ));
        }
        start = resume_point(&ckpt, cfg)?;
        model.params_mut().load_from(&ckpt.params)?;
        adam.state = ckpt
            .optimizer
            .ok_or_else(|| MatteError::Checkpoint("checkpoint has no optimizer state".into()))?;
        if let Some(dir) = &opts.out_dir {
            let prev = dir.join("log.jsonl");
            if prev.exists() {
                log = read_log(&prev)?.into_iter().filter(|e| e.iter < start).collect();
            }
        }
    }
    let end = opts.stop_at.unwrap_or(cfg.total_iters).min(cfg.total_iters);
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        let echo = opts
            .config_echo
            .clone()
            .unwrap_or_else(|| json!({"model": model.config_value(), "train": cfg}));
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&echo)? + "\n")?;
    }
    let pool = match opts.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| MatteError::Config(format!("worker pool: {e}")))?,
        ),
        None => None,
    };
    let interval = cfg.checkpoint_interval();
    let mut checkpoints = Vec::new();
    let mut log_file = match &opts.out_dir {
        Some(dir) => {
            write_log(&dir.join("log.jsonl"), &log)?;
            Some(fs::OpenOptions::new().append(true).open(dir.join("log.jsonl"))?)
        }
        None => None,
    };
    for iter in start..end {
        let m: &M = model;
        let batch = || -> Vec<Result<SampleResult>> {
            (0..cfg.batch_size)
                .into_par_iter()
                .map(|slot| {
                    let mut rng = stream_rng(cfg.seed, iter as u64 * STREAMS_PER_ITER + slot as u64);
                    step(m, iter, slot, &mut rng)
                })
                .collect()
        };
        let results = match &pool {
            Some(p) => p.install(batch),
            None => batch(),
        };
        let mut grads = model.params().zero_grads();
        let mut loss = 0.0;
        let mut per_level: Vec<f64> = Vec::new();
        for r in results {
            let r = r?;
            grads.add_assign(&r.grads);
            loss += r.loss;
            if per_level.is_empty() {
                per_level = vec![0.0; r.per_level.len()];
            }
            per_level.iter_mut().zip(&r.per_level).for_each(|(a, b)| *a += b);
        }
        let n = cfg.batch_size as f64;
        grads.scale(1.0 / n);
        loss /= n;
        per_level.iter_mut().for_each(|v| *v /= n);
        if !loss.is_finite() || !grads.is_finite() {
            return Err(MatteError::Divergence { iter, loss });
        }
        let lr = lr_at(iter, cfg);
        adam.step(model.params_mut(), &grads, lr);
        let entry = LogEntry {
            iter,
            lr,
            loss_total: loss,
            loss_per_level: per_level,
        };
        if let Some(f) = &mut log_file {
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
        }
        log.push(entry);
        let done = iter + 1;
        if let Some(dir) = &opts.out_dir {
            if done % interval == 0 || done == end {
                let path = dir.join(format!("ckpt_{done:06}.bin"));
                checkpoint_of(model, &adam, cfg, done).save(&path)?;
                checkpoints.push(path);
            }
        }
    }
    Ok(TrainOutcome {
        log,
        checkpoints,
        last: checkpoint_of(model, &adam, cfg, end.max(start)),
    })
}

/// Trains a matting model from `model_cfg` (or from `opts.resume`).
pub fn train_matte(
    source: &dyn SampleSource,
    model_cfg: &PrnConfig,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<(PrnModel, TrainOutcome)> {
    let mut model = PrnModel::new(model_cfg.clone())?;
    let bs = cfg.batch_size;
    let step = |m: &PrnModel, iter: usize, slot: usize, rng: &mut ChaCha8Rng| {
        let sample = source.sample(iter, slot, bs, rng)?;
        matte_sample_step(m, &sample, cfg, iter, rng)
    };
    let out = run_loop(&mut model, cfg, opts, &step)?;
    Ok((model, out))
}

/// Trains the foreground colour network; the log's per-level entry is the
/// single colour loss.
pub fn train_color(
    source: &dyn SampleSource,
    model_cfg: &ColorNetConfig,
    cfg: &TrainConfig,
    supervision: ColorSupervision,
    opts: &RunOptions,
) -> Result<(ColorNet, TrainOutcome)> {
    let mut model = ColorNet::new(model_cfg.clone())?;
    let bs = cfg.batch_size;
    let step = |m: &ColorNet, iter: usize, slot: usize, rng: &mut ChaCha8Rng| {
        let sample = source.sample(iter, slot, bs, rng)?;
        color_sample_step(m, &sample, cfg, supervision)
    };
    let out = run_loop(&mut model, cfg, opts, &step)?;
    Ok((model, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synthesize, SynthSpec};

    fn tiny_cfg(total: usize) -> TrainConfig {
        TrainConfig {
            total_iters: total,
            warmup_iters: 1.min(total - 1),
            batch_size: 2,
            gt_phase_end: 2.min(total),
            mixed_phase_end: 4.min(total),
            loss: LossWeights {
                laplacian_levels: 3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn data() -> FixedSamples {
        let spec = SynthSpec {
            canvas: (24, 24),
            count: 2,
            ..Default::default()
        };
        let (_, samples) = synthesize(
            &spec,
            &AugmentConfig {
                crop_size: 16,
                ..AugmentConfig::identity(16)
            },
        )
        .unwrap();
        FixedSamples {
            samples,
            reperturb: Some(PerturbConfig::default()),
        }
    }

    #[test]
    fn schedule_boundaries() {
        let cfg = TrainConfig::default();
        let mut rng = stream_rng(0, 0);
        assert_eq!(guidance_source(0, &cfg, &mut rng), GuidanceOrigin::GroundTruth);
        assert_eq!(guidance_source(199, &cfg, &mut rng), GuidanceOrigin::GroundTruth);
        assert_eq!(guidance_source(600, &cfg, &mut rng), GuidanceOrigin::SelfPrediction);
        let gt = (0..10_000)
            .filter(|_| guidance_source(300, &cfg, &mut rng) == GuidanceOrigin::GroundTruth)
            .count();
        assert!((gt as f64 / 10_000.0 - 0.5).abs() < 0.02, "{gt}");
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert!((lr_at(100, &cfg) - 1e-3).abs() < 1e-15);
        assert!(lr_at(1999, &cfg) < 1e-6 * 1e-3 * 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            warmup_iters: 2000,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            gt_phase_end: 700,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        TrainConfig::default().validate().unwrap();
        assert_eq!(TrainConfig::default().checkpoint_interval(), 100);
    }

    #[test]
    fn one_step_is_deterministic_and_thread_independent() {
        let d = data();
        let cfg = tiny_cfg(1);
        let run = |workers| {
            let opts = RunOptions {
                workers,
                ..Default::default()
            };
            train_matte(&d, &PrnConfig::tiny(), &cfg, &opts)
                .unwrap()
                .0
                .params()
                .clone()
        };
        let a = run(Some(1));
        assert_eq!(a, run(Some(2)));
        assert_eq!(a, run(None));
    }

    #[test]
    fn resume_reproduces_the_trajectory() {
        let d = data();
        let cfg = tiny_cfg(6);
        let dir = tempfile::tempdir().unwrap();
        let full_dir = dir.path().join("full");
        let full = RunOptions {
            out_dir: Some(full_dir.clone()),
            ..Default::default()
        };
        let (m_full, out_full) = train_matte(&d, &PrnConfig::tiny(), &cfg, &full).unwrap();
        assert_eq!(read_log(&full_dir.join("log.jsonl")).unwrap().len(), 6);
        let part_dir = dir.path().join("part");
        let part = RunOptions {
            out_dir: Some(part_dir.clone()),
            stop_at: Some(3),
            ..Default::default()
        };
        let (_, out_part) = train_matte(&d, &PrnConfig::tiny(), &cfg, &part).unwrap();
        let ckpt = out_part.checkpoints.last().unwrap().clone();
        let resumed = RunOptions {
            out_dir: Some(part_dir.clone()),
            resume: Some(ckpt),
            ..Default::default()
        };
        let (m_res, _) = train_matte(&d, &PrnConfig::tiny(), &cfg, &resumed).unwrap();
        assert_eq!(m_full.params(), m_res.params());
        assert_eq!(read_log(&part_dir.join("log.jsonl")).unwrap(), out_full.log);
    }

    #[test]
    fn color_training_runs_and_modes_differ() {
        let d = data();
        let cfg = tiny_cfg(2);
        let opts = RunOptions::default();
        let (a, la) = train_color(&d, &ColorNetConfig::tiny(), &cfg, ColorSupervision::Full, &opts).unwrap();
        let (b, _) = train_color(
            &d,
            &ColorNetConfig::tiny(),
            &cfg,
            ColorSupervision::ForegroundOnly,
            &opts,
        )
        .unwrap();
        assert_eq!(la.log.len(), 2);
        assert_ne!(a.params(), b.params());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = tiny_cfg(2);
        cfg.loss.term_weights.l1 = f64::MAX;
        let res = train_matte(&data(), &PrnConfig::tiny(), &cfg, &RunOptions::default());
        assert!(
            matches!(res, Err(MatteError::Divergence { iter: 0, .. })),
            "{:?}",
            res.err()
        );
    }
}
