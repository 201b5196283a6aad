//! Procedural matting data: foreground generators with exact ground-truth
//! alpha, backgrounds, the training augmentation pipeline, Random Alpha
//! Blending and real-world degradations.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::guidance::{cutmask_random, dilate, perturb_guidance_with, PerturbConfig};
use crate::io;
use crate::matte::{
    composite, merge_foregrounds, AlphaMatte, ImagePlane, Interpolation, MattingSample, RegionMask, Resample,
};

/// Dilation applied to `0 < alpha < 1` to form a sample's unknown region.
pub const UNKNOWN_DILATION: usize = 5;

/// Independent RNG stream `stream` of run seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const FOREGROUND_STREAMS: u64 = 1 << 40;
const BACKGROUND_STREAMS: u64 = 2 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    SoftDisk,
    LinearRamp,
    FractalHair,
    /// Translucent checkered sheet; the only generator with large low-alpha areas.
    CheckerTexture,
}

impl Generator {
    pub const ALL: [Generator; 4] = [
        Self::SoftDisk,
        Self::LinearRamp,
        Self::FractalHair,
        Self::CheckerTexture,
    ];

    pub fn is_transparent(self) -> bool {
        self == Self::CheckerTexture
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Foreground and background canvas `(height, width)`.
    pub canvas: (usize, usize),
    pub generators: Vec<Generator>,
    /// Number of composited samples.
    pub count: usize,
    pub foreground_count: usize,
    pub background_count: usize,
    /// Drop transparent-object generators.
    pub exclude_transparent: bool,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            canvas: (96, 96),
            generators: Generator::ALL.to_vec(),
            count: 8,
            foreground_count: 8,
            background_count: 8,
            exclude_transparent: false,
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.canvas.0 < 16 || self.canvas.1 < 16 {
            return Err(MatteError::Config("synth canvas must be at least 16x16".into()));
        }
        if self.active_generators().is_empty() {
            return Err(MatteError::Config("no foreground generators enabled".into()));
        }
        if self.foreground_count == 0 || self.background_count == 0 {
            return Err(MatteError::Config(
                "foreground and background pools must be nonempty".into(),
            ));
        }
        Ok(())
    }

    pub fn active_generators(&self) -> Vec<Generator> {
        self.generators
            .iter()
            .copied()
            .filter(|g| !(self.exclude_transparent && g.is_transparent()))
            .collect()
    }
}

/// Paired alpha and foreground colour, defined over the whole canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct Foreground {
    pub alpha: AlphaMatte,
    pub color: ImagePlane,
}

/// True when the matte has exact 0, exact 1 and fractional pixels.
pub fn has_all_alpha_kinds(a: &AlphaMatte) -> bool {
    let d = a.data();
    d.contains(&0.0) && d.contains(&1.0) && d.iter().any(|&v| v > 0.0 && v < 1.0)
}

fn smooth_color_field<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> ImagePlane {
    let c0: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let c1: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let theta = rng.random_range(0.0..2.0 * PI);
    let freq = rng.random_range(0.05..0.3);
    let amp = rng.random_range(0.0..0.15);
    let (ct, st) = (theta.cos(), theta.sin());
    let span = (h + w) as f64 / 2.0;
    ImagePlane::from_rgb_fn(h, w, |y, x| {
        let t = (((x as f64 - w as f64 / 2.0) * ct + (y as f64 - h as f64 / 2.0) * st) / span + 0.5).clamp(0.0, 1.0);
        let ripple = amp * ((x as f64 * freq).sin() * (y as f64 * freq * 0.7).cos());
        [0, 1, 2].map(|c| (c0[c] * (1.0 - t) + c1[c] * t + ripple).clamp(0.0, 1.0))
    })
}

fn soft_disk<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> AlphaMatte {
    let m = h.min(w) as f64;
    let cy = h as f64 * rng.random_range(0.35..0.65);
    let cx = w as f64 * rng.random_range(0.35..0.65);
    let r = m * rng.random_range(0.18..0.3);
    let f = rng.random_range(1.5..(0.08 * m).max(2.0));
    disk_alpha(h, w, cy, cx, r, f)
}

/// `1` inside `r - f`, `0` outside `r + f`, linear in the radius between.
pub fn disk_alpha(h: usize, w: usize, cy: f64, cx: f64, r: f64, f: f64) -> AlphaMatte {
    AlphaMatte::from_fn(h, w, |y, x| {
        let d = ((y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2)).sqrt();
        if d <= r - f {
            1.0
        } else if d >= r + f {
            0.0
        } else {
            (r + f - d) / (2.0 * f)
        }
    })
}

fn linear_ramp<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> AlphaMatte {
    let theta = rng.random_range(0.0..2.0 * PI);
    let (ct, st) = (theta.cos(), theta.sin());
    let half = 0.5 * ((h * h + w * w) as f64).sqrt();
    let centre = rng.random_range(-0.15..0.15) * half;
    let width = rng.random_range(0.15..0.5) * half;
    AlphaMatte::from_fn(h, w, |y, x| {
        let t = (x as f64 + 0.5 - w as f64 / 2.0) * ct + (y as f64 + 0.5 - h as f64 / 2.0) * st;
        ((t - centre) / width + 0.5).clamp(0.0, 1.0)
    })
}

/// Coverage of a disc of radius `r` by a pixel at distance `d`, with a one
/// pixel soft edge.
fn coverage(d: f64, r: f64) -> f64 {
    (r + 0.5 - d).clamp(0.0, 1.0)
}

fn fractal_hair<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> AlphaMatte {
    let m = h.min(w) as f64;
    let cy = h as f64 * rng.random_range(0.4..0.6);
    let cx = w as f64 * rng.random_range(0.4..0.6);
    let r = m * rng.random_range(0.12..0.2);
    let mut alpha = disk_alpha(h, w, cy, cx, r, 1.0).into_data();
    let strands = rng.random_range(12..30);
    for _ in 0..strands {
        let mut ang = rng.random_range(0.0..2.0 * PI);
        let (mut py, mut px) = (cy + r * ang.sin(), cx + r * ang.cos());
        let width = rng.random_range(0.15..0.45);
        let steps = (m * rng.random_range(0.15..0.3)) as usize;
        for _ in 0..steps {
            ang += rng.random_range(-0.35..0.35);
            let (ny, nx) = (py + ang.sin(), px + ang.cos());
            let y0 = (py.min(ny) - 2.0).floor().max(0.0) as usize;
            let y1 = ((py.max(ny) + 2.0).ceil() as usize).min(h);
            let x0 = (px.min(nx) - 2.0).floor().max(0.0) as usize;
            let x1 = ((px.max(nx) + 2.0).ceil() as usize).min(w);
            for y in y0..y1 {
                for x in x0..x1 {
                    let d = segment_distance((y as f64 + 0.5, x as f64 + 0.5), (py, px), (ny, nx));
                    let a = &mut alpha[y * w + x];
                    *a = a.max(coverage(d, width) * 0.9);
                }
            }
            py = ny;
            px = nx;
        }
    }
    AlphaMatte::new(h, w, alpha).expect("hair matte")
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dy).powi(2) + (p.1 - a.1 - t * dx).powi(2)).sqrt()
}

fn checker_texture<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> (AlphaMatte, ImagePlane) {
    let (hf, wf) = (h as f64, w as f64);
    let y0 = hf * rng.random_range(0.1..0.25);
    let y1 = hf * rng.random_range(0.75..0.9);
    let x0 = wf * rng.random_range(0.1..0.25);
    let x1 = wf * rng.random_range(0.75..0.9);
    let cell = rng.random_range(4..10) as f64;
    let low = rng.random_range(0.2..0.7);
    let feather = 2.0;
    let alpha = AlphaMatte::from_fn(h, w, |y, x| {
        let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
        let inside = ((py - y0).min(y1 - py).min(px - x0).min(x1 - px) / feather).clamp(0.0, 1.0);
        let even = (((py - y0) / cell).floor() as i64 + ((px - x0) / cell).floor() as i64) % 2 == 0;
        inside * if even { 1.0 } else { low }
    });
    let (ca, cb) = (smooth_color_field(h, w, rng), smooth_color_field(h, w, rng));
    let color = ImagePlane::from_rgb_fn(h, w, |y, x| {
        let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
        let even = (((py - y0) / cell).floor() as i64 + ((px - x0) / cell).floor() as i64) % 2 == 0;
        let src = if even { &ca } else { &cb };
        [src.get(0, y, x), src.get(1, y, x), src.get(2, y, x)]
    });
    (alpha, color)
}

/// One foreground from a specific generator.
pub fn generate_with<R: Rng + ?Sized>(gen: Generator, h: usize, w: usize, rng: &mut R) -> Foreground {
    match gen {
        Generator::CheckerTexture => {
            let (alpha, color) = checker_texture(h, w, rng);
            Foreground { alpha, color }
        }
        _ => {
            let alpha = match gen {
                Generator::SoftDisk => soft_disk(h, w, rng),
                Generator::LinearRamp => linear_ramp(h, w, rng),
                _ => fractal_hair(h, w, rng),
            };
            Foreground {
                alpha,
                color: smooth_color_field(h, w, rng),
            }
        }
    }
}

/// Draws a generator from the spec and retries until the matte has exact 0,
/// exact 1 and fractional pixels.
pub fn generate_foreground<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Foreground> {
    spec.validate()?;
    let gens = spec.active_generators();
    let (h, w) = spec.canvas;
    for _ in 0..64 {
        let g = *gens.choose(rng).expect("nonempty generator set");
        let f = generate_with(g, h, w, rng);
        if has_all_alpha_kinds(&f.alpha) {
            return Ok(f);
        }
    }
    Err(MatteError::Data("could not draw a nondegenerate foreground".into()))
}

/// Gradients, blobs and stripes over the full canvas.
pub fn generate_background<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> ImagePlane {
    let base = smooth_color_field(h, w, rng);
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..rng.random_range(2..6))
        .map(|_| {
            let c: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(3.0..16.0),
                c,
            )
        })
        .collect();
    let stripe = rng.random_range(0.0..0.2);
    let period = rng.random_range(3.0..12.0);
    ImagePlane::from_rgb_fn(h, w, |y, x| {
        let mut px = [base.get(0, y, x), base.get(1, y, x), base.get(2, y, x)];
        for &(by, bx, br, c) in &blobs {
            let d2 = (y as f64 - by).powi(2) + (x as f64 - bx).powi(2);
            let k = (-d2 / (2.0 * br * br)).exp();
            for ch in 0..3 {
                px[ch] = px[ch] * (1.0 - k) + c[ch] * k;
            }
        }
        let s = stripe * (2.0 * PI * (x + y) as f64 / period).sin();
        px.map(|v| (v + s).clamp(0.0, 1.0))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSource {
    Procedural,
    /// PNG/JPEG files in a directory, read in sorted order.
    Directory(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealworldConfig {
    pub enabled: bool,
    pub jpeg_quality_range: (u8, u8),
    pub blur_sigma_range: (f64, f64),
    pub noise_std_range: (f64, f64),
}

impl Default for RealworldConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            jpeg_quality_range: (60, 95),
            blur_sigma_range: (0.0, 3.0),
            noise_std_range: (0.0, 0.03),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub two_fg_prob: f64,
    pub resize_range: (f64, f64),
    pub interpolations: Vec<Interpolation>,
    pub rotation_deg_range: (f64, f64),
    pub shear_deg_range: (f64, f64),
    pub scale_range: (f64, f64),
    pub flip_prob: f64,
    pub brightness_range: (f64, f64),
    pub contrast_range: (f64, f64),
    pub saturation_range: (f64, f64),
    pub crop_size: usize,
    pub background_source: BackgroundSource,
    pub perturb: PerturbConfig,
    pub realworld: RealworldConfig,
    pub use_composition_loss: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            two_fg_prob: 0.5,
            resize_range: (0.75, 1.5),
            interpolations: Interpolation::ALL.to_vec(),
            rotation_deg_range: (-30.0, 30.0),
            shear_deg_range: (-10.0, 10.0),
            scale_range: (0.8, 1.25),
            flip_prob: 0.5,
            brightness_range: (-0.1, 0.1),
            contrast_range: (0.8, 1.2),
            saturation_range: (0.7, 1.3),
            crop_size: 64,
            background_source: BackgroundSource::Procedural,
            perturb: PerturbConfig::default(),
            realworld: RealworldConfig::default(),
            use_composition_loss: true,
        }
    }
}

impl AugmentConfig {
    /// No geometric or photometric change and an unperturbed guidance mask.
    pub fn identity(crop_size: usize) -> Self {
        Self {
            two_fg_prob: 0.0,
            resize_range: (1.0, 1.0),
            interpolations: vec![Interpolation::Bilinear],
            rotation_deg_range: (0.0, 0.0),
            shear_deg_range: (0.0, 0.0),
            scale_range: (1.0, 1.0),
            flip_prob: 0.0,
            brightness_range: (0.0, 0.0),
            contrast_range: (1.0, 1.0),
            saturation_range: (1.0, 1.0),
            crop_size,
            background_source: BackgroundSource::Procedural,
            perturb: PerturbConfig {
                morph_kernel_range: (1, 1),
                cutmask_prob: 0.0,
                ..Default::default()
            },
            realworld: RealworldConfig::default(),
            use_composition_loss: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MatteError::Config(m.into()));
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(8) {
            return bad("crop_size must be a positive multiple of 8");
        }
        if self.interpolations.is_empty() {
            return bad("interpolations must be nonempty");
        }
        for (lo, hi) in [self.resize_range, self.scale_range] {
            if !(lo > 0.0 && lo <= hi) {
                return bad("resize and scale ranges need 0 < lo <= hi");
            }
        }
        for p in [self.two_fg_prob, self.flip_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.realworld.enabled && self.use_composition_loss {
            return bad("real-world noise breaks the composite; set use_composition_loss = false");
        }
        let rw = &self.realworld;
        if rw.jpeg_quality_range.0 == 0
            || rw.jpeg_quality_range.0 > rw.jpeg_quality_range.1
            || rw.jpeg_quality_range.1 > 100
        {
            return bad("jpeg_quality_range must lie in 1..=100");
        }
        if rw.blur_sigma_range.0 < 0.0 || rw.noise_std_range.0 < 0.0 {
            return bad("blur and noise ranges must be >= 0");
        }
        self.perturb.validate()
    }
}

fn draw<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Inverse-mapped affine warp about the canvas centre; alpha is zero and
/// colour edge-clamped outside the source.
fn warp_affine(fg: &Foreground, rot_deg: f64, shear_deg: f64, scale: f64, flip: bool) -> Foreground {
    let (h, w) = (fg.alpha.height(), fg.alpha.width());
    let (r, s) = (rot_deg.to_radians(), shear_deg.to_radians().tan());
    // forward map: flip, shear, rotate, scale
    let fx = if flip { -1.0 } else { 1.0 };
    let (c, sn) = (r.cos(), r.sin());
    let a = [
        [scale * c * fx, scale * (c * s - sn)],
        [scale * sn * fx, scale * (sn * s + c)],
    ];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let src = |y: usize, x: usize| {
        let (qx, qy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        (
            inv[1][0] * qx + inv[1][1] * qy + cy - 0.5,
            inv[0][0] * qx + inv[0][1] * qy + cx - 0.5,
        )
    };
    let sample = |plane: &[f64], sy: f64, sx: f64, outside_zero: bool| {
        if outside_zero && (sy < -0.5 || sx < -0.5 || sy > h as f64 - 0.5 || sx > w as f64 - 0.5) {
            return 0.0;
        }
        let (y0, x0) = (sy.floor(), sx.floor());
        let (ly, lx) = (sy - y0, sx - x0);
        let at = |yy: f64, xx: f64| {
            let yi = (yy.max(0.0) as usize).min(h - 1);
            let xi = (xx.max(0.0) as usize).min(w - 1);
            plane[yi * w + xi]
        };
        let top = at(y0, x0) * (1.0 - lx) + at(y0, x0 + 1.0) * lx;
        let bot = at(y0 + 1.0, x0) * (1.0 - lx) + at(y0 + 1.0, x0 + 1.0) * lx;
        (top * (1.0 - ly) + bot * ly).clamp(0.0, 1.0)
    };
    let alpha = AlphaMatte::from_fn(h, w, |y, x| {
        let (sy, sx) = src(y, x);
        sample(fg.alpha.data(), sy, sx, true)
    });
    let color = ImagePlane::from_rgb_fn(h, w, |y, x| {
        let (sy, sx) = src(y, x);
        [0, 1, 2].map(|ch| sample(fg.color.channel(ch), sy, sx, false))
    });
    Foreground { alpha, color }
}

fn color_jitter(p: &ImagePlane, brightness: f64, contrast: f64, saturation: f64) -> ImagePlane {
    let (h, w) = (p.height(), p.width());
    let mean = p.data().iter().sum::<f64>() / p.data().len() as f64;
    ImagePlane::from_rgb_fn(h, w, |y, x| {
        let mut px = [p.get(0, y, x), p.get(1, y, x), p.get(2, y, x)];
        let grey = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        for v in &mut px {
            *v = grey + saturation * (*v - grey);
            *v = mean + contrast * (*v - mean) + brightness;
        }
        px.map(|v| v.clamp(0.0, 1.0))
    })
}

fn fit_background<R: Rng + ?Sized>(bg: &ImagePlane, size: usize, rng: &mut R) -> Result<ImagePlane> {
    let (h, w) = (bg.height(), bg.width());
    if h >= size && w >= size {
        let top = rng.random_range(0..=h - size);
        let left = rng.random_range(0..=w - size);
        return bg.crop(top, left, size, size);
    }
    bg.resample(size, size, Interpolation::Bilinear)
}

/// Top-left corner of a `size` window centred on a random transition
/// pixel, clamped to the image; the image centre if there is none.
pub fn crop_origin<R: Rng + ?Sized>(alpha: &AlphaMatte, size: usize, rng: &mut R) -> (usize, usize) {
    let (h, w) = (alpha.height(), alpha.width());
    let unknown: Vec<usize> = (0..h * w)
        .filter(|&i| alpha.data()[i] > 0.0 && alpha.data()[i] < 1.0)
        .collect();
    let (cy, cx) = match unknown.choose(rng) {
        Some(&i) => (i / w, i % w),
        None => (h / 2, w / 2),
    };
    (
        (cy as isize - size as isize / 2).clamp(0, (h - size) as isize) as usize,
        (cx as isize - size as isize / 2).clamp(0, (w - size) as isize) as usize,
    )
}

/// Unknown region of a ground-truth matte: its transition pixels, dilated.
pub fn unknown_region(alpha: &AlphaMatte) -> RegionMask {
    dilate(&alpha.transition_region(), UNKNOWN_DILATION).expect("odd dilation")
}

/// One augmented, composited training sample.
pub fn make_training_sample<R: Rng + ?Sized>(
    fg_pool: &[Foreground],
    bg_pool: &[ImagePlane],
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<MattingSample> {
    if fg_pool.is_empty() || bg_pool.is_empty() {
        return Err(MatteError::Data(
            "foreground and background pools must be nonempty".into(),
        ));
    }
    let mut fg = fg_pool.choose(rng).expect("nonempty").clone();
    if rng.random_bool(aug.two_fg_prob) {
        let other = fg_pool.choose(rng).expect("nonempty");
        let (h, w) = (fg.alpha.height(), fg.alpha.width());
        let a2 = other.alpha.resample(h, w, Interpolation::Bilinear)?;
        let f2 = other.color.resample(h, w, Interpolation::Bilinear)?;
        let (alpha, color) = merge_foregrounds(&fg.alpha, &fg.color, &a2, &f2)?;
        fg = Foreground { alpha, color };
    }
    let crop = aug.crop_size;
    let s = draw(aug.resize_range, rng);
    let interp = *aug.interpolations.choose(rng).expect("nonempty");
    let (h0, w0) = (fg.alpha.height() as f64, fg.alpha.width() as f64);
    let s = s.max(crop as f64 / h0.min(w0));
    let (th, tw) = (
        ((h0 * s).round() as usize).max(crop),
        ((w0 * s).round() as usize).max(crop),
    );
    if (th, tw) != (fg.alpha.height(), fg.alpha.width()) {
        fg = Foreground {
            alpha: fg.alpha.resample(th, tw, interp)?,
            color: fg.color.resample(th, tw, interp)?,
        };
    }
    let rot = draw(aug.rotation_deg_range, rng);
    let shear = draw(aug.shear_deg_range, rng);
    let scale = draw(aug.scale_range, rng);
    let flip = rng.random_bool(aug.flip_prob);
    if rot != 0.0 || shear != 0.0 || scale != 1.0 || flip {
        fg = warp_affine(&fg, rot, shear, scale, flip);
    }
    let (b, c, sat) = (
        draw(aug.brightness_range, rng),
        draw(aug.contrast_range, rng),
        draw(aug.saturation_range, rng),
    );
    if b != 0.0 || c != 1.0 || sat != 1.0 {
        fg.color = color_jitter(&fg.color, b, c, sat);
    }
    let (top, left) = crop_origin(&fg.alpha, crop, rng);
    let alpha = fg.alpha.crop(top, left, crop, crop)?;
    let foreground = fg.color.crop(top, left, crop, crop)?;
    let background = fit_background(bg_pool.choose(rng).expect("nonempty"), crop, rng)?;
    let mut image = composite(&alpha, &foreground, &background)?;
    let (mut mask, _) = perturb_guidance_with(&alpha, &aug.perturb, rng)?;
    if rng.random_bool(aug.perturb.cutmask_prob) {
        mask = cutmask_random(&mask, &aug.perturb, rng)?.0;
    }
    let mut composite_exact = true;
    if aug.realworld.enabled {
        image = apply_realworld_noise(&image, &aug.realworld, rng)?;
        composite_exact = false;
    }
    Ok(MattingSample {
        image,
        unknown_region: Some(unknown_region(&alpha)),
        alpha,
        foreground,
        background,
        guidance: mask.to_matte(),
        detail_region: None,
        composite_exact,
    })
}

/// A Random Alpha Blending sample and the pool indices it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct RabSample {
    pub sample: MattingSample,
    pub fg_index: usize,
    pub alpha_index: usize,
    pub bg_index: usize,
}

/// `I = composite(alpha, F, B)` with alpha, F and B drawn independently.
/// Colour planes are resized to the alpha's canvas when they differ.
pub fn make_rab_sample<R: Rng + ?Sized>(
    fg_pool: &[ImagePlane],
    alpha_pool: &[AlphaMatte],
    bg_pool: &[ImagePlane],
    rng: &mut R,
) -> Result<RabSample> {
    if fg_pool.is_empty() || alpha_pool.is_empty() || bg_pool.is_empty() {
        return Err(MatteError::Data("RAB pools must be nonempty".into()));
    }
    let fg_index = rng.random_range(0..fg_pool.len());
    let alpha_index = rng.random_range(0..alpha_pool.len());
    let bg_index = rng.random_range(0..bg_pool.len());
    let alpha = alpha_pool[alpha_index].clone();
    let (h, w) = (alpha.height(), alpha.width());
    let fit = |p: &ImagePlane| -> Result<ImagePlane> {
        if (p.height(), p.width()) == (h, w) {
            Ok(p.clone())
        } else {
            p.resample(h, w, Interpolation::Bilinear)
        }
    };
    let foreground = fit(&fg_pool[fg_index])?;
    let background = fit(&bg_pool[bg_index])?;
    let image = composite(&alpha, &foreground, &background)?;
    let sample = MattingSample {
        image,
        guidance: alpha.clone(),
        unknown_region: Some(unknown_region(&alpha)),
        alpha,
        foreground,
        background,
        detail_region: None,
        composite_exact: true,
    };
    Ok(RabSample {
        sample,
        fg_index,
        alpha_index,
        bg_index,
    })
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, edge-clamped.
pub fn gaussian_blur(p: &ImagePlane, sigma: f64) -> ImagePlane {
    if sigma <= 0.0 {
        return p.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (h, w) = (p.height(), p.width());
    let mut data = Vec::with_capacity(p.data().len());
    for c in 0..p.channels() {
        let src = p.channel(c);
        let mut tmp = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * src[y * w + (x as isize + t as isize - r).clamp(0, w as isize - 1) as usize])
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * tmp[(y as isize + t as isize - r).clamp(0, h as isize - 1) as usize * w + x])
                    .sum();
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImagePlane::new(h, w, p.channels(), data).expect("blurred plane")
}

/// JPEG at `quality`, then Gaussian blur, then clamped Gaussian noise.
pub fn degrade<R: Rng + ?Sized>(
    image: &ImagePlane,
    quality: u8,
    sigma: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<ImagePlane> {
    let jpeg = io::jpeg_roundtrip(image, quality)?;
    let blurred = gaussian_blur(&jpeg, sigma);
    if noise_std <= 0.0 {
        return Ok(blurred);
    }
    let normal = Normal::new(0.0, noise_std).map_err(|e| MatteError::Param(e.to_string()))?;
    Ok(blurred.map(|v| v + normal.sample(rng)))
}

/// [`degrade`] with parameters drawn from the configured ranges.
pub fn apply_realworld_noise<R: Rng + ?Sized>(
    image: &ImagePlane,
    cfg: &RealworldConfig,
    rng: &mut R,
) -> Result<ImagePlane> {
    if image.channels() != 3 {
        return Err(MatteError::Shape("real-world noise needs an RGB image".into()));
    }
    let (q0, q1) = cfg.jpeg_quality_range;
    let quality = rng.random_range(q0..=q1);
    let sigma = draw(cfg.blur_sigma_range, rng);
    let std = draw(cfg.noise_std_range, rng);
    degrade(image, quality, sigma, std, rng)
}

/// Anisotropic total variation summed over channels.
pub fn total_variation(p: &ImagePlane) -> f64 {
    let (h, w) = (p.height(), p.width());
    let mut tv = 0.0;
    for c in 0..p.channels() {
        let d = p.channel(c);
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    tv += (d[y * w + x + 1] - d[y * w + x]).abs();
                }
                if y + 1 < h {
                    tv += (d[(y + 1) * w + x] - d[y * w + x]).abs();
                }
            }
        }
    }
    tv
}

/// Foreground and background pools of a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Pools {
    pub foregrounds: Vec<Foreground>,
    pub backgrounds: Vec<ImagePlane>,
}

impl Pools {
    pub fn alphas(&self) -> Vec<AlphaMatte> {
        self.foregrounds.iter().map(|f| f.alpha.clone()).collect()
    }

    pub fn colors(&self) -> Vec<ImagePlane> {
        self.foregrounds.iter().map(|f| f.color.clone()).collect()
    }
}

fn load_backgrounds(dir: &std::path::Path) -> Result<Vec<ImagePlane>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("png" | "jpg" | "jpeg")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(MatteError::Data(format!("no background images in {}", dir.display())));
    }
    files.iter().map(|f| io::read_rgb(f)).collect()
}

/// Builds the pools; every item has its own RNG stream, so the result does
/// not depend on the rayon thread count.
pub fn build_pools(spec: &SynthSpec, background: &BackgroundSource) -> Result<Pools> {
    spec.validate()?;
    let (h, w) = spec.canvas;
    let foregrounds = (0..spec.foreground_count as u64)
        .into_par_iter()
        .map(|i| generate_foreground(spec, &mut stream_rng(spec.rng_seed, FOREGROUND_STREAMS + i)))
        .collect::<Result<Vec<_>>>()?;
    let backgrounds = match background {
        BackgroundSource::Procedural => (0..spec.background_count as u64)
            .into_par_iter()
            .map(|i| generate_background(h, w, &mut stream_rng(spec.rng_seed, BACKGROUND_STREAMS + i)))
            .collect(),
        BackgroundSource::Directory(dir) => load_backgrounds(dir)?,
    };
    Ok(Pools {
        foregrounds,
        backgrounds,
    })
}

/// `spec.count` training samples; sample `i` uses RNG stream `i`.
pub fn synthesize(spec: &SynthSpec, aug: &AugmentConfig) -> Result<(Pools, Vec<MattingSample>)> {
    aug.validate()?;
    let pools = build_pools(spec, &aug.background_source)?;
    let samples = (0..spec.count as u64)
        .into_par_iter()
        .map(|i| {
            make_training_sample(
                &pools.foregrounds,
                &pools.backgrounds,
                aug,
                &mut stream_rng(spec.rng_seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pools, samples))
}
