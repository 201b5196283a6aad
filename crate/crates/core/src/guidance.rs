//! Guidance masks: binarization, square-element morphology, random
//! perturbation, CutMask patch copying, trimap synthesis and the input
//! encodings the matting network accepts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::matte::{ensure_same, AlphaMatte, RegionMask};

/// `1` iff `alpha > threshold`; ties go to background.
pub fn binarize(alpha: &AlphaMatte, threshold: f64) -> RegionMask {
    RegionMask::from_predicate(alpha, |a| a > threshold)
}

fn check_kernel(k: usize) -> Result<usize> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(MatteError::Param(format!(
            "morphology kernel must be odd and >= 1, got {k}"
        )));
    }
    Ok(k / 2)
}

/// Running extremum of a binary row under a centred window. Pixels beyond
/// the border take `pad`.
fn window_pass(src: &[u8], dst: &mut [u8], radius: usize, want: u8, pad: u8) {
    let n = src.len();
    // prefix counts of `want` make every window O(1)
    let mut prefix = vec![0usize; n + 1];
    for (i, &v) in src.iter().enumerate() {
        prefix[i + 1] = prefix[i] + (v == want) as usize;
    }
    for (i, out) in dst.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        let spills = i < radius || i + radius >= n;
        let hit = prefix[hi] - prefix[lo] > 0 || (spills && pad == want);
        *out = if hit { want } else { 1 - want };
    }
}

fn morph(mask: &RegionMask, k: usize, want: u8, pad: u8) -> Result<RegionMask> {
    let r = check_kernel(k)?;
    let (h, w) = (mask.height(), mask.width());
    if r == 0 {
        return Ok(mask.clone());
    }
    let mut rows = vec![0u8; h * w];
    for y in 0..h {
        window_pass(
            &mask.data()[y * w..(y + 1) * w],
            &mut rows[y * w..(y + 1) * w],
            r,
            want,
            pad,
        );
    }
    let mut out = RegionMask::zeros(h, w);
    let mut col = vec![0u8; h];
    let mut col_out = vec![0u8; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        window_pass(&col, &mut col_out, r, want, pad);
        for y in 0..h {
            out.data_mut()[y * w + x] = col_out[y];
        }
    }
    Ok(out)
}

/// Dilation with a `k x k` square element; outside pixels count as 0.
pub fn dilate(mask: &RegionMask, k: usize) -> Result<RegionMask> {
    morph(mask, k, 1, 0)
}

/// Erosion with a `k x k` square element; outside pixels count as 1.
pub fn erode(mask: &RegionMask, k: usize) -> Result<RegionMask> {
    morph(mask, k, 0, 1)
}

/// Rounds a drawn kernel size up to the next odd integer.
pub fn odd_kernel(k: usize) -> usize {
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k.max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub binarize_threshold_range: (f64, f64),
    pub morph_kernel_range: (usize, usize),
    pub cutmask_fraction_range: (f64, f64),
    /// Probability that the training pipeline follows perturbation with CutMask.
    pub cutmask_prob: f64,
    pub rng_seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            binarize_threshold_range: (0.0, 1.0),
            morph_kernel_range: (1, 30),
            cutmask_fraction_range: (0.25, 0.5),
            cutmask_prob: 0.25,
            rng_seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.binarize_threshold_range;
        if !(0.0..=1.0).contains(&t0) || !(0.0..=1.0).contains(&t1) || t0 > t1 {
            return Err(MatteError::Config(format!("bad binarize_threshold_range {t0}..{t1}")));
        }
        let (k0, k1) = self.morph_kernel_range;
        if k0 == 0 || k0 > k1 {
            return Err(MatteError::Config(format!("bad morph_kernel_range {k0}..{k1}")));
        }
        let (f0, f1) = self.cutmask_fraction_range;
        if !(f0 > 0.0 && f1 < 1.0 && f0 <= f1) {
            return Err(MatteError::Config(format!("bad cutmask_fraction_range {f0}..{f1}")));
        }
        if !(0.0..=1.0).contains(&self.cutmask_prob) {
            return Err(MatteError::Config("cutmask_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOrder {
    DilateOnly,
    ErodeOnly,
    DilateThenErode,
    ErodeThenDilate,
}

/// Everything [`perturb_guidance_with`] drew, for replay and inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbDraw {
    pub threshold: f64,
    pub order: MorphOrder,
    pub dilate_kernel: usize,
    pub erode_kernel: usize,
}

/// Binarize at a random threshold, then dilate and/or erode in random order
/// with random kernels. Seeded from `cfg.rng_seed`.
pub fn perturb_guidance(alpha: &AlphaMatte, cfg: &PerturbConfig) -> Result<RegionMask> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    Ok(perturb_guidance_with(alpha, cfg, &mut rng)?.0)
}

pub fn perturb_guidance_with<R: Rng + ?Sized>(
    alpha: &AlphaMatte,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<(RegionMask, PerturbDraw)> {
    let (t0, t1) = cfg.binarize_threshold_range;
    let threshold = if t1 > t0 { rng.random_range(t0..t1) } else { t0 };
    let order = match rng.random_range(0..4) {
        0 => MorphOrder::DilateOnly,
        1 => MorphOrder::ErodeOnly,
        2 => MorphOrder::DilateThenErode,
        _ => MorphOrder::ErodeThenDilate,
    };
    let (k0, k1) = cfg.morph_kernel_range;
    let dilate_kernel = odd_kernel(rng.random_range(k0..=k1));
    let erode_kernel = odd_kernel(rng.random_range(k0..=k1));
    let bin = binarize(alpha, threshold);
    let out = match order {
        MorphOrder::DilateOnly => dilate(&bin, dilate_kernel)?,
        MorphOrder::ErodeOnly => erode(&bin, erode_kernel)?,
        MorphOrder::DilateThenErode => erode(&dilate(&bin, dilate_kernel)?, erode_kernel)?,
        MorphOrder::ErodeThenDilate => dilate(&erode(&bin, erode_kernel)?, dilate_kernel)?,
    };
    Ok((
        out,
        PerturbDraw {
            threshold,
            order,
            dilate_kernel,
            erode_kernel,
        },
    ))
}

/// Source and destination rectangles of one CutMask application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutPatch {
    pub src_y: usize,
    pub src_x: usize,
    pub dst_y: usize,
    pub dst_x: usize,
    pub height: usize,
    pub width: usize,
}

impl CutPatch {
    pub fn contains_dst(&self, y: usize, x: usize) -> bool {
        (self.dst_y..self.dst_y + self.height).contains(&y) && (self.dst_x..self.dst_x + self.width).contains(&x)
    }
}

/// Copies the source rectangle over the destination rectangle.
pub fn apply_cut_patch(mask: &RegionMask, patch: &CutPatch) -> Result<RegionMask> {
    let (h, w) = (mask.height(), mask.width());
    if patch.src_y + patch.height > h
        || patch.dst_y + patch.height > h
        || patch.src_x + patch.width > w
        || patch.dst_x + patch.width > w
    {
        return Err(MatteError::Param("cut patch outside the mask".into()));
    }
    let mut out = mask.clone();
    for dy in 0..patch.height {
        for dx in 0..patch.width {
            let v = mask.get(patch.src_y + dy, patch.src_x + dx);
            out.set(patch.dst_y + dy, patch.dst_x + dx, v);
        }
    }
    Ok(out)
}

fn side_for(fraction: f64, dim: usize) -> usize {
    ((fraction * dim as f64).round() as usize).clamp(1, dim)
}

/// CutMask with per-axis patch fractions `(fraction_h, fraction_w)`; patch
/// positions are uniform within bounds.
pub fn cutmask<R: Rng + ?Sized>(
    mask: &RegionMask,
    fractions: (f64, f64),
    rng: &mut R,
) -> Result<(RegionMask, CutPatch)> {
    let (h, w) = (mask.height(), mask.width());
    let height = side_for(fractions.0, h);
    let width = side_for(fractions.1, w);
    let patch = CutPatch {
        src_y: rng.random_range(0..=h - height),
        src_x: rng.random_range(0..=w - width),
        dst_y: rng.random_range(0..=h - height),
        dst_x: rng.random_range(0..=w - width),
        height,
        width,
    };
    Ok((apply_cut_patch(mask, &patch)?, patch))
}

/// Draws per-axis fractions from `cfg.cutmask_fraction_range` and applies CutMask.
pub fn cutmask_random<R: Rng + ?Sized>(
    mask: &RegionMask,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<(RegionMask, CutPatch)> {
    let (f0, f1) = cfg.cutmask_fraction_range;
    let draw = |rng: &mut R| if f1 > f0 { rng.random_range(f0..=f1) } else { f0 };
    let fh = draw(rng);
    let fw = draw(rng);
    cutmask(mask, (fh, fw), rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrimapLabel {
    Background,
    Unknown,
    Foreground,
}

impl TrimapLabel {
    pub fn value(self) -> f64 {
        match self {
            Self::Background => 0.0,
            Self::Unknown => 0.5,
            Self::Foreground => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trimap {
    height: usize,
    width: usize,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn new(height: usize, width: usize, labels: Vec<TrimapLabel>) -> Result<Self> {
        if labels.len() != height * width || height == 0 || width == 0 {
            return Err(MatteError::Shape("trimap label count".into()));
        }
        Ok(Self { height, width, labels })
    }

    /// Reads a normalized map: values below 0.25 are background, above 0.75
    /// foreground, the rest unknown.
    pub fn from_matte(m: &AlphaMatte) -> Self {
        let labels = m
            .data()
            .iter()
            .map(|&v| {
                if v < 0.25 {
                    TrimapLabel::Background
                } else if v > 0.75 {
                    TrimapLabel::Foreground
                } else {
                    TrimapLabel::Unknown
                }
            })
            .collect();
        Self {
            height: m.height(),
            width: m.width(),
            labels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> TrimapLabel {
        self.labels[y * self.width + x]
    }

    pub fn region(&self, label: TrimapLabel) -> RegionMask {
        RegionMask::new(
            self.height,
            self.width,
            self.labels.iter().map(|&l| (l == label) as u8).collect(),
        )
        .expect("trimap region")
    }

    /// `{0, 0.5, 1}` encoding.
    pub fn to_matte(&self) -> AlphaMatte {
        AlphaMatte::new(self.height, self.width, self.labels.iter().map(|l| l.value()).collect()).expect("trimap matte")
    }
}

/// Three-way thresholding of a foreground probability map. The unknown band
/// is grown by `unknown_radius` pixels on every side (a square element of
/// side `2 * unknown_radius + 1`) and overwrites adjacent labels.
pub fn trimap_from_prob(prob: &AlphaMatte, fg_thresh: f64, bg_thresh: f64, unknown_radius: usize) -> Result<Trimap> {
    if fg_thresh <= bg_thresh {
        return Err(MatteError::Param(format!(
            "fg_thresh {fg_thresh} must exceed bg_thresh {bg_thresh}"
        )));
    }
    let unknown = RegionMask::from_predicate(prob, |p| p <= fg_thresh && p >= bg_thresh);
    let unknown = dilate(&unknown, 2 * unknown_radius + 1)?;
    let labels = prob
        .data()
        .iter()
        .zip(unknown.data())
        .map(|(&p, &u)| {
            if u == 1 {
                TrimapLabel::Unknown
            } else if p > fg_thresh {
                TrimapLabel::Foreground
            } else {
                TrimapLabel::Background
            }
        })
        .collect();
    Trimap::new(prob.height(), prob.width(), labels)
}

/// Defaults used for guidance derived from a segmentation probability map.
pub fn trimap_from_prob_default(prob: &AlphaMatte) -> Result<Trimap> {
    trimap_from_prob(prob, 0.95, 0.05, 20)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// Confident foreground of a trimap as a binary mask.
    Trimapfg,
    /// Trimap normalized to `{0, 0.5, 1}`.
    TrimapSoft,
    Binary,
    SoftMatte,
}

impl std::str::FromStr for GuidanceMode {
    type Err = MatteError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trimapfg" => Ok(Self::Trimapfg),
            "trimap_soft" | "trimap" => Ok(Self::TrimapSoft),
            "binary" => Ok(Self::Binary),
            "soft_matte" => Ok(Self::SoftMatte),
            other => Err(MatteError::Param(format!("unknown guidance mode `{other}`"))),
        }
    }
}

pub enum GuidanceSource<'a> {
    Trimap(&'a Trimap),
    Mask(&'a RegionMask),
    Matte(&'a AlphaMatte),
}

pub fn encode_guidance(source: GuidanceSource<'_>, mode: GuidanceMode) -> Result<AlphaMatte> {
    match (source, mode) {
        (GuidanceSource::Trimap(t), GuidanceMode::Trimapfg) => Ok(t.region(TrimapLabel::Foreground).to_matte()),
        (GuidanceSource::Trimap(t), GuidanceMode::TrimapSoft) => Ok(t.to_matte()),
        (GuidanceSource::Mask(m), GuidanceMode::Binary) => Ok(m.to_matte()),
        (GuidanceSource::Matte(a), GuidanceMode::SoftMatte) => Ok(a.clone()),
        (_, mode) => Err(MatteError::Param(format!(
            "guidance source kind does not match mode {mode:?}"
        ))),
    }
}

/// Encodes a guidance image read from disk according to `mode`.
pub fn encode_guidance_matte(raw: &AlphaMatte, mode: GuidanceMode) -> Result<AlphaMatte> {
    match mode {
        GuidanceMode::Trimapfg | GuidanceMode::TrimapSoft => {
            encode_guidance(GuidanceSource::Trimap(&Trimap::from_matte(raw)), mode)
        }
        GuidanceMode::Binary => {
            if raw.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(MatteError::Param("binary guidance must only contain 0 and 1".into()));
            }
            encode_guidance(GuidanceSource::Mask(&binarize(raw, 0.5)), mode)
        }
        GuidanceMode::SoftMatte => encode_guidance(GuidanceSource::Matte(raw), mode),
    }
}

/// Pointwise `a <= b` over two masks of equal size.
pub fn pointwise_le(a: &RegionMask, b: &RegionMask) -> Result<bool> {
    ensure_same(a, b, "pointwise_le")?;
    Ok(a.is_subset_of(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_mask(h: usize, w: usize, p: f64, seed: u64) -> RegionMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w).map(|_| rng.random_bool(p) as u8).collect();
        RegionMask::new(h, w, data).unwrap()
    }

    /// Naive window extremum with the documented border padding.
    fn brute(mask: &RegionMask, k: usize, dilation: bool) -> RegionMask {
        let r = (k / 2) as isize;
        let (h, w) = (mask.height() as isize, mask.width() as isize);
        RegionMask::from_fn(mask.height(), mask.width(), |y, x| {
            let mut any = false;
            let mut all = true;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    let inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
                    let v = if inside {
                        mask.get(yy as usize, xx as usize)
                    } else {
                        !dilation
                    };
                    any |= v;
                    all &= v;
                }
            }
            if dilation {
                any
            } else {
                all
            }
        })
    }

    #[test]
    fn binarize_strict_threshold() {
        let a = AlphaMatte::new(1, 3, vec![0.7, 0.5, 0.2]).unwrap();
        assert_eq!(binarize(&a, 0.5).data(), &[1, 0, 0]);
        let bin = AlphaMatte::new(1, 4, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        for t in [0.01, 0.3, 0.99] {
            assert_eq!(binarize(&bin, t).data(), &[0, 1, 1, 0]);
        }
    }

    #[test]
    fn dilate_basic_cases() {
        assert!(dilate(&RegionMask::zeros(6, 6), 5).unwrap().is_empty());
        let mut m = RegionMask::zeros(5, 5);
        m.set(2, 2, true);
        let d = dilate(&m, 3).unwrap();
        let expect = RegionMask::from_fn(5, 5, |y, x| (1..=3).contains(&y) && (1..=3).contains(&x));
        assert_eq!(d, expect);
        assert!(matches!(dilate(&m, 4), Err(MatteError::Param(_))));
        assert!(erode(&m, 0).is_err());
    }

    #[test]
    fn dilate_matches_brute_force() {
        let m = random_mask(16, 16, 0.2, 3);
        assert_eq!(dilate(&m, 5).unwrap(), brute(&m, 5, true));
    }

    #[test]
    fn erode_basic_cases() {
        let ones = RegionMask::ones(7, 9);
        assert_eq!(erode(&ones, 5).unwrap(), ones);
        let mut m = RegionMask::zeros(5, 5);
        m.set(2, 2, true);
        assert!(erode(&m, 3).unwrap().is_empty());
    }

    #[test]
    fn erode_is_dual_of_dilate() {
        for seed in 0..10 {
            let m = random_mask(16, 13, 0.6, seed);
            for k in [1, 3, 7, 11] {
                let e = erode(&m, k).unwrap();
                assert_eq!(e, brute(&m, k, false));
                assert_eq!(e, dilate(&m.complement(), k).unwrap().complement());
            }
        }
    }

    #[test]
    fn perturb_with_unit_kernels_is_binarization() {
        let alpha = AlphaMatte::from_fn(20, 20, |y, x| (x as f64 + y as f64) / 38.0);
        let cfg = PerturbConfig {
            morph_kernel_range: (1, 1),
            rng_seed: 9,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (out, draw) = perturb_guidance_with(&alpha, &cfg, &mut rng).unwrap();
        assert_eq!(out, binarize(&alpha, draw.threshold));
        assert_eq!(perturb_guidance(&alpha, &cfg).unwrap(), out);
    }

    #[test]
    fn perturb_is_bounded_by_largest_morphology() {
        let alpha = AlphaMatte::from_fn(48, 48, |y, x| {
            let d = ((y as f64 - 23.5).powi(2) + (x as f64 - 23.5).powi(2)).sqrt();
            ((16.0 - d) / 6.0 + 0.5).clamp(0.0, 1.0)
        });
        for seed in 0..20 {
            let cfg = PerturbConfig {
                rng_seed: seed,
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (out, draw) = perturb_guidance_with(&alpha, &cfg, &mut rng).unwrap();
            let bin = binarize(&alpha, draw.threshold);
            let lo = erode(&bin, 31).unwrap().count();
            let hi = dilate(&bin, 31).unwrap().count();
            assert!(lo <= out.count() && out.count() <= hi, "seed {seed}");
            assert!(out.data().iter().all(|&v| v <= 1));
        }
    }

    #[test]
    fn odd_kernel_rounds_up() {
        assert_eq!(odd_kernel(1), 1);
        assert_eq!(odd_kernel(2), 3);
        assert_eq!(odd_kernel(30), 31);
        assert_eq!(odd_kernel(15), 15);
    }

    #[test]
    fn cutmask_cases() {
        let zero = RegionMask::zeros(16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(cutmask(&zero, (0.25, 0.5), &mut rng).unwrap().0.is_empty());

        let m = random_mask(16, 16, 0.5, 4);
        let same = CutPatch {
            src_y: 3,
            src_x: 2,
            dst_y: 3,
            dst_x: 2,
            height: 5,
            width: 6,
        };
        assert_eq!(apply_cut_patch(&m, &same).unwrap(), m);

        let (out, p) = cutmask(&m, (0.25, 0.5), &mut rng).unwrap();
        assert_eq!((p.height, p.width), (4, 8));
        for y in 0..16 {
            for x in 0..16 {
                if p.contains_dst(y, x) {
                    assert_eq!(out.get(y, x), m.get(p.src_y + y - p.dst_y, p.src_x + x - p.dst_x));
                } else {
                    assert_eq!(out.get(y, x), m.get(y, x));
                }
            }
        }
    }

    #[test]
    fn trimap_thresholds_and_band() {
        let t = trimap_from_prob_default(&AlphaMatte::filled(8, 8, 1.0)).unwrap();
        assert!(t.labels().iter().all(|&l| l == TrimapLabel::Foreground));
        let t = trimap_from_prob_default(&AlphaMatte::filled(8, 8, 0.5)).unwrap();
        assert!(t.labels().iter().all(|&l| l == TrimapLabel::Unknown));
        assert!(trimap_from_prob(&AlphaMatte::filled(2, 2, 0.5), 0.1, 0.2, 1).is_err());

        // step edge with one transitional column at x = 50
        let prob = AlphaMatte::from_fn(4, 100, |_, x| match x {
            x if x < 50 => 0.0,
            50 => 0.5,
            _ => 1.0,
        });
        let t = trimap_from_prob(&prob, 0.95, 0.05, 20).unwrap();
        for x in 0..100 {
            let expect = if (30..=70).contains(&x) {
                TrimapLabel::Unknown
            } else if x < 50 {
                TrimapLabel::Background
            } else {
                TrimapLabel::Foreground
            };
            assert_eq!(t.get(2, x), expect, "x = {x}");
        }
    }

    #[test]
    fn guidance_encodings() {
        let t = Trimap::new(
            1,
            3,
            vec![TrimapLabel::Foreground, TrimapLabel::Unknown, TrimapLabel::Background],
        )
        .unwrap();
        let fg = encode_guidance(GuidanceSource::Trimap(&t), GuidanceMode::Trimapfg).unwrap();
        assert_eq!(fg.data(), &[1.0, 0.0, 0.0]);
        let soft = encode_guidance(GuidanceSource::Trimap(&t), GuidanceMode::TrimapSoft).unwrap();
        assert_eq!(soft.data(), &[1.0, 0.5, 0.0]);
        let m = RegionMask::new(1, 3, vec![1, 0, 1]).unwrap();
        let b = encode_guidance(GuidanceSource::Mask(&m), GuidanceMode::Binary).unwrap();
        assert_eq!(b.data(), &[1.0, 0.0, 1.0]);
        assert!(encode_guidance(GuidanceSource::Mask(&m), GuidanceMode::Trimapfg).is_err());
        assert!(encode_guidance_matte(&soft, GuidanceMode::Binary).is_err());
        assert_eq!(encode_guidance_matte(&soft, GuidanceMode::TrimapSoft).unwrap(), soft);
    }
}
