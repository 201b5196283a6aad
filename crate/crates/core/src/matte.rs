//! Image, matte and region-mask planes plus the pixel arithmetic every other
//! module builds on: compositing, resampling and foreground merging.
//!
//! All values are normalized reals. Planes are stored channel-major
//! (`c * H * W + y * W + x`) and every public constructor clamps into
//! `[0, 1]` with a hard clamp, so exact 0 and exact 1 stay representable.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, MatteError, Result};

/// Guard for divisions by an accumulated alpha.
pub const MERGE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bilinear,
    Nearest,
    Area,
}

impl Interpolation {
    pub const ALL: [Interpolation; 3] = [Self::Bilinear, Self::Nearest, Self::Area];
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn check_values(data: &mut [f64]) -> Result<()> {
    for v in data.iter_mut() {
        if !v.is_finite() {
            return Err(MatteError::Param("non-finite pixel value".into()));
        }
        *v = clamp01(*v);
    }
    Ok(())
}

/// A 1- or 3-channel image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err("image planes need height, width >= 1");
        }
        if channels != 1 && channels != 3 {
            return shape_err(format!("unsupported channel count {channels}"));
        }
        if data.len() != height * width * channels {
            return shape_err(format!("{} values for a {height}x{width}x{channels} plane", data.len()));
        }
        check_values(&mut data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels]).expect("filled plane dimensions")
    }

    /// Builds a 3-channel plane from a per-pixel RGB function.
    pub fn from_rgb_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let hw = height * width;
        let mut data = vec![0.0; 3 * hw];
        for y in 0..height {
            for x in 0..width {
                let rgb = f(y, x);
                for c in 0..3 {
                    data[c * hw + y * width + x] = rgb[c];
                }
            }
        }
        Self::new(height, width, 3, data).expect("rgb plane")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[c * self.height * self.width + y * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let idx = c * self.height * self.width + y * self.width + x;
        self.data[idx] = clamp01(v);
    }

    pub fn same_dims<T: Dims>(&self, other: &T) -> bool {
        self.height == other.dims().0 && self.width == other.dims().1
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| clamp01(f(v))).collect();
        Self { data, ..*self }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return shape_err("crop window outside the plane");
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for c in 0..self.channels {
            let plane = self.channel(c);
            for y in top..top + height {
                data.extend_from_slice(&plane[y * self.width + left..y * self.width + left + width]);
            }
        }
        Ok(Self {
            height,
            width,
            channels: self.channels,
            data,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        flip_rows(&mut out.data, self.height * self.channels, self.width);
        out
    }

    /// Mean absolute difference over all channels and pixels.
    pub fn mean_abs_diff(&self, other: &ImagePlane) -> Result<f64> {
        if self.height != other.height || self.width != other.width || self.channels != other.channels {
            return shape_err("mean_abs_diff dims");
        }
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Single-channel opacity map.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatte {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl AlphaMatte {
    pub fn new(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err("alpha mattes need height, width >= 1");
        }
        if data.len() != height * width {
            return shape_err(format!("{} values for a {height}x{width} matte", data.len()));
        }
        check_values(&mut data)?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::new(height, width, vec![value; height * width]).expect("filled matte dimensions")
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data).expect("matte from fn")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = clamp01(v);
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| clamp01(f(v))).collect();
        Self { data, ..*self }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return shape_err("crop window outside the matte");
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            data.extend_from_slice(&self.data[y * self.width + left..y * self.width + left + width]);
        }
        Ok(Self { height, width, data })
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        flip_rows(&mut out.data, self.height, self.width);
        out
    }

    /// Pixels with `0 < alpha < 1`.
    pub fn transition_region(&self) -> RegionMask {
        RegionMask::from_predicate(self, |a| a > 0.0 && a < 1.0)
    }

    pub fn to_plane(&self) -> ImagePlane {
        ImagePlane {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }

    pub fn from_plane(plane: &ImagePlane) -> Result<Self> {
        if plane.channels != 1 {
            return shape_err("alpha matte needs a single-channel plane");
        }
        Ok(Self {
            height: plane.height,
            width: plane.width,
            data: plane.data.clone(),
        })
    }

    pub fn mean_abs_diff(&self, other: &AlphaMatte) -> Result<f64> {
        ensure_same(self, other, "mean_abs_diff")?;
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Strictly binary map; 1 marks membership.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegionMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RegionMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return shape_err("region masks need height, width >= 1");
        }
        if data.len() != height * width {
            return shape_err(format!("{} values for a {height}x{width} mask", data.len()));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(MatteError::Param("region masks must be strictly binary".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self { height, width, data }
    }

    pub fn from_predicate(alpha: &AlphaMatte, pred: impl Fn(f64) -> bool) -> Self {
        let data = alpha.data.iter().map(|&a| pred(a) as u8).collect();
        Self {
            height: alpha.height,
            width: alpha.width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn complement(&self) -> Self {
        let data = self.data.iter().map(|&v| 1 - v).collect();
        Self { data, ..*self }
    }

    pub fn and(&self, other: &RegionMask) -> Result<Self> {
        ensure_same(self, other, "mask and")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect();
        Ok(Self { data, ..*self })
    }

    pub fn or(&self, other: &RegionMask) -> Result<Self> {
        ensure_same(self, other, "mask or")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect();
        Ok(Self { data, ..*self })
    }

    /// Pointwise `self <= other`.
    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.data.iter().zip(&other.data).all(|(a, b)| a <= b)
    }

    pub fn to_matte(&self) -> AlphaMatte {
        AlphaMatte {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return shape_err("crop window outside the mask");
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            data.extend_from_slice(&self.data[y * self.width + left..y * self.width + left + width]);
        }
        Ok(Self { height, width, data })
    }
}

fn flip_rows(data: &mut [f64], rows: usize, width: usize) {
    for r in 0..rows {
        data[r * width..(r + 1) * width].reverse();
    }
}

/// Anything with a pixel grid.
pub trait Dims {
    fn dims(&self) -> (usize, usize);
}

impl Dims for ImagePlane {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

impl Dims for AlphaMatte {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

impl Dims for RegionMask {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

pub(crate) fn ensure_same<A: Dims, B: Dims>(a: &A, b: &B, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return shape_err(format!("{what}: {:?} vs {:?}", a.dims(), b.dims()));
    }
    Ok(())
}

fn ensure_rgb(p: &ImagePlane, what: &str) -> Result<()> {
    if p.channels != 3 {
        return shape_err(format!("{what} must have 3 channels, got {}", p.channels));
    }
    Ok(())
}

/// `I = alpha * F + (1 - alpha) * B` per pixel and channel.
pub fn composite(alpha: &AlphaMatte, fg: &ImagePlane, bg: &ImagePlane) -> Result<ImagePlane> {
    ensure_same(alpha, fg, "composite fg")?;
    ensure_same(alpha, bg, "composite bg")?;
    ensure_rgb(fg, "foreground")?;
    ensure_rgb(bg, "background")?;
    let hw = alpha.height * alpha.width;
    let mut data = vec![0.0; 3 * hw];
    for c in 0..3 {
        let (f, b) = (fg.channel(c), bg.channel(c));
        let out = &mut data[c * hw..(c + 1) * hw];
        for i in 0..hw {
            let a = alpha.data[i];
            out[i] = clamp01(a * f[i] + (1.0 - a) * b[i]);
        }
    }
    Ok(ImagePlane {
        height: alpha.height,
        width: alpha.width,
        channels: 3,
        data,
    })
}

/// Over-operator merge of two foreground layers: `(a1, f1)` sits on top.
///
/// Colors are alpha-weighted; pixels with zero combined alpha take `f2`.
pub fn merge_foregrounds(
    a1: &AlphaMatte,
    f1: &ImagePlane,
    a2: &AlphaMatte,
    f2: &ImagePlane,
) -> Result<(AlphaMatte, ImagePlane)> {
    ensure_same(a1, f1, "merge f1")?;
    ensure_same(a1, a2, "merge a2")?;
    ensure_same(a1, f2, "merge f2")?;
    ensure_rgb(f1, "f1")?;
    ensure_rgb(f2, "f2")?;
    let hw = a1.height * a1.width;
    let alpha: Vec<f64> = a1
        .data
        .iter()
        .zip(&a2.data)
        .map(|(&p, &q)| clamp01(p + q * (1.0 - p)))
        .collect();
    let mut color = vec![0.0; 3 * hw];
    for c in 0..3 {
        let (c1, c2) = (f1.channel(c), f2.channel(c));
        for i in 0..hw {
            let a = alpha[i];
            color[c * hw + i] = if a > 0.0 {
                let (p, q) = (a1.data[i], a2.data[i]);
                clamp01((p * c1[i] + (1.0 - p) * q * c2[i]) / a.max(MERGE_EPS))
            } else {
                c2[i]
            };
        }
    }
    Ok((
        AlphaMatte {
            height: a1.height,
            width: a1.width,
            data: alpha,
        },
        ImagePlane {
            height: a1.height,
            width: a1.width,
            channels: 3,
            data: color,
        },
    ))
}

/// Taps `(source index, weight)` for resampling one axis.
pub(crate) fn axis_taps(in_len: usize, out_len: usize, mode: Interpolation) -> Vec<Vec<(usize, f64)>> {
    match mode {
        Interpolation::Nearest => (0..out_len)
            .map(|d| vec![(((d * in_len) / out_len).min(in_len - 1), 1.0)])
            .collect(),
        Interpolation::Bilinear => bilinear_taps(in_len, out_len)
            .into_iter()
            .map(|(i0, i1, l)| {
                if i0 == i1 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - l), (i1, l)]
                }
            })
            .collect(),
        Interpolation::Area => {
            let scale = in_len as f64 / out_len as f64;
            (0..out_len)
                .map(|d| {
                    let lo = d as f64 * scale;
                    let hi = (d + 1) as f64 * scale;
                    let first = lo.floor() as usize;
                    let last = (hi.ceil() as usize).min(in_len);
                    (first..last)
                        .filter_map(|i| {
                            let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                            (overlap > 0.0).then_some((i, overlap / scale))
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Half-pixel-centre bilinear taps `(i0, i1, lambda)`; out-of-range source
/// coordinates clamp to the edge.
pub(crate) fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let l = if i0 == i1 { 0.0 } else { src - i0 as f64 };
            (i0, i1, l)
        })
        .collect()
}

/// Separable resampling of one `h x w` grid.
pub(crate) fn resample_grid(src: &[f64], h: usize, w: usize, th: usize, tw: usize, mode: Interpolation) -> Vec<f64> {
    let tx = axis_taps(w, tw, mode);
    let ty = axis_taps(h, th, mode);
    let mut tmp = vec![0.0; h * tw];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, taps) in tx.iter().enumerate() {
            tmp[y * tw + x] = taps.iter().map(|&(i, wt)| row[i] * wt).sum();
        }
    }
    let mut out = vec![0.0; th * tw];
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..tw {
            out[y * tw + x] = taps.iter().map(|&(i, wt)| tmp[i * tw + x] * wt).sum();
        }
    }
    for v in &mut out {
        *v = clamp01(*v);
    }
    out
}

/// Planes that can be resized.
pub trait Resample: Sized {
    fn resample(&self, target_h: usize, target_w: usize, mode: Interpolation) -> Result<Self>;
}

impl Resample for ImagePlane {
    fn resample(&self, target_h: usize, target_w: usize, mode: Interpolation) -> Result<Self> {
        if target_h == 0 || target_w == 0 {
            return shape_err("resample target must be at least 1x1");
        }
        let mut data = Vec::with_capacity(target_h * target_w * self.channels);
        for c in 0..self.channels {
            data.extend(resample_grid(
                self.channel(c),
                self.height,
                self.width,
                target_h,
                target_w,
                mode,
            ));
        }
        Ok(Self {
            height: target_h,
            width: target_w,
            channels: self.channels,
            data,
        })
    }
}

impl Resample for AlphaMatte {
    fn resample(&self, target_h: usize, target_w: usize, mode: Interpolation) -> Result<Self> {
        if target_h == 0 || target_w == 0 {
            return shape_err("resample target must be at least 1x1");
        }
        let data = resample_grid(&self.data, self.height, self.width, target_h, target_w, mode);
        Ok(Self {
            height: target_h,
            width: target_w,
            data,
        })
    }
}

pub fn resample<P: Resample>(plane: &P, target_h: usize, target_w: usize, mode: Interpolation) -> Result<P> {
    plane.resample(target_h, target_w, mode)
}

/// One supervised (or evaluated) matting example.
#[derive(Clone, Debug, PartialEq)]
pub struct MattingSample {
    pub image: ImagePlane,
    pub alpha: AlphaMatte,
    pub foreground: ImagePlane,
    pub background: ImagePlane,
    pub guidance: AlphaMatte,
    pub unknown_region: Option<RegionMask>,
    pub detail_region: Option<RegionMask>,
    /// False once the image has been degraded after compositing.
    pub composite_exact: bool,
}

impl MattingSample {
    pub fn height(&self) -> usize {
        self.alpha.height
    }

    pub fn width(&self) -> usize {
        self.alpha.width
    }

    /// Checks shared dimensions and, for exact samples, `image == composite(alpha, F, B)`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        ensure_same(&self.alpha, &self.image, "sample image")?;
        ensure_same(&self.alpha, &self.foreground, "sample foreground")?;
        ensure_same(&self.alpha, &self.background, "sample background")?;
        ensure_same(&self.alpha, &self.guidance, "sample guidance")?;
        for region in [&self.unknown_region, &self.detail_region].into_iter().flatten() {
            ensure_same(&self.alpha, region, "sample region")?;
        }
        if self.composite_exact {
            let expect = composite(&self.alpha, &self.foreground, &self.background)?;
            let worst = expect
                .data
                .iter()
                .zip(&self.image.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if worst > tol {
                return Err(MatteError::Data(format!(
                    "image deviates from its composite by {worst:e} (tolerance {tol:e})"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(h: usize, w: usize, v: f64) -> ImagePlane {
        ImagePlane::filled(h, w, 3, v)
    }

    #[test]
    fn composite_selects_and_blends() {
        let (f, b) = (rgb(3, 4, 0.3), rgb(3, 4, 0.9));
        let i1 = composite(&AlphaMatte::filled(3, 4, 1.0), &f, &b).unwrap();
        assert!(i1.data().iter().all(|&v| v == 0.3));
        let i0 = composite(&AlphaMatte::filled(3, 4, 0.0), &f, &b).unwrap();
        assert!(i0.data().iter().all(|&v| v == 0.9));
        let half = composite(&AlphaMatte::filled(3, 4, 0.5), &rgb(3, 4, 1.0), &rgb(3, 4, 0.0)).unwrap();
        assert!(half.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn composite_rejects_mismatched_dims() {
        let err = composite(&AlphaMatte::filled(3, 4, 1.0), &rgb(3, 5, 0.3), &rgb(3, 4, 0.9));
        assert!(matches!(err, Err(MatteError::Shape(_))));
        let gray = ImagePlane::filled(3, 4, 1, 0.2);
        assert!(composite(&AlphaMatte::filled(3, 4, 1.0), &gray, &rgb(3, 4, 0.9)).is_err());
    }

    #[test]
    fn constructors_clamp_and_reject_nan() {
        let a = AlphaMatte::new(1, 3, vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(a.data(), &[0.0, 0.5, 1.0]);
        assert!(AlphaMatte::new(1, 1, vec![f64::NAN]).is_err());
        assert!(AlphaMatte::new(0, 1, vec![]).is_err());
        assert!(RegionMask::new(1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn resample_constant_is_constant() {
        let a = AlphaMatte::filled(5, 7, 0.4);
        for mode in Interpolation::ALL {
            for (h, w) in [(1, 1), (3, 3), (10, 14), (13, 5)] {
                let r = a.resample(h, w, mode).unwrap();
                assert_eq!((r.height(), r.width()), (h, w));
                assert!(r.data().iter().all(|v| (v - 0.4).abs() < 1e-12), "{mode:?} {h}x{w}");
            }
        }
    }

    #[test]
    fn resample_nearest_duplicates_columns() {
        let a = AlphaMatte::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = a.resample(2, 4, Interpolation::Nearest).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn resample_bilinear_matches_hand_weights() {
        // Half-pixel centres: output row y samples source row (y + 0.5) / 2 - 0.5,
        // clamped to [0, 1], i.e. 0, 0.25, 0.75, 1 for y = 0..4.
        let a = AlphaMatte::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let r = a.resample(4, 4, Interpolation::Bilinear).unwrap();
        let rows = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                assert!((r.get(y, x) - rows[y]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn resample_area_averages_blocks() {
        let a = AlphaMatte::new(2, 4, vec![0.0, 1.0, 0.5, 0.5, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let r = a.resample(1, 2, Interpolation::Area).unwrap();
        assert!((r.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((r.get(0, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn merge_foreground_cases() {
        let f1 = rgb(2, 2, 0.2);
        let f2 = rgb(2, 2, 0.8);
        let a1 = AlphaMatte::new(2, 2, vec![0.0, 0.3, 1.0, 0.6]).unwrap();
        let (a, f) = merge_foregrounds(&a1, &f1, &AlphaMatte::filled(2, 2, 0.0), &f2).unwrap();
        assert_eq!(a, a1);
        for i in 1..4 {
            assert!((f.data()[i] - 0.2).abs() < 1e-12);
        }
        // zero combined alpha falls back to the second layer colour
        assert_eq!(f.data()[0], 0.8);

        let (a, f) = merge_foregrounds(&AlphaMatte::filled(2, 2, 1.0), &f1, &a1, &f2).unwrap();
        assert!(a.data().iter().all(|&v| v == 1.0));
        assert!(f.data().iter().all(|&v| (v - 0.2).abs() < 1e-12));

        let (a, _) =
            merge_foregrounds(&AlphaMatte::filled(2, 2, 0.5), &f1, &AlphaMatte::filled(2, 2, 1.0), &f2).unwrap();
        assert!(a.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sample_validation_flags_inconsistent_image() {
        let alpha = AlphaMatte::filled(2, 2, 0.5);
        let (fg, bg) = (rgb(2, 2, 1.0), rgb(2, 2, 0.0));
        let image = composite(&alpha, &fg, &bg).unwrap();
        let mut s = MattingSample {
            image,
            alpha: alpha.clone(),
            foreground: fg,
            background: bg,
            guidance: alpha,
            unknown_region: None,
            detail_region: None,
            composite_exact: true,
        };
        s.validate(1e-9).unwrap();
        s.image = rgb(2, 2, 0.7);
        assert!(s.validate(1e-6).is_err());
        s.composite_exact = false;
        s.validate(1e-6).unwrap();
    }
}
