//! Matting losses: masked L1, composition and Laplacian-pyramid terms, the
//! per-level masked sum and the level-weighted total. Every term also has a
//! gradient form with respect to the predicted plane, used to seed the tape.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, MatteError, Result};
use crate::matte::{ensure_same, AlphaMatte, ImagePlane, RegionMask};
use crate::prn::PyramidPrediction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TermWeights {
    pub l1: f64,
    pub comp: f64,
    pub lap: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            comp: 1.0,
            lap: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weights of the stride 8, 4 and 1 outputs.
    pub level_weights: [f64; 3],
    pub term_weights: TermWeights,
    /// Band-pass levels of the Laplacian pyramid.
    pub laplacian_levels: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            level_weights: [1.0, 2.0, 3.0],
            term_weights: TermWeights::default(),
            laplacian_levels: 5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let t = self.term_weights;
        let all = self.level_weights.iter().chain([&t.l1, &t.comp, &t.lap]);
        for &w in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(MatteError::Config(format!("loss weight {w} must be finite and >= 0")));
            }
        }
        if self.laplacian_levels == 0 {
            return Err(MatteError::Config("laplacian_levels must be >= 1".into()));
        }
        Ok(())
    }
}

fn denom(mask: &[u8]) -> f64 {
    mask.iter().filter(|&&m| m == 1).count().max(1) as f64
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Masked mean absolute difference over `channels` planes sharing one mask.
/// Adds `scale * d/dpred` into `grad` when given.
fn masked_l1(pred: &[f64], gt: &[f64], mask: &[u8], scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let hw = mask.len();
    let n = denom(mask) * (pred.len() / hw) as f64;
    let mut sum = 0.0;
    let mut grad = grad;
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        if mask[i % hw] == 1 {
            sum += (p - g).abs();
            if let Some(d) = grad.as_deref_mut() {
                d[i] += scale * sign(p - g) / n;
            }
        }
    }
    sum / n
}

/// Masked mean of `|pred - gt|`; zero on an empty mask.
pub fn l1_loss(pred: &AlphaMatte, gt: &AlphaMatte, mask: &RegionMask) -> Result<f64> {
    ensure_same(pred, gt, "l1_loss")?;
    ensure_same(pred, mask, "l1_loss mask")?;
    Ok(masked_l1(pred.data(), gt.data(), mask.data(), 0.0, None))
}

fn check_rgb(planes: [&ImagePlane; 3]) -> Result<()> {
    if planes.iter().any(|p| p.channels() != 3) {
        return shape_err("composition planes must be RGB");
    }
    Ok(())
}

fn comp_term(
    alpha: &[f64],
    fg: &ImagePlane,
    bg: &ImagePlane,
    image: &ImagePlane,
    mask: &[u8],
    scale: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let hw = alpha.len();
    let n = denom(mask) * 3.0;
    let mut sum = 0.0;
    let mut grad = grad;
    for c in 0..3 {
        let (f, b, img) = (fg.channel(c), bg.channel(c), image.channel(c));
        for i in 0..hw {
            if mask[i] == 0 {
                continue;
            }
            let r = alpha[i] * f[i] + (1.0 - alpha[i]) * b[i] - img[i];
            sum += r.abs();
            if let Some(d) = grad.as_deref_mut() {
                d[i] += scale * sign(r) * (f[i] - b[i]) / n;
            }
        }
    }
    sum / n
}

/// Masked mean over pixels and channels of `|composite(alpha, fg, bg) - image|`.
pub fn composition_loss(
    pred_alpha: &AlphaMatte,
    fg: &ImagePlane,
    bg: &ImagePlane,
    image: &ImagePlane,
    mask: &RegionMask,
) -> Result<f64> {
    check_rgb([fg, bg, image])?;
    for p in [fg, bg, image] {
        ensure_same(pred_alpha, p, "composition_loss")?;
    }
    ensure_same(pred_alpha, mask, "composition_loss mask")?;
    Ok(comp_term(pred_alpha.data(), fg, bg, image, mask.data(), 0.0, None))
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Mirror index without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Separable 5x5 binomial blur with reflect padding, forward or adjoint.
fn blur(src: &[f64], h: usize, w: usize, adjoint: bool) -> Vec<f64> {
    let pass = |src: &[f64], along_x: bool| {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                for (t, &k) in BINOMIAL.iter().enumerate() {
                    let off = t as isize - 2;
                    let j = if along_x {
                        y * w + reflect(x as isize + off, w)
                    } else {
                        reflect(y as isize + off, h) * w + x
                    };
                    if adjoint {
                        out[j] += k * src[y * w + x];
                    } else {
                        out[y * w + x] += k * src[j];
                    }
                }
            }
        }
        out
    };
    if adjoint {
        pass(&pass(src, false), true)
    } else {
        pass(&pass(src, true), false)
    }
}

/// 2x2 mean pooling; a trailing odd row or column is dropped.
fn pool(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out[y * ow + x] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
        }
    }
    out
}

fn pool_adjoint(d: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; h * w];
    for y in 0..oh {
        for x in 0..ow {
            let g = 0.25 * d[y * ow + x];
            let i = 2 * y * w + 2 * x;
            out[i] += g;
            out[i + 1] += g;
            out[i + w] += g;
            out[i + w + 1] += g;
        }
    }
    out
}

/// One pyramid level: data plus its size.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidLevel {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

fn check_levels(h: usize, w: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(MatteError::Param("laplacian pyramid needs at least one level".into()));
    }
    let need = 1usize << levels.min(usize::BITS as usize - 1);
    if h.min(w) < need {
        return Err(MatteError::Param(format!(
            "{h}x{w} is too small for a {levels}-level pyramid"
        )));
    }
    Ok(())
}

/// `levels` band-pass planes (`x - blur(x)` at successively pooled
/// resolutions) followed by the low-pass residual.
pub fn laplacian_pyramid(plane: &[f64], height: usize, width: usize, levels: usize) -> Result<Vec<PyramidLevel>> {
    check_levels(height, width, levels)?;
    if plane.len() != height * width {
        return shape_err("pyramid plane length");
    }
    let (mut cur, mut h, mut w) = (plane.to_vec(), height, width);
    let mut out = Vec::with_capacity(levels + 1);
    for _ in 0..levels {
        let blurred = blur(&cur, h, w, false);
        let band = cur.iter().zip(&blurred).map(|(a, b)| a - b).collect();
        out.push(PyramidLevel {
            height: h,
            width: w,
            data: band,
        });
        cur = pool(&blurred, h, w);
        h /= 2;
        w /= 2;
    }
    out.push(PyramidLevel {
        height: h,
        width: w,
        data: cur,
    });
    Ok(out)
}

/// Laplacian term on one masked plane. `grad` receives `scale * d/dpred`.
fn lap_term(
    pred: &[f64],
    gt: &[f64],
    mask: &[u8],
    h: usize,
    w: usize,
    levels: usize,
    scale: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let masked = |p: &[f64]| -> Vec<f64> { p.iter().zip(mask).map(|(&v, &m)| v * m as f64).collect() };
    let pp = laplacian_pyramid(&masked(pred), h, w, levels)?;
    let pg = laplacian_pyramid(&masked(gt), h, w, levels)?;
    let norm = (h * w) as f64 / denom(mask);
    let mut loss = 0.0;
    let mut dlevels = Vec::with_capacity(pp.len());
    for (k, (a, b)) in pp.iter().zip(&pg).enumerate() {
        let wk = (1u64 << k) as f64 * norm / a.data.len() as f64;
        loss += wk * a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>();
        dlevels.push(
            a.data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| wk * sign(x - y))
                .collect::<Vec<_>>(),
        );
    }
    if let Some(d) = grad {
        // walk the pyramid back to front; `carry` is d/d(current) at level k
        let mut carry = dlevels.pop().expect("residual level");
        for k in (0..levels).rev() {
            let (lh, lw) = (pp[k].height, pp[k].width);
            let band = &dlevels[k];
            let dblur: Vec<f64> = pool_adjoint(&carry, lh, lw)
                .iter()
                .zip(band)
                .map(|(c, b)| c - b)
                .collect();
            let back = blur(&dblur, lh, lw, true);
            carry = band.iter().zip(&back).map(|(b, x)| b + x).collect();
        }
        for ((di, c), &m) in d.iter_mut().zip(&carry).zip(mask) {
            *di += scale * c * m as f64;
        }
    }
    Ok(loss)
}

/// `sum_k 2^k * mean|L_k(pred * mask) - L_k(gt * mask)|`, rescaled by the
/// mask's pixel fraction so partial masks behave like a masked mean.
pub fn laplacian_loss(pred: &AlphaMatte, gt: &AlphaMatte, mask: &RegionMask, levels: usize) -> Result<f64> {
    ensure_same(pred, gt, "laplacian_loss")?;
    ensure_same(pred, mask, "laplacian_loss mask")?;
    lap_term(
        pred.data(),
        gt.data(),
        mask.data(),
        pred.height(),
        pred.width(),
        levels,
        0.0,
        None,
    )
}

/// Ground truth and compositing planes for one sample.
#[derive(Clone, Copy, Debug)]
pub struct Supervision<'a> {
    pub gt: &'a AlphaMatte,
    pub fg: &'a ImagePlane,
    pub bg: &'a ImagePlane,
    pub image: &'a ImagePlane,
}

impl Supervision<'_> {
    fn check(&self, pred: &AlphaMatte) -> Result<()> {
        check_rgb([self.fg, self.bg, self.image])?;
        ensure_same(pred, self.gt, "supervision")?;
        for p in [self.fg, self.bg, self.image] {
            ensure_same(pred, p, "supervision")?;
        }
        Ok(())
    }
}

fn level_term(
    pred: &AlphaMatte,
    sup: &Supervision<'_>,
    g: &RegionMask,
    weights: &LossWeights,
    scale: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    sup.check(pred)?;
    ensure_same(pred, g, "level mask")?;
    let t = weights.term_weights;
    let (p, m) = (pred.data(), g.data());
    let mut loss = 0.0;
    if t.l1 > 0.0 {
        loss += t.l1 * masked_l1(p, sup.gt.data(), m, scale * t.l1, grad.as_deref_mut());
    }
    if t.comp > 0.0 {
        loss += t.comp * comp_term(p, sup.fg, sup.bg, sup.image, m, scale * t.comp, grad.as_deref_mut());
    }
    if t.lap > 0.0 {
        let (h, w) = (pred.height(), pred.width());
        let v = lap_term(p, sup.gt.data(), m, h, w, weights.laplacian_levels, scale * t.lap, grad)?;
        loss += t.lap * v;
    }
    Ok(loss)
}

/// Weighted `l1 + comp + lap`, each evaluated under `g`.
pub fn level_loss(pred: &AlphaMatte, sup: &Supervision<'_>, g: &RegionMask, weights: &LossWeights) -> Result<f64> {
    level_term(pred, sup, g, weights, 0.0, None)
}

/// Value and prediction gradients of the level-weighted total.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub total: f64,
    /// Unweighted per-level losses.
    pub per_level: [f64; 3],
    /// `d total / d fused_l` for each level.
    pub grads: [Vec<f64>; 3],
}

/// `sum_l w_l * level_loss(fused_l, g_l)` with its gradients.
pub fn total_loss_eval(
    fused: [&AlphaMatte; 3],
    masks: [&RegionMask; 3],
    sup: &Supervision<'_>,
    weights: &LossWeights,
) -> Result<LossEval> {
    weights.validate()?;
    let mut per_level = [0.0; 3];
    let mut grads: [Vec<f64>; 3] = Default::default();
    let mut total = 0.0;
    for l in 0..3 {
        let mut d = vec![0.0; fused[l].data().len()];
        let wl = weights.level_weights[l];
        per_level[l] = level_term(fused[l], sup, masks[l], weights, wl, Some(&mut d))?;
        total += wl * per_level[l];
        grads[l] = d;
    }
    Ok(LossEval {
        total,
        per_level,
        grads,
    })
}

/// Level-weighted loss of a full prediction; `g0` is all ones.
pub fn total_loss(pyramid: &PyramidPrediction, sup: &Supervision<'_>, weights: &LossWeights) -> Result<f64> {
    let fused = [&pyramid.fused[0], &pyramid.fused[1], &pyramid.fused[2]];
    let ones = RegionMask::ones(pyramid.fused[0].height(), pyramid.fused[0].width());
    let masks = [&ones, &pyramid.self_guidance[1], &pyramid.self_guidance[2]];
    Ok(total_loss_eval(fused, masks, sup, weights)?.total)
}

/// Foreground colour loss: per-channel L1 and Laplacian against `fg`, plus
/// the composite error of `(alpha, pred, bg)` against `image`, all under
/// `mask`. Returns the value and `d/dpred`.
pub fn color_loss(
    pred: &ImagePlane,
    alpha: &AlphaMatte,
    sup_fg: &ImagePlane,
    bg: &ImagePlane,
    image: &ImagePlane,
    mask: &RegionMask,
    terms: TermWeights,
    laplacian_levels: usize,
) -> Result<(f64, Vec<f64>)> {
    check_rgb([pred, sup_fg, bg])?;
    check_rgb([image, image, image])?;
    for p in [sup_fg, bg, image] {
        ensure_same(pred, p, "color_loss")?;
    }
    ensure_same(pred, alpha, "color_loss alpha")?;
    ensure_same(pred, mask, "color_loss mask")?;
    let (h, w) = (pred.height(), pred.width());
    let hw = h * w;
    let m = mask.data();
    let mut grad = vec![0.0; 3 * hw];
    let mut loss = 0.0;
    if terms.l1 > 0.0 {
        loss += terms.l1 * masked_l1(pred.data(), sup_fg.data(), m, terms.l1, Some(&mut grad));
    }
    if terms.comp > 0.0 {
        let n = denom(m) * 3.0;
        let a = alpha.data();
        let mut sum = 0.0;
        for c in 0..3 {
            let (f, b, img) = (pred.channel(c), bg.channel(c), image.channel(c));
            for i in 0..hw {
                if m[i] == 0 {
                    continue;
                }
                let r = a[i] * f[i] + (1.0 - a[i]) * b[i] - img[i];
                sum += r.abs();
                grad[c * hw + i] += terms.comp * sign(r) * a[i] / n;
            }
        }
        loss += terms.comp * sum / n;
    }
    if terms.lap > 0.0 {
        for c in 0..3 {
            let d = &mut grad[c * hw..(c + 1) * hw];
            let v = lap_term(
                pred.channel(c),
                sup_fg.channel(c),
                m,
                h,
                w,
                laplacian_levels,
                terms.lap / 3.0,
                Some(d),
            )?;
            loss += terms.lap * v / 3.0;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matte::composite;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matte(h: usize, w: usize, rng: &mut ChaCha8Rng) -> AlphaMatte {
        AlphaMatte::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    fn rand_rgb(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImagePlane {
        ImagePlane::new(h, w, 3, (0..3 * h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn rand_mask(h: usize, w: usize, rng: &mut ChaCha8Rng) -> RegionMask {
        RegionMask::from_fn(h, w, |_, _| rng.random_bool(0.6))
    }

    /// Direct 5x5 convolution on an explicitly reflect-padded copy.
    fn oracle_pyramid(x: &[f64], h: usize, w: usize, levels: usize) -> Vec<Vec<f64>> {
        let k1 = [1.0, 4.0, 6.0, 4.0, 1.0];
        let mirror = |i: isize, n: isize| -> usize {
            let mut i = i;
            loop {
                if i < 0 {
                    i = -i;
                } else if i >= n {
                    i = 2 * (n - 1) - i;
                } else {
                    return i as usize;
                }
                if n == 1 {
                    return 0;
                }
            }
        };
        let (mut cur, mut h, mut w) = (x.to_vec(), h, w);
        let mut out = vec![];
        for _ in 0..levels {
            let mut bl = vec![0.0; h * w];
            for y in 0..h {
                for xx in 0..w {
                    let mut s = 0.0;
                    for dy in 0..5 {
                        for dx in 0..5 {
                            let sy = mirror(y as isize + dy as isize - 2, h as isize);
                            let sx = mirror(xx as isize + dx as isize - 2, w as isize);
                            s += k1[dy] * k1[dx] / 256.0 * cur[sy * w + sx];
                        }
                    }
                    bl[y * w + xx] = s;
                }
            }
            out.push(cur.iter().zip(&bl).map(|(a, b)| a - b).collect());
            let (nh, nw) = (h / 2, w / 2);
            let mut next = vec![0.0; nh * nw];
            for y in 0..nh {
                for xx in 0..nw {
                    next[y * nw + xx] = (bl[2 * y * w + 2 * xx]
                        + bl[2 * y * w + 2 * xx + 1]
                        + bl[(2 * y + 1) * w + 2 * xx]
                        + bl[(2 * y + 1) * w + 2 * xx + 1])
                        / 4.0;
                }
            }
            cur = next;
            h = nh;
            w = nw;
        }
        out.push(cur);
        out
    }

    #[test]
    fn l1_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_matte(8, 8, &mut rng);
        let ones = RegionMask::ones(8, 8);
        assert_eq!(l1_loss(&a, &a, &ones).unwrap(), 0.0);
        let full = AlphaMatte::filled(8, 8, 1.0);
        let empty = AlphaMatte::filled(8, 8, 0.0);
        assert_eq!(l1_loss(&full, &empty, &ones).unwrap(), 1.0);
        let b = rand_matte(8, 8, &mut rng);
        let m = rand_mask(8, 8, &mut rng);
        let (mut s, mut n) = (0.0, 0);
        for y in 0..8 {
            for x in 0..8 {
                if m.get(y, x) {
                    s += (a.get(y, x) - b.get(y, x)).abs();
                    n += 1;
                }
            }
        }
        assert!((l1_loss(&a, &b, &m).unwrap() - s / n as f64).abs() < 1e-12);
        assert_eq!(l1_loss(&a, &b, &RegionMask::zeros(8, 8)).unwrap(), 0.0);
    }

    #[test]
    fn composition_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, f, b) = (
            rand_matte(8, 8, &mut rng),
            rand_rgb(8, 8, &mut rng),
            rand_rgb(8, 8, &mut rng),
        );
        let img = composite(&a, &f, &b).unwrap();
        let ones = RegionMask::ones(8, 8);
        assert!(composition_loss(&a, &f, &b, &img, &ones).unwrap() < 1e-7);
        let zero = AlphaMatte::filled(8, 8, 0.0);
        let want = b.mean_abs_diff(&f).unwrap();
        assert!((composition_loss(&zero, &f, &b, &f, &ones).unwrap() - want).abs() < 1e-12);
        let m = rand_mask(8, 8, &mut rng);
        let other = rand_rgb(8, 8, &mut rng);
        let (mut s, mut n) = (0.0, 0.0);
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    if m.get(y, x) {
                        let al = a.get(y, x);
                        s += (al * f.get(c, y, x) + (1.0 - al) * b.get(c, y, x) - other.get(c, y, x)).abs();
                        n += 1.0;
                    }
                }
            }
        }
        assert!((composition_loss(&a, &f, &b, &other, &m).unwrap() - s / n).abs() < 1e-12);
    }

    #[test]
    fn pyramid_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (h, w, levels) in [(32, 32, 5), (16, 24, 3), (8, 8, 3), (12, 9, 2)] {
            let x: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let got = laplacian_pyramid(&x, h, w, levels).unwrap();
            let want = oracle_pyramid(&x, h, w, levels);
            assert_eq!(got.len(), levels + 1);
            for (g, o) in got.iter().zip(&want) {
                assert_eq!(g.data.len(), o.len());
                for (a, b) in g.data.iter().zip(o) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn laplacian_random_pair_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, g) = (rand_matte(32, 32, &mut rng), rand_matte(32, 32, &mut rng));
        let m = rand_mask(32, 32, &mut rng);
        let mk = |a: &AlphaMatte| -> Vec<f64> { a.data().iter().zip(m.data()).map(|(v, &k)| v * k as f64).collect() };
        let (op, og) = (oracle_pyramid(&mk(&p), 32, 32, 5), oracle_pyramid(&mk(&g), 32, 32, 5));
        let mut want = 0.0;
        for (k, (a, b)) in op.iter().zip(&og).enumerate() {
            let mean = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
            want += 2f64.powi(k as i32) * mean;
        }
        want *= 1024.0 / m.count() as f64;
        assert!((laplacian_loss(&p, &g, &m, 5).unwrap() - want).abs() < 1e-6);
        assert_eq!(laplacian_loss(&p, &p, &m, 5).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_lands_in_the_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = AlphaMatte::from_fn(32, 32, |_, _| 0.2 + 0.5 * rng.random::<f64>());
        let c = 0.1;
        let p = g.map(|v| v + c);
        let pp = laplacian_pyramid(p.data(), 32, 32, 3).unwrap();
        let pg = laplacian_pyramid(g.data(), 32, 32, 3).unwrap();
        for k in 0..3 {
            for (a, b) in pp[k].data.iter().zip(&pg[k].data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (a, b) in pp[3].data.iter().zip(&pg[3].data) {
            assert!((a - b - c).abs() < 1e-12);
        }
        let loss = laplacian_loss(&p, &g, &RegionMask::ones(32, 32), 3).unwrap();
        assert!((loss - 8.0 * c).abs() < 1e-12);
    }

    #[test]
    fn pyramid_rejects_small_planes() {
        let a = AlphaMatte::filled(8, 8, 0.5);
        assert!(laplacian_loss(&a, &a, &RegionMask::ones(8, 8), 4).is_err());
        assert!(laplacian_loss(&a, &a, &RegionMask::ones(8, 8), 0).is_err());
    }

    fn sup_parts(rng: &mut ChaCha8Rng, n: usize) -> (AlphaMatte, ImagePlane, ImagePlane, ImagePlane) {
        let gt = rand_matte(n, n, rng);
        let (f, b) = (rand_rgb(n, n, rng), rand_rgb(n, n, rng));
        let img = rand_rgb(n, n, rng);
        (gt, f, b, img)
    }

    #[test]
    fn level_loss_is_the_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (gt, f, b, img) = sup_parts(&mut rng, 16);
        let sup = Supervision {
            gt: &gt,
            fg: &f,
            bg: &b,
            image: &img,
        };
        let p = rand_matte(16, 16, &mut rng);
        let m = rand_mask(16, 16, &mut rng);
        let w = LossWeights {
            laplacian_levels: 3,
            ..Default::default()
        };
        let want = l1_loss(&p, &gt, &m).unwrap()
            + composition_loss(&p, &f, &b, &img, &m).unwrap()
            + laplacian_loss(&p, &gt, &m, 3).unwrap();
        assert!((level_loss(&p, &sup, &m, &w).unwrap() - want).abs() < 1e-12);
        assert_eq!(level_loss(&p, &sup, &RegionMask::zeros(16, 16), &w).unwrap(), 0.0);
    }

    #[test]
    fn total_is_level_weighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (gt, f, b, img) = sup_parts(&mut rng, 16);
        let sup = Supervision {
            gt: &gt,
            fg: &f,
            bg: &b,
            image: &img,
        };
        let w = LossWeights {
            laplacian_levels: 3,
            ..Default::default()
        };
        let ps = [
            rand_matte(16, 16, &mut rng),
            rand_matte(16, 16, &mut rng),
            rand_matte(16, 16, &mut rng),
        ];
        let ones = RegionMask::ones(16, 16);
        let (g1, g2) = (rand_mask(16, 16, &mut rng), rand_mask(16, 16, &mut rng));
        let e = total_loss_eval([&ps[0], &ps[1], &ps[2]], [&ones, &g1, &g2], &sup, &w).unwrap();
        let a = level_loss(&ps[0], &sup, &ones, &w).unwrap();
        let bb = level_loss(&ps[1], &sup, &g1, &w).unwrap();
        let c = level_loss(&ps[2], &sup, &g2, &w).unwrap();
        assert!((e.total - (a + 2.0 * bb + 3.0 * c)).abs() < 1e-12);
        assert_eq!(e.per_level, [a, bb, c]);
        let z = total_loss_eval(
            [&gt, &gt, &gt],
            [&ones, &g1, &g2],
            &Supervision {
                image: &composite(&gt, &f, &b).unwrap(),
                ..sup
            },
            &w,
        )
        .unwrap();
        assert!(z.total < 1e-7);
    }

    #[test]
    fn prediction_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (gt, f, b, img) = sup_parts(&mut rng, 8);
        let sup = Supervision {
            gt: &gt,
            fg: &f,
            bg: &b,
            image: &img,
        };
        let w = LossWeights {
            laplacian_levels: 3,
            ..Default::default()
        };
        let ps = [
            rand_matte(8, 8, &mut rng),
            rand_matte(8, 8, &mut rng),
            rand_matte(8, 8, &mut rng),
        ];
        let ones = RegionMask::ones(8, 8);
        let (g1, g2) = (rand_mask(8, 8, &mut rng), rand_mask(8, 8, &mut rng));
        let masks = [&ones, &g1, &g2];
        let e = total_loss_eval([&ps[0], &ps[1], &ps[2]], masks, &sup, &w).unwrap();
        let h = 1e-6;
        for l in 0..3 {
            for i in 0..64 {
                let bump = |d: f64| {
                    let mut q = ps.clone();
                    let (y, x) = (i / 8, i % 8);
                    q[l].set(y, x, q[l].get(y, x) + d);
                    total_loss_eval([&q[0], &q[1], &q[2]], masks, &sup, &w).unwrap().total
                };
                let num = (bump(h) - bump(-h)) / (2.0 * h);
                let ana = e.grads[l][i];
                assert!(
                    (num - ana).abs() <= 1e-6 * (1.0 + ana.abs()),
                    "level {l} px {i}: {num} vs {ana}"
                );
            }
        }
    }

    #[test]
    fn color_loss_gradient_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, f, b) = (
            rand_matte(8, 8, &mut rng),
            rand_rgb(8, 8, &mut rng),
            rand_rgb(8, 8, &mut rng),
        );
        let img = composite(&a, &f, &b).unwrap();
        let ones = RegionMask::ones(8, 8);
        let t = TermWeights::default();
        let (z, _) = color_loss(&f, &a, &f, &b, &img, &ones, t, 3).unwrap();
        assert!(z < 1e-7);
        let p = rand_rgb(8, 8, &mut rng);
        let m = rand_mask(8, 8, &mut rng);
        let (_, g) = color_loss(&p, &a, &f, &b, &img, &m, t, 3).unwrap();
        let h = 1e-6;
        for i in 0..3 * 64 {
            let bump = |d: f64| {
                let mut data = p.data().to_vec();
                data[i] += d;
                let q = ImagePlane::new(8, 8, 3, data).unwrap();
                color_loss(&q, &a, &f, &b, &img, &m, t, 3).unwrap().0
            };
            let num = (bump(h) - bump(-h)) / (2.0 * h);
            assert!(
                (num - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()),
                "{i}: {num} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn pixels_outside_the_mask_do_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (gt, f, b, img) = sup_parts(&mut rng, 16);
        let sup = Supervision {
            gt: &gt,
            fg: &f,
            bg: &b,
            image: &img,
        };
        let w = LossWeights {
            laplacian_levels: 3,
            ..Default::default()
        };
        let p = rand_matte(16, 16, &mut rng);
        let m = rand_mask(16, 16, &mut rng);
        let q = AlphaMatte::from_fn(16, 16, |y, x| if m.get(y, x) { p.get(y, x) } else { rng.random() });
        let (lp, lq) = (
            level_loss(&p, &sup, &m, &w).unwrap(),
            level_loss(&q, &sup, &m, &w).unwrap(),
        );
        assert!((lp - lq).abs() < 1e-12);
    }
}
