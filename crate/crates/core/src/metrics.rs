//! Matting error metrics (SAD, MSE, Grad, Conn) over a region mask, per
//! sample reports and corpus aggregation.
//!
//! SAD, Grad and Conn carry a built-in `/1000`; MSE is kept raw and scaled by
//! [`MSE_REPORT_SCALE`] only when written out.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MatteError, Result};
use crate::matte::{ensure_same, AlphaMatte, MattingSample, RegionMask};

pub const MSE_REPORT_SCALE: f64 = 1e3;
pub const GRAD_SIGMA: f64 = 1.4;
pub const CONN_STEP: f64 = 0.1;
pub const CONN_THETA: f64 = 0.15;

fn check(pred: &AlphaMatte, gt: &AlphaMatte, region: &RegionMask) -> Result<()> {
    ensure_same(pred, gt, "metric")?;
    ensure_same(pred, region, "metric region")
}

fn region_sum(values: impl Iterator<Item = f64>, region: &RegionMask) -> f64 {
    values.zip(region.data()).filter(|(_, &m)| m == 1).map(|(v, _)| v).sum()
}

/// `sum_region |pred - gt| / 1000`.
pub fn sad(pred: &AlphaMatte, gt: &AlphaMatte, region: &RegionMask) -> Result<f64> {
    check(pred, gt, region)?;
    let d = pred.data().iter().zip(gt.data()).map(|(p, g)| (p - g).abs());
    Ok(region_sum(d, region) / 1000.0)
}

/// Mean of `(pred - gt)^2` over the region; zero on an empty region.
pub fn mse(pred: &AlphaMatte, gt: &AlphaMatte, region: &RegionMask) -> Result<f64> {
    check(pred, gt, region)?;
    let d = pred.data().iter().zip(gt.data()).map(|(p, g)| (p - g) * (p - g));
    Ok(region_sum(d, region) / region.count().max(1) as f64)
}

/// Separable factors of the x-derivative filter `G(y) * dG(x)`, scaled so
/// the 2-D kernel has unit L2 norm.
pub fn gauss_derivative_taps(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (3.0 * sigma).ceil() as isize;
    let g = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    let smooth: Vec<f64> = (-r..=r).map(|i| g(i as f64)).collect();
    let deriv: Vec<f64> = (-r..=r).map(|i| -(i as f64) * g(i as f64) / (sigma * sigma)).collect();
    let norm = (smooth.iter().map(|v| v * v).sum::<f64>() * deriv.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let s = norm.sqrt();
    (
        smooth.iter().map(|v| v / s).collect(),
        deriv.iter().map(|v| v / s).collect(),
    )
}

/// Gradient magnitude from Gaussian-derivative filtering with replicate padding.
fn gradient_magnitude(a: &AlphaMatte, sigma: f64) -> Vec<f64> {
    let (h, w) = (a.height(), a.width());
    let (smooth, deriv) = gauss_derivative_taps(sigma);
    let r = (smooth.len() / 2) as isize;
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let along_x = |src: &[f64], taps: &[f64]| {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * src[y * w + clampi(x as isize + t as isize - r, w)])
                    .sum();
            }
        }
        out
    };
    let along_y = |src: &[f64], taps: &[f64]| {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * src[clampi(y as isize + t as isize - r, h) * w + x])
                    .sum();
            }
        }
        out
    };
    let gx = along_y(&along_x(a.data(), &deriv), &smooth);
    let gy = along_x(&along_y(a.data(), &deriv), &smooth);
    gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

/// `sum_region (|grad pred| - |grad gt|)^2 / 1000` with Gaussian-derivative
/// filters of scale `sigma`, truncated at `ceil(3 sigma)`.
pub fn grad_error(pred: &AlphaMatte, gt: &AlphaMatte, region: &RegionMask, sigma: f64) -> Result<f64> {
    check(pred, gt, region)?;
    if !(sigma > 0.0) {
        return Err(MatteError::Param(format!("sigma must be > 0, got {sigma}")));
    }
    let (mp, mg) = (gradient_magnitude(pred, sigma), gradient_magnitude(gt, sigma));
    let d = mp.iter().zip(&mg).map(|(p, g)| (p - g) * (p - g));
    Ok(region_sum(d, region) / 1000.0)
}

/// Largest 4-connected component; ties go to the component whose first
/// pixel comes earliest in row-major order.
pub fn largest_component(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![0u32; h * w];
    let mut best: (usize, u32) = (0, 0);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if mask[j] && label[j] == 0 {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    label.iter().map(|&l| best.1 != 0 && l == best.1).collect()
}

/// Connectivity error: per threshold `t_i = i * step` both mattes are
/// binarized with `>= t_i`; each pixel's level is the last threshold before
/// it leaves the largest common component (1 if it never does). With
/// `d = alpha - level`, the per-matte penalty is `d` where `d >= theta` and
/// 0 elsewhere; the error is `sum_region |penalty_pred - penalty_gt| / 1000`.
pub fn conn_error(pred: &AlphaMatte, gt: &AlphaMatte, region: &RegionMask, step: f64, theta: f64) -> Result<f64> {
    check(pred, gt, region)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(MatteError::Param(format!("conn step must be in (0, 1], got {step}")));
    }
    let (h, w) = (pred.height(), pred.width());
    let n = (1.0 / step).round() as usize;
    let mut level = vec![f64::NAN; h * w];
    for i in 1..=n {
        let t = i as f64 * step;
        let both: Vec<bool> = pred
            .data()
            .iter()
            .zip(gt.data())
            .map(|(&p, &g)| p >= t && g >= t)
            .collect();
        let omega = largest_component(&both, h, w);
        for (l, &inside) in level.iter_mut().zip(&omega) {
            if l.is_nan() && !inside {
                *l = (i - 1) as f64 * step;
            }
        }
    }
    let penalty = |a: f64, l: f64| {
        let d = a - l;
        if d >= theta {
            d
        } else {
            0.0
        }
    };
    let d = pred.data().iter().zip(gt.data()).zip(&level).map(|((&p, &g), &l)| {
        let l = if l.is_nan() { 1.0 } else { l };
        (penalty(p, l) - penalty(g, l)).abs()
    });
    Ok(region_sum(d, region) / 1000.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricRegion {
    Unknown,
    Whole,
    Detail,
}

impl MetricRegion {
    pub const ALL: [MetricRegion; 3] = [Self::Unknown, Self::Whole, Self::Detail];

    pub fn name(self) -> &'static str {
        match self {
            Self::Unknown => "unknown",
            Self::Whole => "whole",
            Self::Detail => "detail",
        }
    }

    /// Region mask for a sample, if the sample carries one.
    pub fn mask_for(self, sample: &MattingSample) -> Result<RegionMask> {
        let missing = |what: &str| MatteError::Param(format!("sample has no {what} region mask"));
        match self {
            Self::Whole => Ok(RegionMask::ones(sample.height(), sample.width())),
            Self::Unknown => sample.unknown_region.clone().ok_or_else(|| missing("unknown")),
            Self::Detail => sample.detail_region.clone().ok_or_else(|| missing("detail")),
        }
    }
}

impl fmt::Display for MetricRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricRegion {
    type Err = MatteError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| MatteError::Param(format!("unknown region '{s}' (unknown, whole, detail)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub region: MetricRegion,
    pub pixel_count: usize,
    pub sad: f64,
    /// Raw mean squared error; see [`MetricReport::mse_scaled`].
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
}

impl MetricReport {
    pub fn compute(pred: &AlphaMatte, gt: &AlphaMatte, region: &RegionMask, kind: MetricRegion) -> Result<Self> {
        Ok(Self {
            region: kind,
            pixel_count: region.count(),
            sad: sad(pred, gt, region)?,
            mse: mse(pred, gt, region)?,
            grad: grad_error(pred, gt, region, GRAD_SIGMA)?,
            conn: conn_error(pred, gt, region, CONN_STEP, CONN_THETA)?,
        })
    }

    /// MSE in table units (x 10^3).
    pub fn mse_scaled(&self) -> f64 {
        self.mse * MSE_REPORT_SCALE
    }
}

/// One report per requested region.
pub fn evaluate(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    sample: &MattingSample,
    regions: &[MetricRegion],
) -> Result<Vec<MetricReport>> {
    regions
        .iter()
        .map(|&r| MetricReport::compute(pred, gt, &r.mask_for(sample)?, r))
        .collect()
}

/// A report tagged with its sample id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub sample: String,
    pub report: MetricReport,
}

/// Mean metrics over all rows of one region; MSE in table units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub samples: usize,
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
}

/// Per-region means, summed in row order.
pub fn aggregate(rows: &[CorpusRow]) -> BTreeMap<MetricRegion, Aggregate> {
    let mut out: BTreeMap<MetricRegion, Aggregate> = BTreeMap::new();
    for row in rows {
        let a = out.entry(row.report.region).or_insert(Aggregate {
            samples: 0,
            sad: 0.0,
            mse: 0.0,
            grad: 0.0,
            conn: 0.0,
        });
        a.samples += 1;
        a.sad += row.report.sad;
        a.mse += row.report.mse_scaled();
        a.grad += row.report.grad;
        a.conn += row.report.conn;
    }
    for a in out.values_mut() {
        let n = a.samples as f64;
        a.sad /= n;
        a.mse /= n;
        a.grad /= n;
        a.conn /= n;
    }
    out
}

pub const CSV_HEADER: &str = "sample,region,pixel_count,sad,mse,grad,conn";

/// CSV with one row per (sample, region); the `mse` column is x 10^3.
pub fn write_csv(rows: &[CorpusRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    for r in rows {
        let m = &r.report;
        writeln!(
            f,
            "{},{},{},{:e},{:e},{:e},{:e}",
            r.sample,
            m.region,
            m.pixel_count,
            m.sad,
            m.mse_scaled(),
            m.grad,
            m.conn
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_aggregate_json(rows: &[CorpusRow], path: &Path) -> Result<()> {
    let agg: BTreeMap<String, Aggregate> = aggregate(rows).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    std::fs::write(path, serde_json::to_string_pretty(&agg)? + "\n")?;
    Ok(())
}
