//! Saliency agreement metrics and omnidirectional PSNR variants.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{bilinear_sample, Frame};
use crate::error::{Error, Result};
use crate::geom::{raster_from_direction, GridConfig, Vec3};

pub const PSNR_CAP_DB: f64 = 99.0;
pub const DEFAULT_PERCENTILE: f64 = 95.0;
pub const DEFAULT_SPLITS: usize = 100;
pub const DEFAULT_SPHERE_POINTS: usize = 10242;

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("maps hold {} and {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Metric("empty map".into()));
    }
    Ok(())
}

fn weighted_cc(pred: &[f64], gt: &[f64], weight: impl Fn(usize) -> f64) -> Result<f64> {
    check_same_len(pred, gt)?;
    let mut sw = 0.0;
    let (mut mp, mut mg) = (0.0, 0.0);
    for k in 0..pred.len() {
        let w = weight(k);
        sw += w;
        mp += w * pred[k];
        mg += w * gt[k];
    }
    mp /= sw;
    mg /= sw;
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for k in 0..pred.len() {
        let w = weight(k);
        let (dp, dg) = (pred[k] - mp, gt[k] - mg);
        cov += w * dp * dg;
        vp += w * dp * dp;
        vg += w * dg * dg;
    }
    if vp <= 0.0 || vg <= 0.0 {
        return Err(Error::Metric("correlation is undefined for a constant map".into()));
    }
    Ok((cov / (vp.sqrt() * vg.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation over all pixels.
pub fn cc(pred: &[f64], gt: &[f64]) -> Result<f64> {
    weighted_cc(pred, gt, |_| 1.0)
}

/// Pearson correlation with equirectangular rows weighted by their solid angle.
pub fn cc_area_weighted(pred: &[f64], gt: &[f64], width: usize, height: usize) -> Result<f64> {
    if pred.len() != width * height {
        return Err(Error::shape(format!("map holds {} values, expected {width}×{height}", pred.len())));
    }
    let rows = ws_row_weights(height);
    weighted_cc(pred, gt, |k| rows[k / width])
}

/// Ground-truth fixation pixels as sorted, unique row-major indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationSet {
    pub width: usize,
    pub height: usize,
    indices: Vec<usize>,
}

impl FixationSet {
    pub fn from_indices(width: usize, height: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= width * height {
                return Err(Error::Metric(format!("fixation index {last} outside {width}×{height}")));
            }
        }
        Ok(Self { width, height, indices })
    }

    pub fn from_points(width: usize, height: usize, points: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(c, r)) = points.iter().find(|&&(c, r)| c >= width || r >= height) {
            return Err(Error::Metric(format!("fixation ({c}, {r}) outside {width}×{height}")));
        }
        Self::from_indices(width, height, points.iter().map(|&(c, r)| r * width + c).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn check(&self, pred: &[f64]) -> Result<()> {
        if pred.len() != self.width * self.height {
            return Err(Error::shape(format!(
                "map holds {} values, fixations are on {}×{}",
                pred.len(),
                self.width,
                self.height
            )));
        }
        if self.is_empty() {
            return Err(Error::Metric("AUC needs at least one fixation".into()));
        }
        Ok(())
    }

    fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.width * self.height];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// ROC area with one threshold per distinct fixation saliency value.
pub fn auc_judd(pred: &[f64], fix: &FixationSet) -> Result<f64> {
    fix.check(pred)?;
    let mask = fix.mask();
    let mut fix_vals: Vec<f64> = fix.indices().iter().map(|&i| pred[i]).collect();
    let mut neg_vals: Vec<f64> = pred.iter().zip(&mask).filter(|(_, &m)| !m).map(|(&v, _)| v).collect();
    if neg_vals.is_empty() {
        return Err(Error::Metric("every pixel is a fixation".into()));
    }
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    fix_vals.sort_by(desc);
    neg_vals.sort_by(desc);
    let (nf, nn) = (fix_vals.len() as f64, neg_vals.len() as f64);
    let mut curve = vec![(0.0, 0.0)];
    let (mut fi, mut ni) = (0, 0);
    let mut last = f64::NAN;
    for &th in &fix_vals {
        if th == last {
            continue;
        }
        last = th;
        while fi < fix_vals.len() && fix_vals[fi] >= th {
            fi += 1;
        }
        while ni < neg_vals.len() && neg_vals[ni] >= th {
            ni += 1;
        }
        curve.push((ni as f64 / nn, fi as f64 / nf));
    }
    curve.push((1.0, 1.0));
    Ok(trapezoid(&curve))
}

/// Probability that a positive outranks a negative, ties counted as one half.
pub fn rank_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut neg = negatives.to_vec();
    neg.sort_by(|a, b| a.total_cmp(b));
    let mut acc = 0.0;
    for &p in positives {
        let below = neg.partition_point(|&v| v < p);
        let not_above = neg.partition_point(|&v| v <= p);
        acc += below as f64 + 0.5 * (not_above - below) as f64;
    }
    acc / (positives.len() as f64 * neg.len() as f64)
}

/// Mean ROC area over `splits` draws of `|fix|` negatives sampled uniformly
/// with replacement from the non-fixation pixels.
pub fn auc_borji(pred: &[f64], fix: &FixationSet, splits: usize, seed: u64) -> Result<f64> {
    fix.check(pred)?;
    if splits == 0 {
        return Err(Error::Metric("AUC-Borji needs at least one split".into()));
    }
    let mask = fix.mask();
    let pool: Vec<usize> = (0..pred.len()).filter(|&i| !mask[i]).collect();
    if pool.is_empty() {
        return Err(Error::Metric("every pixel is a fixation".into()));
    }
    let pos: Vec<f64> = fix.indices().iter().map(|&i| pred[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut neg = vec![0.0; pos.len()];
    for _ in 0..splits {
        for n in neg.iter_mut() {
            *n = pred[pool[rng.random_range(0..pool.len())]];
        }
        total += rank_auc(&pos, &neg);
    }
    Ok(total / splits as f64)
}

/// Linear-interpolation percentile of `values` (`p` in percent).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Pixels at or above the `p`-th percentile of `heatmap`.
pub fn binarize_gt(heatmap: &[f64], width: usize, height: usize, p: f64) -> Result<FixationSet> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::config(format!("percentile must lie in (0, 100), got {p}")));
    }
    if heatmap.len() != width * height || heatmap.is_empty() {
        return Err(Error::shape(format!("heatmap holds {} values, expected {width}×{height}", heatmap.len())));
    }
    let lo = heatmap.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = heatmap.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::Metric("cannot binarize a constant heatmap".into()));
    }
    let th = percentile(heatmap, p);
    let idx = heatmap.iter().enumerate().filter(|(_, &v)| v >= th).map(|(i, _)| i).collect();
    FixationSet::from_indices(width, height, idx)
}

/// How RGB error is reduced to one value per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorChannel {
    /// BT.601 luma difference.
    #[default]
    Luma,
    /// Mean of the three per-channel squared errors.
    RgbMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrReport {
    pub db: f64,
    pub mse: f64,
    pub exact_match: bool,
}

fn psnr_from_mse(mse: f64, max: f64) -> PsnrReport {
    if mse <= 0.0 {
        return PsnrReport { db: PSNR_CAP_DB, mse: 0.0, exact_match: true };
    }
    let db = 10.0 * (max * max / mse).log10();
    PsnrReport { db: db.min(PSNR_CAP_DB), mse, exact_match: false }
}

fn sq_error(a: [f64; 3], b: [f64; 3], mode: ErrorChannel) -> f64 {
    match mode {
        ErrorChannel::Luma => {
            let luma = |p: [f64; 3]| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            let d = luma(a) - luma(b);
            d * d
        }
        ErrorChannel::RgbMean => (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum::<f64>() / 3.0,
    }
}

/// Weighted PSNR over a frame sequence. `weights` holds one `H×W` map per
/// frame, or a single map shared by all frames; `None` means uniform.
pub fn psnr_weighted(
    reference: &[Frame],
    distorted: &[Frame],
    weights: Option<&[Vec<f64>]>,
    max: f64,
    mode: ErrorChannel,
) -> Result<PsnrReport> {
    if reference.is_empty() || reference.len() != distorted.len() {
        return Err(Error::shape(format!(
            "{} reference and {} distorted frames",
            reference.len(),
            distorted.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != 1 && w.len() != reference.len() {
            return Err(Error::shape(format!("{} weight maps for {} frames", w.len(), reference.len())));
        }
    }
    let mut mse = 0.0;
    for (t, (r, d)) in reference.iter().zip(distorted).enumerate() {
        let (w, h) = (r.width(), r.height());
        if d.width() != w || d.height() != h {
            return Err(Error::shape(format!("frame {t}: {w}×{h} vs {}×{}", d.width(), d.height())));
        }
        let map = weights.map(|ws| if ws.len() == 1 { &ws[0] } else { &ws[t] });
        if let Some(m) = map {
            if m.len() != w * h {
                return Err(Error::shape(format!("weight map holds {} values, frame is {w}×{h}", m.len())));
            }
            if m.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::Metric("weights must be finite and non-negative".into()));
            }
        }
        let (mut num, mut den) = (0.0, 0.0);
        for row in 0..h {
            for col in 0..w {
                let px = |f: &Frame| [f.pixel(0, col, row), f.pixel(1, col, row), f.pixel(2, col, row)];
                let wt = map.map_or(1.0, |m| m[row * w + col]);
                num += wt * sq_error(px(r), px(d), mode);
                den += wt;
            }
        }
        if den <= 0.0 {
            return Err(Error::Metric(format!("weights of frame {t} sum to zero")));
        }
        mse += num / den;
    }
    Ok(psnr_from_mse(mse / reference.len() as f64, max))
}

/// Per-row solid-angle weights of an equirectangular raster.
pub fn ws_row_weights(height: usize) -> Vec<f64> {
    let h = height as f64;
    (0..height).map(|j| ((j as f64 + 0.5 - h / 2.0) * PI / h).cos()).collect()
}

pub fn ws_weight_map(width: usize, height: usize) -> Vec<f64> {
    ws_row_weights(height).into_iter().flat_map(|w| std::iter::repeat_n(w, width)).collect()
}

/// Near-uniform unit directions for spherical sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePointSet {
    pub generator: &'static str,
    pub seed: u64,
    pub points: Vec<Vec3>,
}

impl SpherePointSet {
    /// Spherical Fibonacci lattice of `m` points; a nonzero `seed` rotates the
    /// lattice by a seeded random longitude.
    pub fn fibonacci(m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("sphere point set needs at least one point"));
        }
        let offset = if seed == 0 { 0.0 } else { ChaCha8Rng::seed_from_u64(seed).random_range(0.0..2.0 * PI) };
        let golden = PI * (3.0 - 5f64.sqrt());
        let points = (0..m)
            .map(|k| {
                let y = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
                let r = (1.0 - y * y).max(0.0).sqrt();
                let a = golden * k as f64 + offset;
                [r * a.sin(), y, r * a.cos()]
            })
            .collect();
        Ok(Self { generator: "fibonacci", seed, points })
    }
}

fn frame_grid(f: &Frame) -> Result<GridConfig> {
    let cfg = GridConfig::new(f.width(), f.height(), 1)?;
    cfg.check_format(f.format)?;
    Ok(cfg)
}

/// PSNR over bilinear samples at sphere points, optionally weighted by a
/// per-frame saliency map sampled at the same points.
pub fn spsnr(
    reference: &[Frame],
    distorted: &[Frame],
    points: &SpherePointSet,
    weight_maps: Option<&[Vec<f64>]>,
    max: f64,
    mode: ErrorChannel,
) -> Result<PsnrReport> {
    if points.points.is_empty() {
        return Err(Error::Metric("no sphere points".into()));
    }
    if reference.is_empty() || reference.len() != distorted.len() {
        return Err(Error::shape(format!(
            "{} reference and {} distorted frames",
            reference.len(),
            distorted.len()
        )));
    }
    let mut mse = 0.0;
    for (t, (r, d)) in reference.iter().zip(distorted).enumerate() {
        if (r.width(), r.height(), r.format) != (d.width(), d.height(), d.format) {
            return Err(Error::shape(format!("frame {t}: reference and distorted rasters differ")));
        }
        let cfg = frame_grid(r)?;
        let coords = points
            .points
            .iter()
            .map(|&p| raster_from_direction(r.format, p, &cfg))
            .collect::<Result<Vec<_>>>()?;
        let weights: Option<Frame> = match weight_maps {
            None => None,
            Some(ws) => {
                let m = if ws.len() == 1 { &ws[0] } else { ws.get(t).ok_or_else(|| Error::shape("missing weight map"))? };
                if m.len() != r.width() * r.height() {
                    return Err(Error::shape("weight map does not match the frame"));
                }
                let data = m.iter().chain(m).chain(m).copied().collect();
                Some(Frame::new(r.width(), r.height(), r.format, data)?)
            }
        };
        let (mut num, mut den) = (0.0, 0.0);
        for &p in &coords {
            let wt = weights.as_ref().map_or(1.0, |w| bilinear_sample(w, p)[0]);
            num += wt * sq_error(bilinear_sample(r, p), bilinear_sample(d, p), mode);
            den += wt;
        }
        if den <= 0.0 {
            return Err(Error::Metric(format!("sampled weights of frame {t} sum to zero")));
        }
        mse += num / den;
    }
    Ok(psnr_from_mse(mse / reference.len() as f64, max))
}
