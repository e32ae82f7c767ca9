//! Per-patch saliency scores and their spherical smoothing into dense maps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::FusedFeatures;
use crate::geom::{direction_from_raster, dot, patch_centers, Format, GridConfig, PixelCoord, Vec3};
use crate::nn::Tensor;

/// Mixing weights of the local, temporal and spatial terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0 }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `T × N` scores: distance of each local token to the global token, to its
/// own temporal mean, and to its frame's spatial mean.
pub fn saliency_scores(fused: &FusedFeatures, w: ScoreWeights) -> Tensor {
    let (t_len, n, c) = (fused.frames, fused.patches, fused.channels());
    let mut temporal_mean = vec![0.0; n * c];
    for t in 0..t_len {
        for i in 0..n {
            for (m, x) in temporal_mean[i * c..(i + 1) * c].iter_mut().zip(fused.local_token(t, i)) {
                *m += x;
            }
        }
    }
    temporal_mean.iter_mut().for_each(|m| *m /= t_len as f64);

    let mut out = Vec::with_capacity(t_len * n);
    for t in 0..t_len {
        let mut spatial_mean = vec![0.0; c];
        for i in 0..n {
            for (m, x) in spatial_mean.iter_mut().zip(fused.local_token(t, i)) {
                *m += x;
            }
        }
        spatial_mean.iter_mut().for_each(|m| *m /= n as f64);
        let g = fused.global_token(t);
        for i in 0..n {
            let x = fused.local_token(t, i);
            out.push(
                w.alpha * sq_dist(x, g)
                    + w.beta * sq_dist(x, &temporal_mean[i * c..(i + 1) * c])
                    + w.gamma * sq_dist(x, &spatial_mean),
            );
        }
    }
    Tensor::new(vec![t_len, n], out).expect("T×N scores")
}

/// Default smoothing width in pixels for a raster `width` pixels wide.
pub fn default_sigma(width: usize) -> f64 {
    width as f64 / 64.0
}

/// Concentration `a = W² / (4π²σ²)` for smoothing width `sigma` pixels.
pub fn concentration(width: usize, sigma: f64) -> f64 {
    let w = width as f64;
    w * w / (4.0 * std::f64::consts::PI.powi(2) * sigma * sigma)
}

/// `(a / sinh a) · e^{a cosψ}`, evaluated without overflow for large `a`.
pub fn vmf_kernel(a: f64, cos_psi: f64) -> f64 {
    // a/sinh(a)·e^{a c} = 2a/(1 − e^{−2a}) · e^{a(c − 1)}
    let norm = 2.0 * a / -(-2.0 * a).exp_m1();
    norm * (a * (cos_psi - 1.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelSupport {
    /// Ignore contributions beyond `ψ = 4/√a`.
    #[default]
    Truncated,
    Exact,
}

/// Dense per-frame maps, `T` frames of `H × W`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMaps {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl SaliencyMaps {
    pub fn new(width: usize, height: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * frames {
            return Err(Error::shape(format!(
                "{} values cannot fill {frames} maps of {width}×{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, frames, data })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[t * n..(t + 1) * n]
    }
}

/// Pixel-center directions of a raster, row-major.
pub fn pixel_directions(format: Format, cfg: &GridConfig) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(cfg.width * cfg.height);
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            out.push(direction_from_raster(format, PixelCoord::new(col as f64, row as f64), cfg));
        }
    }
    out
}

/// Spreads `T × N` patch scores over the sphere with a von Mises-Fisher
/// kernel centered on each patch, weighted by the cosine of the patch
/// latitude, and summed over patches.
pub fn smooth_to_map(
    coarse: &Tensor,
    format: Format,
    cfg: &GridConfig,
    sigma: f64,
    support: KernelSupport,
) -> Result<SaliencyMaps> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("smoothing sigma must be positive, got {sigma}")));
    }
    cfg.check_format(format)?;
    let n = cfg.num_patches();
    if coarse.cols() != n {
        return Err(Error::config(format!("{} patch scores per frame, grid has {n}", coarse.cols())));
    }
    let a = concentration(cfg.width, sigma);
    let cos_cut = match support {
        KernelSupport::Exact => -2.0,
        KernelSupport::Truncated => {
            let cut = 4.0 / a.sqrt();
            if cut >= std::f64::consts::PI {
                -2.0
            } else {
                cut.cos()
            }
        }
    };
    let centers = patch_centers(format, cfg);
    let center_dirs: Vec<Vec3> = centers.iter().map(|c| c.direction()).collect();
    let area: Vec<f64> = centers.iter().map(|c| c.phi.cos()).collect();
    let pixels = pixel_directions(format, cfg);

    // kernel value of each (patch, pixel) pair inside the support, shared by all frames
    let taps: Vec<Vec<(u32, f64)>> = center_dirs
        .par_iter()
        .zip(&area)
        .map(|(c, &w)| {
            pixels
                .iter()
                .enumerate()
                .filter_map(|(j, p)| {
                    let cos_psi = dot(*c, *p).clamp(-1.0, 1.0);
                    (cos_psi >= cos_cut).then(|| (j as u32, w * vmf_kernel(a, cos_psi)))
                })
                .collect()
        })
        .collect();

    let hw = cfg.width * cfg.height;
    let frames = coarse.rows();
    let mut data = vec![0.0; frames * hw];
    data.par_chunks_mut(hw).enumerate().for_each(|(t, out)| {
        for (i, patch_taps) in taps.iter().enumerate() {
            let y = coarse.row(t)[i];
            if y == 0.0 {
                continue;
            }
            for &(j, k) in patch_taps {
                out[j as usize] += y * k;
            }
        }
    });
    let maps = SaliencyMaps::new(cfg.width, cfg.height, frames, data)?;
    if maps.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "smoothing".into() });
    }
    Ok(maps)
}

/// Per-frame min-max rescaling to `[0, 1]`; a constant frame becomes zeros.
pub fn normalize_map(maps: &SaliencyMaps) -> SaliencyMaps {
    let mut out = maps.clone();
    for t in 0..out.frames {
        let f = out.frame_mut(t);
        let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range > 0.0 {
            f.iter_mut().for_each(|v| *v = (*v - lo) / range);
        } else {
            f.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}
