//! Self-supervised losses over fused features and the training loop for the
//! fusion head.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::TokenGrid;
use crate::error::{Error, Result};
use crate::fusion::{fusion_graph, stack_tokens, FusedFeatures, FusionParams, ParamVars};
use crate::geom::{geodesic_distance, patch_centers, Format, GridConfig, SphereCoord};
use crate::nn::{adam_step, AdamConfig, MixRows, OptimizerState, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_t: f64,
    pub lambda_s: f64,
    pub lambda_g: f64,
    /// Neighborhood radius in radians for the spatial term.
    pub epsilon: f64,
}

impl LossWeights {
    pub const LAMBDA_T: f64 = 20.0;
    pub const LAMBDA_S: f64 = 0.5;
    pub const LAMBDA_G: f64 = 0.1;

    /// Default weights with a radius of two and a half patch widths.
    pub fn for_grid(cfg: &GridConfig) -> Self {
        Self {
            lambda_t: Self::LAMBDA_T,
            lambda_s: Self::LAMBDA_S,
            lambda_g: Self::LAMBDA_G,
            epsilon: default_epsilon(cfg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_t", self.lambda_t), ("lambda_s", self.lambda_s), ("lambda_g", self.lambda_g)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn combine(&self, temporal: f64, spatial: f64, global: f64) -> f64 {
        self.lambda_t * temporal + self.lambda_s * spatial + self.lambda_g * global
    }
}

pub fn default_epsilon(cfg: &GridConfig) -> f64 {
    2.5 * cfg.patch_fov()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
    pub weight: f64,
}

/// Inverse-geodesic-distance neighbor weights per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialNeighborhood {
    neighbors: Vec<Vec<Neighbor>>,
}

impl SpatialNeighborhood {
    pub fn from_centers(centers: &[SphereCoord], epsilon: f64) -> Result<Self> {
        let mut neighbors = Vec::with_capacity(centers.len());
        for (i, &ci) in centers.iter().enumerate() {
            let mut list: Vec<Neighbor> = centers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .filter_map(|(j, &cj)| {
                    let g = geodesic_distance(ci, cj);
                    (g > 0.0 && g < epsilon).then_some(Neighbor { index: j, distance: g, weight: 0.0 })
                })
                .collect();
            if list.is_empty() {
                return Err(Error::config(format!(
                    "patch {i} has no neighbor within epsilon = {epsilon} rad; increase epsilon"
                )));
            }
            let total: f64 = list.iter().map(|n| 1.0 / n.distance).sum();
            for n in &mut list {
                n.weight = (1.0 / n.distance) / total;
            }
            neighbors.push(list);
        }
        Ok(Self { neighbors })
    }

    pub fn for_grid(format: Format, cfg: &GridConfig, epsilon: f64) -> Result<Self> {
        Self::from_centers(&patch_centers(format, cfg), epsilon)
    }

    pub fn num_patches(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }
}

fn require_frames(frames: usize) -> Result<()> {
    if frames < 3 {
        return Err(Error::config(format!("temporal loss needs at least 3 frames, got {frames}")));
    }
    Ok(())
}

fn temporal_rows(frames: usize, patches: usize) -> MixRows {
    let mut rows = Vec::with_capacity((frames - 2) * patches);
    for t in 1..frames - 1 {
        for i in 0..patches {
            rows.push(vec![(t * patches + i, 1.0), ((t + 1) * patches + i, -0.5), ((t - 1) * patches + i, -0.5)]);
        }
    }
    Arc::new(rows)
}

fn spatial_rows(frames: usize, nbhd: &SpatialNeighborhood) -> MixRows {
    let n = nbhd.num_patches();
    let mut rows = Vec::with_capacity(frames * n);
    for t in 0..frames {
        for i in 0..n {
            let mut r = vec![(t * n + i, 1.0)];
            r.extend(nbhd.neighbors(i).iter().map(|nb| (t * n + nb.index, -nb.weight)));
            rows.push(r);
        }
    }
    Arc::new(rows)
}

fn global_rows(frames: usize) -> MixRows {
    let inv = 1.0 / frames as f64;
    Arc::new(
        (0..frames)
            .map(|t| (0..frames).map(|s| (s, if s == t { 1.0 - inv } else { -inv })).collect())
            .collect(),
    )
}

/// Mean squared deviation of each interior frame's token from the average
/// of its two temporal neighbors; boundary frames are excluded.
pub fn loss_temporal(local: &Tensor, frames: usize, patches: usize) -> Result<f64> {
    require_frames(frames)?;
    let mut sum = 0.0;
    for t in 1..frames - 1 {
        for i in 0..patches {
            let x = local.row(t * patches + i);
            let next = local.row((t + 1) * patches + i);
            let prev = local.row((t - 1) * patches + i);
            sum += x
                .iter()
                .zip(next.iter().zip(prev))
                .map(|(a, (n, p))| {
                    let d = a - 0.5 * (n + p);
                    d * d
                })
                .sum::<f64>();
        }
    }
    Ok(sum / ((frames - 2) * patches) as f64)
}

pub fn loss_spatial(local: &Tensor, frames: usize, nbhd: &SpatialNeighborhood) -> Result<f64> {
    let n = nbhd.num_patches();
    if local.rows() != frames * n {
        return Err(Error::config(format!("{} local tokens, expected {}", local.rows(), frames * n)));
    }
    let c = local.cols();
    let mut sum = 0.0;
    for t in 0..frames {
        for i in 0..n {
            let mut avg = vec![0.0; c];
            for nb in nbhd.neighbors(i) {
                for (a, x) in avg.iter_mut().zip(local.row(t * n + nb.index)) {
                    *a += nb.weight * x;
                }
            }
            sum += local.row(t * n + i).iter().zip(&avg).map(|(x, a)| (x - a) * (x - a)).sum::<f64>();
        }
    }
    Ok(sum / (frames * n) as f64)
}

/// Per-video variance of the global context.
pub fn loss_global(global: &Tensor) -> f64 {
    let (t, c) = (global.rows(), global.cols());
    let mut mean = vec![0.0; c];
    for s in 0..t {
        for (m, x) in mean.iter_mut().zip(global.row(s)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    (0..t)
        .map(|s| global.row(s).iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        / t as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub temporal: f64,
    pub spatial: f64,
    pub global: f64,
    pub total: f64,
}

pub fn loss_total(fused: &FusedFeatures, nbhd: &SpatialNeighborhood, weights: &LossWeights) -> Result<LossBreakdown> {
    let temporal = loss_temporal(&fused.local, fused.frames, fused.patches)?;
    let spatial = loss_spatial(&fused.local, fused.frames, nbhd)?;
    let global = loss_global(&fused.global);
    Ok(LossBreakdown { temporal, spatial, global, total: weights.combine(temporal, spatial, global) })
}

/// Loss nodes recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub temporal: Var,
    pub spatial: Var,
    pub global: Var,
    pub total: Var,
}

pub fn loss_graph(
    tape: &mut Tape,
    global: Var,
    local: Var,
    frames: usize,
    nbhd: &SpatialNeighborhood,
    weights: &LossWeights,
) -> Result<LossNodes> {
    require_frames(frames)?;
    let n = nbhd.num_patches();
    let dt = tape.mix(local, temporal_rows(frames, n));
    let st = tape.sum_squares(dt);
    let temporal = tape.scale(st, 1.0 / ((frames - 2) * n) as f64);
    let ds = tape.mix(local, spatial_rows(frames, nbhd));
    let ss = tape.sum_squares(ds);
    let spatial = tape.scale(ss, 1.0 / (frames * n) as f64);
    let dg = tape.mix(global, global_rows(frames));
    let sg = tape.sum_squares(dg);
    let global = tape.scale(sg, 1.0 / frames as f64);
    let a = tape.scale(temporal, weights.lambda_t);
    let b = tape.scale(spatial, weights.lambda_s);
    let c = tape.scale(global, weights.lambda_g);
    let ab = tape.add(a, b);
    let total = tape.add(ab, c);
    Ok(LossNodes { temporal, spatial, global, total })
}

/// Loss and gradients of every fusion parameter for one window of encoder
/// outputs `x0: T×C`, `x: (T·N)×C`.
pub fn loss_and_gradients(
    params: &FusionParams,
    x0: &Tensor,
    x: &Tensor,
    nbhd: &SpatialNeighborhood,
    weights: &LossWeights,
) -> Result<(LossBreakdown, BTreeMap<String, Tensor>)> {
    params.check()?;
    let frames = x0.rows();
    let patches = nbhd.num_patches();
    if x.rows() != frames * patches {
        return Err(Error::config(format!("{} local tokens, expected {}", x.rows(), frames * patches)));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, true);
    let x0v = tape.constant(x0.clone());
    let xv = tape.constant(x.clone());
    let fused = fusion_graph(&mut tape, params, &vars, x0v, xv, frames, patches);
    let nodes = loss_graph(&mut tape, fused.global, fused.local, frames, nbhd, weights)?;
    let breakdown = LossBreakdown {
        temporal: tape.scalar(nodes.temporal),
        spatial: tape.scalar(nodes.spatial),
        global: tape.scalar(nodes.global),
        total: tape.scalar(nodes.total),
    };
    let grads = tape.backward(nodes.total);
    Ok((breakdown, vars.gradients(&tape, &grads)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub window: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
}

impl TrainConfig {
    pub const DEFAULT_LR: f64 = 1e-3;
    pub const DEFAULT_EPOCHS: usize = 5;
    pub const DEFAULT_WINDOW: usize = 5;

    pub fn for_grid(cfg: &GridConfig) -> Self {
        Self {
            lr: Self::DEFAULT_LR,
            epochs: Self::DEFAULT_EPOCHS,
            window: Self::DEFAULT_WINDOW,
            weights: LossWeights::for_grid(cfg),
            seed: 0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Total loss at every step, evaluated before that step's update.
    pub losses: Vec<f64>,
    pub steps: usize,
}

/// Adam on the fusion parameters over every `window`-frame span of each clip
/// of cached encoder outputs, visiting spans in a seeded random order per
/// epoch.
pub fn train(
    clips: &[Vec<TokenGrid>],
    params: &mut FusionParams,
    nbhd: &SpatialNeighborhood,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.weights.validate()?;
    if !(config.lr.is_finite() && config.lr >= 0.0) {
        return Err(Error::config(format!("learning rate must be finite and non-negative, got {}", config.lr)));
    }
    require_frames(config.window)?;
    let mut windows = Vec::new();
    for (k, clip) in clips.iter().enumerate() {
        if clip.len() >= config.window {
            windows.extend((0..=clip.len() - config.window).map(|s| (k, s)));
        }
    }
    if windows.is_empty() && config.epochs > 0 {
        return Err(Error::config(format!("no clip has at least {} frames", config.window)));
    }
    let stacked = windows
        .iter()
        .map(|&(k, s)| stack_tokens(&clips[k][s..s + config.window]))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptimizerState::new(AdamConfig::with_lr(config.lr));
    let limit = config.max_steps.unwrap_or(usize::MAX);
    let mut losses = Vec::new();
    let mut order: Vec<usize> = (0..stacked.len()).collect();
    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &w in &order {
            if losses.len() >= limit {
                break 'epochs;
            }
            let (x0, x) = &stacked[w];
            let (loss, grads) = loss_and_gradients(params, x0, x, nbhd, &config.weights)?;
            if !loss.total.is_finite() {
                return Err(Error::TrainingNaN { step: losses.len(), loss: loss.total });
            }
            losses.push(loss.total);
            adam_step(params, &grads, &mut state)?;
        }
    }
    Ok(TrainReport { steps: losses.len(), losses })
}

/// Trailing moving average with window `k` (shorter at the start).
pub fn moving_average(values: &[f64], k: usize) -> Vec<f64> {
    let k = k.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= k {
            sum -= values[i - k];
        }
        out.push(sum / (i + 1).min(k) as f64);
    }
    out
}
