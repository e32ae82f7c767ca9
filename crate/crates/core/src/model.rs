//! Full model: patch embedding, frozen encoder and fusion head, with
//! weight-container persistence and the frame-to-map inference pipeline.

use rand::Rng;
use rayon::prelude::*;

use crate::embed::{deform_embed, EmbedParams, Frame};
use crate::encoder::{encode_frame, EncoderBlock, EncoderParams, TokenGrid};
use crate::error::{Error, Result};
use crate::fusion::{fuse, stack_tokens, FusedFeatures, FusionParams};
use crate::geom::OffsetTable;
use crate::io::WeightContainer;
use crate::nn::{AttentionParams, Mlp, Parameters, Tensor};
use crate::saliency::{normalize_map, saliency_scores, smooth_to_map, KernelSupport, SaliencyMaps, ScoreWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub channels: usize,
    pub depth: usize,
    pub encoder_heads: usize,
    pub fusion_heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { channels: 64, depth: 2, encoder_heads: 4, fusion_heads: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaverModel {
    pub embed: EmbedParams,
    pub encoder: EncoderParams,
    pub fusion: FusionParams,
    pub patch: usize,
}

const EMBED: &str = "embed";
const ENCODER: &str = "encoder";
const FUSION: &str = "fusion";

impl PaverModel {
    pub fn random<R: Rng>(rng: &mut R, patch: usize, cfg: ModelConfig) -> Result<Self> {
        if cfg.channels == 0 || patch == 0 {
            return Err(Error::config("channels and patch size must be positive"));
        }
        Ok(Self {
            embed: EmbedParams::random(rng, cfg.channels, patch),
            encoder: EncoderParams::random(rng, cfg.channels, cfg.depth, cfg.encoder_heads)?,
            fusion: FusionParams::random(rng, cfg.channels, cfg.fusion_heads)?,
            patch,
        })
    }

    pub fn channels(&self) -> usize {
        self.embed.channels()
    }

    pub fn to_container(&self) -> Result<WeightContainer> {
        let mut out = WeightContainer::new();
        let mut err = None;
        let mut push = |prefix: &str, name: &str, t: &Tensor| {
            if err.is_none() {
                if let Err(e) = out.insert(format!("{prefix}.{name}"), t.clone()) {
                    err = Some(e);
                }
            }
        };
        self.embed.visit(&mut |n, t| push(EMBED, n, t));
        self.encoder.visit(&mut |n, t| push(ENCODER, n, t));
        self.fusion.visit(&mut |n, t| push(FUSION, n, t));
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Rebuilds a model from a container. Channel width, patch size and depth
    /// are read from tensor shapes; head counts are not stored and must be
    /// supplied. A positional table is re-gridded to `grid = (rows, cols)`
    /// when given.
    pub fn from_container(
        w: &WeightContainer,
        encoder_heads: usize,
        fusion_heads: usize,
        grid: Option<(usize, usize)>,
    ) -> Result<Self> {
        let bias = w.get("embed.bias").ok_or_else(|| Error::format("container lacks 'embed.bias'"))?;
        let weight = w.get("embed.weight").ok_or_else(|| Error::format("container lacks 'embed.weight'"))?;
        let c = bias.len();
        let taps = weight.cols() / 3;
        let patch = (taps as f64).sqrt().round() as usize;
        if c == 0 || patch * patch * 3 != weight.cols() {
            return Err(Error::format(format!("embed.weight {:?} is not C×3S²", weight.dims())));
        }
        let mut depth = 0;
        while w.get(&format!("encoder.blocks.{depth}.norm1.weight")).is_some() {
            depth += 1;
        }
        let ones = || Tensor::filled(&[c], 1.0);
        let blocks = (0..depth)
            .map(|_| {
                Ok(EncoderBlock {
                    norm1_gain: ones(),
                    norm1_shift: ones(),
                    attn: AttentionParams::zeros(c, encoder_heads)?,
                    norm2_gain: ones(),
                    norm2_shift: ones(),
                    mlp: Mlp::zeros(c, 4 * c, c),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self {
            embed: EmbedParams::zeros(c, patch),
            encoder: EncoderParams {
                cls_token: Tensor::zeros(&[c]),
                pos_embed: None,
                blocks,
                norm_gain: ones(),
                norm_shift: ones(),
                n_heads: encoder_heads,
            },
            fusion: FusionParams::zeros(c, fusion_heads)?,
            patch,
        };

        let mut expected = std::collections::HashSet::new();
        let mut failure = None;
        let mut fill = |prefix: &str, name: &str, t: &mut Tensor| {
            let full = format!("{prefix}.{name}");
            match w.get(&full) {
                Some(src) if src.dims() == t.dims() => *t = src.clone(),
                Some(src) => {
                    failure.get_or_insert_with(|| {
                        Error::format(format!("'{full}' has shape {:?}, expected {:?}", src.dims(), t.dims()))
                    });
                }
                None => {
                    failure.get_or_insert_with(|| Error::format(format!("container lacks '{full}'")));
                }
            }
            expected.insert(full);
        };
        model.embed.visit_mut(&mut |n, t| fill(EMBED, n, t));
        model.encoder.visit_mut(&mut |n, t| fill(ENCODER, n, t));
        model.fusion.visit_mut(&mut |n, t| fill(FUSION, n, t));
        if let Some(e) = failure {
            return Err(e);
        }
        const POS: &str = "encoder.pos_embed";
        let extra: Vec<&str> = w.names().filter(|n| *n != POS && !expected.contains(*n)).collect();
        if !extra.is_empty() {
            return Err(Error::format(format!("container holds unknown tensors: {}", extra.join(", "))));
        }
        if let Some(pe) = w.get(POS) {
            match grid {
                Some((rows, cols)) => model.encoder.set_pos_embed(pe.clone(), rows, cols)?,
                None => model.encoder.pos_embed = Some(pe.clone()),
            }
        }
        model.fusion.check()?;
        Ok(model)
    }

    /// Embeds and encodes every frame; frames are processed in parallel and
    /// returned in input order.
    pub fn encode_frames(&self, frames: &[Frame], offsets: &OffsetTable) -> Result<Vec<TokenGrid>> {
        if offsets.config.patch != self.patch {
            return Err(Error::config(format!(
                "offset table uses patch size {}, model expects {}",
                offsets.config.patch, self.patch
            )));
        }
        frames
            .par_iter()
            .map(|f| {
                let tokens = deform_embed(f, offsets, &self.embed)?;
                if !tokens.is_finite() {
                    return Err(Error::NonFinite { stage: "embed".into() });
                }
                let grid = encode_frame(&tokens, &self.encoder)?;
                if !grid.tokens.is_finite() {
                    return Err(Error::NonFinite { stage: "encoder".into() });
                }
                Ok(grid)
            })
            .collect()
    }

    pub fn fuse_window(&self, grids: &[TokenGrid]) -> Result<FusedFeatures> {
        let (x0, x) = stack_tokens(grids)?;
        fuse(&x0, &x, grids.len(), grids[0].num_patches(), &self.fusion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub window: usize,
    pub sigma: f64,
    pub support: KernelSupport,
    pub weights: ScoreWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `F × N` patch scores for all `F` frames.
    pub coarse: Tensor,
    /// Normalized dense maps.
    pub maps: SaliencyMaps,
}

/// Splits `frames` into windows of `window` frames. A short tail reuses the
/// last full window; its frames already covered are skipped. Returns
/// `(start, len, first_new)` triples.
pub fn window_plan(frames: usize, window: usize) -> Vec<(usize, usize, usize)> {
    if frames == 0 || window == 0 {
        return Vec::new();
    }
    if frames <= window {
        return vec![(0, frames, 0)];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= frames {
        out.push((start, window, 0));
        start += window;
    }
    if start < frames {
        let s = frames - window;
        out.push((s, window, start - s));
    }
    out
}

fn flat_scores(row: &[f64]) -> bool {
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-9 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
}

/// Frames to normalized dense saliency maps. A frame whose patch scores
/// show no contrast yields an all-zero map.
pub fn predict(model: &PaverModel, frames: &[Frame], offsets: &OffsetTable, opts: &PredictOptions) -> Result<Prediction> {
    if frames.is_empty() {
        return Err(Error::config("no frames to process"));
    }
    let grids = model.encode_frames(frames, offsets)?;
    let n = offsets.num_patches();
    let mut coarse = vec![0.0; frames.len() * n];
    for (start, len, first_new) in window_plan(frames.len(), opts.window) {
        let fused = model.fuse_window(&grids[start..start + len])?;
        let scores = saliency_scores(&fused, opts.weights);
        if !scores.is_finite() {
            return Err(Error::NonFinite { stage: "scores".into() });
        }
        for t in first_new..len {
            coarse[(start + t) * n..(start + t + 1) * n].copy_from_slice(scores.row(t));
        }
    }
    let coarse = Tensor::new(vec![frames.len(), n], coarse)?;
    let dense = smooth_to_map(&coarse, offsets.format, &offsets.config, opts.sigma, opts.support)?;
    let mut maps = normalize_map(&dense);
    for t in 0..frames.len() {
        if flat_scores(coarse.row(t)) {
            maps.frame_mut(t).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(Prediction { coarse, maps })
}
