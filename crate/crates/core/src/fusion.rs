//! Decoupled global/local fusion head. This is the only trainable part of the
//! model; the forward pass is recorded on a [`Tape`] so the same code serves
//! inference and training.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::encoder::TokenGrid;
use crate::error::{Error, Result};
use crate::nn::{visit_prefixed, visit_prefixed_mut, AttentionParams, Groups, Mlp, MixRows, Parameters, Tape, Tensor, Var};

pub const DEFAULT_FUSION_HEADS: usize = 8;
const PRE_LN_EPS: f64 = 1e-6;

/// Architecture switches used by ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionVariant {
    #[default]
    Full,
    /// Global token passes through unprojected.
    NoGlobal,
    /// Local tokens skip the dual attention and only get the residual MLP.
    NoLocal,
    /// Global tokens join the local attention path as one extra token per frame.
    NoDecoupled,
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::NoGlobal => "no-global",
            Self::NoLocal => "no-local",
            Self::NoDecoupled => "no-decoupled",
        })
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "no-global" | "noglobal" => Ok(Self::NoGlobal),
            "no-local" | "nolocal" => Ok(Self::NoLocal),
            "no-decoupled" | "nodecoupled" => Ok(Self::NoDecoupled),
            other => Err(Error::config(format!("unknown fusion variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub global_mlp: Mlp,
    pub spatial: AttentionParams,
    pub temporal: AttentionParams,
    pub local_mlp: Mlp,
    /// Row normalization (no affine) ahead of the attention and MLP inputs.
    pub pre_ln: bool,
    pub variant: FusionVariant,
}

impl FusionParams {
    pub fn zeros(channels: usize, n_heads: usize) -> Result<Self> {
        Ok(Self {
            global_mlp: Mlp::zeros(channels, 4 * channels, channels),
            spatial: AttentionParams::zeros(channels, n_heads)?,
            temporal: AttentionParams::zeros(channels, n_heads)?,
            local_mlp: Mlp::zeros(channels, 4 * channels, channels),
            pre_ln: false,
            variant: FusionVariant::Full,
        })
    }

    pub fn random<R: Rng>(rng: &mut R, channels: usize, n_heads: usize) -> Result<Self> {
        Ok(Self {
            global_mlp: Mlp::random(rng, channels, 4 * channels, channels),
            spatial: AttentionParams::random(rng, channels, n_heads)?,
            temporal: AttentionParams::random(rng, channels, n_heads)?,
            local_mlp: Mlp::random(rng, channels, 4 * channels, channels),
            pre_ln: false,
            variant: FusionVariant::Full,
        })
    }

    pub fn channels(&self) -> usize {
        self.spatial.channels()
    }

    pub fn check(&self) -> Result<()> {
        let c = self.channels();
        self.global_mlp.check(c, c)?;
        self.local_mlp.check(c, c)?;
        self.spatial.check(c)?;
        self.temporal.check(c)
    }
}

impl Parameters for FusionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_prefixed(&self.global_mlp, "global_mlp", f);
        visit_prefixed(&self.spatial, "spatial_attn", f);
        visit_prefixed(&self.temporal, "temporal_attn", f);
        visit_prefixed(&self.local_mlp, "local_mlp", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_prefixed_mut(&mut self.global_mlp, "global_mlp", f);
        visit_prefixed_mut(&mut self.spatial, "spatial_attn", f);
        visit_prefixed_mut(&mut self.temporal, "temporal_attn", f);
        visit_prefixed_mut(&mut self.local_mlp, "local_mlp", f);
    }
}

/// Fusion output for a window of `frames` frames with `patches` patches each.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    /// `T × C`.
    pub global: Tensor,
    /// `(T·N) × C`, row `t·N + i`.
    pub local: Tensor,
    pub frames: usize,
    pub patches: usize,
}

impl FusedFeatures {
    pub fn new(global: Tensor, local: Tensor, frames: usize, patches: usize) -> Result<Self> {
        let c = global.cols();
        if global.rows() != frames || local.rows() != frames * patches || local.cols() != c {
            return Err(Error::shape(format!(
                "fused features {:?}/{:?} do not match T={frames}, N={patches}",
                global.dims(),
                local.dims()
            )));
        }
        Ok(Self { global, local, frames, patches })
    }

    pub fn channels(&self) -> usize {
        self.global.cols()
    }

    pub fn local_token(&self, t: usize, i: usize) -> &[f64] {
        self.local.row(t * self.patches + i)
    }

    pub fn global_token(&self, t: usize) -> &[f64] {
        self.global.row(t)
    }

    pub fn is_finite(&self) -> bool {
        self.global.is_finite() && self.local.is_finite()
    }
}

/// Splits a window of encoder outputs into `x0: T×C` and `X: (T·N)×C`.
pub fn stack_tokens(grids: &[TokenGrid]) -> Result<(Tensor, Tensor)> {
    let first = grids.first().ok_or_else(|| Error::config("empty frame window"))?;
    let n = first.num_patches();
    let c = first.tokens.cols();
    let mut global = Vec::with_capacity(grids.len() * c);
    let mut local = Vec::with_capacity(grids.len() * n * c);
    for g in grids {
        if g.tokens.dims() != first.tokens.dims() {
            return Err(Error::shape("token grids in one window differ in shape"));
        }
        global.extend_from_slice(g.global());
        local.extend_from_slice(&g.tokens.data()[c..]);
    }
    Ok((Tensor::new(vec![grids.len(), c], global)?, Tensor::new(vec![grids.len() * n, c], local)?))
}

fn spatial_groups(frames: usize, patches: usize, extra: bool) -> Groups {
    Arc::new(
        (0..frames)
            .map(|t| {
                let mut g: Vec<usize> = (0..patches).map(|i| t * patches + i).collect();
                if extra {
                    g.push(frames * patches + t);
                }
                g
            })
            .collect(),
    )
}

fn temporal_groups(frames: usize, patches: usize, extra: bool) -> Groups {
    let mut groups: Vec<Vec<usize>> = (0..patches).map(|i| (0..frames).map(|t| t * patches + i).collect()).collect();
    if extra {
        groups.push((0..frames).map(|t| frames * patches + t).collect());
    }
    Arc::new(groups)
}

fn row_range(start: usize, len: usize) -> MixRows {
    Arc::new((start..start + len).map(|r| vec![(r, 1.0)]).collect())
}

/// Tape nodes for a registered parameter set, keyed by parameter name.
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Records every tensor of `params`; as trainable leaves when `trainable`,
    /// otherwise as constants.
    pub fn register<P: Parameters + ?Sized>(tape: &mut Tape, params: &P, trainable: bool) -> Self {
        let mut vars = BTreeMap::new();
        params.visit(&mut |name, t| {
            let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
            vars.insert(name.to_string(), v);
        });
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("parameter '{name}' was not registered"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Gathers parameter gradients by name; parameters that do not reach
    /// the root get zeros.
    pub fn gradients(&self, tape: &Tape, grads: &crate::nn::Gradients) -> BTreeMap<String, Tensor> {
        self.iter()
            .map(|(name, v)| {
                let g = grads.get(tape, v).unwrap_or_else(|| Tensor::zeros(tape.value(v).dims()));
                (name.to_string(), g)
            })
            .collect()
    }
}

fn mlp_graph(tape: &mut Tape, x: Var, vars: &ParamVars, prefix: &str) -> Var {
    let h = tape.linear(x, vars.get(&format!("{prefix}.fc1.weight")), Some(vars.get(&format!("{prefix}.fc1.bias"))));
    let h = tape.gelu(h);
    tape.linear(h, vars.get(&format!("{prefix}.fc2.weight")), Some(vars.get(&format!("{prefix}.fc2.bias"))))
}

fn attention_graph(tape: &mut Tape, x: Var, vars: &ParamVars, prefix: &str, groups: Groups, heads: usize) -> Var {
    let p = |n: &str| vars.get(&format!("{prefix}.{n}"));
    let q = tape.linear(x, p("wq"), Some(p("bq")));
    let k = tape.linear(x, p("wk"), Some(p("bk")));
    let v = tape.linear(x, p("wv"), Some(p("bv")));
    let a = tape.attention(q, k, v, groups, heads);
    tape.linear(a, p("wo"), Some(p("bo")))
}

/// Output nodes of one fusion forward pass.
#[derive(Debug, Clone, Copy)]
pub struct FusionNodes {
    pub global: Var,
    pub local: Var,
}

/// Records the fusion forward pass for `x0: T×C` and `x: (T·N)×C`.
pub fn fusion_graph(
    tape: &mut Tape,
    params: &FusionParams,
    vars: &ParamVars,
    x0: Var,
    x: Var,
    frames: usize,
    patches: usize,
) -> FusionNodes {
    let decoupled = params.variant != FusionVariant::NoDecoupled;
    let input = if decoupled { x } else { tape.stack_rows(x, x0) };
    let norm = |tape: &mut Tape, v: Var| if params.pre_ln { tape.layer_norm(v, PRE_LN_EPS) } else { v };

    let fused = if params.variant == FusionVariant::NoLocal {
        input
    } else {
        let h = norm(tape, input);
        let extra = !decoupled;
        let sa_s = attention_graph(
            tape,
            h,
            vars,
            "spatial_attn",
            spatial_groups(frames, patches, extra),
            params.spatial.n_heads,
        );
        let sa_t = attention_graph(
            tape,
            h,
            vars,
            "temporal_attn",
            temporal_groups(frames, patches, extra),
            params.temporal.n_heads,
        );
        let sum = tape.add(sa_s, sa_t);
        let half = tape.scale(sum, 0.5);
        tape.add(input, half)
    };
    let h = norm(tape, fused);
    let m = mlp_graph(tape, h, vars, "local_mlp");
    let out = tape.add(fused, m);

    match params.variant {
        FusionVariant::NoDecoupled => FusionNodes {
            local: tape.mix(out, row_range(0, frames * patches)),
            global: tape.mix(out, row_range(frames * patches, frames)),
        },
        FusionVariant::NoGlobal => FusionNodes { global: x0, local: out },
        _ => FusionNodes { global: mlp_graph(tape, x0, vars, "global_mlp"), local: out },
    }
}

/// Row-wise global-context MLP.
pub fn global_context(x0: &Tensor, mlp: &Mlp) -> Result<Tensor> {
    mlp.forward(x0)
}

/// Inference forward pass.
pub fn fuse(x0: &Tensor, x: &Tensor, frames: usize, patches: usize, params: &FusionParams) -> Result<FusedFeatures> {
    params.check()?;
    let c = params.channels();
    if x0.dims() != [frames, c] || x.dims() != [frames * patches, c] {
        return Err(Error::config(format!(
            "fusion input {:?}/{:?} does not match T={frames}, N={patches}, C={c}",
            x0.dims(),
            x.dims()
        )));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false);
    let x0v = tape.constant(x0.clone());
    let xv = tape.constant(x.clone());
    let nodes = fusion_graph(&mut tape, params, &vars, x0v, xv, frames, patches);
    let out = FusedFeatures::new(
        tape.value(nodes.global).clone(),
        tape.value(nodes.local).clone(),
        frames,
        patches,
    )?;
    if !out.is_finite() {
        return Err(Error::NonFinite { stage: "fusion".into() });
    }
    Ok(out)
}

/// Local branch alone on `x: (T·N)×C`.
pub fn local_fuse(x: &Tensor, frames: usize, patches: usize, params: &FusionParams) -> Result<Tensor> {
    let x0 = Tensor::zeros(&[frames, params.channels()]);
    Ok(fuse(&x0, x, frames, patches, params)?.local)
}
