//! Inference-only vision-transformer encoder over patch tokens plus a
//! learnable global token.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    init_weight, layer_norm_rows, mhsa, visit_prefixed, visit_prefixed_mut, AttentionParams, Mlp, Parameters, Tensor,
};

pub const LN_EPS: f64 = 1e-6;

/// One pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub norm1_gain: Tensor,
    pub norm1_shift: Tensor,
    pub attn: AttentionParams,
    pub norm2_gain: Tensor,
    pub norm2_shift: Tensor,
    pub mlp: Mlp,
}

impl EncoderBlock {
    pub fn random<R: Rng>(rng: &mut R, channels: usize, n_heads: usize) -> Result<Self> {
        Ok(Self {
            norm1_gain: Tensor::filled(&[channels], 1.0),
            norm1_shift: Tensor::zeros(&[channels]),
            attn: AttentionParams::random(rng, channels, n_heads)?,
            norm2_gain: Tensor::filled(&[channels], 1.0),
            norm2_shift: Tensor::zeros(&[channels]),
            mlp: Mlp::random(rng, channels, 4 * channels, channels),
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = layer_norm_rows(x, &self.norm1_gain, &self.norm1_shift, LN_EPS)?;
        let a = mhsa(&h, &self.attn)?;
        let x = add(x, &a);
        let h = layer_norm_rows(&x, &self.norm2_gain, &self.norm2_shift, LN_EPS)?;
        let m = self.mlp.forward(&h)?;
        Ok(add(&x, &m))
    }
}

impl Parameters for EncoderBlock {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("norm1.weight", &self.norm1_gain);
        f("norm1.bias", &self.norm1_shift);
        visit_prefixed(&self.attn, "attn", f);
        f("norm2.weight", &self.norm2_gain);
        f("norm2.bias", &self.norm2_shift);
        visit_prefixed(&self.mlp, "mlp", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("norm1.weight", &mut self.norm1_gain);
        f("norm1.bias", &mut self.norm1_shift);
        visit_prefixed_mut(&mut self.attn, "attn", f);
        f("norm2.weight", &mut self.norm2_gain);
        f("norm2.bias", &mut self.norm2_shift);
        visit_prefixed_mut(&mut self.mlp, "mlp", f);
    }
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.dims().to_vec(), data).expect("same shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub cls_token: Tensor,
    /// Learned `(N+1) × C` positional embeddings, row 0 for the global token.
    pub pos_embed: Option<Tensor>,
    pub blocks: Vec<EncoderBlock>,
    pub norm_gain: Tensor,
    pub norm_shift: Tensor,
    pub n_heads: usize,
}

impl EncoderParams {
    pub fn random<R: Rng>(rng: &mut R, channels: usize, depth: usize, n_heads: usize) -> Result<Self> {
        let blocks = (0..depth)
            .map(|_| EncoderBlock::random(rng, channels, n_heads))
            .collect::<Result<Vec<_>>>()?;
        let mut cls = init_weight(rng, 1, channels);
        cls = cls.reshape(&[channels])?;
        Ok(Self {
            cls_token: cls,
            pos_embed: None,
            blocks,
            norm_gain: Tensor::filled(&[channels], 1.0),
            norm_shift: Tensor::zeros(&[channels]),
            n_heads,
        })
    }

    pub fn channels(&self) -> usize {
        self.cls_token.len()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Installs positional embeddings for a `rows × cols` patch grid,
    /// bilinearly re-gridding them when the table was trained for another
    /// (square) grid.
    pub fn set_pos_embed(&mut self, table: Tensor, rows: usize, cols: usize) -> Result<()> {
        let c = self.channels();
        if table.cols() != c || table.dims().len() != 2 {
            return Err(Error::shape(format!("positional embeddings must be (N+1)×{c}, got {:?}", table.dims())));
        }
        let n = rows * cols;
        if table.rows() == n + 1 {
            self.pos_embed = Some(table);
            return Ok(());
        }
        let src_patches = table.rows() - 1;
        let side = (src_patches as f64).sqrt().round() as usize;
        if side * side != src_patches {
            return Err(Error::shape(format!(
                "cannot re-grid {src_patches} positional embeddings onto {rows}×{cols} patches"
            )));
        }
        self.pos_embed = Some(resample_pos_embed(&table, (side, side), (rows, cols)));
        Ok(())
    }
}

/// Bilinear re-gridding of patch positional embeddings (half-pixel aligned);
/// the global-token row is copied through.
pub fn resample_pos_embed(table: &Tensor, src: (usize, usize), dst: (usize, usize)) -> Tensor {
    let c = table.cols();
    let mut out = Vec::with_capacity((dst.0 * dst.1 + 1) * c);
    out.extend_from_slice(table.row(0));
    let coord = |i: usize, n_dst: usize, n_src: usize| {
        let x = ((i as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(n_src - 1);
        (x0, x1, x - x0 as f64)
    };
    for r in 0..dst.0 {
        let (r0, r1, fr) = coord(r, dst.0, src.0);
        for q in 0..dst.1 {
            let (q0, q1, fq) = coord(q, dst.1, src.1);
            let at = |rr: usize, qq: usize| table.row(1 + rr * src.1 + qq);
            let (a, b, cc, d) = (at(r0, q0), at(r0, q1), at(r1, q0), at(r1, q1));
            for k in 0..c {
                out.push(
                    (1.0 - fr) * ((1.0 - fq) * a[k] + fq * b[k]) + fr * ((1.0 - fq) * cc[k] + fq * d[k]),
                );
            }
        }
    }
    Tensor::new(vec![dst.0 * dst.1 + 1, c], out).expect("dims match")
}

impl Parameters for EncoderParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("cls_token", &self.cls_token);
        if let Some(p) = &self.pos_embed {
            f("pos_embed", p);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            visit_prefixed(b, &format!("blocks.{i}"), f);
        }
        f("norm.weight", &self.norm_gain);
        f("norm.bias", &self.norm_shift);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("cls_token", &mut self.cls_token);
        if let Some(p) = &mut self.pos_embed {
            f("pos_embed", p);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            visit_prefixed_mut(b, &format!("blocks.{i}"), f);
        }
        f("norm.weight", &mut self.norm_gain);
        f("norm.bias", &mut self.norm_shift);
    }
}

/// Encoder output for one frame: row 0 is the global token, rows `1..=N` the
/// patches in row-major patch order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub tokens: Tensor,
}

impl TokenGrid {
    pub fn global(&self) -> &[f64] {
        self.tokens.row(0)
    }

    pub fn num_patches(&self) -> usize {
        self.tokens.rows() - 1
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        self.tokens.row(i + 1)
    }
}

pub fn encode_frame(patch_tokens: &Tensor, params: &EncoderParams) -> Result<TokenGrid> {
    let c = params.channels();
    let n = patch_tokens.rows();
    if patch_tokens.cols() != c {
        return Err(Error::config(format!(
            "patch tokens have {} channels, encoder expects {c}",
            patch_tokens.cols()
        )));
    }
    let mut data = Vec::with_capacity((n + 1) * c);
    data.extend_from_slice(params.cls_token.data());
    data.extend_from_slice(patch_tokens.data());
    let mut x = Tensor::new(vec![n + 1, c], data)?;
    if let Some(pe) = &params.pos_embed {
        if pe.dims() != [n + 1, c] {
            return Err(Error::config(format!(
                "positional embeddings {:?} do not match {} tokens",
                pe.dims(),
                n + 1
            )));
        }
        x = add(&x, pe);
    }
    for block in &params.blocks {
        x = block.forward(&x)?;
    }
    let tokens = layer_norm_rows(&x, &params.norm_gain, &params.norm_shift, LN_EPS)?;
    Ok(TokenGrid { tokens })
}
