use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use super::tensor::{dot, Tensor};
use crate::error::{Error, Result};

/// Named access to trainable tensors.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// All parameter values concatenated in visiting order.
    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        self.visit(&mut |_, t| out.extend_from_slice(t.data()));
        out
    }

    /// Inverse of [`Parameters::to_flat`]; `values` must hold exactly
    /// [`Parameters::num_parameters`] entries.
    fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_parameters(), "flat parameter length");
        let mut at = 0;
        self.visit_mut(&mut |_, t| {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        });
    }
}

pub(crate) fn visit_prefixed<P: Parameters + ?Sized>(
    p: &P,
    prefix: &str,
    f: &mut dyn FnMut(&str, &Tensor),
) {
    p.visit(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

pub(crate) fn visit_prefixed_mut<P: Parameters + ?Sized>(
    p: &mut P,
    prefix: &str,
    f: &mut dyn FnMut(&str, &mut Tensor),
) {
    p.visit_mut(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Derivative of [`gelu`]: `Φ(x) + x·φ(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Normalizes to zero mean and unit variance (population), then applies
/// `gain` and `shift` elementwise.
pub fn layer_norm(v: &[f64], gain: &[f64], shift: &[f64], eps: f64) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    v.iter()
        .zip(gain.iter().zip(shift))
        .map(|(x, (g, b))| (x - mean) * inv * g + b)
        .collect()
}

/// Row-wise layer norm of a matrix.
pub fn layer_norm_rows(x: &Tensor, gain: &Tensor, shift: &Tensor, eps: f64) -> Result<Tensor> {
    if gain.len() != x.cols() || shift.len() != x.cols() {
        return Err(Error::shape("layer norm affine length differs from row width"));
    }
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.rows() {
        out.extend(layer_norm(x.row(i), gain.data(), shift.data(), eps));
    }
    Tensor::new(vec![x.rows(), x.cols()], out)
}

/// `x · wᵀ + b` with `w: out×in`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = x.matmul_t(w)?;
    if b.len() != y.cols() {
        return Err(Error::shape(format!("bias length {} vs output width {}", b.len(), y.cols())));
    }
    for i in 0..y.rows() {
        for (o, bb) in y.row_mut(i).iter_mut().zip(b.data()) {
            *o += bb;
        }
    }
    Ok(y)
}

/// Uniform `±1/√fan_in` initialization, rounded to `f32` precision so the
/// values survive a round trip through the weight container unchanged.
pub fn init_weight<R: Rng>(rng: &mut R, out: usize, inp: usize) -> Tensor {
    let bound = 1.0 / (inp as f64).sqrt();
    let data = (0..out * inp)
        .map(|_| rng.random_range(-bound..bound) as f32 as f64)
        .collect();
    Tensor::new(vec![out, inp], data).expect("dims match")
}

/// Query/key/value/output projections of one multi-head self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub n_heads: usize,
}

impl AttentionParams {
    pub fn zeros(channels: usize, n_heads: usize) -> Result<Self> {
        check_heads(channels, n_heads)?;
        let w = || Tensor::zeros(&[channels, channels]);
        let b = || Tensor::zeros(&[channels]);
        Ok(Self {
            wq: w(),
            bq: b(),
            wk: w(),
            bk: b(),
            wv: w(),
            bv: b(),
            wo: w(),
            bo: b(),
            n_heads,
        })
    }

    pub fn random<R: Rng>(rng: &mut R, channels: usize, n_heads: usize) -> Result<Self> {
        let mut p = Self::zeros(channels, n_heads)?;
        p.wq = init_weight(rng, channels, channels);
        p.wk = init_weight(rng, channels, channels);
        p.wv = init_weight(rng, channels, channels);
        p.wo = init_weight(rng, channels, channels);
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.wq.rows()
    }

    pub fn check(&self, channels: usize) -> Result<()> {
        check_heads(channels, self.n_heads)?;
        for (name, w) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if w.dims() != [channels, channels] {
                return Err(Error::shape(format!("attention {name} must be {channels}×{channels}, got {:?}", w.dims())));
            }
        }
        for (name, b) in [("bq", &self.bq), ("bk", &self.bk), ("bv", &self.bv), ("bo", &self.bo)] {
            if b.len() != channels {
                return Err(Error::shape(format!("attention {name} must have {channels} entries")));
            }
        }
        Ok(())
    }
}

fn check_heads(channels: usize, n_heads: usize) -> Result<()> {
    if n_heads == 0 || !channels.is_multiple_of(n_heads) {
        return Err(Error::config(format!("{channels} channels cannot be split into {n_heads} heads")));
    }
    Ok(())
}

impl Parameters for AttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("wq", &self.wq);
        f("bq", &self.bq);
        f("wk", &self.wk);
        f("bk", &self.bk);
        f("wv", &self.wv);
        f("bv", &self.bv);
        f("wo", &self.wo);
        f("bo", &self.bo);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("wq", &mut self.wq);
        f("bq", &mut self.bq);
        f("wk", &mut self.wk);
        f("bk", &mut self.bk);
        f("wv", &mut self.wv);
        f("bv", &mut self.bv);
        f("wo", &mut self.wo);
        f("bo", &mut self.bo);
    }
}

/// Scaled dot-product self-attention over the rows of `x: L×C`, split into
/// `n_heads` heads, concatenated and output-projected.
pub fn mhsa(x: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    let c = x.cols();
    p.check(c)?;
    let q = linear(x, &p.wq, &p.bq)?;
    let k = linear(x, &p.wk, &p.bk)?;
    let v = linear(x, &p.wv, &p.bv)?;
    let l = x.rows();
    let dh = c / p.n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Tensor::zeros(&[l, c]);
    for h in 0..p.n_heads {
        let cols = h * dh..(h + 1) * dh;
        for a in 0..l {
            let qa = &q.row(a)[cols.clone()];
            let scores: Vec<f64> = (0..l).map(|b| dot(qa, &k.row(b)[cols.clone()]) * scale).collect();
            let probs = softmax(&scores);
            let out = &mut heads.row_mut(a)[cols.clone()];
            for (b, pb) in probs.iter().enumerate() {
                for (o, vb) in out.iter_mut().zip(&v.row(b)[cols.clone()]) {
                    *o += pb * vb;
                }
            }
        }
    }
    linear(&heads, &p.wo, &p.bo)
}

/// Two fully-connected layers with a GELU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    pub fn zeros(inp: usize, hidden: usize, out: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[hidden, inp]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[out, hidden]),
            b2: Tensor::zeros(&[out]),
        }
    }

    pub fn random<R: Rng>(rng: &mut R, inp: usize, hidden: usize, out: usize) -> Self {
        Self {
            w1: init_weight(rng, hidden, inp),
            b1: Tensor::zeros(&[hidden]),
            w2: init_weight(rng, out, hidden),
            b2: Tensor::zeros(&[out]),
        }
    }

    pub fn check(&self, inp: usize, out: usize) -> Result<()> {
        let hidden = self.w1.rows();
        if self.w1.dims() != [hidden, inp]
            || self.b1.len() != hidden
            || self.w2.dims() != [out, hidden]
            || self.b2.len() != out
        {
            return Err(Error::shape(format!("MLP shapes do not map {inp} -> {out}")));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = linear(x, &self.w1, &self.b1)?;
        h.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        linear(&h, &self.w2, &self.b2)
    }
}

impl Parameters for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("fc1.weight", &self.w1);
        f("fc1.bias", &self.b1);
        f("fc2.weight", &self.w2);
        f("fc2.bias", &self.b2);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("fc1.weight", &mut self.w1);
        f("fc1.bias", &mut self.b1);
        f("fc2.weight", &mut self.w2);
        f("fc2.bias", &mut self.b2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // Φ(1) from the complementary error function: 0.5·erfc(-1/√2)
        let phi1 = 0.5 * libm::erfc(-FRAC_1_SQRT_2);
        assert!((gelu(1.0) - phi1).abs() < 1e-15);
        assert!((gelu(1.0) - 0.841_344_746).abs() < 1e-9);
    }

    #[test]
    fn gelu_derivative_matches_fd() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.2] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_uniform() {
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn layer_norm_moments() {
        let v = [1.0, 4.0, -2.0, 0.5, 3.0];
        let y = layer_norm(&v, &[1.0; 5], &[0.0; 5], 0.0);
        let mean = y.iter().sum::<f64>() / 5.0;
        let var = y.iter().map(|x| x * x).sum::<f64>() / 5.0 - mean * mean;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_token_attention_is_value_output_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = AttentionParams::random(&mut rng, 4, 2).unwrap();
        p.bv = Tensor::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        p.bo = Tensor::from_vec(vec![1.0, 0.0, -1.0, 0.5]);
        let x = Tensor::new(vec![1, 4], vec![0.3, -1.0, 2.0, 0.7]).unwrap();
        let got = mhsa(&x, &p).unwrap();
        let want = linear(&linear(&x, &p.wv, &p.bv).unwrap(), &p.wo, &p.bo).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn zero_value_projection_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = AttentionParams::random(&mut rng, 4, 2).unwrap();
        p.wv = Tensor::zeros(&[4, 4]);
        let x = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let y = mhsa(&x, &p).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_token_attention_by_hand() {
        // Wq = Wk = Wv = Wo = I, one head, C = 2
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let z = Tensor::zeros(&[2]);
        let p = AttentionParams {
            wq: eye.clone(),
            bq: z.clone(),
            wk: eye.clone(),
            bk: z.clone(),
            wv: eye.clone(),
            bv: z.clone(),
            wo: eye,
            bo: z,
            n_heads: 1,
        };
        let x = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        // scores / √2: row 0 -> [1, 0]/√2, row 1 -> [0, 4]/√2
        let s = 1.0 / 2f64.sqrt();
        let p0 = 1.0 / (1.0 + (-s).exp());
        let p1 = 1.0 / (1.0 + (4.0 * s).exp());
        let want = [p0, 2.0 * (1.0 - p0), p1, 2.0 * (1.0 - p1)];
        let got = mhsa(&x, &p).unwrap();
        for (g, w) in got.data().iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{g} vs {w}");
        }
    }

    #[test]
    fn head_split_validation() {
        assert!(AttentionParams::zeros(6, 4).is_err());
        assert!(AttentionParams::zeros(8, 4).is_ok());
    }
}
