//! Reverse-mode differentiation over row-major matrices.
//!
//! Every node holds a matrix value (rank-1 tensors are single rows). Ops are
//! coarse-grained: a whole linear layer, a whole grouped attention. Backward
//! walks the tape once in reverse and accumulates adjoints only for nodes that
//! depend on a parameter.

use std::sync::Arc;

use super::layers::{gelu, gelu_grad, softmax};
use super::tensor::{dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse row mixing: output row `r` is `Σ w · input[j]` over `rows[r]`.
pub type MixRows = Arc<Vec<Vec<(usize, f64)>>>;

/// Row-index groups attended over independently.
pub type Groups = Arc<Vec<Vec<usize>>>;

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    AffineRows { x: Var, gain: Var, shift: Var },
    Attention { q: Var, k: Var, v: Var, groups: Groups, heads: usize, probs: Vec<f64> },
    Mix { x: Var, rows: MixRows },
    StackRows(Var, Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).expect("tape op produced consistent shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// `x · wᵀ (+ b)` with `w: out×in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let (r, k) = shape(xv);
        let (o, k2) = shape(wv);
        assert_eq!(k, k2, "linear: input width {k} vs weight width {k2}");
        let mut out = vec![0.0; r * o];
        for i in 0..r {
            let xi = xv.row(i);
            for j in 0..o {
                out[i * o + j] = dot(xi, wv.row(j));
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), o, "linear: bias length");
            for i in 0..r {
                for j in 0..o {
                    out[i * o + j] += bv[j];
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(matrix(r, o, out), Op::Linear { x, w, b }, &inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(shape(av), shape(bv), "add: shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let (r, c) = shape(av);
        self.push(matrix(r, c, data), Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(shape(av), shape(bv), "sub: shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let (r, c) = shape(av);
        self.push(matrix(r, c, data), Op::Sub(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let av = self.value(a);
        let (r, c) = shape(av);
        let data = av.data().iter().map(|x| x * s).collect();
        self.push(matrix(r, c, data), Op::Scale(a, s), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = shape(av);
        let data = av.data().iter().map(|&x| gelu(x)).collect();
        self.push(matrix(r, c, data), Op::Gelu(a), &[a])
    }

    /// Row-wise normalization to zero mean and unit variance, no affine.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (r, c) = shape(xv);
        let mut out = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            out.extend(row.iter().map(|v| (v - mean) * inv));
            inv_std.push(inv);
        }
        self.push(matrix(r, c, out), Op::LayerNorm { x, inv_std }, &[x])
    }

    /// `x ⊙ gain + shift`, with `gain` and `shift` broadcast over rows.
    pub fn affine_rows(&mut self, x: Var, gain: Var, shift: Var) -> Var {
        let xv = self.value(x);
        let (r, c) = shape(xv);
        let g = self.value(gain).data();
        let s = self.value(shift).data();
        assert!(g.len() == c && s.len() == c, "affine_rows: width mismatch");
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            out.extend(xv.row(i).iter().zip(g.iter().zip(s)).map(|(v, (g, s))| v * g + s));
        }
        self.push(matrix(r, c, out), Op::AffineRows { x, gain, shift }, &[x, gain, shift])
    }

    /// Multi-head scaled dot-product attention of already-projected `q, k, v`
    /// (all `R×C`), run independently inside each row group. Rows outside
    /// every group come out zero.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: Groups, heads: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (r, c) = shape(qv);
        assert!(shape(kv) == (r, c) && shape(vv) == (r, c), "attention: q/k/v shapes differ");
        assert!(heads > 0 && c % heads == 0, "attention: {c} channels, {heads} heads");
        let dh = c / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = vec![0.0; r * c];
        let mut probs = Vec::new();
        for group in groups.iter() {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for &a in group {
                    let qa = &qv.row(a)[cols.clone()];
                    let scores: Vec<f64> = group
                        .iter()
                        .map(|&b| dot(qa, &kv.row(b)[cols.clone()]) * scale)
                        .collect();
                    let p = softmax(&scores);
                    let oa = &mut out[a * c + h * dh..a * c + (h + 1) * dh];
                    for (&b, pb) in group.iter().zip(&p) {
                        for (o, x) in oa.iter_mut().zip(&vv.row(b)[cols.clone()]) {
                            *o += pb * x;
                        }
                    }
                    probs.extend(p);
                }
            }
        }
        self.push(
            matrix(r, c, out),
            Op::Attention { q, k, v, groups, heads, probs },
            &[q, k, v],
        )
    }

    pub fn mix(&mut self, x: Var, rows: MixRows) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = vec![0.0; rows.len() * c];
        for (r, terms) in rows.iter().enumerate() {
            let o = &mut out[r * c..(r + 1) * c];
            for &(j, w) in terms {
                for (dst, src) in o.iter_mut().zip(xv.row(j)) {
                    *dst += w * src;
                }
            }
        }
        let n = rows.len();
        self.push(matrix(n, c, out), Op::Mix { x, rows }, &[x])
    }

    /// Rows of `a` followed by rows of `b`.
    pub fn stack_rows(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "stack_rows: width mismatch");
        let c = av.cols();
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let r = av.rows() + bv.rows();
        self.push(matrix(r, c, data), Op::StackRows(a, b), &[a, b])
    }

    /// Sum of squared entries, as a 1×1 value.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(matrix(1, 1, vec![s]), Op::SumSquares(x), &[x])
    }

    /// Adjoints of every parameter-dependent node with respect to `root`,
    /// which must hold a single value.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[root.0].needs_grad {
            return Gradients { grads };
        }
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }

    fn backprop(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (r, k) = shape(xv);
                let o = wv.rows();
                self.accumulate(grads, *x, |gx| {
                    for i in 0..r {
                        for j in 0..o {
                            let gij = g[i * o + j];
                            if gij != 0.0 {
                                for (d, wv) in gx[i * k..(i + 1) * k].iter_mut().zip(wv.row(j)) {
                                    *d += gij * wv;
                                }
                            }
                        }
                    }
                });
                self.accumulate(grads, *w, |gw| {
                    for i in 0..r {
                        let xi = xv.row(i);
                        for j in 0..o {
                            let gij = g[i * o + j];
                            if gij != 0.0 {
                                for (d, xv) in gw[j * k..(j + 1) * k].iter_mut().zip(xi) {
                                    *d += gij * xv;
                                }
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, |gb| {
                        for i in 0..r {
                            for j in 0..o {
                                gb[j] += g[i * o + j];
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(d, s)| *d += s));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(d, s)| *d += s));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(d, s)| *d += s));
                self.accumulate(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s));
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(d, x)| *d += s * x));
            }
            Op::Gelu(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((d, x), gi) in ga.iter_mut().zip(av).zip(g) {
                        *d += gi * gelu_grad(*x);
                    }
                });
            }
            Op::LayerNorm { x, inv_std } => {
                let y = &node.value;
                let (r, c) = shape(y);
                self.accumulate(grads, *x, |gx| {
                    for i in 0..r {
                        let yi = y.row(i);
                        let gi = &g[i * c..(i + 1) * c];
                        let mean_g = gi.iter().sum::<f64>() / c as f64;
                        let mean_gy = dot(gi, yi) / c as f64;
                        for j in 0..c {
                            gx[i * c + j] += inv_std[i] * (gi[j] - mean_g - yi[j] * mean_gy);
                        }
                    }
                });
            }
            Op::AffineRows { x, gain, shift } => {
                let xv = self.value(*x);
                let gv = self.value(*gain).data();
                let (r, c) = shape(xv);
                self.accumulate(grads, *x, |gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[i * c + j] * gv[j];
                        }
                    }
                });
                self.accumulate(grads, *gain, |gg| {
                    for i in 0..r {
                        for j in 0..c {
                            gg[j] += g[i * c + j] * xv.data()[i * c + j];
                        }
                    }
                });
                self.accumulate(grads, *shift, |gs| {
                    for i in 0..r {
                        for j in 0..c {
                            gs[j] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Attention { q, k, v, groups, heads, probs } => {
                self.attention_backward(*q, *k, *v, groups, *heads, probs, g, grads);
            }
            Op::Mix { x, rows } => {
                let c = self.value(*x).cols();
                self.accumulate(grads, *x, |gx| {
                    for (r, terms) in rows.iter().enumerate() {
                        let gr = &g[r * c..(r + 1) * c];
                        for &(j, w) in terms {
                            for (d, s) in gx[j * c..(j + 1) * c].iter_mut().zip(gr) {
                                *d += w * s;
                            }
                        }
                    }
                });
            }
            Op::StackRows(a, b) => {
                let split = self.value(*a).len();
                self.accumulate(grads, *a, |ga| {
                    ga.iter_mut().zip(&g[..split]).for_each(|(d, s)| *d += s)
                });
                self.accumulate(grads, *b, |gb| {
                    gb.iter_mut().zip(&g[split..]).for_each(|(d, s)| *d += s)
                });
            }
            Op::SumSquares(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |gx| {
                    for (d, v) in gx.iter_mut().zip(xv) {
                        *d += 2.0 * g[0] * v;
                    }
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        groups: &Groups,
        heads: usize,
        probs: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (r, c) = shape(qv);
        let dh = c / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut gq = vec![0.0; r * c];
        let mut gk = vec![0.0; r * c];
        let mut gv = vec![0.0; r * c];
        let mut offset = 0;
        for group in groups.iter() {
            let l = group.len();
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for &a in group {
                    let p = &probs[offset..offset + l];
                    offset += l;
                    let ga = &g[a * c + h * dh..a * c + (h + 1) * dh];
                    // dP_ab = dO_a · v_b
                    let dp: Vec<f64> = group.iter().map(|&b| dot(ga, &vv.row(b)[cols.clone()])).collect();
                    let inner = dot(p, &dp);
                    for (idx, &b) in group.iter().enumerate() {
                        for (d, s) in gv[b * c + h * dh..b * c + (h + 1) * dh].iter_mut().zip(ga) {
                            *d += p[idx] * s;
                        }
                        let ds = p[idx] * (dp[idx] - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kb = &kv.row(b)[cols.clone()];
                        for (d, s) in gq[a * c + h * dh..a * c + (h + 1) * dh].iter_mut().zip(kb) {
                            *d += ds * s;
                        }
                        let qa = &qv.row(a)[cols.clone()];
                        for (d, s) in gk[b * c + h * dh..b * c + (h + 1) * dh].iter_mut().zip(qa) {
                            *d += ds * s;
                        }
                    }
                }
            }
        }
        for (var, src) in [(q, gq), (k, gk), (v, gv)] {
            self.accumulate(grads, var, |d| d.iter_mut().zip(&src).for_each(|(a, b)| *a += b));
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, shaped like `v`'s value.
    /// `None` when `v` does not influence the root through any parameter.
    pub fn get(&self, tape: &Tape, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(tape.value(v).dims().to_vec(), g.clone()).expect("same shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{mhsa, AttentionParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
        let n = dims.iter().product();
        Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Finite-difference check of d(root)/d(param) for a tape builder.
    fn fd_check(build: impl Fn(&mut Tape, Var) -> Var, x: Tensor) {
        let mut tape = Tape::new();
        let p = tape.param(x.clone());
        let root = build(&mut tape, p);
        let grads = tape.backward(root);
        let g = grads.get(&tape, p).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let eval = |delta: f64| {
                let mut xi = x.clone();
                xi.data_mut()[i] += delta;
                let mut t = Tape::new();
                let p = t.constant(xi);
                let r = build(&mut t, p);
                t.scalar(r)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = g.data()[i];
            assert!((fd - a).abs() <= 1e-6 * (1.0 + a.abs()), "coord {i}: fd {fd} vs {a}");
        }
    }

    #[test]
    fn grouped_attention_matches_plain_mhsa() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = AttentionParams::random(&mut rng, 4, 2).unwrap();
        let x = random(&mut rng, &[5, 4]);
        let want = mhsa(&x, &params).unwrap();

        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let leaf = |t: &mut Tape, w: &Tensor| t.constant(w.clone());
        let (wq, bq) = (leaf(&mut tape, &params.wq), leaf(&mut tape, &params.bq));
        let (wk, bk) = (leaf(&mut tape, &params.wk), leaf(&mut tape, &params.bk));
        let (wv, bv) = (leaf(&mut tape, &params.wv), leaf(&mut tape, &params.bv));
        let (wo, bo) = (leaf(&mut tape, &params.wo), leaf(&mut tape, &params.bo));
        let q = tape.linear(xv, wq, Some(bq));
        let k = tape.linear(xv, wk, Some(bk));
        let v = tape.linear(xv, wv, Some(bv));
        let a = tape.attention(q, k, v, Arc::new(vec![(0..5).collect()]), 2);
        let out = tape.linear(a, wo, Some(bo));
        assert!(tape.value(out).max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn attention_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = random(&mut rng, &[6, 4]);
        let v = random(&mut rng, &[6, 4]);
        let groups: Groups = Arc::new(vec![vec![0, 2, 4], vec![1, 3], vec![5]]);
        let q0 = random(&mut rng, &[6, 4]);
        fd_check(
            |t, q| {
                let kk = t.param(k.clone());
                let vv = t.param(v.clone());
                let a = t.attention(q, kk, vv, groups.clone(), 2);
                let s = t.gelu(a);
                t.sum_squares(s)
            },
            q0,
        );
        let q = random(&mut rng, &[6, 4]);
        fd_check(
            |t, kk| {
                let qq = t.constant(q.clone());
                let vv = t.constant(v.clone());
                let a = t.attention(qq, kk, vv, groups.clone(), 2);
                t.sum_squares(a)
            },
            k.clone(),
        );
        fd_check(
            |t, vv| {
                let qq = t.constant(q.clone());
                let kk = t.constant(k.clone());
                let a = t.attention(qq, kk, vv, groups.clone(), 1);
                t.sum_squares(a)
            },
            v.clone(),
        );
    }

    #[test]
    fn layer_norm_and_affine_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gain = random(&mut rng, &[5]);
        let shift = random(&mut rng, &[5]);
        let w = random(&mut rng, &[3, 5]);
        fd_check(
            |t, x| {
                let n = t.layer_norm(x, 1e-5);
                let g = t.constant(gain.clone());
                let s = t.constant(shift.clone());
                let a = t.affine_rows(n, g, s);
                let ww = t.constant(w.clone());
                let y = t.linear(a, ww, None);
                t.sum_squares(y)
            },
            random(&mut rng, &[4, 5]),
        );
        let x = random(&mut rng, &[4, 5]);
        fd_check(
            |t, g| {
                let xx = t.constant(x.clone());
                let n = t.layer_norm(xx, 1e-5);
                let s = t.param(shift.clone());
                let a = t.affine_rows(n, g, s);
                let y = t.gelu(a);
                t.sum_squares(y)
            },
            gain.clone(),
        );
    }

    #[test]
    fn linear_mix_stack_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[2]);
        let extra = random(&mut rng, &[1, 2]);
        let rows: MixRows = Arc::new(vec![vec![(0, 0.5), (3, -1.0)], vec![(2, 2.0)], vec![]]);
        fd_check(
            |t, w| {
                let xx = t.constant(x.clone());
                let bb = t.param(b.clone());
                let y = t.linear(xx, w, Some(bb));
                let e = t.constant(extra.clone());
                let s = t.stack_rows(y, e);
                let m = t.mix(s, rows.clone());
                let d = t.sub(m, m);
                let z = t.add(m, d);
                let z = t.scale(z, 0.3);
                t.sum_squares(z)
            },
            random(&mut rng, &[2, 4]),
        );
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let p = t.param(Tensor::from_vec(vec![0.5, 0.5]));
        let s = t.add(c, p);
        let r = t.sum_squares(s);
        let g = t.backward(r);
        assert!(g.get(&t, c).is_none());
        assert_eq!(g.get(&t, p).unwrap().data(), &[3.0, 5.0]);
    }
}
