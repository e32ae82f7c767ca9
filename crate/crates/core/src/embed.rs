//! Deformable patch embedding: every patch is sampled at its fixed tangent-
//! plane taps and linearly projected to a token.

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{region_of, Format, GridConfig, OffsetTable, PixelCoord};
use crate::nn::{init_weight, Parameters, Tensor};

/// One RGB frame, channel-major (`3×H×W`), values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T = f64> {
    width: usize,
    height: usize,
    pub format: Format,
    data: Vec<T>,
}

impl<T: Float> Frame<T> {
    pub fn new(width: usize, height: usize, format: Format, data: Vec<T>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::shape(format!(
                "frame {width}×{height} needs {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("frame holds non-finite values".into()));
        }
        Ok(Self { width, height, format, data })
    }

    pub fn constant(width: usize, height: usize, format: Format, value: T) -> Self {
        Self {
            width,
            height,
            format,
            data: vec![value; 3 * width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn pixel(&self, channel: usize, col: usize, row: usize) -> T {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn set_pixel(&mut self, channel: usize, col: usize, row: usize, value: T) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    /// Cyclic shift along longitude: output column `c` is input column `c - k`.
    pub fn roll_columns(&self, k: usize) -> Self {
        let mut out = self.clone();
        for ch in 0..3 {
            for r in 0..self.height {
                for c in 0..self.width {
                    let src = (c + self.width - k % self.width) % self.width;
                    out.set_pixel(ch, c, r, self.pixel(ch, src, r));
                }
            }
        }
        out
    }

    pub fn to_f32(&self) -> Frame<f32> {
        Frame {
            width: self.width,
            height: self.height,
            format: self.format,
            data: self.data.iter().map(|v| v.to_f32().unwrap_or(0.0)).collect(),
        }
    }

    fn check_grid(&self, cfg: &GridConfig) -> Result<()> {
        if cfg.width != self.width || cfg.height != self.height {
            return Err(Error::config(format!(
                "frame is {}×{} but the offset table was built for {}×{}",
                self.width, self.height, cfg.width, cfg.height
            )));
        }
        Ok(())
    }
}

/// Resolves an integer neighbor of an equirectangular sample: longitudes wrap
/// and rows past a pole reflect onto the opposite meridian.
fn erp_index(col: i64, row: i64, w: i64, h: i64) -> (usize, usize) {
    let (mut col, mut row) = (col, row);
    if row < 0 {
        row = -row;
        col += w / 2;
    } else if row >= h {
        row = 2 * h - row;
        col += w / 2;
    }
    let row = row.clamp(0, h - 1);
    (col.rem_euclid(w) as usize, row as usize)
}

/// Bilinear RGB sample at a continuous raster position.
///
/// Equirectangular frames wrap in longitude and reflect over the poles with
/// a half-turn in longitude; cube-based layouts clamp to the face the
/// position falls in.
pub fn bilinear_sample<T: Float>(frame: &Frame<T>, p: PixelCoord) -> [T; 3] {
    let cfg = GridConfig {
        width: frame.width,
        height: frame.height,
        patch: 1,
    };
    let (w, h) = (frame.width as i64, frame.height as i64);
    let (p, region) = match region_of(frame.format, &cfg, p) {
        Some(r) => (r.clamp(p), Some(r)),
        None => (p, None),
    };
    let x0 = p.u.floor();
    let y0 = p.v.floor();
    let fx = T::from(p.u - x0).unwrap_or(T::zero());
    let fy = T::from(p.v - y0).unwrap_or(T::zero());
    let (x0, y0) = (x0 as i64, y0 as i64);
    let fetch = |dx: i64, dy: i64| -> (usize, usize) {
        match region {
            None => erp_index(x0 + dx, y0 + dy, w, h),
            Some(r) => (
                ((x0 + dx) as f64).clamp(r.u0, r.u1) as usize,
                ((y0 + dy) as f64).clamp(r.v0, r.v1) as usize,
            ),
        }
    };
    let n00 = fetch(0, 0);
    let n10 = fetch(1, 0);
    let n01 = fetch(0, 1);
    let n11 = fetch(1, 1);
    let one = T::one();
    let w00 = (one - fx) * (one - fy);
    let w10 = fx * (one - fy);
    let w01 = (one - fx) * fy;
    let w11 = fx * fy;
    let mut out = [T::zero(); 3];
    for (ch, o) in out.iter_mut().enumerate() {
        *o = w00 * frame.pixel(ch, n00.0, n00.1)
            + w10 * frame.pixel(ch, n10.0, n10.1)
            + w01 * frame.pixel(ch, n01.0, n01.1)
            + w11 * frame.pixel(ch, n11.0, n11.1);
    }
    out
}

/// Linear projection of a flattened `3×S×S` patch to `C` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedParams {
    /// `C × 3·S·S`, input laid out as (channel, tap row, tap column).
    pub weight: Tensor,
    pub bias: Tensor,
}

impl EmbedParams {
    pub fn zeros(channels: usize, patch: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[channels, 3 * patch * patch]),
            bias: Tensor::zeros(&[channels]),
        }
    }

    pub fn random<R: Rng>(rng: &mut R, channels: usize, patch: usize) -> Self {
        Self {
            weight: init_weight(rng, channels, 3 * patch * patch),
            bias: Tensor::zeros(&[channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.rows()
    }

    fn check(&self, taps: usize) -> Result<()> {
        let c = self.weight.rows();
        if self.weight.dims() != [c, 3 * taps] || self.bias.len() != c {
            return Err(Error::config(format!(
                "embedding weight {:?} does not take {} inputs",
                self.weight.dims(),
                3 * taps
            )));
        }
        Ok(())
    }
}

impl Parameters for EmbedParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

fn embed_generic<T: Float>(frame: &Frame<T>, offsets: &OffsetTable, params: &EmbedParams) -> Result<Vec<T>> {
    frame.check_grid(&offsets.config)?;
    let k = offsets.taps_per_patch();
    params.check(k)?;
    let c = params.channels();
    let weight: Vec<T> = params.weight.data().iter().map(|&v| T::from(v).unwrap_or(T::zero())).collect();
    let bias: Vec<T> = params.bias.data().iter().map(|&v| T::from(v).unwrap_or(T::zero())).collect();
    let n = offsets.num_patches();
    let mut out = Vec::with_capacity(n * c);
    let mut flat = vec![T::zero(); 3 * k];
    for i in 0..n {
        for (t, &p) in offsets.patch(i).iter().enumerate() {
            let rgb = bilinear_sample(frame, p);
            for ch in 0..3 {
                flat[ch * k + t] = rgb[ch];
            }
        }
        for o in 0..c {
            let row = &weight[o * 3 * k..(o + 1) * 3 * k];
            let mut acc = T::zero();
            for (wv, xv) in row.iter().zip(&flat) {
                acc = acc + *wv * *xv;
            }
            out.push(acc + bias[o]);
        }
    }
    Ok(out)
}

/// Deformable patch embedding of one frame: `N × C` tokens.
pub fn deform_embed(frame: &Frame, offsets: &OffsetTable, params: &EmbedParams) -> Result<Tensor> {
    let data = embed_generic(frame, offsets, params)?;
    Tensor::new(vec![offsets.num_patches(), params.channels()], data)
}

/// Single-precision variant of [`deform_embed`], returned row-major.
pub fn deform_embed_f32(frame: &Frame<f32>, offsets: &OffsetTable, params: &EmbedParams) -> Result<Vec<f32>> {
    embed_generic(frame, offsets, params)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::geom::compute_offset_table;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Frame {
        let data = (0..3 * w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        Frame::new(w, h, Format::Erp, data).unwrap()
    }

    #[test]
    fn constant_frame_samples_constant() {
        let f = Frame::constant(16, 8, Format::Erp, 0.375);
        for p in [(0.0, 0.0), (15.7, 7.9), (-3.2, -1.5), (40.0, 9.5)] {
            assert_eq!(bilinear_sample(&f, PixelCoord::new(p.0, p.1)), [0.375; 3]);
        }
        let f = Frame::constant(48, 32, Format::Cmp, 0.5);
        assert_eq!(bilinear_sample(&f, PixelCoord::new(15.5, 3.2)), [0.5; 3]);
    }

    #[test]
    fn pixel_centers_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_frame(&mut rng, 16, 8);
        for (c, r) in [(0, 0), (5, 3), (15, 7)] {
            let s = bilinear_sample(&f, PixelCoord::new(c as f64, r as f64));
            for ch in 0..3 {
                assert_eq!(s[ch], f.pixel(ch, c, r));
            }
        }
    }

    #[test]
    fn longitude_wrap_blends_last_and_first_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_frame(&mut rng, 16, 8);
        for r in 0..8 {
            let s = bilinear_sample(&f, PixelCoord::new(15.5, r as f64));
            for ch in 0..3 {
                let want = (f.pixel(ch, 15, r) + f.pixel(ch, 0, r)) / 2.0;
                assert!((s[ch] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sampling_past_the_north_pole_reflects() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_frame(&mut rng, 16, 8);
        // row -1 at column 3 is row 1 at column 3 + 8
        let s = bilinear_sample(&f, PixelCoord::new(3.0, -1.0));
        for ch in 0..3 {
            assert_eq!(s[ch], f.pixel(ch, 11, 1));
        }
    }

    #[test]
    fn cube_faces_clamp_at_edges() {
        let mut f = Frame::constant(48, 32, Format::Cmp, 0.0);
        // right face (column 16..32, row 0..16) set to 1
        for r in 0..16 {
            for c in 16..32 {
                for ch in 0..3 {
                    f.set_pixel(ch, c, r, 1.0);
                }
            }
        }
        // just left of the front/right boundary stays in the front face
        assert_eq!(bilinear_sample(&f, PixelCoord::new(15.4, 5.0)), [0.0; 3]);
        assert_eq!(bilinear_sample(&f, PixelCoord::new(15.6, 5.0)), [1.0; 3]);
    }

    #[test]
    fn zero_weight_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_frame(&mut rng, 32, 16);
        let cfg = GridConfig::new(32, 16, 8).unwrap();
        let table = compute_offset_table(&cfg, Format::Erp).unwrap();
        let mut params = EmbedParams::zeros(4, 8);
        params.bias = Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.0]);
        let tokens = deform_embed(&f, &table, &params).unwrap();
        for i in 0..tokens.rows() {
            assert_eq!(tokens.row(i), params.bias.data());
        }
    }

    #[test]
    fn constant_frame_gives_identical_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = Frame::constant(32, 16, Format::Erp, 0.3);
        let cfg = GridConfig::new(32, 16, 8).unwrap();
        let table = compute_offset_table(&cfg, Format::Erp).unwrap();
        let params = EmbedParams::random(&mut rng, 6, 8);
        let tokens = deform_embed(&f, &table, &params).unwrap();
        for i in 1..tokens.rows() {
            for (a, b) in tokens.row(i).iter().zip(tokens.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_shapes_are_config_errors() {
        let f = Frame::constant(32, 16, Format::Erp, 0.3);
        let table = compute_offset_table(&GridConfig::new(64, 32, 8).unwrap(), Format::Erp).unwrap();
        let params = EmbedParams::zeros(4, 8);
        assert!(matches!(deform_embed(&f, &table, &params), Err(Error::Config(_))));
        let table = compute_offset_table(&GridConfig::new(32, 16, 8).unwrap(), Format::Erp).unwrap();
        let params = EmbedParams::zeros(4, 4);
        assert!(matches!(deform_embed(&f, &table, &params), Err(Error::Config(_))));
    }
}
