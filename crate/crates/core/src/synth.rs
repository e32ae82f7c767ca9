//! Synthetic spherical scenes rendered into any raster layout, for smoke
//! tests and demos.

use crate::embed::Frame;
use crate::error::Result;
use crate::geom::{angle_between, direction, direction_from_raster, Format, GridConfig, PixelCoord, SphereCoord, Vec3};

/// Samples `scene` at every pixel-center direction of a `width × height`
/// raster in `format`.
pub fn render<F>(format: Format, width: usize, height: usize, scene: F) -> Result<Frame>
where
    F: Fn(Vec3) -> [f64; 3],
{
    let cfg = GridConfig::new(width, height, 1)?;
    cfg.check_format(format)?;
    let plane = width * height;
    let mut data = vec![0.0; 3 * plane];
    for row in 0..height {
        for col in 0..width {
            let rgb = scene(direction_from_raster(format, PixelCoord::new(col as f64, row as f64), &cfg));
            for (c, v) in rgb.iter().enumerate() {
                data[c * plane + row * width + col] = *v;
            }
        }
    }
    Frame::new(width, height, format, data)
}

/// Gray background with a bright disc of angular radius `radius` at `center`.
pub fn bright_disc(center: SphereCoord, radius: f64) -> impl Fn(Vec3) -> [f64; 3] {
    let c = direction(center);
    move |d| {
        if angle_between(c, d) <= radius {
            [1.0, 1.0, 0.9]
        } else {
            [0.5, 0.5, 0.5]
        }
    }
}

/// A bright disc drifting east along latitude `lat` by `step` radians per
/// frame, starting at longitude `start`.
#[allow(clippy::too_many_arguments)]
pub fn moving_disc_clip(
    format: Format,
    width: usize,
    height: usize,
    frames: usize,
    start: f64,
    lat: f64,
    step: f64,
    radius: f64,
) -> Result<Vec<Frame>> {
    (0..frames)
        .map(|t| {
            let center = SphereCoord::new(start + step * t as f64, lat);
            render(format, width, height, bright_disc(center, radius))
        })
        .collect()
}

/// Smooth colored field: a sum of soft blobs plus a gentle latitude ramp.
pub fn blob_field(blobs: Vec<(SphereCoord, f64, [f64; 3])>) -> impl Fn(Vec3) -> [f64; 3] {
    let blobs: Vec<(Vec3, f64, [f64; 3])> = blobs.into_iter().map(|(c, w, rgb)| (direction(c), w, rgb)).collect();
    move |d| {
        let mut out = [0.3 + 0.1 * d[1]; 3];
        for (c, width, rgb) in &blobs {
            let a = angle_between(*c, d);
            let k = (-(a * a) / (2.0 * width * width)).exp();
            for ch in 0..3 {
                out[ch] += k * rgb[ch];
            }
        }
        out
    }
}
