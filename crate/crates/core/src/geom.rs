//! Sphere and raster geometry.
//!
//! Directions use a y-up frame where `(theta, phi) = (0, 0)` looks down `+z`:
//! `d(theta, phi) = (cos(phi) sin(theta), sin(phi), cos(phi) cos(theta))`.
//!
//! Raster positions are continuous pixel-index coordinates: pixel `(i, j)` has
//! its center at `(i, j)`. For equirectangular rasters this puts column 0 at
//! longitude 0 and row 0 on the north pole.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Longitude/latitude on the unit sphere, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCoord {
    /// Longitude in `[0, 2π)`.
    pub theta: f64,
    /// Latitude in `[-π/2, π/2]`.
    pub phi: f64,
}

impl SphereCoord {
    /// Builds a coordinate, wrapping `theta` into `[0, 2π)` and clamping `phi`.
    pub fn new(theta: f64, phi: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
            phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn direction(&self) -> Vec3 {
        direction(*self)
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Continuous raster position (pixel centers on integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Raster layout of a 360° frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Format {
    /// Equirectangular.
    Erp = 0,
    /// Cubemap, 3×2 faces: front, right, back / left, top, bottom.
    Cmp = 1,
    /// Truncated square pyramid: full-resolution front face on the left half,
    /// the remaining five faces packed into the right half.
    Tsp = 2,
}

impl Format {
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Format::Erp),
            1 => Ok(Format::Cmp),
            2 => Ok(Format::Tsp),
            _ => Err(Error::format(format!("unknown raster format id {id}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Erp => "erp",
            Format::Cmp => "cmp",
            Format::Tsp => "tsp",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erp" => Ok(Format::Erp),
            "cmp" => Ok(Format::Cmp),
            "tsp" => Ok(Format::Tsp),
            other => Err(Error::config(format!("unknown format `{other}` (expected erp, cmp or tsp)"))),
        }
    }
}

/// Raster size and tangent-patch side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub patch: usize,
}

impl GridConfig {
    pub fn new(width: usize, height: usize, patch: usize) -> Result<Self> {
        if width == 0 || height == 0 || patch == 0 {
            return Err(Error::config("width, height and patch size must be positive"));
        }
        if !width.is_multiple_of(patch) || !height.is_multiple_of(patch) {
            return Err(Error::config(format!(
                "patch size {patch} must divide both width {width} and height {height}"
            )));
        }
        Ok(Self { width, height, patch })
    }

    /// Patches per row (`w`).
    pub fn cols(&self) -> usize {
        self.width / self.patch
    }

    /// Patch rows (`h`).
    pub fn rows(&self) -> usize {
        self.height / self.patch
    }

    pub fn num_patches(&self) -> usize {
        self.cols() * self.rows()
    }

    /// Angular extent of one tangent patch: its equatorial ERP footprint.
    pub fn patch_fov(&self) -> f64 {
        TAU * self.patch as f64 / self.width as f64
    }

    /// Checks that the raster matches the face layout of `format`.
    pub fn check_format(&self, format: Format) -> Result<()> {
        match format {
            Format::Erp => Ok(()),
            Format::Cmp if 2 * self.width == 3 * self.height => Ok(()),
            Format::Tsp if self.width == 2 * self.height => Ok(()),
            Format::Cmp => Err(Error::config(format!(
                "cubemap raster must be 3F×2F, got {}×{}",
                self.width, self.height
            ))),
            Format::Tsp => Err(Error::config(format!(
                "pyramid raster must be 2F×F, got {}×{}",
                self.width, self.height
            ))),
        }
    }

    /// Face side in pixels for the cube-based layouts.
    fn face_side(&self, format: Format) -> f64 {
        match format {
            Format::Erp => self.height as f64,
            Format::Cmp => (self.width / 3) as f64,
            Format::Tsp => self.height as f64,
        }
    }
}

pub fn direction(c: SphereCoord) -> Vec3 {
    let (st, ct) = c.theta.sin_cos();
    let (sp, cp) = c.phi.sin_cos();
    [cp * st, sp, cp * ct]
}

/// Rotation taking `+z` to `direction(c)`, composed as yaw(θ)·pitch(φ).
///
/// The image of `+x` is the local "right" (increasing longitude) and the
/// image of `+y` is the local "up" (increasing latitude).
pub fn rotation_matrix(c: SphereCoord) -> Mat3 {
    let (st, ct) = c.theta.sin_cos();
    let (sp, cp) = c.phi.sin_cos();
    [
        [ct, -st * sp, st * cp],
        [0.0, cp, sp],
        [-st, -ct * sp, ct * cp],
    ]
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(v: Vec3) -> f64 {
    dot(v, v).sqrt()
}

fn scale(v: Vec3, s: f64) -> Vec3 {
    [v[0] * s, v[1] * s, v[2] * s]
}

fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn normalize(v: Vec3) -> Result<Vec3> {
    let n = norm(v);
    if !n.is_finite() || n <= 0.0 {
        return Err(Error::Domain(format!("cannot normalize vector {v:?}")));
    }
    Ok(scale(v, 1.0 / n))
}

/// Longitude/latitude of a nonzero vector. Longitude is 0 at the poles.
pub fn sph_from_cart(v: Vec3) -> Result<SphereCoord> {
    let [x, y, z] = v;
    let horiz = x.hypot(z);
    if !(horiz > 0.0 || y != 0.0) || !(x.is_finite() && y.is_finite() && z.is_finite()) {
        return Err(Error::Domain("zero or non-finite vector has no direction".into()));
    }
    let phi = y.atan2(horiz);
    let theta = if horiz == 0.0 { 0.0 } else { x.atan2(z) };
    Ok(SphereCoord::new(theta, phi))
}

/// Equirectangular raster position of a sphere point.
pub fn er_from_sph(c: SphereCoord, cfg: &GridConfig) -> PixelCoord {
    let w = cfg.width as f64;
    let h = cfg.height as f64;
    let mut u = w * c.theta / TAU;
    if u >= w {
        u -= w;
    }
    PixelCoord::new(u, h * (0.5 - c.phi / PI))
}

/// Inverse of [`er_from_sph`].
pub fn sph_from_er(p: PixelCoord, cfg: &GridConfig) -> SphereCoord {
    SphereCoord::new(
        TAU * p.u / cfg.width as f64,
        PI * (0.5 - p.v / cfg.height as f64),
    )
}

/// Great-circle angle between two sphere points, in `[0, π]`.
pub fn geodesic_distance(a: SphereCoord, b: SphereCoord) -> f64 {
    angle_between(direction(a), direction(b))
}

pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

/// An `S×S` grid of points on the `z = 1` plane, row-major with rows running
/// top (+y) to bottom and columns left (-x) to right.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentGrid {
    pub side: usize,
    pub points: Vec<Vec3>,
}

/// Tap centers spaced uniformly over `tan(fov/2)·[-1, 1]` on both axes.
pub fn tangent_grid(side: usize, fov: f64) -> TangentGrid {
    let half = (fov / 2.0).tan();
    let s = side as f64;
    // (2k + 1 - S) is an exact integer, so the grid is exactly centrosymmetric
    let coord = |k: usize| half * (2.0 * k as f64 + 1.0 - s) / s;
    let mut points = Vec::with_capacity(side * side);
    for b in 0..side {
        for a in 0..side {
            points.push([coord(a), -coord(b), 1.0]);
        }
    }
    TangentGrid { side, points }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Face {
    Back,
    Bottom,
    Front,
    Left,
    Right,
    Top,
}

// Alphabetical, so that seam ties resolve to the lexicographically-first face.
const FACES: [Face; 6] = [Face::Back, Face::Bottom, Face::Front, Face::Left, Face::Right, Face::Top];

struct FaceBasis {
    fwd: Vec3,
    right: Vec3,
    up: Vec3,
}

impl Face {
    fn basis(self) -> FaceBasis {
        let (fwd, right, up) = match self {
            Face::Front => ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            Face::Right => ([1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]),
            Face::Back => ([0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            Face::Left => ([-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
            Face::Top => ([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
            Face::Bottom => ([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        };
        FaceBasis { fwd, right, up }
    }

    /// (column, row) of the face in the 3×2 cubemap layout.
    fn cmp_cell(self) -> (usize, usize) {
        match self {
            Face::Front => (0, 0),
            Face::Right => (1, 0),
            Face::Back => (2, 0),
            Face::Left => (0, 1),
            Face::Top => (1, 1),
            Face::Bottom => (2, 1),
        }
    }

    fn from_cmp_cell(col: usize, row: usize) -> Face {
        match (col, row) {
            (0, 0) => Face::Front,
            (1, 0) => Face::Right,
            (2, 0) => Face::Back,
            (0, 1) => Face::Left,
            (1, 1) => Face::Top,
            _ => Face::Bottom,
        }
    }
}

fn major_face(d: Vec3) -> Face {
    let mut best = FACES[0];
    let mut best_val = f64::NEG_INFINITY;
    for face in FACES {
        let val = dot(d, face.basis().fwd);
        if val > best_val {
            best = face;
            best_val = val;
        }
    }
    best
}

/// Pixel-center bounds of a face region, inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Region {
    pub fn clamp(&self, p: PixelCoord) -> PixelCoord {
        PixelCoord::new(p.u.clamp(self.u0, self.u1), p.v.clamp(self.v0, self.v1))
    }
}

fn square_region(u_start: f64, v_start: f64, side: f64) -> Region {
    Region {
        u0: u_start,
        u1: u_start + side - 1.0,
        v0: v_start,
        v1: v_start + side - 1.0,
    }
}

/// The face region containing a raster position, for the cube-based layouts.
/// Returns `None` for equirectangular rasters, which wrap instead.
pub fn region_of(format: Format, cfg: &GridConfig, p: PixelCoord) -> Option<Region> {
    let f = cfg.face_side(format);
    match format {
        Format::Erp => None,
        Format::Cmp => {
            let col = ((p.u + 0.5) / f).floor().clamp(0.0, 2.0);
            let row = ((p.v + 0.5) / f).floor().clamp(0.0, 1.0);
            Some(square_region(col * f, row * f, f))
        }
        Format::Tsp => {
            let col = ((p.u + 0.5) / f).floor().clamp(0.0, 1.0);
            Some(square_region(col * f, 0.0, f))
        }
    }
}

/// Face-local gnomonic coordinates in `[-1, 1]` to a raster position inside
/// the square starting at `(u_start, 0 or v_start)`.
fn square_to_raster(a: f64, b: f64, u_start: f64, v_start: f64, side: f64) -> PixelCoord {
    PixelCoord::new(
        u_start + (a + 1.0) / 2.0 * side - 0.5,
        v_start + (1.0 - b) / 2.0 * side - 0.5,
    )
}

fn raster_to_square(p: PixelCoord, u_start: f64, v_start: f64, side: f64) -> (f64, f64) {
    (
        2.0 * (p.u - u_start + 0.5) / side - 1.0,
        1.0 - 2.0 * (p.v - v_start + 0.5) / side,
    )
}

fn face_coords(face: Face, d: Vec3) -> (f64, f64) {
    let basis = face.basis();
    let depth = dot(d, basis.fwd);
    (dot(d, basis.right) / depth, dot(d, basis.up) / depth)
}

fn face_direction(face: Face, a: f64, b: f64) -> Vec3 {
    let basis = face.basis();
    add3(basis.fwd, add3(scale(basis.right, a), scale(basis.up, b)))
}

/// Position inside the pyramid's packed half, `(s, t) ∈ [-1, 1]²`, for a
/// direction not on the front face.
fn pyramid_coords(face: Face, d: Vec3) -> (f64, f64) {
    let [x, y, z] = d;
    // distance across a side trapezoid: 1/2 at the back face, 1 at the front
    let ramp = |zn: f64| 0.5 + (zn + 1.0) / 4.0;
    match face {
        Face::Back => {
            let (a, b) = face_coords(face, d);
            (a / 2.0, b / 2.0)
        }
        Face::Left => {
            let m = -x;
            let s = ramp(z / m);
            (s, y / m * s)
        }
        Face::Right => {
            let m = x;
            let s = ramp(z / m);
            (-s, y / m * s)
        }
        Face::Top => {
            let m = y;
            let t = ramp(z / m);
            (-x / m * t, t)
        }
        Face::Bottom => {
            let m = -y;
            let t = ramp(z / m);
            (-x / m * t, -t)
        }
        Face::Front => unreachable!("front face lives in the full-resolution half"),
    }
}

fn pyramid_direction(s: f64, t: f64) -> Vec3 {
    let m = s.abs().max(t.abs());
    if m <= 0.5 {
        return face_direction(Face::Back, 2.0 * s, 2.0 * t);
    }
    let zn = 4.0 * (m - 0.5) - 1.0;
    if s.abs() >= t.abs() {
        let yn = t / m;
        if s > 0.0 {
            [-1.0, yn, zn]
        } else {
            [1.0, yn, zn]
        }
    } else {
        let xn = -s / m;
        if t > 0.0 {
            [xn, 1.0, zn]
        } else {
            [xn, -1.0, zn]
        }
    }
}

/// Raster position and the face region it belongs to.
fn locate(format: Format, d: Vec3, cfg: &GridConfig) -> (PixelCoord, Option<Region>) {
    match format {
        Format::Erp => {
            // sph_from_cart only fails on zero vectors, excluded by the caller
            let c = sph_from_cart(d).unwrap_or(SphereCoord::new(0.0, 0.0));
            (er_from_sph(c, cfg), None)
        }
        Format::Cmp => {
            let f = cfg.face_side(format);
            let face = major_face(d);
            let (col, row) = face.cmp_cell();
            let (a, b) = face_coords(face, d);
            let (us, vs) = (col as f64 * f, row as f64 * f);
            (square_to_raster(a, b, us, vs, f), Some(square_region(us, vs, f)))
        }
        Format::Tsp => {
            let f = cfg.face_side(format);
            let face = major_face(d);
            if face == Face::Front {
                let (a, b) = face_coords(face, d);
                (square_to_raster(a, b, 0.0, 0.0, f), Some(square_region(0.0, 0.0, f)))
            } else {
                let (s, t) = pyramid_coords(face, d);
                (square_to_raster(s, t, f, 0.0, f), Some(square_region(f, 0.0, f)))
            }
        }
    }
}

/// Continuous raster position of a unit direction in the given layout.
///
/// Directions on a cube seam resolve to the alphabetically-first face.
pub fn raster_from_direction(format: Format, d: Vec3, cfg: &GridConfig) -> Result<PixelCoord> {
    let n = norm(d);
    if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("direction must be unit length, got norm {n}")));
    }
    Ok(locate(format, d, cfg).0)
}

/// Unit direction through a raster position; inverse of [`raster_from_direction`].
pub fn direction_from_raster(format: Format, p: PixelCoord, cfg: &GridConfig) -> Vec3 {
    let d = match format {
        Format::Erp => return direction(sph_from_er(p, cfg)),
        Format::Cmp => {
            let f = cfg.face_side(format);
            let col = ((p.u + 0.5) / f).floor().clamp(0.0, 2.0);
            let row = ((p.v + 0.5) / f).floor().clamp(0.0, 1.0);
            let face = Face::from_cmp_cell(col as usize, row as usize);
            let (a, b) = raster_to_square(p, col * f, row * f, f);
            face_direction(face, a, b)
        }
        Format::Tsp => {
            let f = cfg.face_side(format);
            if p.u + 0.5 < f {
                let (a, b) = raster_to_square(p, 0.0, 0.0, f);
                face_direction(Face::Front, a, b)
            } else {
                let (s, t) = raster_to_square(p, f, 0.0, f);
                pyramid_direction(s, t)
            }
        }
    };
    scale(d, 1.0 / norm(d))
}

/// Sphere coordinates of every patch center, row-major over the patch grid.
///
/// A patch center is the geometric center of its `S×S` pixel block in the
/// format's raster.
pub fn patch_centers(format: Format, cfg: &GridConfig) -> Vec<SphereCoord> {
    let s = cfg.patch as f64;
    let offset = (s - 1.0) / 2.0;
    let mut out = Vec::with_capacity(cfg.num_patches());
    for r in 0..cfg.rows() {
        for c in 0..cfg.cols() {
            let p = PixelCoord::new(c as f64 * s + offset, r as f64 * s + offset);
            let d = direction_from_raster(format, p, cfg);
            // direction_from_raster always yields a unit vector
            out.push(sph_from_cart(d).expect("unit direction"));
        }
    }
    out
}

/// Taps of one tangent patch centered on `center`, normalized into the raster:
/// equirectangular longitudes wrap into `[0, W)`, cube-based layouts clamp to
/// the pixel centers of the face region the tap falls in.
pub fn patch_taps(format: Format, cfg: &GridConfig, grid: &TangentGrid, center: SphereCoord) -> Vec<PixelCoord> {
    let rot = rotation_matrix(center);
    grid.points
        .iter()
        .map(|&p| {
            let q = mat_vec(&rot, p);
            let d = scale(q, 1.0 / norm(q));
            let (px, region) = locate(format, d, cfg);
            match region {
                Some(r) => r.clamp(px),
                None => px,
            }
        })
        .collect()
}

/// Fixed sampling positions for deformable patch embedding: `N·S·S` taps,
/// row-major by patch, then tap row, then tap column.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    pub format: Format,
    pub config: GridConfig,
    taps: Vec<PixelCoord>,
}

impl OffsetTable {
    pub fn from_taps(format: Format, config: GridConfig, taps: Vec<PixelCoord>) -> Result<Self> {
        let expected = config.num_patches() * config.patch * config.patch;
        if taps.len() != expected {
            return Err(Error::shape(format!("offset table needs {expected} taps, got {}", taps.len())));
        }
        Ok(Self { format, config, taps })
    }

    /// The plain patchify layout: each patch samples its own `S×S` pixel block.
    pub fn regular_grid(config: GridConfig) -> Self {
        let s = config.patch;
        let mut taps = Vec::with_capacity(config.num_patches() * s * s);
        for r in 0..config.rows() {
            for c in 0..config.cols() {
                for b in 0..s {
                    for a in 0..s {
                        taps.push(PixelCoord::new((c * s + a) as f64, (r * s + b) as f64));
                    }
                }
            }
        }
        Self { format: Format::Erp, config, taps }
    }

    pub fn num_patches(&self) -> usize {
        self.config.num_patches()
    }

    pub fn taps_per_patch(&self) -> usize {
        self.config.patch * self.config.patch
    }

    pub fn taps(&self) -> &[PixelCoord] {
        &self.taps
    }

    pub fn patch(&self, i: usize) -> &[PixelCoord] {
        let k = self.taps_per_patch();
        &self.taps[i * k..(i + 1) * k]
    }
}

/// Tangent-patch offsets for every patch of the raster.
pub fn compute_offset_table(cfg: &GridConfig, format: Format) -> Result<OffsetTable> {
    let cfg = GridConfig::new(cfg.width, cfg.height, cfg.patch)?;
    cfg.check_format(format)?;
    let grid = tangent_grid(cfg.patch, cfg.patch_fov());
    let taps = patch_centers(format, &cfg)
        .into_iter()
        .flat_map(|c| patch_taps(format, &cfg, &grid, c))
        .collect();
    OffsetTable::from_taps(format, cfg, taps)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rotation_at_origin_is_identity() {
        let r = rotation_matrix(SphereCoord::new(0.0, 0.0));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rotation_maps_z_to_direction() {
        let r = rotation_matrix(SphereCoord::new(FRAC_PI_2, 0.0));
        let d = mat_vec(&r, [0.0, 0.0, 1.0]);
        assert!(close(d[0], 1.0, 1e-15) && close(d[1], 0.0, 1e-15) && close(d[2], 0.0, 1e-15));
        for (t, p) in [(0.3, 0.2), (4.0, -1.1), (2.5, 1.5)] {
            let c = SphereCoord::new(t, p);
            let d = mat_vec(&rotation_matrix(c), [0.0, 0.0, 1.0]);
            let e = direction(c);
            for k in 0..3 {
                assert!(close(d[k], e[k], 1e-15));
            }
        }
    }

    #[test]
    fn cart_to_sph_anchors() {
        let c = sph_from_cart([0.0, 0.0, 1.0]).unwrap();
        assert_eq!((c.theta, c.phi), (0.0, 0.0));
        let c = sph_from_cart([0.0, 1.0, 0.0]).unwrap();
        assert_eq!((c.theta, c.phi), (0.0, FRAC_PI_2));
        let c = sph_from_cart([0.0, -3.0, 0.0]).unwrap();
        assert_eq!((c.theta, c.phi), (0.0, -FRAC_PI_2));
        let c = sph_from_cart([1.0, 0.0, 0.0]).unwrap();
        assert!(close(c.theta, FRAC_PI_2, 1e-15) && c.phi == 0.0);
        assert!(matches!(sph_from_cart([0.0; 3]), Err(Error::Domain(_))));
    }

    #[test]
    fn erp_anchor_pixels() {
        let cfg = GridConfig::new(448, 224, 16).unwrap();
        let p = er_from_sph(SphereCoord::new(PI, 0.0), &cfg);
        assert_eq!((p.u, p.v), (224.0, 112.0));
        let p = er_from_sph(SphereCoord::new(0.0, FRAC_PI_2), &cfg);
        assert_eq!((p.u, p.v), (0.0, 0.0));
    }

    #[test]
    fn tangent_grid_small_cases() {
        let g = tangent_grid(1, 1.0);
        assert_eq!(g.points, vec![[0.0, 0.0, 1.0]]);
        let g = tangent_grid(2, FRAC_PI_2);
        let xs: Vec<f64> = g.points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = g.points.iter().map(|p| p[1]).collect();
        for (x, e) in xs.iter().zip([-0.5, 0.5, -0.5, 0.5]) {
            assert!(close(*x, e, 1e-15));
        }
        for (y, e) in ys.iter().zip([0.5, 0.5, -0.5, -0.5]) {
            assert!(close(*y, e, 1e-15));
        }
        let g = tangent_grid(5, 0.4);
        assert_eq!(g.points[12], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn tangent_grid_mean_is_axis() {
        for s in [2usize, 4, 16] {
            let g = tangent_grid(s, 0.3);
            let n = g.points.len() as f64;
            let mean = g.points.iter().fold([0.0; 3], |acc, p| add3(acc, *p));
            assert!(close(mean[0] / n, 0.0, 1e-15));
            assert!(close(mean[1] / n, 0.0, 1e-15));
            assert!(close(mean[2] / n, 1.0, 1e-15));
            assert!(g.points.iter().all(|p| p[2] == 1.0));
        }
    }

    #[test]
    fn geodesic_examples() {
        let o = SphereCoord::new(0.0, 0.0);
        assert!(close(geodesic_distance(o, SphereCoord::new(PI, 0.0)), PI, 1e-15));
        assert!(close(geodesic_distance(o, SphereCoord::new(FRAC_PI_2, 0.0)), FRAC_PI_2, 1e-15));
        let n1 = SphereCoord::new(0.0, FRAC_PI_2);
        let n2 = SphereCoord::new(1.3, FRAC_PI_2);
        assert!(geodesic_distance(n1, n2) < 1e-15);
    }

    #[test]
    fn offset_table_dims() {
        let cfg = GridConfig::new(448, 224, 16).unwrap();
        let table = compute_offset_table(&cfg, Format::Erp).unwrap();
        assert_eq!(table.num_patches(), 392);
        assert_eq!((cfg.cols(), cfg.rows()), (28, 14));
        assert_eq!(table.taps().len(), 392 * 256);
        assert!(GridConfig::new(448, 224, 15).is_err());
    }

    #[test]
    fn odd_patch_center_tap_hits_patch_center() {
        let cfg = GridConfig::new(45, 27, 9).unwrap();
        let table = compute_offset_table(&cfg, Format::Erp).unwrap();
        let mid = (9 * 9) / 2;
        for r in 0..cfg.rows() {
            for c in 0..cfg.cols() {
                let tap = table.patch(r * cfg.cols() + c)[mid];
                assert!(close(tap.u, (c * 9 + 4) as f64, 1e-9), "{tap:?}");
                assert!(close(tap.v, (r * 9 + 4) as f64, 1e-9), "{tap:?}");
            }
        }
        // a patch centered on the origin direction
        let grid = tangent_grid(9, cfg.patch_fov());
        let taps = patch_taps(Format::Erp, &cfg, &grid, SphereCoord::new(0.0, 0.0));
        assert_eq!(taps[mid], er_from_sph(SphereCoord::new(0.0, 0.0), &cfg));
    }

    #[test]
    fn polar_patches_stretch_in_longitude() {
        let cfg = GridConfig::new(448, 224, 16).unwrap();
        let table = compute_offset_table(&cfg, Format::Erp).unwrap();
        let span = |i: usize| {
            let taps = table.patch(i);
            // unwrap longitudes around the first tap before taking the box
            let u0 = taps[0].u;
            let w = cfg.width as f64;
            let us: Vec<f64> = taps
                .iter()
                .map(|t| {
                    let mut d = t.u - u0;
                    if d > w / 2.0 {
                        d -= w;
                    } else if d < -w / 2.0 {
                        d += w;
                    }
                    d
                })
                .collect();
            us.iter().cloned().fold(f64::MIN, f64::max) - us.iter().cloned().fold(f64::MAX, f64::min)
        };
        let centers = patch_centers(Format::Erp, &cfg);
        let equator = 7 * cfg.cols() + 3;
        let pole = 3;
        assert!(centers[pole].phi >= 75f64.to_radians());
        assert!(span(pole) >= 2.0 * span(equator), "{} vs {}", span(pole), span(equator));
    }

    #[test]
    fn cubemap_front_anchor() {
        let cfg = GridConfig::new(96, 64, 16).unwrap();
        let p = raster_from_direction(Format::Cmp, [0.0, 0.0, 1.0], &cfg).unwrap();
        assert_eq!((p.u, p.v), (15.5, 15.5));
        let p = raster_from_direction(Format::Tsp, [0.0, 0.0, 1.0], &GridConfig::new(64, 32, 16).unwrap()).unwrap();
        assert_eq!((p.u, p.v), (15.5, 15.5));
    }

    #[test]
    fn seam_tie_goes_to_first_face_name() {
        // equal x and z components: "front" sorts before "right"
        let d = normalize([1.0, 0.0, 1.0]).unwrap();
        assert_eq!(major_face(d), Face::Front);
        let d = normalize([0.0, -1.0, -1.0]).unwrap();
        assert_eq!(major_face(d), Face::Back);
    }

    #[test]
    fn erp_raster_is_erp_sphere() {
        let cfg = GridConfig::new(64, 32, 8).unwrap();
        let d = normalize([0.3, -0.2, 0.9]).unwrap();
        let p = raster_from_direction(Format::Erp, d, &cfg).unwrap();
        assert_eq!(p, er_from_sph(sph_from_cart(d).unwrap(), &cfg));
        assert!(raster_from_direction(Format::Erp, [0.0, 0.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn layout_checks() {
        assert!(GridConfig::new(96, 64, 16).unwrap().check_format(Format::Cmp).is_ok());
        assert!(GridConfig::new(64, 32, 16).unwrap().check_format(Format::Cmp).is_err());
        assert!(compute_offset_table(&GridConfig::new(64, 32, 16).unwrap(), Format::Cmp).is_err());
        assert!(GridConfig::new(64, 32, 16).unwrap().check_format(Format::Tsp).is_ok());
    }
}
