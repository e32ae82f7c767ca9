//! File formats: offset tables (POFF), weight containers (PAVW), raw tensors
//! (PTEN), dense saliency maps (PSAL), PPM/PGM rasters, key=value configs and
//! JSON-lines metric reports. All multi-byte fields are little-endian.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::embed::Frame;
use crate::error::{Error, Result};
use crate::geom::{Format, GridConfig, OffsetTable, PixelCoord};
use crate::nn::Tensor;
use crate::saliency::SaliencyMaps;

pub const OFFSETS_MAGIC: &[u8; 4] = b"POFF";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"PAVW";
pub const TENSOR_MAGIC: &[u8; 4] = b"PTEN";
pub const SALIENCY_MAGIC: &[u8; 4] = b"PSAL";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::format(format!("{what}: bad magic, expected {:?}", std::str::from_utf8(magic).unwrap_or("?"))));
        }
        Ok(Self { bytes, at: 4, what })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(format!("{}: truncated at byte {}", self.what, self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format("size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::format(format!("{}: {} trailing bytes", self.what, self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f32>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(format!("{what} {v} does not fit in 32 bits")))
}

pub fn encode_offsets(table: &OffsetTable) -> Result<Vec<u8>> {
    let cfg = table.config;
    let mut out = Vec::with_capacity(21 + table.taps().len() * 8);
    out.extend_from_slice(OFFSETS_MAGIC);
    put_u32(&mut out, VERSION);
    out.push(table.format.id());
    for v in [cfg.width, cfg.height, cfg.patch] {
        put_u32(&mut out, u32_of(v, "dimension")?);
    }
    put_f32s(&mut out, table.taps().iter().flat_map(|p| [p.u as f32, p.v as f32]));
    Ok(out)
}

pub fn decode_offsets(bytes: &[u8]) -> Result<OffsetTable> {
    let mut r = Reader::new(bytes, OFFSETS_MAGIC, "offset table")?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("offset table: unsupported version {version}")));
    }
    let format = Format::from_id(r.u8()?)?;
    let (w, h, s) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let cfg = GridConfig::new(w, h, s)?;
    let n = cfg.num_patches() * s * s;
    let vals = r.f32s(2 * n)?;
    r.finish()?;
    let taps = vals.chunks_exact(2).map(|c| PixelCoord::new(c[0] as f64, c[1] as f64)).collect();
    OffsetTable::from_taps(format, cfg, taps)
}

/// Ordered named tensors stored as f32.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightContainer {
    entries: Vec<(String, Tensor)>,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::format(format!("duplicate tensor name '{name}'")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, u32_of(self.entries.len(), "tensor count")?);
        for (name, t) in &self.entries {
            let len = u16::try_from(name.len()).map_err(|_| Error::format(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            let rank = u8::try_from(t.dims().len()).map_err(|_| Error::format("tensor rank above 255"))?;
            out.push(rank);
            for &d in t.dims() {
                put_u32(&mut out, u32_of(d, "dimension")?);
            }
            put_f32s(&mut out, t.data().iter().map(|&v| v as f32));
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, WEIGHTS_MAGIC, "weight container")?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(format!("weight container: unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut seen = HashSet::new();
        let mut out = Self::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("tensor name is not UTF-8"))?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(Error::format(format!("duplicate tensor name '{name}'")));
            }
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::format(format!("tensor '{name}': unsupported dtype {dtype}")));
            }
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format("size overflow"))?;
            let data = r.f32s(n)?.into_iter().map(f64::from).collect();
            out.entries.push((name, Tensor::new(dims, data)?));
        }
        r.finish()?;
        Ok(out)
    }
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(u8::try_from(t.dims().len()).map_err(|_| Error::format("tensor rank above 255"))?);
    for &d in t.dims() {
        put_u32(&mut out, u32_of(d, "dimension")?);
    }
    put_f32s(&mut out, t.data().iter().map(|&v| v as f32));
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes, TENSOR_MAGIC, "tensor")?;
    let rank = r.u8()? as usize;
    let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format("size overflow"))?;
    let data = r.f32s(n)?.into_iter().map(f64::from).collect();
    r.finish()?;
    Tensor::new(dims, data)
}

/// A `3×H×W` tensor as an RGB frame.
pub fn frame_from_tensor(t: &Tensor, format: Format) -> Result<Frame> {
    match *t.dims() {
        [3, h, w] => Frame::new(w, h, format, t.data().to_vec()),
        _ => Err(Error::format(format!("frame tensor must be 3×H×W, got {:?}", t.dims()))),
    }
}

pub fn encode_saliency(maps: &SaliencyMaps) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + maps.data.len() * 4);
    out.extend_from_slice(SALIENCY_MAGIC);
    for v in [maps.width, maps.height, maps.frames] {
        put_u32(&mut out, u32_of(v, "dimension")?);
    }
    put_f32s(&mut out, maps.data.iter().map(|&v| v as f32));
    Ok(out)
}

pub fn decode_saliency(bytes: &[u8]) -> Result<SaliencyMaps> {
    let mut r = Reader::new(bytes, SALIENCY_MAGIC, "saliency maps")?;
    let (w, h, t) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let data = r.f32s(w * h * t)?.into_iter().map(f64::from).collect();
    r.finish()?;
    SaliencyMaps::new(w, h, t, data)
}

/// Splits a PNM header into `count` whitespace-separated fields, skipping
/// `#` comments, and returns them with the payload offset.
fn pnm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format("truncated PNM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((fields, i + 1))
}

/// Binary PPM (P6, maxval 255) scaled to `[0, 1]`.
pub fn decode_ppm(bytes: &[u8], format: Format) -> Result<Frame> {
    let (f, start) = pnm_header(bytes, 4)?;
    if f[0] != "P6" {
        return Err(Error::format(format!("expected a P6 PPM, found '{}'", f[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(format!("bad PPM field '{s}'")));
    let (w, h, max) = (parse(&f[1])?, parse(&f[2])?, parse(&f[3])?);
    if max != 255 {
        return Err(Error::format(format!("PPM maxval must be 255, got {max}")));
    }
    let raster = bytes.get(start..start + 3 * w * h).ok_or_else(|| Error::format("truncated PPM raster"))?;
    let mut data = vec![0.0; 3 * w * h];
    for (k, px) in raster.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + k] = px[c] as f64 / 255.0;
        }
    }
    Frame::new(w, h, format, data)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                out.push(to_byte(frame.pixel(ch, c, r)));
            }
        }
    }
    out
}

/// 8-bit grayscale preview of a `[0, 1]` map.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_byte(v)));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let (f, start) = pnm_header(bytes, 4)?;
    if f[0] != "P5" {
        return Err(Error::format(format!("expected a P5 PGM, found '{}'", f[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(format!("bad PGM field '{s}'")));
    let (w, h, max) = (parse(&f[1])?, parse(&f[2])?, parse(&f[3])?);
    if max != 255 {
        return Err(Error::format(format!("PGM maxval must be 255, got {max}")));
    }
    let raster = bytes.get(start..start + w * h).ok_or_else(|| Error::format("truncated PGM raster"))?;
    Ok((w, h, raster.iter().map(|&b| b as f64 / 255.0).collect()))
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("config line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub clip: String,
    pub metric: String,
    pub value: f64,
    pub params: serde_json::Value,
}

pub fn json_lines(records: &[MetricRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("metric records serialize") + "\n")
        .collect()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
