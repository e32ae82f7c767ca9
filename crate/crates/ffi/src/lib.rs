//! C ABI over the `paver` library.
//!
//! Objects cross the boundary as opaque handles created by `*_init`, `*_compute`,
//! `*_read` or `*_load` functions and released with the matching `*_free`.
//! Every fallible call returns a [`PaverStatus`]; on failure the message is
//! available from [`paver_last_error`] on the same thread until the next
//! failing call. Buffers are caller-owned, and lengths are element counts.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use paver::embed::Frame;
use paver::geom::{compute_offset_table, Format, GridConfig, OffsetTable};
use paver::io::{decode_offsets, encode_offsets, read_file, write_file, WeightContainer};
use paver::metrics::{auc_judd, cc, psnr_weighted, ErrorChannel, FixationSet};
use paver::model::{predict, ModelConfig, PaverModel as Model, PredictOptions};
use paver::saliency::{default_sigma, KernelSupport, ScoreWeights};
use paver::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaverStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid grid, shape, size or hyperparameter.
    Config = 2,
    /// Non-finite values or an undefined metric.
    Numeric = 3,
    /// File system failure.
    Io = 4,
    /// Malformed file contents.
    Format = 5,
    /// The library panicked; the handle arguments should be discarded.
    Panic = 6,
}

/// Precomputed tangent-patch sampling positions for one raster layout.
pub struct PaverOffsets {
    table: OffsetTable,
}

/// Embedding, encoder and fusion weights with their head counts.
pub struct PaverModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> PaverStatus {
    match e {
        Error::Io(_) => PaverStatus::Io,
        Error::Format(_) => PaverStatus::Format,
        Error::NonFinite { .. } | Error::TrainingNaN { .. } | Error::Metric(_) | Error::Verification(_) => {
            PaverStatus::Numeric
        }
        _ => PaverStatus::Config,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PaverStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PaverStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PaverStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            PaverStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Error::Config("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(h: *const T, what: &'static str) -> Result<&'a T, Failure> {
    h.as_ref().ok_or(Failure::Null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got != want {
        return Err(Error::Config(format!("{what}: buffer holds {got} values, expected {want}")).into());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn paver_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; empty if none. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn paver_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Computes the offset table for a `width × height` raster with `patch`-pixel
/// patches. `format` is 0 for equirectangular, 1 for cube map, 2 for the
/// 4×2 tangent layout.
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn paver_offsets_compute(
    width: usize,
    height: usize,
    patch: usize,
    format: u8,
    out: *mut *mut PaverOffsets,
) -> PaverStatus {
    guard(|| {
        let format = Format::from_id(format).map_err(|_| Error::Config(format!("unknown layout id {format}")))?;
        let cfg = GridConfig::new(width, height, patch)?;
        let table = compute_offset_table(&cfg, format)?;
        store(out, PaverOffsets { table })
    })
}

/// Reads an offset table file.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paver_offsets_read(file: *const c_char, out: *mut *mut PaverOffsets) -> PaverStatus {
    guard(|| {
        let table = decode_offsets(&read_file(&path(file)?)?)?;
        store(out, PaverOffsets { table })
    })
}

/// Writes an offset table file.
///
/// # Safety
/// `offsets` must be a live handle; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn paver_offsets_write(offsets: *const PaverOffsets, file: *const c_char) -> PaverStatus {
    guard(|| {
        let o = handle(offsets, "offsets")?;
        write_file(&path(file)?, &encode_offsets(&o.table)?)?;
        Ok(())
    })
}

/// Number of patches, or 0 for a null handle.
///
/// # Safety
/// `offsets` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn paver_offsets_num_patches(offsets: *const PaverOffsets) -> usize {
    offsets.as_ref().map_or(0, |o| o.table.num_patches())
}

/// Copies every sampling position as interleaved `(u, v)` pixel coordinates,
/// ordered by patch, tap row, tap column. `len` must equal `2·N·S²`.
///
/// # Safety
/// `offsets` must be a live handle; `uv` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn paver_offsets_taps(offsets: *const PaverOffsets, uv: *mut f64, len: usize) -> PaverStatus {
    guard(|| {
        let o = handle(offsets, "offsets")?;
        let taps = o.table.taps();
        check_len(len, 2 * taps.len(), "taps")?;
        let dst = slice_mut(uv, len, "uv")?;
        for (pair, p) in dst.chunks_exact_mut(2).zip(taps) {
            pair[0] = p.u;
            pair[1] = p.v;
        }
        Ok(())
    })
}

/// Releases an offset table. Null is ignored.
///
/// # Safety
/// `offsets` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn paver_offsets_free(offsets: *mut PaverOffsets) {
    if !offsets.is_null() {
        drop(Box::from_raw(offsets));
    }
}

/// Creates a randomly initialized model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paver_model_init(
    patch: usize,
    channels: usize,
    depth: usize,
    encoder_heads: usize,
    fusion_heads: usize,
    seed: u64,
    out: *mut *mut PaverModel,
) -> PaverStatus {
    guard(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig { channels, depth, encoder_heads, fusion_heads };
        let model = Model::random(&mut rng, patch, cfg)?;
        store(out, PaverModel { model })
    })
}

/// Loads a weight container. Head counts are not stored in the file. A
/// positional table, if present, is re-gridded for `offsets`, which may be
/// null when the file has none.
///
/// # Safety
/// `file` must be a NUL-terminated string; `offsets` null or live; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn paver_model_load(
    file: *const c_char,
    encoder_heads: usize,
    fusion_heads: usize,
    offsets: *const PaverOffsets,
    out: *mut *mut PaverModel,
) -> PaverStatus {
    guard(|| {
        let container = WeightContainer::decode(&read_file(&path(file)?)?)?;
        let grid = offsets.as_ref().map(|o| (o.table.config.rows(), o.table.config.cols()));
        let model = Model::from_container(&container, encoder_heads, fusion_heads, grid)?;
        store(out, PaverModel { model })
    })
}

/// Writes the model's weights as a container file.
///
/// # Safety
/// `model` must be live; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn paver_model_save(model: *const PaverModel, file: *const c_char) -> PaverStatus {
    guard(|| {
        let m = handle(model, "model")?;
        write_file(&path(file)?, &m.model.to_container()?.encode()?)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn paver_model_free(model: *mut PaverModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dense saliency for `frames` RGB frames stored as `frames × 3 × H × W`
/// doubles in planar order. Writes `frames × H × W` normalized values.
/// `window` frames are fused together; `sigma ≤ 0` selects the default
/// smoothing width.
///
/// # Safety
/// Handles must be live; `pixels` must hold `pixels_len` doubles and `maps`
/// `maps_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn paver_saliency(
    model: *const PaverModel,
    offsets: *const PaverOffsets,
    pixels: *const f64,
    pixels_len: usize,
    frames: usize,
    window: usize,
    sigma: f64,
    maps: *mut f64,
    maps_len: usize,
) -> PaverStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let o = handle(offsets, "offsets")?;
        let cfg = o.table.config;
        let (w, h) = (cfg.width, cfg.height);
        if frames == 0 || window == 0 {
            return Err(Error::Config("frames and window must be positive".into()).into());
        }
        check_len(pixels_len, frames * 3 * w * h, "pixels")?;
        check_len(maps_len, frames * w * h, "maps")?;
        let src = slice(pixels, pixels_len, "pixels")?;
        let clip = src
            .chunks_exact(3 * w * h)
            .map(|f| Frame::new(w, h, o.table.format, f.to_vec()))
            .collect::<paver::Result<Vec<_>>>()?;
        let opts = PredictOptions {
            window,
            sigma: if sigma > 0.0 { sigma } else { default_sigma(w) },
            support: KernelSupport::Truncated,
            weights: ScoreWeights::default(),
        };
        let pred = predict(&m.model, &clip, &o.table, &opts)?;
        slice_mut(maps, maps_len, "maps")?.copy_from_slice(&pred.maps.data);
        Ok(())
    })
}

/// Pearson correlation of two maps of `len` values.
///
/// # Safety
/// `pred` and `gt` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paver_cc(pred: *const f64, gt: *const f64, len: usize, out: *mut f64) -> PaverStatus {
    guard(|| {
        let v = cc(slice(pred, len, "pred")?, slice(gt, len, "gt")?)?;
        slice_mut(out, 1, "out")?[0] = v;
        Ok(())
    })
}

/// AUC-Judd of a `width × height` map against fixations given as row-major
/// pixel indices.
///
/// # Safety
/// `pred` must hold `width·height` doubles, `fixations` `num_fixations`
/// indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paver_auc_judd(
    pred: *const f64,
    width: usize,
    height: usize,
    fixations: *const usize,
    num_fixations: usize,
    out: *mut f64,
) -> PaverStatus {
    guard(|| {
        let p = slice(pred, width * height, "pred")?;
        let fix = FixationSet::from_indices(width, height, slice(fixations, num_fixations, "fixations")?.to_vec())?;
        slice_mut(out, 1, "out")?[0] = auc_judd(p, &fix)?;
        Ok(())
    })
}

/// Luma PSNR between two clips of `frames × 3 × H × W` planar doubles.
/// `weights` is null for plain PSNR, or one `H × W` map shared by all
/// frames. Identical inputs report the 99 dB cap.
///
/// # Safety
/// `reference` and `distorted` must hold `frames·3·width·height` doubles,
/// `weights` null or `width·height` doubles; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn paver_psnr(
    reference: *const f64,
    distorted: *const f64,
    width: usize,
    height: usize,
    frames: usize,
    weights: *const f64,
    max_value: f64,
    out_db: *mut f64,
) -> PaverStatus {
    guard(|| {
        let len = frames * 3 * width * height;
        if len == 0 {
            return Err(Error::Config("empty clip".into()).into());
        }
        let to_frames = |data: &[f64]| {
            data.chunks_exact(3 * width * height)
                .map(|f| Frame::new(width, height, Format::Erp, f.to_vec()))
                .collect::<paver::Result<Vec<_>>>()
        };
        let r = to_frames(slice(reference, len, "reference")?)?;
        let d = to_frames(slice(distorted, len, "distorted")?)?;
        let maps = if weights.is_null() { None } else { Some(vec![slice(weights, width * height, "weights")?.to_vec()]) };
        let report = psnr_weighted(&r, &d, maps.as_deref(), max_value, ErrorChannel::Luma)?;
        slice_mut(out_db, 1, "out_db")?[0] = report.db;
        Ok(())
    })
}
