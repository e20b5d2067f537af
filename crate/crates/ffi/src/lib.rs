//! C ABI for the pansharp library.
//!
//! Cubes cross the boundary as opaque `PsCube` handles created and released
//! by this library; every fallible call returns a [`PsStatus`] and leaves a
//! human-readable message retrievable with [`ps_last_error`]. Pointers must
//! be valid for the duration of the call; ownership transfers only through
//! the documented `out` parameters. The header `include/pansharp.h` is
//! generated at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector};

use pansharp::error::Error;
use pansharp::estimation::{self, ResponseSource, SpectralResponse};
use pansharp::fusion::{self, FusionMethod, FusionResult};
use pansharp::io::{self, Dtype};
use pansharp::linalg;
use pansharp::metrics;
use pansharp::prior::{self, PriorBox};
use pansharp::raster::{CubePair, RasterCube};
use pansharp::sampling::{self, SpatialOperator};
use pansharp::synth::{self, AblationConfig, SynthSpec, UpsamplerKind};

/// Opaque multiband raster handle.
pub struct PsCube(RasterCube);

/// Call outcome. Mirrors the CLI exit classes, plus pointer hygiene codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numeric = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Fusion algorithm selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsMethod {
    Pcs = 0,
    Pmra = 1,
    Gsa = 2,
    MtfGlpCbd = 3,
}

/// Up-sampler selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsUpsampler {
    Replicate = 0,
    Bilinear = 1,
}

/// The five residuals of one fusion run. `rmse` is meaningful only when
/// `has_rmse` is true (a ground truth was supplied).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsMetricReport {
    pub consistent_rmse: f64,
    pub spatial_rmse: f64,
    pub spectral_rmse: f64,
    pub inverse_ability: f64,
    pub rmse: f64,
    pub has_rmse: bool,
}

/// One row of the method-by-enhancement ablation grid.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsAblationRow {
    pub method: PsMethod,
    pub dse: bool,
    pub metrics: PsMetricReport,
}

/// Number of rows [`ps_ablate`] writes: four methods, with and without the
/// down-sampling enhancement.
pub const PS_ABLATION_ROWS: usize = 8;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PsStatus {
    match e.exit_code() {
        3 => PsStatus::Numeric,
        _ => PsStatus::Data,
    }
}

fn fail(e: Error) -> PsStatus {
    let status = status_of(&e);
    set_error(&format!("{} ({})", e, e.kind()));
    status
}

fn guard<F: FnOnce() -> PsStatus>(f: F) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(ptr::null())
    })
}

unsafe fn path_from(ptr_: *const c_char) -> Result<std::path::PathBuf, PsStatus> {
    if ptr_.is_null() {
        set_error("path pointer is NULL");
        return Err(PsStatus::NullPointer);
    }
    match CStr::from_ptr(ptr_).to_str() {
        Ok(s) => Ok(Path::new(s).to_path_buf()),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(PsStatus::Usage)
        }
    }
}

unsafe fn cube_ref<'a>(ptr_: *const PsCube) -> Result<&'a RasterCube, PsStatus> {
    if ptr_.is_null() {
        set_error("cube handle is NULL");
        return Err(PsStatus::NullPointer);
    }
    Ok(&(*ptr_).0)
}

fn hand_out(cube: RasterCube, out: *mut *mut PsCube) -> PsStatus {
    if out.is_null() {
        set_error("output handle pointer is NULL");
        return PsStatus::NullPointer;
    }
    unsafe { *out = Box::into_raw(Box::new(PsCube(cube))) };
    PsStatus::Ok
}

/// Builds a cube from planar samples (band-contiguous, row-major pixels).
/// `data` must hold `height * width * bands` doubles.
///
/// # Safety
/// `data` must point to at least `height * width * bands` readable doubles
/// and `out` must be a valid destination for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_new(
    height: usize,
    width: usize,
    bands: usize,
    data: *const f64,
    out: *mut *mut PsCube,
) -> PsStatus {
    guard(|| {
        if data.is_null() {
            set_error("data pointer is NULL");
            return PsStatus::NullPointer;
        }
        let len = height.saturating_mul(width).saturating_mul(bands);
        let slice = std::slice::from_raw_parts(data, len);
        match RasterCube::from_planar(height, width, bands, slice.to_vec()) {
            Ok(c) => hand_out(c, out),
            Err(e) => fail(e),
        }
    })
}

/// Releases a cube handle. NULL is a no-op.
///
/// # Safety
/// `cube` must be a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_free(cube: *mut PsCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Reads a sidecar raster from disk.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid destination.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_read(path: *const c_char, out: *mut *mut PsCube) -> PsStatus {
    guard(|| {
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match io::read_raster(&path) {
            Ok(c) => hand_out(c, out),
            Err(e) => fail(e),
        }
    })
}

/// Writes a cube to disk. `dtype` is one of `f32`, `f64`, `u8`, `u16`;
/// `clamp` saturates integer overflow instead of failing.
///
/// # Safety
/// `cube` must be a live handle, `path`/`dtype` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_write(
    cube: *const PsCube,
    path: *const c_char,
    dtype: *const c_char,
    clamp: bool,
) -> PsStatus {
    guard(|| {
        let c = match cube_ref(cube) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        if dtype.is_null() {
            set_error("dtype pointer is NULL");
            return PsStatus::NullPointer;
        }
        let dtype = match CStr::from_ptr(dtype).to_str() {
            Ok(s) => match Dtype::parse(s, &path) {
                Ok(d) => d,
                Err(e) => return fail(e),
            },
            Err(_) => {
                set_error("dtype is not valid UTF-8");
                return PsStatus::Usage;
            }
        };
        match io::write_raster(c, &path, dtype, clamp) {
            Ok(()) => PsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `cube` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_height(cube: *const PsCube) -> usize {
    cube_ref(cube).map(|c| c.height()).unwrap_or(0)
}

/// # Safety
/// `cube` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_width(cube: *const PsCube) -> usize {
    cube_ref(cube).map(|c| c.width()).unwrap_or(0)
}

/// # Safety
/// `cube` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_bands(cube: *const PsCube) -> usize {
    cube_ref(cube).map(|c| c.bands()).unwrap_or(0)
}

/// Copies the planar samples into `out`, which must hold `len` doubles with
/// `len = height * width * bands`.
///
/// # Safety
/// `cube` must be a live handle and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_cube_copy_data(
    cube: *const PsCube,
    out: *mut f64,
    len: usize,
) -> PsStatus {
    guard(|| {
        let c = match cube_ref(cube) {
            Ok(c) => c,
            Err(s) => return s,
        };
        if out.is_null() {
            set_error("output pointer is NULL");
            return PsStatus::NullPointer;
        }
        let planar = c.as_planar();
        if len != planar.len() {
            set_error(&format!(
                "buffer holds {len} samples, cube has {}",
                planar.len()
            ));
            return PsStatus::Usage;
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(planar);
        PsStatus::Ok
    })
}

/// Degrades a reference cube into an equal-weight pan and a block-mean ms
/// at the given scale.
///
/// # Safety
/// `truth` must be a live handle; `out_pan`/`out_ms` valid destinations.
#[no_mangle]
pub unsafe extern "C" fn ps_synth_pair(
    truth: *const PsCube,
    scale: usize,
    out_pan: *mut *mut PsCube,
    out_ms: *mut *mut PsCube,
) -> PsStatus {
    guard(|| {
        let cube = match cube_ref(truth) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let spec = SynthSpec {
            scale,
            ..Default::default()
        };
        match synth::generate_pair(cube, &spec) {
            Ok((pan, ms, _)) => {
                let s = hand_out(pan, out_pan);
                if s != PsStatus::Ok {
                    return s;
                }
                hand_out(ms, out_ms)
            }
            Err(e) => fail(e),
        }
    })
}

struct Pipeline {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    b: SpatialOperator,
    v: SpatialOperator,
    response: SpectralResponse,
}

fn build_pipeline(
    pan: &RasterCube,
    ms: &RasterCube,
    dse: bool,
    upsampler: PsUpsampler,
) -> Result<Pipeline, Error> {
    let pair = CubePair::infer(pan.clone(), ms.clone())?;
    let fine = (pair.pan.height(), pair.pan.width());
    let coarse = (pair.ms.height(), pair.ms.width());
    let y = pair.pan.to_matrix();
    let z = pair.ms.to_matrix();
    let bhat = SpatialOperator::block_mean_down(pair.scale, fine)?;
    let v = match upsampler {
        PsUpsampler::Replicate => UpsamplerKind::Replicate,
        PsUpsampler::Bilinear => UpsamplerKind::Bilinear,
    }
    .build(pair.scale, coarse)?;
    let (z_pinv, z_full_rank) = linalg::pinv_auto(&z)?;
    let a = estimation::estimate_a_with_pinv(&y, &z_pinv, &bhat)?;
    let (b, source) = if dse {
        (
            sampling::dse_wrap_with_pinv(bhat, z.clone(), z_pinv, z_full_rank)?,
            ResponseSource::EstimatedDse,
        )
    } else {
        (bhat, ResponseSource::EstimatedLsq)
    };
    Ok(Pipeline {
        y,
        z,
        b,
        v,
        response: SpectralResponse { a, source },
    })
}

fn run_method(p: &Pipeline, method: PsMethod, prior: &PriorBox) -> Result<FusionResult, Error> {
    match method {
        PsMethod::Pcs | PsMethod::Pmra => {
            let a_col = DVector::from_column_slice(p.response.a.as_slice());
            let inverse = prior::solve_prior_inverse(&a_col, prior)?;
            if method == PsMethod::Pcs {
                fusion::fuse_pcs(&p.y, &p.z, &p.v, &p.response, &inverse.m)
            } else {
                fusion::fuse_pmra(&p.y, &p.z, &p.b, &p.v, &p.response, &inverse.m)
            }
        }
        PsMethod::Gsa => fusion::fuse_gsa(&p.y, &p.z, &p.v, &p.response),
        PsMethod::MtfGlpCbd => fusion::fuse_mtf_glp_cbd(&p.y, &p.z, &p.b, &p.v, &p.response),
    }
}

fn score(
    p: &Pipeline,
    result: &FusionResult,
    truth: Option<&RasterCube>,
) -> Result<PsMetricReport, Error> {
    let x_rec = result.matrix();
    let a_inv = DMatrix::from_row_slice(1, result.a_inv_used.len(), result.a_inv_used.as_slice());
    let rmse = truth
        .map(|t| metrics::rmse(&t.to_matrix(), &x_rec))
        .transpose()?;
    Ok(PsMetricReport {
        consistent_rmse: metrics::consistent_rmse(&p.z, &p.response.a, &p.b, &p.y)?,
        spatial_rmse: metrics::spatial_rmse(&x_rec, &p.response.a, &p.y)?,
        spectral_rmse: metrics::spectral_rmse(&p.b, &x_rec, &p.z)?,
        inverse_ability: metrics::inverse_ability(&a_inv, &p.response.a)?,
        rmse: rmse.unwrap_or(f64::NAN),
        has_rmse: rmse.is_some(),
    })
}

/// Fuses a (pan, ms) pair. `report` may be NULL when only the cube is
/// wanted; `out_fused` may be NULL when only the metrics are wanted.
///
/// # Safety
/// `pan`/`ms` must be live handles; non-NULL out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_fuse(
    pan: *const PsCube,
    ms: *const PsCube,
    method: PsMethod,
    dse: bool,
    upsampler: PsUpsampler,
    box_lower: f64,
    box_upper: f64,
    out_fused: *mut *mut PsCube,
    report: *mut PsMetricReport,
) -> PsStatus {
    guard(|| {
        let pan = match cube_ref(pan) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let ms = match cube_ref(ms) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let prior = match PriorBox::new(box_lower, box_upper) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let pipeline = match build_pipeline(pan, ms, dse, upsampler) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let result = match run_method(&pipeline, method, &prior) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        if !report.is_null() {
            match score(&pipeline, &result, None) {
                Ok(r) => *report = r,
                Err(e) => return fail(e),
            }
        }
        if !out_fused.is_null() {
            return hand_out(result.cube, out_fused);
        }
        PsStatus::Ok
    })
}

/// Estimates the spectral response; writes one gain per ms band into `out`,
/// which must hold exactly `bands(ms)` doubles.
///
/// # Safety
/// `pan`/`ms` must be live handles and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_estimate_response(
    pan: *const PsCube,
    ms: *const PsCube,
    dse: bool,
    out: *mut f64,
    len: usize,
) -> PsStatus {
    guard(|| {
        let pan = match cube_ref(pan) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let ms = match cube_ref(ms) {
            Ok(c) => c,
            Err(s) => return s,
        };
        if out.is_null() {
            set_error("output pointer is NULL");
            return PsStatus::NullPointer;
        }
        if len != ms.bands() {
            set_error(&format!(
                "buffer holds {len} gains, ms has {} bands",
                ms.bands()
            ));
            return PsStatus::Usage;
        }
        match build_pipeline(pan, ms, dse, PsUpsampler::Replicate) {
            Ok(p) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(p.response.a.as_slice());
                PsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the full method-by-enhancement grid; writes [`PS_ABLATION_ROWS`]
/// rows into `rows`. `truth` may be NULL (rmse columns flagged absent).
///
/// # Safety
/// `pan`/`ms` (and `truth` when non-NULL) must be live handles; `rows` must
/// be writable for `rows_len` entries.
#[no_mangle]
pub unsafe extern "C" fn ps_ablate(
    pan: *const PsCube,
    ms: *const PsCube,
    truth: *const PsCube,
    upsampler: PsUpsampler,
    box_lower: f64,
    box_upper: f64,
    rows: *mut PsAblationRow,
    rows_len: usize,
) -> PsStatus {
    guard(|| {
        let pan = match cube_ref(pan) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let ms = match cube_ref(ms) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let truth = if truth.is_null() {
            None
        } else {
            match cube_ref(truth) {
                Ok(c) => Some(c),
                Err(s) => return s,
            }
        };
        if rows.is_null() {
            set_error("rows pointer is NULL");
            return PsStatus::NullPointer;
        }
        if rows_len != PS_ABLATION_ROWS {
            set_error(&format!(
                "rows buffer holds {rows_len} entries, need {PS_ABLATION_ROWS}"
            ));
            return PsStatus::Usage;
        }
        let prior = match PriorBox::new(box_lower, box_upper) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let pair = match CubePair::infer(pan.clone(), ms.clone()) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let cfg = AblationConfig {
            prior,
            upsampler: match upsampler {
                PsUpsampler::Replicate => UpsamplerKind::Replicate,
                PsUpsampler::Bilinear => UpsamplerKind::Bilinear,
            },
        };
        let grid = match synth::run_ablation(&pair, &cfg, truth) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        let out = std::slice::from_raw_parts_mut(rows, rows_len);
        for (slot, row) in out.iter_mut().zip(&grid) {
            *slot = PsAblationRow {
                method: match row.method {
                    FusionMethod::Pcs => PsMethod::Pcs,
                    FusionMethod::Pmra => PsMethod::Pmra,
                    FusionMethod::Gsa => PsMethod::Gsa,
                    FusionMethod::MtfGlpCbd => PsMethod::MtfGlpCbd,
                },
                dse: row.dse,
                metrics: PsMetricReport {
                    consistent_rmse: row.metrics.consistent_rmse,
                    spatial_rmse: row.metrics.spatial_rmse,
                    spectral_rmse: row.metrics.spectral_rmse,
                    inverse_ability: row.metrics.inverse_ability,
                    rmse: row.metrics.rmse.unwrap_or(f64::NAN),
                    has_rmse: row.metrics.rmse.is_some(),
                },
            };
        }
        PsStatus::Ok
    })
}
