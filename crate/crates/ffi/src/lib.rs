//! C interface to `shd-lra`.
//!
//! Every function returns a [`ShdStatus`]; on failure the message can be
//! fetched with [`shd_last_error`] on the same thread. Objects are opaque and
//! must be released with their `_free` function. Directions are in degrees
//! (colatitude `theta`, azimuth `phi`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;
use shd_lra::encoder::CoefficientMatrix;
use shd_lra::experiments::angular_error;
use shd_lra::mdp::{mdp, GridSpec, MdpDictionary};
use shd_lra::pipeline::{AnalysisSettings, Localizer, Method};
use shd_lra::stft::MultichannelSignal;
use shd_lra::{ArrayGeometry, Convention, Direction, Error, ErrorClass};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShdStatus {
    Ok = 0,
    /// Null pointer, zero size or too small output buffer.
    InvalidArgument = 1,
    Config = 2,
    Io = 3,
    Numeric = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShdMethod {
    Lra = 0,
    Music = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShdComplex {
    pub re: f64,
    pub im: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShdDoa {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub residual: f64,
    pub confidence: f64,
    pub block_index: u64,
    pub dict_index: u64,
    pub method: u32,
}

pub struct ShdDictionary {
    inner: MdpDictionary,
}

pub struct ShdGeometry {
    inner: ArrayGeometry,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(ShdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Config => ShdStatus::Config,
            ErrorClass::Io => ShdStatus::Io,
            ErrorClass::Numeric => ShdStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(ShdStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ShdStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (ShdStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (ShdStatus::Panic, "internal panic".to_string()),
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(invalid("path is null"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

fn direction(theta_deg: f64, phi_deg: f64) -> Result<Direction, Failure> {
    Direction::from_degrees(theta_deg, phi_deg).map_err(|e| Failure(ShdStatus::Config, e.to_string()))
}

fn doa_out(method: Method, e: &shd_lra::DoaEstimate) -> ShdDoa {
    ShdDoa {
        theta_deg: e.direction.theta_deg(),
        phi_deg: e.direction.phi_deg(),
        residual: e.residual,
        confidence: e.confidence,
        block_index: e.block_index as u64,
        dict_index: e.dict_index as u64,
        method: match method {
            Method::ShdLra => ShdMethod::Lra as u32,
            Method::ShdMusic => ShdMethod::Music as u32,
        },
    }
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn shd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds the dictionary of patterns on an `elev_step_deg` x `azim_step_deg` grid.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a new dictionary.
#[no_mangle]
pub unsafe extern "C" fn shd_dictionary_build(
    elev_step_deg: f64,
    azim_step_deg: f64,
    order: u32,
    out: *mut *mut ShdDictionary,
) -> ShdStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let grid = GridSpec::new(elev_step_deg, azim_step_deg)?;
        let inner = MdpDictionary::build(grid, order as usize, Convention::default())?;
        *out = Box::into_raw(Box::new(ShdDictionary { inner }));
        Ok(())
    })
}

/// Loads a dictionary cache written by `shd-lra dict`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shd_dictionary_load(path: *const c_char, out: *mut *mut ShdDictionary) -> ShdStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let inner = MdpDictionary::load(path_arg(path)?, Convention::default())?;
        *out = Box::into_raw(Box::new(ShdDictionary { inner }));
        Ok(())
    })
}

/// # Safety
/// `dict` must be null or come from a dictionary constructor, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shd_dictionary_free(dict: *mut ShdDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `dict` must be null or a live dictionary.
#[no_mangle]
pub unsafe extern "C" fn shd_dictionary_len(dict: *const ShdDictionary) -> usize {
    dict.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dict` must be null or a live dictionary.
#[no_mangle]
pub unsafe extern "C" fn shd_dictionary_order(dict: *const ShdDictionary) -> u32 {
    dict.as_ref().map_or(0, |d| d.inner.order() as u32)
}

/// Direction of entry `index`.
///
/// # Safety
/// `dict` must be a live dictionary; `theta_deg` and `phi_deg` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn shd_dictionary_direction(
    dict: *const ShdDictionary,
    index: usize,
    theta_deg: *mut f64,
    phi_deg: *mut f64,
) -> ShdStatus {
    guard(|| {
        let d = dict.as_ref().ok_or_else(|| invalid("dictionary is null"))?;
        if theta_deg.is_null() || phi_deg.is_null() {
            return Err(invalid("output pointer is null"));
        }
        if index >= d.inner.len() {
            return Err(invalid("index out of range"));
        }
        let dir = d.inner.direction(index);
        *theta_deg = dir.theta_deg();
        *phi_deg = dir.phi_deg();
        Ok(())
    })
}

/// The bundled 32-capsule rigid array.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shd_geometry_rigid32(out: *mut *mut ShdGeometry) -> ShdStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = Box::into_raw(Box::new(ShdGeometry { inner: ArrayGeometry::rigid32() }));
        Ok(())
    })
}

/// Loads a geometry TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shd_geometry_load(path: *const c_char, out: *mut *mut ShdGeometry) -> ShdStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let inner = ArrayGeometry::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(ShdGeometry { inner }));
        Ok(())
    })
}

/// # Safety
/// `geom` must be null or come from a geometry constructor, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shd_geometry_free(geom: *mut ShdGeometry) {
    if !geom.is_null() {
        drop(Box::from_raw(geom));
    }
}

/// # Safety
/// `geom` must be null or a live geometry.
#[no_mangle]
pub unsafe extern "C" fn shd_geometry_capsule_count(geom: *const ShdGeometry) -> usize {
    geom.as_ref().map_or(0, |g| g.inner.capsule_count())
}

/// Writes the `(order+1)^2` pattern coefficients for a direction into `out`.
///
/// # Safety
/// `out` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn shd_mdp(theta_deg: f64, phi_deg: f64, order: u32, out: *mut ShdComplex, len: usize) -> ShdStatus {
    guard(|| {
        let need = (order as usize + 1).pow(2);
        if out.is_null() || len < need {
            return Err(invalid("output buffer is null or shorter than (order+1)^2"));
        }
        if order as usize > shd_lra::mdp::MAX_ORDER {
            return Err(Failure(ShdStatus::Config, format!("order {order} is not supported")));
        }
        let pattern = mdp(direction(theta_deg, phi_deg)?, order as usize);
        for (i, z) in pattern.coeffs().iter().enumerate() {
            *out.add(i) = ShdComplex { re: z.re, im: z.im };
        }
        Ok(())
    })
}

/// Localizes one coefficient matrix of `rows = (order+1)^2` rows and `cols`
/// columns, stored column by column.
///
/// # Safety
/// `dict` must be live, `entries` must hold `rows * cols` elements and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn shd_localize_block(
    dict: *const ShdDictionary,
    entries: *const ShdComplex,
    rows: usize,
    cols: usize,
    out: *mut ShdDoa,
) -> ShdStatus {
    guard(|| {
        let d = dict.as_ref().ok_or_else(|| invalid("dictionary is null"))?;
        if entries.is_null() || out.is_null() || rows == 0 || cols == 0 {
            return Err(invalid("null buffer or empty matrix"));
        }
        if rows != d.inner.coeff_count() {
            return Err(Failure(
                ShdStatus::Config,
                format!("{rows} rows do not match dictionary order {}", d.inner.order()),
            ));
        }
        let data = std::slice::from_raw_parts(entries, rows * cols);
        let m = nalgebra::DMatrix::from_iterator(rows, cols, data.iter().map(|z| Complex64::new(z.re, z.im)));
        let a = CoefficientMatrix::new(m, d.inner.order())?;
        let est = shd_lra::localize_block(&a, &d.inner)?;
        *out = doa_out(Method::ShdLra, &est);
        Ok(())
    })
}

/// Runs the full pipeline (default analysis settings) on a signal stored
/// channel by channel (`channels * len` samples). Writes up to `capacity`
/// estimates, ordered by block, and the number produced to `written`.
/// `method` is a [`ShdMethod`] value.
///
/// # Safety
/// Handles must be live; `samples` must hold `channels * len` values; `out`
/// must hold `capacity` elements; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn shd_localize_signal(
    geom: *const ShdGeometry,
    dict: *const ShdDictionary,
    samples: *const f64,
    channels: usize,
    len: usize,
    sample_rate_hz: f64,
    method: u32,
    out: *mut ShdDoa,
    capacity: usize,
    written: *mut usize,
) -> ShdStatus {
    guard(|| {
        let g = geom.as_ref().ok_or_else(|| invalid("geometry is null"))?;
        let d = dict.as_ref().ok_or_else(|| invalid("dictionary is null"))?;
        if samples.is_null() || written.is_null() || channels == 0 || len == 0 {
            return Err(invalid("null buffer or empty signal"));
        }
        let data = std::slice::from_raw_parts(samples, channels * len);
        let arr = ndarray::Array2::from_shape_vec((channels, len), data.to_vec())
            .map_err(|e| invalid(&e.to_string()))?;
        let sig = MultichannelSignal::new(arr, sample_rate_hz)?;
        let settings = AnalysisSettings {
            encoder: shd_lra::EncoderSettings { order: d.inner.order(), ..Default::default() },
            ..Default::default()
        };
        let loc = Localizer::new(g.inner.clone(), d.inner.clone(), settings)?;
        let m = match method {
            x if x == ShdMethod::Lra as u32 => Method::ShdLra,
            x if x == ShdMethod::Music as u32 => Method::ShdMusic,
            other => return Err(Failure(ShdStatus::Config, format!("unknown method {other}"))),
        };
        let rows = loc.localize_signal(&sig, &[m])?;
        *written = rows.len();
        if rows.len() > capacity || (out.is_null() && !rows.is_empty()) {
            return Err(invalid("output buffer too small; see written"));
        }
        for (i, r) in rows.iter().enumerate() {
            *out.add(i) = doa_out(r.method, &r.estimate);
        }
        Ok(())
    })
}

/// Great-circle angle between two directions in degrees, or NaN for an
/// invalid direction.
#[no_mangle]
pub extern "C" fn shd_angular_error_deg(theta1_deg: f64, phi1_deg: f64, theta2_deg: f64, phi2_deg: f64) -> f64 {
    match (Direction::from_degrees(theta1_deg, phi1_deg), Direction::from_degrees(theta2_deg, phi2_deg)) {
        (Ok(a), Ok(b)) => angular_error(a, b),
        _ => f64::NAN,
    }
}
