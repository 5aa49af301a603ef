//! C interface for loading relighting models and rendering them.
//!
//! Every function returns an [`RtiStatus`]; on failure a message is kept per
//! thread and can be read with [`rti_last_error_message`]. Models are opaque
//! handles released with [`rti_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rti_core::relight::RelightModel;
use rti_core::{LightDirection, RtiError};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtiStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Reading the file failed.
    Io = 2,
    /// The bytes are not a valid model.
    Format = 3,
    /// An argument is out of range (light outside the unit disc, pixel
    /// outside the image, non-UTF-8 path).
    InvalidArgument = 4,
    /// The output buffer is smaller than required.
    BufferTooSmall = 5,
    /// An internal error; the library state is unchanged.
    Internal = 6,
}

/// Loaded relighting model.
pub struct RtiModel {
    inner: RelightModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: RtiStatus, msg: impl Into<String>) -> RtiStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn status_of(e: &RtiError) -> RtiStatus {
    match e {
        RtiError::Io(_) => RtiStatus::Io,
        RtiError::Format { .. } => RtiStatus::Format,
        RtiError::InvalidArgument(_) => RtiStatus::InvalidArgument,
        RtiError::Stage { source, .. } => status_of(source),
        _ => RtiStatus::Internal,
    }
}

fn from_error(e: RtiError) -> RtiStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning panics into [`RtiStatus::Internal`].
fn guard(f: impl FnOnce() -> RtiStatus) -> RtiStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(RtiStatus::Internal, "internal panic"))
}

fn store(model: RelightModel, out: *mut *mut RtiModel) -> RtiStatus {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(RtiModel { inner: model })) };
    RtiStatus::Ok
}

/// Loads a model file. On success `*out` receives a handle owned by the
/// caller.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rti_model_load(path: *const c_char, out: *mut *mut RtiModel) -> RtiStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(RtiStatus::NullPointer, "path and out must not be null");
        }
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail(RtiStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match RelightModel::load(path) {
            Ok(m) => store(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Parses a model from memory. On success `*out` receives a handle owned by
/// the caller.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rti_model_from_bytes(data: *const u8, len: usize, out: *mut *mut RtiModel) -> RtiStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(RtiStatus::NullPointer, "data and out must not be null");
        }
        let bytes = unsafe { std::slice::from_raw_parts(data, len) };
        match RelightModel::from_bytes(bytes) {
            Ok(m) => store(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rti_model_free(model: *mut RtiModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Image size, number of PCA bases and number of Fourier frequencies. Any
/// output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn rti_model_dims(
    model: *const RtiModel,
    width: *mut u32,
    height: *mut u32,
    bases: *mut u32,
    frequencies: *mut u32,
) -> RtiStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(RtiStatus::NullPointer, "model must not be null");
        };
        let m = &m.inner;
        for (ptr, value) in [
            (width, m.width()),
            (height, m.height()),
            (bases, m.bases()),
            (frequencies, m.frequencies()),
        ] {
            if !ptr.is_null() {
                unsafe { *ptr = value as u32 };
            }
        }
        RtiStatus::Ok
    })
}

fn light(lu: f64, lv: f64) -> Result<LightDirection, RtiStatus> {
    LightDirection::from_uv(lu, lv).map_err(from_error)
}

/// Renders the whole image for light `(lu, lv)` as interleaved 8-bit RGB,
/// row-major. `len` must be at least `3 * width * height`.
///
/// # Safety
/// `model` must be a live handle and `rgb` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rti_model_relight(
    model: *const RtiModel,
    lu: f64,
    lv: f64,
    rgb: *mut u8,
    len: usize,
) -> RtiStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(RtiStatus::NullPointer, "model must not be null");
        };
        if rgb.is_null() {
            return fail(RtiStatus::NullPointer, "rgb must not be null");
        }
        let need = 3 * m.inner.width() * m.inner.height();
        if len < need {
            return fail(RtiStatus::BufferTooSmall, format!("need {need} bytes, got {len}"));
        }
        let l = match light(lu, lv) {
            Ok(l) => l,
            Err(s) => return s,
        };
        let img = m.inner.relight_image(&l);
        let out = unsafe { std::slice::from_raw_parts_mut(rgb, need) };
        out.copy_from_slice(img.data());
        RtiStatus::Ok
    })
}

/// Relit colour of one pixel as three floats in `[0, 1]`.
///
/// # Safety
/// `model` must be a live handle and `rgb` must point to 3 writable floats.
#[no_mangle]
pub unsafe extern "C" fn rti_model_relight_pixel(
    model: *const RtiModel,
    x: u32,
    y: u32,
    lu: f64,
    lv: f64,
    rgb: *mut f32,
) -> RtiStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(RtiStatus::NullPointer, "model must not be null");
        };
        if rgb.is_null() {
            return fail(RtiStatus::NullPointer, "rgb must not be null");
        }
        let l = match light(lu, lv) {
            Ok(l) => l,
            Err(s) => return s,
        };
        match m.inner.relight_pixel(x as usize, y as usize, &l) {
            Ok(c) => {
                unsafe { std::slice::from_raw_parts_mut(rgb, 3) }.copy_from_slice(&c);
                RtiStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// plus one. Passing a null `buf` only queries the length.
///
/// # Safety
/// A non-null `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rti_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            let out = unsafe { std::slice::from_raw_parts_mut(buf as *mut u8, len) };
            out[..n].copy_from_slice(&msg.as_bytes()[..n]);
            out[n] = 0;
        }
        msg.len() + 1
    })
}

/// Version of the model format this library reads and writes.
#[no_mangle]
pub extern "C" fn rti_format_version() -> u16 {
    rti_core::relight::RTIM_VERSION
}
