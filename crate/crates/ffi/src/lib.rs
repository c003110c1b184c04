//! C ABI over the enhancement path: open a trained checkpoint, push
//! waveforms through it, read back owned buffers. Handles are opaque,
//! every entry point returns a status code, and failure detail is kept
//! per thread for [`nitcg_last_error_message`].
//!
//! No call here unwinds across the boundary; panics are caught and
//! reported as [`NitcgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nitcg::dsp::Waveform;
use nitcg::models::{load_checkpoint, CheckpointError};
use nitcg::training::{Enhancer, TrainError};

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NitcgStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was structurally invalid (bad path encoding, empty
    /// input, sample rate mismatch, malformed checkpoint).
    InvalidArgument = 2,
    /// The checkpoint could not be read.
    IoError = 3,
    /// Enhancement produced a non-finite value.
    NumericError = 4,
    /// An internal invariant failed; the handle is still safe to close.
    Panic = 5,
}

/// A loaded enhancement model. Create with [`nitcg_enhancer_open`],
/// destroy with [`nitcg_enhancer_close`]. Not thread-safe; share one
/// handle per thread or guard it externally.
pub struct NitcgEnhancer {
    inner: Enhancer,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean: String = message.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(status: NitcgStatus, message: &str) -> NitcgStatus {
    set_error(message);
    status
}

fn status_for(err: &TrainError) -> NitcgStatus {
    match err {
        TrainError::SampleRate { .. } => NitcgStatus::InvalidArgument,
        TrainError::NonFinite { .. } => NitcgStatus::NumericError,
        TrainError::Io { .. } => NitcgStatus::IoError,
        TrainError::Checkpoint(CheckpointError::Io(_)) => NitcgStatus::IoError,
        _ => NitcgStatus::InvalidArgument,
    }
}

fn guarded(body: impl FnOnce() -> NitcgStatus) -> NitcgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NitcgStatus::Panic, &format!("internal panic: {msg}"))
        }
    }
}

/// Message for the most recent failure on the calling thread, empty if
/// none. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn nitcg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nitcg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Load a trained checkpoint from `path` and write a fresh handle to
/// `out`. On any failure `out` is left untouched.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn nitcg_enhancer_open(
    path: *const c_char,
    out: *mut *mut NitcgEnhancer,
) -> NitcgStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(NitcgStatus::NullArgument, "path and out must be non-null");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(NitcgStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let ckpt = match load_checkpoint(Path::new(path)) {
            Ok(c) => c,
            Err(CheckpointError::Io(e)) => {
                return fail(NitcgStatus::IoError, &format!("{path}: {e}"));
            }
            Err(e) => return fail(NitcgStatus::InvalidArgument, &format!("{path}: {e}")),
        };
        let enhancer = match Enhancer::from_checkpoint(&ckpt) {
            Ok(e) => e,
            Err(e) => return fail(status_for(&e), &e.to_string()),
        };
        unsafe {
            out.write(Box::into_raw(Box::new(NitcgEnhancer { inner: enhancer })));
        }
        NitcgStatus::Ok
    })
}

/// Sample rate the loaded model was trained at, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a pointer from [`nitcg_enhancer_open`].
#[no_mangle]
pub unsafe extern "C" fn nitcg_enhancer_sample_rate(handle: *const NitcgEnhancer) -> u32 {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.inner.sample_rate()
}

/// Enhance `len` samples at `sample_rate` and hand back a freshly
/// allocated buffer of the same length through `out_samples`/`out_len`.
/// The caller owns the buffer and must release it with
/// [`nitcg_buffer_free`]. On failure the output pointers are untouched.
///
/// # Safety
/// `handle` must come from [`nitcg_enhancer_open`]; `samples` must point
/// to `len` readable doubles; `out_samples` and `out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn nitcg_enhancer_enhance(
    handle: *const NitcgEnhancer,
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out_samples: *mut *mut f64,
    out_len: *mut usize,
) -> NitcgStatus {
    guarded(|| {
        if handle.is_null() || samples.is_null() || out_samples.is_null() || out_len.is_null() {
            return fail(NitcgStatus::NullArgument, "all pointer arguments must be non-null");
        }
        if len == 0 {
            return fail(NitcgStatus::InvalidArgument, "input is empty");
        }
        if sample_rate == 0 {
            return fail(NitcgStatus::InvalidArgument, "sample rate must be positive");
        }
        let enhancer = unsafe { &*handle };
        let input = unsafe { std::slice::from_raw_parts(samples, len) };
        let wave = Waveform::new(input.to_vec(), sample_rate);
        let enhanced = match enhancer.inner.enhance(&wave) {
            Ok(w) => w,
            Err(e) => return fail(status_for(&e), &e.to_string()),
        };
        let boxed = enhanced.samples.into_boxed_slice();
        let n = boxed.len();
        unsafe {
            out_samples.write(Box::into_raw(boxed) as *mut f64);
            out_len.write(n);
        }
        NitcgStatus::Ok
    })
}

/// Release a buffer returned by [`nitcg_enhancer_enhance`]. `len` must be
/// the value reported alongside the pointer. Null is a no-op.
///
/// # Safety
/// `samples` must be null or an unreleased pointer from
/// [`nitcg_enhancer_enhance`] paired with its reported length.
#[no_mangle]
pub unsafe extern "C" fn nitcg_buffer_free(samples: *mut f64, len: usize) {
    if samples.is_null() {
        return;
    }
    unsafe {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(samples, len)));
    }
}

/// Destroy a handle. Null is a no-op; the handle must not be used after.
///
/// # Safety
/// `handle` must be null or an unreleased pointer from
/// [`nitcg_enhancer_open`].
#[no_mangle]
pub unsafe extern "C" fn nitcg_enhancer_close(handle: *mut NitcgEnhancer) {
    if handle.is_null() {
        return;
    }
    unsafe {
        drop(Box::from_raw(handle));
    }
}
