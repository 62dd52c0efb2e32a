//! C ABI over evformer.
//!
//! Objects are opaque handles created by `evf_*_new`/`evf_*_load` and released
//! with the matching `evf_*_free`. Every fallible call returns an
//! [`EvfStatus`]; the message of the most recent failure on the calling
//! thread is available from [`evf_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use evformer::autograd::load_checkpoint_into;
use evformer::evconv::{build_count_map, event_conv_reference, Kernel};
use evformer::event::{load_stream, save_stream, Event, EventStream, Polarity, StreamFormat};
use evformer::pipeline::{Model, ModelConfig};
use evformer::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// One address event. `polarity` is 0 (OFF) or 1 (ON).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvfEvent {
    pub t: u32,
    pub x: u16,
    pub y: u16,
    pub polarity: u8,
}

/// Opaque event stream.
pub struct EvfStream(EventStream);

/// Opaque 32-bit model.
pub struct EvfModel(Model<f32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: EvfStatus, msg: impl Into<String>) -> EvfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> EvfStatus {
    let status = match &e {
        Error::Io { .. } => EvfStatus::Io,
        Error::Format { .. } => EvfStatus::Format,
        Error::Argument(_) | Error::Shape { .. } | Error::Invariant(_) | Error::Config(_) => EvfStatus::InvalidArgument,
        Error::State(_) => EvfStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), EvfStatus>) -> EvfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(EvfStatus::Internal, "internal panic"),
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, EvfStatus> {
    if p.is_null() {
        return Err(fail(EvfStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(EvfStatus::InvalidArgument, "path is not UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, EvfStatus> {
    p.as_ref().ok_or_else(|| fail(EvfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], EvfStatus> {
    if len < needed {
        return Err(fail(EvfStatus::BufferTooSmall, format!("buffer holds {len}, need {needed}")));
    }
    if p.is_null() {
        return Err(fail(EvfStatus::NullPointer, "output buffer is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), EvfStatus> {
    if out.is_null() {
        return Err(fail(EvfStatus::NullPointer, "output handle is null"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn write_len(out_len: *mut usize, n: usize) {
    if !out_len.is_null() {
        // SAFETY: checked non-null.
        unsafe { *out_len = n };
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn evf_status_string(status: EvfStatus) -> *const c_char {
    let s: &'static CStr = match status {
        EvfStatus::Ok => c"ok",
        EvfStatus::NullPointer => c"null pointer",
        EvfStatus::InvalidArgument => c"invalid argument",
        EvfStatus::Io => c"i/o error",
        EvfStatus::Format => c"format error",
        EvfStatus::BufferTooSmall => c"buffer too small",
        EvfStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn evf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a stream from `len` events. Events need not be sorted.
///
/// # Safety
/// `events` must point to `len` readable events (or be null when `len` is 0)
/// and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn evf_stream_new(
    width: u16,
    height: u16,
    duration_us: u32,
    events: *const EvfEvent,
    len: usize,
    out: *mut *mut EvfStream,
) -> EvfStatus {
    guard(|| {
        let raw: &[EvfEvent] = if len == 0 {
            &[]
        } else if events.is_null() {
            return Err(fail(EvfStatus::NullPointer, "events is null"));
        } else {
            std::slice::from_raw_parts(events, len)
        };
        let mut evs = Vec::with_capacity(len);
        for (i, e) in raw.iter().enumerate() {
            let p = Polarity::from_u8(e.polarity)
                .ok_or_else(|| fail(EvfStatus::InvalidArgument, format!("event {i} polarity {} not 0 or 1", e.polarity)))?;
            evs.push(Event::new(e.t, e.x, e.y, p));
        }
        let s = EventStream::from_unsorted(width, height, duration_us, evs).map_err(from_error)?;
        store(out, EvfStream(s))
    })
}

/// Loads an EVS1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn evf_stream_load(path: *const c_char, out: *mut *mut EvfStream) -> EvfStatus {
    guard(|| {
        let p = path_arg(path)?;
        let s = load_stream(p, StreamFormat::Evs1).map_err(from_error)?;
        store(out, EvfStream(s))
    })
}

/// Writes an EVS1 file.
///
/// # Safety
/// `stream` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evf_stream_save(stream: *const EvfStream, path: *const c_char) -> EvfStatus {
    guard(|| {
        let s = handle(stream, "stream")?;
        let p = path_arg(path)?;
        save_stream(&s.0, p, StreamFormat::Evs1).map_err(from_error)
    })
}

/// Number of events, or 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evf_stream_len(stream: *const EvfStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evf_stream_free(stream: *mut EvfStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Fills `counts` with the `2 x (H*K) x (W*K)` parameter count map. The
/// required length is written to `out_len` even when the buffer is too small.
///
/// # Safety
/// `stream` must be a live handle, `counts` must hold `capacity` values and
/// `out_len` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn evf_count_map(
    stream: *const EvfStream,
    kernel_size: usize,
    counts: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> EvfStatus {
    guard(|| {
        let s = &handle(stream, "stream")?.0;
        let cmap = build_count_map(s, kernel_size, s.height() as usize, s.width() as usize).map_err(from_error)?;
        write_len(out_len, cmap.counts().len());
        out_slice(counts, capacity, cmap.counts().len())?.copy_from_slice(cmap.counts());
        Ok(())
    })
}

/// Per-event convolution with a row-major `K x K` kernel into a
/// `2 x H x W` response.
///
/// # Safety
/// `stream` must be a live handle, `kernel` must hold `kernel_size^2` values,
/// `response` must hold `capacity` values and `out_len` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn evf_event_conv(
    stream: *const EvfStream,
    kernel: *const f32,
    kernel_size: usize,
    response: *mut f32,
    capacity: usize,
    out_len: *mut usize,
) -> EvfStatus {
    guard(|| {
        let s = &handle(stream, "stream")?.0;
        if kernel.is_null() {
            return Err(fail(EvfStatus::NullPointer, "kernel is null"));
        }
        let n = kernel_size.checked_mul(kernel_size).unwrap_or(0);
        let values = std::slice::from_raw_parts(kernel, n).to_vec();
        let k = Kernel::new(kernel_size, values).map_err(from_error)?;
        let r = event_conv_reference(s, &k);
        write_len(out_len, r.values().len());
        out_slice(response, capacity, r.values().len())?.copy_from_slice(r.values());
        Ok(())
    })
}

/// Randomly initialized model from a named preset (`smoke`, `mnist-dvs`,
/// `cifar10-dvs`, `cifar10-dvs-1block`).
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn evf_model_new(preset: *const c_char, seed: u64, out: *mut *mut EvfModel) -> EvfStatus {
    guard(|| {
        if preset.is_null() {
            return Err(fail(EvfStatus::NullPointer, "preset is null"));
        }
        let name = CStr::from_ptr(preset)
            .to_str()
            .map_err(|_| fail(EvfStatus::InvalidArgument, "preset is not UTF-8"))?;
        let cfg = ModelConfig {
            seed,
            ..ModelConfig::preset(name).map_err(from_error)?
        };
        let m = Model::new(cfg).map_err(from_error)?;
        store(out, EvfModel(m))
    })
}

/// Replaces the weights with a checkpoint written by training.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evf_model_load_checkpoint(model: *mut EvfModel, path: *const c_char) -> EvfStatus {
    guard(|| {
        let m = model
            .as_mut()
            .ok_or_else(|| fail(EvfStatus::NullPointer, "model is null"))?;
        let p = path_arg(path)?;
        load_checkpoint_into(m.0.store_mut(), p).map_err(from_error)
    })
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evf_model_num_classes(model: *const EvfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config().num_classes)
}

/// Classifies a stream: per-class firing rates into `rates` and the winning
/// class into `decision`.
///
/// # Safety
/// `model` and `stream` must be live handles, `rates` must hold `capacity`
/// values and `decision` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evf_model_forward(
    model: *const EvfModel,
    stream: *const EvfStream,
    rates: *mut f32,
    capacity: usize,
    decision: *mut usize,
) -> EvfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let s = &handle(stream, "stream")?.0;
        if decision.is_null() {
            return Err(fail(EvfStatus::NullPointer, "decision is null"));
        }
        let pred = m.forward(s).map_err(from_error)?;
        let dst = out_slice(rates, capacity, pred.rates.len())?;
        for (d, r) in dst.iter_mut().zip(&pred.rates) {
            *d = *r as f32;
        }
        *decision = pred.decision;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evf_model_free(model: *mut EvfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
