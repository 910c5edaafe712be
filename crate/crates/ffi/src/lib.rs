//! C ABI over the `adios` crate.
//!
//! Handles are opaque pointers created by `*_load`/`*_from_json` and released
//! with the matching `*_free`. Every fallible call returns an [`AdiosStatus`];
//! on failure [`adios_last_error`] describes the most recent error on the
//! calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use adios::masks::{occlusion_forward, penalty_from_coverage};
use adios::numerics::Tensor;
use adios::ssl::extract_h;
use adios::trainer::{load_checkpoint, train, Checkpoint, TrainConfig};
use adios::AdiosError;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdiosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Shape = 4,
    Data = 5,
    NonFinite = 6,
    Checkpoint = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A loaded checkpoint.
pub struct AdiosModel {
    inner: Checkpoint,
}

/// A validated training configuration.
pub struct AdiosConfig {
    inner: TrainConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &AdiosError) -> AdiosStatus {
    match e {
        AdiosError::Config(_) | AdiosError::Json(_) => AdiosStatus::Config,
        AdiosError::Shape(_) => AdiosStatus::Shape,
        AdiosError::Data(_) | AdiosError::Image { .. } => AdiosStatus::Data,
        AdiosError::NonFinite(_) => AdiosStatus::NonFinite,
        AdiosError::Checkpoint(_) => AdiosStatus::Checkpoint,
        AdiosError::Io { .. } => AdiosStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (AdiosStatus, String)>) -> AdiosStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AdiosStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AdiosStatus::Panic
        }
    }
}

fn lib_err(e: AdiosError) -> (AdiosStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AdiosStatus, String)> {
    if p.is_null() {
        return Err((AdiosStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (AdiosStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const AdiosModel) -> Result<&'a AdiosModel, (AdiosStatus, String)> {
    m.as_ref().ok_or((AdiosStatus::NullPointer, "model handle is null".to_string()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn adios_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adios_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Sparsity penalty `1/sin(π·c)` with the coverage clamp.
#[no_mangle]
pub extern "C" fn adios_sparsity_penalty(coverage: f64) -> f64 {
    penalty_from_coverage(coverage)
}

/// Loads a checkpoint directory.
#[no_mangle]
pub unsafe extern "C" fn adios_model_load(path: *const c_char, out: *mut *mut AdiosModel) -> AdiosStatus {
    guard(|| {
        if out.is_null() {
            return Err((AdiosStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        let inner = load_checkpoint(&PathBuf::from(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AdiosModel { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adios_model_free(model: *mut AdiosModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the images the model expects.
#[no_mangle]
pub unsafe extern "C" fn adios_model_image_size(model: *const AdiosModel, out: *mut usize) -> AdiosStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or((AdiosStatus::NullPointer, "out is null".to_string()))? = m.inner.config.model_size();
        Ok(())
    })
}

/// Width of the backbone features.
#[no_mangle]
pub unsafe extern "C" fn adios_model_feature_dim(model: *const AdiosModel, out: *mut usize) -> AdiosStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or((AdiosStatus::NullPointer, "out is null".to_string()))? = m.inner.config.ssl.encoder.feature_dim();
        Ok(())
    })
}

/// Number of mask slots; 0 when the checkpoint has no occluder.
#[no_mangle]
pub unsafe extern "C" fn adios_model_n_masks(model: *const AdiosModel, out: *mut usize) -> AdiosStatus {
    guard(|| {
        let m = model_ref(model)?;
        let n = if m.inner.state.occluder.is_some() { m.inner.config.occluder.n_masks } else { 0 };
        *out.as_mut().ok_or((AdiosStatus::NullPointer, "out is null".to_string()))? = n;
        Ok(())
    })
}

unsafe fn images_tensor(m: &AdiosModel, images: *const f32, batch: usize) -> Result<Tensor<f32>, (AdiosStatus, String)> {
    if images.is_null() {
        return Err((AdiosStatus::NullPointer, "images is null".into()));
    }
    if batch == 0 {
        return Err((AdiosStatus::InvalidArgument, "batch must be at least 1".into()));
    }
    let s = m.inner.config.model_size();
    let n = batch * 3 * s * s;
    let data = std::slice::from_raw_parts(images, n).to_vec();
    Tensor::new(&[batch, 3, s, s], data).map_err(lib_err)
}

unsafe fn write_out(t: &Tensor<f32>, out: *mut f32, out_len: usize) -> Result<(), (AdiosStatus, String)> {
    if out.is_null() {
        return Err((AdiosStatus::NullPointer, "out is null".into()));
    }
    if out_len < t.numel() {
        return Err((AdiosStatus::BufferTooSmall, format!("output needs {} floats, buffer has {out_len}", t.numel())));
    }
    std::ptr::copy_nonoverlapping(t.data().as_ptr(), out, t.numel());
    Ok(())
}

/// Backbone features of `batch` images laid out `B×3×S×S` (row-major, values
/// in `[0,1]`, `S` = [`adios_model_image_size`]). Writes `B×d` floats.
#[no_mangle]
pub unsafe extern "C" fn adios_extract_features(
    model: *const AdiosModel,
    images: *const f32,
    batch: usize,
    out: *mut f32,
    out_len: usize,
) -> AdiosStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = images_tensor(m, images, batch)?;
        let h = extract_h(&m.inner.config.ssl.encoder, &m.inner.state.encoder, &x, 64);
        write_out(&h, out, out_len)
    })
}

/// Soft occlusion masks, `B×N×S×S`, of `batch` images laid out as for
/// [`adios_extract_features`].
#[no_mangle]
pub unsafe extern "C" fn adios_generate_masks(
    model: *const AdiosModel,
    images: *const f32,
    batch: usize,
    out: *mut f32,
    out_len: usize,
) -> AdiosStatus {
    guard(|| {
        let m = model_ref(model)?;
        let occ = m
            .inner
            .state
            .occluder
            .as_ref()
            .ok_or((AdiosStatus::InvalidArgument, "checkpoint has no occluder".to_string()))?;
        let x = images_tensor(m, images, batch)?;
        let masks = occlusion_forward(&m.inner.config.occluder, occ, &x).map_err(lib_err)?;
        write_out(&masks.as_batch().map_err(lib_err)?, out, out_len)
    })
}

/// Parses and validates a JSON configuration; "{}" gives the defaults.
#[no_mangle]
pub unsafe extern "C" fn adios_config_from_json(json: *const c_char, out: *mut *mut AdiosConfig) -> AdiosStatus {
    guard(|| {
        if out.is_null() {
            return Err((AdiosStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let text = c_str(json, "json")?;
        let inner = TrainConfig::from_json_str(text, &[]).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AdiosConfig { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adios_config_free(config: *mut AdiosConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Trains with `config`, writing metrics and checkpoints under `out_dir`.
#[no_mangle]
pub unsafe extern "C" fn adios_train(config: *const AdiosConfig, out_dir: *const c_char) -> AdiosStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or((AdiosStatus::NullPointer, "config handle is null".to_string()))?;
        let dir = PathBuf::from(c_str(out_dir, "out_dir")?);
        train(&cfg.inner, Some(&dir)).map_err(lib_err)?;
        Ok(())
    })
}
