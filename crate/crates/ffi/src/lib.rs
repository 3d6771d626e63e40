//! C interface to the hydrowatch pipeline.
//!
//! Every function returns an [`HwStatus`]. On failure the message is kept per
//! thread and can be read with [`hw_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function; passing a null handle to
//! a `_free` function is a no-op.
//!
//! Buffers are caller-owned. Functions that fill a buffer take its capacity
//! and report the length they need through an out-parameter, so a caller can
//! ask with a null buffer first.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hydrowatch::dsp::{AudioSegment, MelSpectrogram, Preprocessor};
use hydrowatch::localization::{
    solve_position, ArrayGeometry, Point, SearchRange, TdoaMeasurement,
};
use hydrowatch::nnet::{load_autoencoder, load_classifier, Autoencoder, Mlp};
use hydrowatch::risk::{assess_distance, ClassProbabilities, RiskLevel, RiskPolicy};
use hydrowatch::sim::EventClass;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Io = 4,
    Model = 5,
    Localization = 6,
    Risk = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HwRiskLevel {
    Normal = 0,
    Review = 1,
    Alert = 2,
    Alarm = 3,
}

impl From<RiskLevel> for HwRiskLevel {
    fn from(l: RiskLevel) -> Self {
        match l {
            RiskLevel::Normal => HwRiskLevel::Normal,
            RiskLevel::Review => HwRiskLevel::Review,
            RiskLevel::Alert => HwRiskLevel::Alert,
            RiskLevel::Alarm => HwRiskLevel::Alarm,
        }
    }
}

/// Source position estimate.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HwLocation {
    pub x: f64,
    pub y: f64,
    pub residual: f64,
    /// Index of the reference hydrophone.
    pub reference: u32,
}

pub struct HwPreprocessor(Preprocessor);
pub struct HwAutoencoder(Autoencoder);
pub struct HwClassifier(Mlp);
pub struct HwPolicy(RiskPolicy);

struct Failure(HwStatus, String);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HwStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure(HwStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            HwStatus::Ok
        }
        Err(Failure(code, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            code
        }
    }
}

fn fail<E: std::fmt::Display>(code: HwStatus) -> impl FnOnce(E) -> Failure {
    move |e| Failure(code, e.to_string())
}

fn null(what: &str) -> Failure {
    Failure(HwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(fail(HwStatus::InvalidArgument))?;
    Ok(PathBuf::from(s))
}

/// Copies `src` into a caller buffer, or reports the needed length.
unsafe fn fill(src: &[f64], dst: *mut f64, cap: usize, needed: *mut usize) -> Result<(), Failure> {
    if !needed.is_null() {
        *needed = src.len();
    }
    if dst.is_null() || cap < src.len() {
        return Err(Failure(
            HwStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn mel_from(values: *const f64, bands: usize, frames: usize) -> Result<MelSpectrogram, Failure> {
    let v = slice(values, bands * frames, "mel")?;
    MelSpectrogram::from_frames(v.to_vec(), bands, frames).map_err(fail(HwStatus::InvalidArgument))
}

/// Length in bytes of the last error message on this thread, excluding the terminator.
#[no_mangle]
pub extern "C" fn hw_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message, NUL-terminated and truncated to `cap`.
/// Returns the number of bytes written, excluding the terminator.
#[no_mangle]
pub unsafe extern "C" fn hw_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    if buf.is_null() || cap == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len().min(cap - 1);
        ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn hw_preprocessor_new(handle: *mut *mut HwPreprocessor) -> HwStatus {
    guard(|| {
        *out(handle, "handle")? = Box::into_raw(Box::new(HwPreprocessor(Preprocessor::default())));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_preprocessor_free(handle: *mut HwPreprocessor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Mel matrix of one mono segment, band-major within each frame
/// (`values[frame * bands + band]`).
#[no_mangle]
pub unsafe extern "C" fn hw_preprocess(
    handle: *const HwPreprocessor,
    samples: *const f64,
    n_samples: usize,
    sample_rate: u32,
    mel: *mut f64,
    capacity: usize,
    needed: *mut usize,
    bands: *mut usize,
    frames: *mut usize,
) -> HwStatus {
    guard(|| {
        let pre = handle.as_ref().ok_or_else(|| null("handle"))?;
        let x = slice(samples, n_samples, "samples")?;
        let seg = AudioSegment::new(x.to_vec(), sample_rate, "ffi");
        let m = pre.0.process(&seg).map_err(fail(HwStatus::InvalidArgument))?;
        if !bands.is_null() {
            *bands = m.bands();
        }
        if !frames.is_null() {
            *frames = m.frames();
        }
        fill(m.values(), mel, capacity, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_autoencoder_load(model_path: *const c_char, handle: *mut *mut HwAutoencoder) -> HwStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        let ae = load_autoencoder(path(model_path)?).map_err(fail(HwStatus::Model))?;
        *slot = Box::into_raw(Box::new(HwAutoencoder(ae)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_autoencoder_free(handle: *mut HwAutoencoder) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[no_mangle]
pub unsafe extern "C" fn hw_autoencoder_latent_size(handle: *const HwAutoencoder, size: *mut usize) -> HwStatus {
    guard(|| {
        let ae = handle.as_ref().ok_or_else(|| null("handle"))?;
        *out(size, "size")? = ae.0.config.latent_size();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_autoencoder_encode(
    handle: *const HwAutoencoder,
    mel: *const f64,
    bands: usize,
    frames: usize,
    latent: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> HwStatus {
    guard(|| {
        let ae = handle.as_ref().ok_or_else(|| null("handle"))?;
        let m = mel_from(mel, bands, frames)?;
        let z = ae.0.encode(&m).map_err(fail(HwStatus::InvalidArgument))?;
        fill(z.as_slice(), latent, capacity, needed)
    })
}

/// Reconstruction RMSE, the anomaly score.
#[no_mangle]
pub unsafe extern "C" fn hw_autoencoder_score(
    handle: *const HwAutoencoder,
    mel: *const f64,
    bands: usize,
    frames: usize,
    score: *mut f64,
) -> HwStatus {
    guard(|| {
        let ae = handle.as_ref().ok_or_else(|| null("handle"))?;
        let slot = out(score, "score")?;
        let m = mel_from(mel, bands, frames)?;
        *slot = ae.0.reconstruction_error(&m).map_err(fail(HwStatus::InvalidArgument))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_classifier_load(model_path: *const c_char, handle: *mut *mut HwClassifier) -> HwStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        let m = load_classifier(path(model_path)?).map_err(fail(HwStatus::Model))?;
        *slot = Box::into_raw(Box::new(HwClassifier(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_classifier_free(handle: *mut HwClassifier) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[no_mangle]
pub unsafe extern "C" fn hw_classifier_predict(
    handle: *const HwClassifier,
    latent: *const f64,
    n: usize,
    probs: *mut f64,
    capacity: usize,
    needed: *mut usize,
) -> HwStatus {
    guard(|| {
        let mlp = handle.as_ref().ok_or_else(|| null("handle"))?;
        let z = slice(latent, n, "latent")?;
        let p = mlp.0.predict(z).map_err(fail(HwStatus::InvalidArgument))?;
        fill(&p, probs, capacity, needed)
    })
}

/// Grid search for the source of a delay measurement.
///
/// `positions` holds `x, y` pairs for `n` hydrophones on the wall line;
/// pass null to use the default three-hydrophone array (then `n` must be 3).
/// `delays_s[i]` is the arrival delay of hydrophone `i` after the reference.
/// `step` of 0 picks the default grid.
#[no_mangle]
pub unsafe extern "C" fn hw_localize(
    positions: *const f64,
    n: usize,
    speed_of_sound: f64,
    reference: u32,
    delays_s: *const f64,
    half_width: f64,
    step: f64,
    location: *mut HwLocation,
) -> HwStatus {
    guard(|| {
        let slot = out(location, "location")?;
        let mut geometry = if positions.is_null() {
            ArrayGeometry::default()
        } else {
            let xy = slice(positions, 2 * n, "positions")?;
            let points: Vec<Point> = xy.chunks(2).map(|p| Point::new(p[0], p[1])).collect();
            ArrayGeometry::new(&points, hydrowatch::localization::DEFAULT_SPEED_OF_SOUND)
                .map_err(fail(HwStatus::InvalidArgument))?
        };
        if speed_of_sound > 0.0 {
            geometry = geometry.with_speed(speed_of_sound);
            geometry.validate().map_err(fail(HwStatus::InvalidArgument))?;
        }
        if geometry.len() != n {
            return Err(Failure(
                HwStatus::InvalidArgument,
                format!("{n} delays for {} hydrophones", geometry.len()),
            ));
        }
        let tdoa = TdoaMeasurement {
            reference: reference as usize,
            delays: slice(delays_s, n, "delays")?.to_vec(),
        };
        let mut search = if half_width > 0.0 {
            let r = tdoa.reference.min(n.saturating_sub(1));
            SearchRange::around(geometry.position(r), half_width)
        } else {
            SearchRange::for_measurement(&tdoa, &geometry)
        };
        if step > 0.0 {
            search = search.with_step(step);
        }
        let r = solve_position(&tdoa, &geometry, &search).map_err(fail(HwStatus::Localization))?;
        *slot = HwLocation { x: r.position.x, y: r.position.y, residual: r.residual, reference };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_policy_default(handle: *mut *mut HwPolicy) -> HwStatus {
    guard(|| {
        *out(handle, "handle")? = Box::into_raw(Box::new(HwPolicy(RiskPolicy::default())));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_policy_load(policy_path: *const c_char, handle: *mut *mut HwPolicy) -> HwStatus {
    guard(|| {
        let slot = out(handle, "handle")?;
        let p = RiskPolicy::load(path(policy_path)?).map_err(fail(HwStatus::Risk))?;
        *slot = Box::into_raw(Box::new(HwPolicy(p)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hw_policy_free(handle: *mut HwPolicy) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Risk level for one observation.
///
/// `probs` holds one probability per event class in class-id order. With
/// `location` null the observation counts as not localized.
#[no_mangle]
pub unsafe extern "C" fn hw_assess(
    policy: *const HwPolicy,
    probs: *const f64,
    n_classes: usize,
    anomaly_score: f64,
    location: *const HwLocation,
    level: *mut HwRiskLevel,
) -> HwStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or_else(|| null("policy"))?;
        let slot = out(level, "level")?;
        let p = slice(probs, n_classes, "probs")?;
        if n_classes != EventClass::ALL.len() {
            return Err(Failure(
                HwStatus::InvalidArgument,
                format!("expected {} class probabilities, got {n_classes}", EventClass::ALL.len()),
            ));
        }
        let class_probs: ClassProbabilities = EventClass::names().into_iter().zip(p.iter().copied()).collect();
        let wall = location.as_ref().map(|l| l.y.abs());
        let a = assess_distance(&class_probs, anomaly_score, wall, &policy.0).map_err(fail(HwStatus::Risk))?;
        *slot = a.level.into();
        Ok(())
    })
}
