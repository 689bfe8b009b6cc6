//! C ABI over the rfxfer library.
//!
//! Every function returns an [`RfxStatus`]. On failure a description is
//! available from [`rfx_last_error`] until the next call on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::{ArrayView2, Array2};
use rand::SeedableRng;
use rfxfer::nnkernel::ModelCheckpoint;
use rfxfer::sigsynth::{draw_sps, synthesize, ImpairmentSpec, ModClass, ModName};
use rfxfer::statfit::{pearson_r, predict_accuracy, weighted_tau, AccuracyPredictor};
use rfxfer::tmetrics::{leep_from_probs, logme, score_pair};
use rfxfer::xfer::{predict, LabeledSet};
use rfxfer::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RfxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Degenerate = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// Loaded model checkpoint.
pub struct RfxModel {
    ckpt: ModelCheckpoint,
}

/// Fitted score-to-accuracy predictor.
pub struct RfxPredictor {
    inner: AccuracyPredictor,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(err: &Error) -> RfxStatus {
    match err {
        Error::ShapeMismatch(_) | Error::LengthMismatch { .. } | Error::ClassMismatch(_) => RfxStatus::ShapeMismatch,
        Error::Degenerate(_) | Error::ZeroPower | Error::Empty(_) => RfxStatus::Degenerate,
        Error::Io(_) | Error::MissingCache => RfxStatus::Io,
        Error::Format(_) | Error::Json(_) | Error::Csv(_) | Error::Config(_) => RfxStatus::Format,
        _ => RfxStatus::InvalidArgument,
    }
}

struct Fail(RfxStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RfxStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RfxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RfxStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            RfxStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn labels_of(p: *const u32, n: usize) -> Result<Vec<usize>, Fail> {
    Ok(slice(p, n, "labels")?.iter().map(|&l| l as usize).collect())
}

unsafe fn path_of<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(RfxStatus::InvalidArgument, "path is not UTF-8".into()))
}

fn matrix(data: &[f64], rows: usize, cols: usize) -> Result<ArrayView2<'_, f64>, Fail> {
    ArrayView2::from_shape((rows, cols), data).map_err(|e| Fail(RfxStatus::ShapeMismatch, e.to_string()))
}

/// Message for the most recent failure on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rfx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// LEEP from row-major source-class probabilities `theta` (`n` x
/// `source_classes`) and target labels in `[0, target_classes)`.
///
/// # Safety
/// `theta` must hold `n * source_classes` values and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn rfx_leep(
    theta: *const f64,
    n: usize,
    source_classes: usize,
    labels: *const u32,
    target_classes: usize,
    out_score: *mut f64,
) -> RfxStatus {
    guard(|| {
        let t = slice(theta, n * source_classes, "theta")?;
        let y = labels_of(labels, n)?;
        *out(out_score, "out_score")? = leep_from_probs(matrix(t, n, source_classes)?, &y, target_classes)?;
        Ok(())
    })
}

/// LogME of row-major features (`n` x `dim`) for labels in `[0, classes)`.
///
/// # Safety
/// `features` must hold `n * dim` values and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn rfx_logme(
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *const u32,
    classes: usize,
    out_score: *mut f64,
) -> RfxStatus {
    guard(|| {
        let f = slice(features, n * dim, "features")?;
        let y = labels_of(labels, n)?;
        *out(out_score, "out_score")? = logme(matrix(f, n, dim)?, &y, classes)?;
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rfx_pearson_r(x: *const f64, y: *const f64, n: usize, out_r: *mut f64) -> RfxStatus {
    guard(|| {
        *out(out_r, "out_r")? = pearson_r(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// Weighted Kendall tau with hyperbolic rank weights.
///
/// # Safety
/// `x` and `y` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rfx_weighted_tau(x: *const f64, y: *const f64, n: usize, out_tau: *mut f64) -> RfxStatus {
    guard(|| {
        *out(out_tau, "out_tau")? = weighted_tau(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// Synthesizes one impaired frame of the named class into `out_i`/`out_q`.
/// Class parameters, symbols and noise are drawn from `seed`.
///
/// # Safety
/// `class_name` must be a NUL-terminated string; `out_i` and `out_q` must
/// each have room for `frame_len` values.
#[no_mangle]
pub unsafe extern "C" fn rfx_synthesize_frame(
    class_name: *const c_char,
    frame_len: usize,
    snr_db: f64,
    fo_frac: f64,
    seed: u64,
    out_i: *mut f64,
    out_q: *mut f64,
) -> RfxStatus {
    guard(|| {
        if class_name.is_null() {
            return Err(null("class_name"));
        }
        if out_i.is_null() || out_q.is_null() {
            return Err(null("output buffer"));
        }
        if frame_len == 0 {
            return Err(Fail(RfxStatus::InvalidArgument, "frame_len must be positive".into()));
        }
        let name: ModName = CStr::from_ptr(class_name)
            .to_str()
            .map_err(|_| Fail(RfxStatus::InvalidArgument, "class name is not UTF-8".into()))?
            .parse()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let class = ModClass::random(name, &mut rng);
        let sps = draw_sps(&mut rng);
        let imp = ImpairmentSpec {
            snr_db,
            fo_frac,
            phase0: 0.0,
        };
        imp.validate()?;
        let frame = synthesize(&class, frame_len, sps, &imp, &mut rng)?;
        std::slice::from_raw_parts_mut(out_i, frame_len).copy_from_slice(frame.i());
        std::slice::from_raw_parts_mut(out_q, frame_len).copy_from_slice(frame.q());
        Ok(())
    })
}

/// Loads a checkpoint file. Release with [`rfx_model_free`].
///
/// # Safety
/// `path` must be NUL-terminated; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfx_model_load(path: *const c_char, out_model: *mut *mut RfxModel) -> RfxStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let ckpt = ModelCheckpoint::load(path_of(path)?)?;
        ckpt.to_network::<f32>()?;
        *slot = Box::into_raw(Box::new(RfxModel { ckpt }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`rfx_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfx_model_free(model: *mut RfxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input values per example (`2 * frame_len`, I row then Q row).
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfx_model_input_len(model: *const RfxModel, out_len: *mut usize) -> RfxStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out(out_len, "out_len")? = m.ckpt.spec.input_len();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfx_model_num_classes(model: *const RfxModel, out_classes: *mut usize) -> RfxStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out(out_classes, "out_classes")? = m.ckpt.num_classes();
        Ok(())
    })
}

unsafe fn examples(m: &RfxModel, x: *const f32, n: usize) -> Result<Array2<f32>, Fail> {
    let d = m.ckpt.spec.input_len();
    let data = slice(x, n * d, "x")?;
    Array2::from_shape_vec((n, d), data.to_vec()).map_err(|e| Fail(RfxStatus::ShapeMismatch, e.to_string()))
}

/// Top-1 class of each of `n` row-major examples.
///
/// # Safety
/// `x` must hold `n * input_len` values and `out_labels` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn rfx_model_predict(
    model: *const RfxModel,
    x: *const f32,
    n: usize,
    out_labels: *mut u32,
) -> RfxStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if n == 0 {
            return Err(Fail(RfxStatus::InvalidArgument, "no examples".into()));
        }
        if out_labels.is_null() {
            return Err(null("out_labels"));
        }
        let pred = predict(&m.ckpt, examples(m, x, n)?.view())?;
        let dst = std::slice::from_raw_parts_mut(out_labels, n);
        for (d, p) in dst.iter_mut().zip(pred) {
            *d = p as u32;
        }
        Ok(())
    })
}

/// LEEP and LogME of the model on a labelled target sample.
///
/// # Safety
/// `x` must hold `n * input_len` values and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn rfx_model_score(
    model: *const RfxModel,
    x: *const f32,
    labels: *const u32,
    n: usize,
    out_leep: *mut f64,
    out_logme: *mut f64,
) -> RfxStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let y = labels_of(labels, n)?;
        let set = LabeledSet::new("target", m.ckpt.class_names.clone(), examples(m, x, n)?, y)?;
        let (l, g) = score_pair(&m.ckpt, &set)?;
        *out(out_leep, "out_leep")? = l.value;
        *out(out_logme, "out_logme")? = g.value;
        Ok(())
    })
}

/// Loads a predictor JSON file. Release with [`rfx_predictor_free`].
///
/// # Safety
/// `path` must be NUL-terminated; `out_predictor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfx_predictor_load(path: *const c_char, out_predictor: *mut *mut RfxPredictor) -> RfxStatus {
    guard(|| {
        let slot = out(out_predictor, "out_predictor")?;
        *slot = ptr::null_mut();
        let inner = AccuracyPredictor::load(path_of(path)?)?;
        *slot = Box::into_raw(Box::new(RfxPredictor { inner }));
        Ok(())
    })
}

/// # Safety
/// `predictor` must come from [`rfx_predictor_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfx_predictor_free(predictor: *mut RfxPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Accuracy estimate and interval at `confidence` (0.90, 0.95 or 0.99).
///
/// # Safety
/// `predictor` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfx_predictor_predict(
    predictor: *const RfxPredictor,
    score: f64,
    confidence: f64,
    out_estimate: *mut f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> RfxStatus {
    guard(|| {
        let p = predictor.as_ref().ok_or_else(|| null("predictor"))?;
        let r = predict_accuracy(&p.inner, score, confidence)?;
        *out(out_estimate, "out_estimate")? = r.estimate;
        *out(out_lower, "out_lower")? = r.lower;
        *out(out_upper, "out_upper")? = r.upper;
        Ok(())
    })
}
