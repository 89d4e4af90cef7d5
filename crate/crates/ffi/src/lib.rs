//! C ABI over the `mdcl` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free`. Configs are JSON strings using the same schema as
//! the `mdcl` CLI; a null pointer means "all defaults". Every function
//! returns an [`MdclStatus`]; on failure [`mdcl_last_error`] describes what
//! went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mdcl::active::{aulc, bvsb_scores, CurvePoint, LearningCurve};
use mdcl::cli::DatasetConfig;
use mdcl::data::{MultiDomainDataset, Split};
use mdcl::model::{load_checkpoint, save_checkpoint, ModelConfig, SpModel};
use mdcl::tensor::Matrix;
use mdcl::train::{evaluate, train_mdcl, TrainConfig};
use mdcl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdclStatus {
    Ok = 0,
    NullArgument = 1,
    /// Bad config, shape, index or selection.
    InvalidArgument = 2,
    /// Malformed JSON, CSV or checkpoint.
    Parse = 3,
    Io = 4,
    /// Operation not possible in the current state, e.g. a domain without labels.
    State = 5,
    NonFinite = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdclSplit {
    Labeled = 0,
    Val = 1,
    Test = 2,
}

pub struct MdclDataset {
    inner: MultiDomainDataset,
}

pub struct MdclModel {
    inner: SpModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MdclStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } | Error::Index { .. } | Error::Config(_) | Error::Contract(_) | Error::Selection(_) => {
                MdclStatus::InvalidArgument
            }
            Error::State(_) => MdclStatus::State,
            Error::NonFinite { .. } => MdclStatus::NonFinite,
            Error::Parse { .. } | Error::Checkpoint(_) | Error::Json(_) | Error::Csv(_) => MdclStatus::Parse,
            Error::Io(_) => MdclStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MdclStatus::NullArgument, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MdclStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MdclStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MdclStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MdclStatus::Panic
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// Parses an optional JSON config; null gives the type's default.
unsafe fn json_or_default<T: serde::de::DeserializeOwned + Default>(
    ptr: *const c_char,
    what: &str,
) -> Result<T, Failure> {
    if ptr.is_null() {
        return Ok(T::default());
    }
    let s = text(ptr, what)?;
    serde_json::from_str(s).map_err(|e| invalid(format!("{what}: {e}")))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn reference<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mdcl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mdcl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from a dataset-section JSON (`{"synthetic": {...}}` or
/// `{"csv": {"domains": [...]}}`), drawing the labeled subset with `seed`.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_dataset_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut MdclDataset,
) -> MdclStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: DatasetConfig = json_or_default(config_json, "dataset config")?;
        cfg.validate()?;
        let inner = cfg.load_for_seed(seed)?;
        *out = Box::into_raw(Box::new(MdclDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` is a live handle; each out pointer is null or writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_dataset_shape(
    ds: *const MdclDataset,
    num_domains: *mut usize,
    num_classes: *mut usize,
    feature_dim: *mut usize,
) -> MdclStatus {
    guard(|| {
        let ds = &reference(ds, "dataset")?.inner;
        for (ptr, v) in [
            (num_domains, ds.num_domains()),
            (num_classes, ds.num_classes),
            (feature_dim, ds.feature_dim),
        ] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// Labeled and unlabeled counts of one domain.
///
/// # Safety
/// `ds` is a live handle; each out pointer is null or writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_dataset_counts(
    ds: *const MdclDataset,
    domain: usize,
    labeled: *mut usize,
    unlabeled: *mut usize,
) -> MdclStatus {
    guard(|| {
        let ds = &reference(ds, "dataset")?.inner;
        let pool = ds
            .pools
            .get(domain)
            .ok_or_else(|| invalid(format!("domain {domain} out of range")))?;
        if !labeled.is_null() {
            *labeled = pool.labeled.len();
        }
        if !unlabeled.is_null() {
            *unlabeled = pool.unlabeled.len();
        }
        Ok(())
    })
}

/// # Safety
/// `ds` is null or a handle from `mdcl_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mdcl_dataset_free(ds: *mut MdclDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Creates a freshly initialized model shaped for `ds`. The model JSON
/// (null for defaults) need not set the input, domain or class counts.
///
/// # Safety
/// `ds` is a live handle; `model_json` is null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_model_new(
    model_json: *const c_char,
    ds: *const MdclDataset,
    out: *mut *mut MdclModel,
) -> MdclStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = &reference(ds, "dataset")?.inner;
        let mut cfg: ModelConfig = json_or_default(model_json, "model config")?;
        cfg.input_dim = ds.feature_dim;
        cfg.num_domains = ds.num_domains();
        cfg.num_classes = ds.num_classes;
        let inner = SpModel::new(cfg)?;
        *out = Box::into_raw(Box::new(MdclModel { inner }));
        Ok(())
    })
}

/// Trains in place with early stopping, leaving the best validation epoch's
/// parameters. Writes the mean test accuracy to `test_mean` when non-null.
///
/// # Safety
/// `model` and `ds` are live handles; `train_json` is null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mdcl_train(
    model: *mut MdclModel,
    ds: *const MdclDataset,
    train_json: *const c_char,
    test_mean: *mut f64,
) -> MdclStatus {
    guard(|| {
        let model = &mut model.as_mut().ok_or_else(|| null("model"))?.inner;
        let ds = &reference(ds, "dataset")?.inner;
        let cfg: TrainConfig = json_or_default(train_json, "train config")?;
        let report = train_mdcl(model, ds, &cfg)?;
        if !test_mean.is_null() {
            *test_mean = report.test.mean;
        }
        Ok(())
    })
}

/// Accuracy on one split: `per_domain` receives one value per domain
/// (`len` must equal the domain count), `mean` their average.
///
/// # Safety
/// Handles are live; `per_domain` holds `len` doubles; `mean` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_evaluate(
    model: *const MdclModel,
    ds: *const MdclDataset,
    split: MdclSplit,
    per_domain: *mut f64,
    len: usize,
    mean: *mut f64,
) -> MdclStatus {
    guard(|| {
        let model = &reference(model, "model")?.inner;
        let ds = &reference(ds, "dataset")?.inner;
        if len != ds.num_domains() {
            return Err(invalid(format!(
                "buffer holds {len} values for {} domains",
                ds.num_domains()
            )));
        }
        let out = slice_mut(per_domain, len, "per_domain")?;
        let split = match split {
            MdclSplit::Labeled => Split::Labeled,
            MdclSplit::Val => Split::Val,
            MdclSplit::Test => Split::Test,
        };
        let e = evaluate(model, ds, split)?;
        out.copy_from_slice(&e.per_domain);
        if !mean.is_null() {
            *mean = e.mean;
        }
        Ok(())
    })
}

/// Class probabilities for `rows` row-major inputs from `domain`; `out`
/// receives `rows × num_classes` values.
///
/// # Safety
/// `x` holds `rows * cols` doubles and `out` holds `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mdcl_predict_proba(
    model: *const MdclModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    domain: usize,
    out: *mut f64,
    out_len: usize,
) -> MdclStatus {
    guard(|| {
        let model = &reference(model, "model")?.inner;
        let c = model.config().num_classes;
        if out_len != rows * c {
            return Err(invalid(format!(
                "output buffer holds {out_len} values, need {}",
                rows * c
            )));
        }
        let data = slice(x, rows * cols, "x")?.to_vec();
        let probs = model.predict_proba(&Matrix::from_vec(rows, cols, data)?, domain)?;
        slice_mut(out, out_len, "out")?.copy_from_slice(probs.as_slice());
        Ok(())
    })
}

/// # Safety
/// `model` is live; `path` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mdcl_model_save(model: *const MdclModel, path: *const c_char) -> MdclStatus {
    guard(|| {
        let model = &reference(model, "model")?.inner;
        let path = PathBuf::from(text(path, "path")?);
        save_checkpoint(model, path)?;
        Ok(())
    })
}

/// # Safety
/// `path` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_model_load(path: *const c_char, out: *mut *mut MdclModel) -> MdclStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(text(path, "path")?);
        let inner = load_checkpoint(path)?;
        *out = Box::into_raw(Box::new(MdclModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mdcl_model_free(model: *mut MdclModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Best-versus-second-best margin of each row of a row-major probability
/// matrix; smaller means less certain.
///
/// # Safety
/// `probs` holds `rows * cols` doubles; `out` holds `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn mdcl_bvsb(probs: *const f64, rows: usize, cols: usize, out: *mut f64) -> MdclStatus {
    guard(|| {
        let data = slice(probs, rows * cols, "probs")?.to_vec();
        let scores = bvsb_scores(&Matrix::from_vec(rows, cols, data)?)?;
        slice_mut(out, rows, "out")?.copy_from_slice(&scores);
        Ok(())
    })
}

/// Area under a learning curve given its mean accuracies (0 to 1), on the
/// 0 to 100 scale.
///
/// # Safety
/// `accuracies` holds `len` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mdcl_aulc(accuracies: *const f64, len: usize, out: *mut f64) -> MdclStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let points = slice(accuracies, len, "accuracies")?
            .iter()
            .map(|&a| CurvePoint {
                fraction: 0.0,
                labeled: Vec::new(),
                accuracy: Vec::new(),
                mean_accuracy: a,
            })
            .collect();
        *out = aulc(&LearningCurve { points })?;
        Ok(())
    })
}
