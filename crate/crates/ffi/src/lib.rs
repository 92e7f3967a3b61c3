//! C ABI over `memladder`.
//!
//! Every fallible call returns an [`MlStatus`]; on failure the message is kept per thread
//! and read back with [`ml_last_error`]. Objects cross the boundary as opaque handles that
//! the caller releases with the matching `_free` function. Strings returned to the caller
//! are released with [`ml_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use memladder::config::{ExperimentConfig, ReportKind};
use memladder::nn::LossKind;
use memladder::report::{Experiment, ReportOptions};
use memladder::trajectory::{classify_trajectory, Category};
use memladder::{cli, Error};

/// Status codes; values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlStatus {
    Ok = 0,
    Internal = 1,
    Config = 2,
    PlanMismatch = 3,
    MissingArtifacts = 4,
    TooLarge = 5,
    NullArgument = 6,
    InvalidUtf8 = 7,
    OutOfRange = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlLoss {
    OneHot = 0,
    Distill = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlCategory {
    Constant = 0,
    Increasing = 1,
    Decreasing = 2,
    CapShaped = 3,
    Other = 4,
}

impl From<Category> for MlCategory {
    fn from(c: Category) -> Self {
        match c {
            Category::Constant => MlCategory::Constant,
            Category::Increasing => MlCategory::Increasing,
            Category::Decreasing => MlCategory::Decreasing,
            Category::CapShaped => MlCategory::CapShaped,
            Category::Other => MlCategory::Other,
        }
    }
}

/// A parsed and validated experiment configuration.
pub struct MlConfig(ExperimentConfig);

/// An opened artifact directory.
pub struct MlExperiment(Experiment);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(MlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match cli::exit_code(&e) {
            2 => MlStatus::Config,
            3 => MlStatus::PlanMismatch,
            4 => MlStatus::MissingArtifacts,
            5 => MlStatus::TooLarge,
            _ => MlStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: MlStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Run `f`, translating errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MlStatus::Ok
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
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MlStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(MlStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(MlStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(MlStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated, truncated
/// to `len`). Returns the buffer size needed for the whole message, including the NUL.
///
/// # Safety
/// `buf` is null or points to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ml_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a JSON configuration.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` points to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn ml_config_parse(json: *const c_char, out: *mut *mut MlConfig) -> MlStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = ExperimentConfig::from_json(str_arg(json, "json")?)?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(MlConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` is null or a handle from [`ml_config_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_config_free(cfg: *mut MlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Canonical JSON (sorted keys, defaults filled in); free with [`ml_string_free`].
///
/// # Safety
/// `cfg` is a live handle; `out` points to writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_config_canonical(cfg: *const MlConfig, out: *mut *mut c_char) -> MlStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let bytes = (*cfg).0.canonical()?;
        *out = CString::new(bytes).map_err(|_| fail(MlStatus::Internal, "canonical JSON holds a NUL"))?.into_raw();
        Ok(())
    })
}

/// Train every run of the experiment in `config_path` under `out_dir` and write its
/// reports. `failed_runs`, when non-null, receives the number of runs that failed.
///
/// # Safety
/// String arguments are NUL-terminated; `failed_runs` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn ml_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    workers: usize,
    resume: bool,
    failed_runs: *mut usize,
) -> MlStatus {
    guard(|| {
        let config = PathBuf::from(str_arg(config_path, "config_path")?);
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let outcome = cli::cmd_run(&config, &out, workers.max(1), resume, false)?;
        if !failed_runs.is_null() {
            *failed_runs = outcome.failed_runs.len();
        }
        Ok(())
    })
}

/// Write one report kind (`mem`, `cprox`, `depth`, `trajectory`, `distill`,
/// `robustness`) for the experiment in `out_dir`, with the config's alphas and tau.
///
/// # Safety
/// String arguments are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ml_report(out_dir: *const c_char, kind: *const c_char) -> MlStatus {
    guard(|| {
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let kind = ReportKind::parse(str_arg(kind, "kind")?)?;
        cli::cmd_report(&out, &[kind], &ReportOptions::default())?;
        Ok(())
    })
}

/// # Safety
/// `dir` is NUL-terminated; `out` points to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn ml_experiment_open(dir: *const c_char, out: *mut *mut MlExperiment) -> MlStatus {
    guard(|| {
        non_null(out, "out")?;
        let exp = Experiment::open(&PathBuf::from(str_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(MlExperiment(exp)));
        Ok(())
    })
}

/// # Safety
/// `exp` is null or a handle from [`ml_experiment_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_experiment_free(exp: *mut MlExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of examples, or 0 for a null handle.
///
/// # Safety
/// `exp` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_experiment_num_examples(exp: *const MlExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.0.data.len())
}

/// Number of ladder entries, or 0 for a null handle.
///
/// # Safety
/// `exp` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_experiment_ladder_len(exp: *const MlExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.0.ladder_len())
}

/// Memorisation scores of one ladder entry into `mem[0..len]`; NaN marks examples
/// without both in-sample and out-of-sample runs. `len` must equal the example count.
///
/// # Safety
/// `exp` is a live handle; `mem` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_experiment_mem(
    exp: *const MlExperiment,
    ladder_index: usize,
    loss: MlLoss,
    mem: *mut f64,
    len: usize,
) -> MlStatus {
    guard(|| {
        non_null(exp, "exp")?;
        non_null(mem, "mem")?;
        let e = &(*exp).0;
        if ladder_index >= e.ladder_len() {
            return Err(fail(MlStatus::OutOfRange, format!("ladder index {ladder_index} >= {}", e.ladder_len())));
        }
        if len != e.data.len() {
            return Err(fail(MlStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", e.data.len())));
        }
        let loss = match loss {
            MlLoss::OneHot => LossKind::OneHot,
            MlLoss::Distill => LossKind::Distill,
        };
        let out = std::slice::from_raw_parts_mut(mem, len);
        for (slot, r) in out.iter_mut().zip(e.mem_records(ladder_index, loss)?) {
            *slot = if r.valid { r.mem } else { f64::NAN };
        }
        Ok(())
    })
}

/// Category of a score sequence under deadband `alpha`.
///
/// # Safety
/// `scores` points to `n` readable doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ml_classify_trajectory(scores: *const f64, n: usize, alpha: f64, out: *mut MlCategory) -> MlStatus {
    guard(|| {
        non_null(out, "out")?;
        if n > 0 {
            non_null(scores, "scores")?;
        }
        let s = if n == 0 { &[][..] } else { std::slice::from_raw_parts(scores, n) };
        *out = classify_trajectory(s, alpha).into();
        Ok(())
    })
}
