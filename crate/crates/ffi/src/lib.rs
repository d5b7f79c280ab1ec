//! C ABI over the `gaga` crate.
//!
//! Objects are opaque handles created by `*_new`/`gaga_fit`/`gaga_fit_load`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`GagaStatus`]; on failure a message is available from
//! [`gaga_last_error_message`] on the same thread until the next failing call.
//!
//! Matrices are row-major, one row per gene. Group labels are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gaga::decision::find_genes;
use gaga::fitting::{em_fit, FitConfig, ModelKind};
use gaga::gas::{gas_log_norm_const, GasParams};
use gaga::inference::posterior_all;
use gaga::io::FitFile;
use gaga::model::{all_sufficient_stats, ExpressionMatrix, GroupAssignment, Pattern, PatternSet};
use gaga::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GagaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericError = 4,
    IoError = 5,
    Panic = 6,
}

/// Expression matrix together with its group labels.
pub struct GagaDataset {
    matrix: ExpressionMatrix,
    groups: GroupAssignment,
}

/// Ordered set of expression patterns, null pattern first.
pub struct GagaPatterns {
    inner: PatternSet,
}

/// Fitted hyperparameters with the patterns and groups they were fitted on.
pub struct GagaFit {
    inner: FitFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GagaStatus {
    match err {
        Error::Io(_) => GagaStatus::IoError,
        e => match e.kind() {
            ErrorKind::Data => GagaStatus::DataError,
            ErrorKind::Numeric => GagaStatus::NumericError,
        },
    }
}

/// Failure inside the wrapper itself, before or after calling the library.
struct Fail(GagaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GagaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GagaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            GagaStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GagaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(GagaStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gaga_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gaga_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from `n_genes * n_arrays` positive values and one group
/// label per array.
///
/// # Safety
/// `values` must point to `n_genes * n_arrays` doubles and `labels` to
/// `n_arrays` labels; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_dataset_new(
    values: *const f64,
    n_genes: usize,
    n_arrays: usize,
    labels: *const usize,
    out: *mut *mut GagaDataset,
) -> GagaStatus {
    guard(|| {
        let len = n_genes.checked_mul(n_arrays).ok_or_else(|| invalid("matrix size overflows"))?;
        let values = slice(values, len, "values")?.to_vec();
        let labels = slice(labels, n_arrays, "labels")?.to_vec();
        let genes = (1..=n_genes).map(|i| format!("gene{i}")).collect();
        let arrays = (1..=n_arrays).map(|j| format!("array{j}")).collect();
        let matrix = ExpressionMatrix::from_flat(values, genes, arrays)?;
        let groups = GroupAssignment::from_labels(labels)?;
        put(out, GagaDataset { matrix, groups })
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from `gaga_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gaga_dataset_free(dataset: *mut GagaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of genes and groups in a dataset.
///
/// # Safety
/// `dataset` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_dataset_shape(
    dataset: *const GagaDataset,
    n_genes: *mut usize,
    n_groups: *mut usize,
) -> GagaStatus {
    guard(|| {
        let d = deref(dataset, "dataset")?;
        if n_genes.is_null() || n_groups.is_null() {
            return Err(null("output"));
        }
        *n_genes = d.matrix.n_genes();
        *n_groups = d.groups.n_groups();
        Ok(())
    })
}

/// Builds a pattern set from `n_patterns * n_groups` class codes, one row per
/// pattern. The first row must be the null pattern.
///
/// # Safety
/// `codes` must point to `n_patterns * n_groups` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_patterns_new(
    codes: *const usize,
    n_patterns: usize,
    n_groups: usize,
    out: *mut *mut GagaPatterns,
) -> GagaStatus {
    guard(|| {
        if n_patterns == 0 || n_groups == 0 {
            return Err(invalid("need at least one pattern and one group"));
        }
        let len = n_patterns.checked_mul(n_groups).ok_or_else(|| invalid("pattern table size overflows"))?;
        let codes = slice(codes, len, "codes")?;
        let inner = PatternSet::new(codes.chunks(n_groups).map(Pattern::new).collect())?;
        put(out, GagaPatterns { inner })
    })
}

/// The two-group set: all equal, then the groups differ.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_patterns_two_group(out: *mut *mut GagaPatterns) -> GagaStatus {
    guard(|| {
        put(out, GagaPatterns { inner: PatternSet::two_group() })
    })
}

/// # Safety
/// `patterns` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaga_patterns_free(patterns: *mut GagaPatterns) {
    if !patterns.is_null() {
        drop(Box::from_raw(patterns));
    }
}

/// Options for [`gaga_fit`]. Zero or negative numeric fields fall back to the
/// library defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GagaFitOptions {
    /// 0 or 1 fits the single-component model; more fits a mixture.
    pub components: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

/// Defaults matching the command-line tool.
#[no_mangle]
pub extern "C" fn gaga_fit_options_default() -> GagaFitOptions {
    let c = FitConfig::default();
    GagaFitOptions {
        components: 1,
        max_iterations: c.max_iterations,
        rel_tol: c.rel_loglik_tol,
        seed: c.seed,
    }
}

/// Estimates hyperparameters by EM.
///
/// # Safety
/// `dataset` and `patterns` must be live handles; `options` may be NULL for
/// defaults; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_fit(
    dataset: *const GagaDataset,
    patterns: *const GagaPatterns,
    options: *const GagaFitOptions,
    out: *mut *mut GagaFit,
) -> GagaStatus {
    guard(|| {
        let d = deref(dataset, "dataset")?;
        let p = &deref(patterns, "patterns")?.inner;
        let o = options.as_ref().copied().unwrap_or_else(|| gaga_fit_options_default());
        let mut config = FitConfig {
            seed: o.seed,
            ..FitConfig::default()
        };
        if o.components > 1 {
            config.model = ModelKind::MiGaGa { components: o.components };
        }
        if o.max_iterations > 0 {
            config.max_iterations = o.max_iterations;
        }
        if o.rel_tol > 0.0 {
            config.rel_loglik_tol = o.rel_tol;
        }
        let fit = em_fit(&d.matrix, &d.groups, p, &config)?;
        put(out, GagaFit { inner: FitFile::new(&fit, p, &d.groups, o.seed) })
    })
}

/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaga_fit_free(fit: *mut GagaFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Final log marginal likelihood, number of EM iterations and whether the
/// run converged (1) or hit the iteration cap (0).
///
/// # Safety
/// `fit` must be a live handle; each output pointer may be NULL to skip it.
#[no_mangle]
pub unsafe extern "C" fn gaga_fit_summary(
    fit: *const GagaFit,
    loglik: *mut f64,
    iterations: *mut usize,
    converged: *mut i32,
) -> GagaStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.inner;
        if let Some(l) = loglik.as_mut() {
            *l = f.loglik_trace.last().copied().unwrap_or(f64::NAN);
        }
        if let Some(i) = iterations.as_mut() {
            *i = f.iterations;
        }
        if let Some(c) = converged.as_mut() {
            *c = f.converged as i32;
        }
        Ok(())
    })
}

/// Number of patterns the fit was made with.
///
/// # Safety
/// `fit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gaga_fit_n_patterns(fit: *const GagaFit, n_patterns: *mut usize) -> GagaStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.inner;
        let n = n_patterns.as_mut().ok_or_else(|| null("n_patterns"))?;
        *n = f.patterns.len();
        Ok(())
    })
}

/// Writes the fit as JSON.
///
/// # Safety
/// `fit` must be a live handle and `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn gaga_fit_save(fit: *const GagaFit, file: *const c_char) -> GagaStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.inner;
        f.save(path(file)?)?;
        Ok(())
    })
}

/// Reads a fit written by [`gaga_fit_save`] or the command-line tool.
///
/// # Safety
/// `file` must be a NUL-terminated path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_fit_load(file: *const c_char, out: *mut *mut GagaFit) -> GagaStatus {
    guard(|| {
        let inner = FitFile::load(path(file)?)?;
        inner.pattern_set()?;
        put(out, GagaFit { inner })
    })
}

fn checked_patterns(f: &FitFile, d: &GagaDataset) -> Result<PatternSet, Fail> {
    let ps = f.pattern_set()?;
    if ps.n_groups() != d.groups.n_groups() {
        return Err(invalid(format!(
            "fit has {} groups but dataset has {}",
            ps.n_groups(),
            d.groups.n_groups()
        )));
    }
    Ok(ps)
}

/// Posterior pattern probabilities, `n_genes * n_patterns` values written
/// row-major into `out`.
///
/// # Safety
/// `fit` and `dataset` must be live handles and `out` must hold `out_len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn gaga_posterior(
    fit: *const GagaFit,
    dataset: *const GagaDataset,
    out: *mut f64,
    out_len: usize,
) -> GagaStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.inner;
        let d = deref(dataset, "dataset")?;
        let ps = checked_patterns(f, d)?;
        let need = d.matrix.n_genes() * ps.len();
        if out_len != need {
            return Err(invalid(format!("output holds {out_len} values, need {need}")));
        }
        let out = slice_mut(out, out_len, "out")?;
        let stats = all_sufficient_stats(&d.matrix, &d.groups, &ps)?;
        let (post, _) = posterior_all(&stats, &f.hyper)?;
        for (dst, row) in out.chunks_mut(ps.len()).zip(post.rows()) {
            dst.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Declares genes at Bayesian FDR `fdr`. For each gene, `declared` gets 0/1
/// and `pattern` the assigned pattern (0 when not declared). Both arrays hold
/// `n_genes` entries.
///
/// # Safety
/// `fit` and `dataset` must be live handles; `declared` and `pattern` must
/// hold `n_genes` entries; `n_declared` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gaga_find_genes(
    fit: *const GagaFit,
    dataset: *const GagaDataset,
    fdr: f64,
    declared: *mut u8,
    pattern: *mut usize,
    n_genes: usize,
    n_declared: *mut usize,
) -> GagaStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.inner;
        let d = deref(dataset, "dataset")?;
        if !(0.0..=1.0).contains(&fdr) {
            return Err(invalid(format!("fdr {fdr} outside [0, 1]")));
        }
        if n_genes != d.matrix.n_genes() {
            return Err(invalid(format!("n_genes is {n_genes}, dataset has {}", d.matrix.n_genes())));
        }
        let declared = slice_mut(declared, n_genes, "declared")?;
        let pattern = slice_mut(pattern, n_genes, "pattern")?;
        let ps = checked_patterns(f, d)?;
        let stats = all_sufficient_stats(&d.matrix, &d.groups, &ps)?;
        let (post, _) = posterior_all(&stats, &f.hyper)?;
        let r = find_genes(&post, fdr);
        for i in 0..n_genes {
            declared[i] = r.declared[i] as u8;
            pattern[i] = r.assigned_pattern[i];
        }
        if let Some(n) = n_declared.as_mut() {
            *n = r.n_declared();
        }
        Ok(())
    })
}

/// Log normalizing constant of the gamma-shape density with parameters
/// (a, b, c, d, r, s), by the gamma approximation.
///
/// # Safety
/// `a` and `s` must each hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gaga_gas_log_norm_const(
    a: *const f64,
    s: *const f64,
    len: usize,
    b: f64,
    c: f64,
    d: f64,
    r: f64,
    out: *mut f64,
) -> GagaStatus {
    guard(|| {
        let a = slice(a, len, "a")?.to_vec();
        let s = slice(s, len, "s")?.to_vec();
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = gas_log_norm_const(&GasParams::new(a, b, c, d, r, s)?)?;
        Ok(())
    })
}
