//! C interface to `renyi-core`.
//!
//! Samples and Gram matrices cross the boundary as opaque handles. Every
//! fallible call returns a [`RenyiStatus`]; on failure the message is kept
//! per thread and can be read with [`renyi_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use renyi_core::kernel::{build_gram, hadamard_joint, GramMatrix, KernelSpec, SampleSet};
use renyi_core::measures::gram_entropy;
use renyi_core::sketch::{EstimatorConfig, Method};
use renyi_core::Error;

/// Opaque sample matrix, one sample per row.
pub struct RenyiSamples(SampleSet);

/// Opaque trace-normalized Gram matrix.
pub struct RenyiGram(GramMatrix);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenyiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericFailure = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenyiMethod {
    Exact = 0,
    Trace = 1,
    Taylor = 2,
    Chebyshev = 3,
    Lanczos = 4,
}

impl From<RenyiMethod> for Method {
    fn from(m: RenyiMethod) -> Self {
        match m {
            RenyiMethod::Exact => Method::Exact,
            RenyiMethod::Trace => Method::Trace,
            RenyiMethod::Taylor => Method::Taylor,
            RenyiMethod::Chebyshev => Method::Chebyshev,
            RenyiMethod::Lanczos => Method::Lanczos,
        }
    }
}

/// Estimator settings. `degree` is the polynomial degree or Lanczos step
/// count and is ignored by the exact and trace methods.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenyiOptions {
    pub method: RenyiMethod,
    pub alpha: f64,
    pub sketches: usize,
    pub degree: usize,
    pub seed: u64,
}

impl RenyiOptions {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig::new(self.alpha)
            .with_sketches(self.sketches)
            .with_degree(self.degree)
            .with_seed(self.seed)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RenyiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RenyiStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RenyiStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            if e.is_usage() {
                RenyiStatus::InvalidArgument
            } else {
                RenyiStatus::NumericFailure
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            RenyiStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn gram_list<'a>(grams: *const *const RenyiGram, count: usize) -> Result<Vec<&'a GramMatrix>, Failure> {
    if count == 0 {
        return Err(Error::InvalidArgument("empty gram list".into()).into());
    }
    if grams.is_null() {
        return Err(Failure::Null("grams"));
    }
    std::slice::from_raw_parts(grams, count)
        .iter()
        .map(|&g| deref(g, "grams[i]").map(|g| &g.0))
        .collect()
}

fn entropy(g: &GramMatrix, opts: &RenyiOptions) -> Result<f64, Error> {
    Ok(gram_entropy(g, opts.method.into(), &opts.config())?.value)
}

/// Chebyshev, alpha 2, 100 sketches, degree 30, seed 0.
#[no_mangle]
pub extern "C" fn renyi_default_options() -> RenyiOptions {
    RenyiOptions {
        method: RenyiMethod::Chebyshev,
        alpha: 2.0,
        sketches: 100,
        degree: 30,
        seed: 0,
    }
}

/// Copies `rows * cols` row-major values into a new sample handle.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_samples_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut RenyiSamples,
) -> RenyiStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidArgument("rows * cols overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let samples = SampleSet::new(rows, cols, values)?;
        write(out, Box::into_raw(Box::new(RenyiSamples(samples))), "out")
    })
}

/// # Safety
/// `samples` must be null or a handle from [`renyi_samples_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn renyi_samples_free(samples: *mut RenyiSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

unsafe fn new_gram(samples: *const RenyiSamples, spec: KernelSpec, out: *mut *mut RenyiGram) -> RenyiStatus {
    guard(|| {
        let g = build_gram(&deref(samples, "samples")?.0, &spec)?;
        write(out, Box::into_raw(Box::new(RenyiGram(g))), "out")
    })
}

/// Gram matrix of `exp(-|x - y|^2 / (2 sigma^2))`.
///
/// # Safety
/// `samples` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_gram_gaussian(
    samples: *const RenyiSamples,
    sigma: f64,
    out: *mut *mut RenyiGram,
) -> RenyiStatus {
    new_gram(samples, KernelSpec::gaussian(sigma), out)
}

/// Gram matrix of `(x.y + offset)^degree`.
///
/// # Safety
/// `samples` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_gram_polynomial(
    samples: *const RenyiSamples,
    offset: f64,
    degree: u32,
    out: *mut *mut RenyiGram,
) -> RenyiStatus {
    new_gram(samples, KernelSpec::polynomial(offset, degree), out)
}

/// Trace-normalized Hadamard product of `count` Gram matrices.
///
/// # Safety
/// `grams` must point to `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_gram_joint(
    grams: *const *const RenyiGram,
    count: usize,
    out: *mut *mut RenyiGram,
) -> RenyiStatus {
    guard(|| {
        let joint = hadamard_joint(&gram_list(grams, count)?)?;
        write(out, Box::into_raw(Box::new(RenyiGram(joint))), "out")
    })
}

/// Matrix order, or 0 for a null handle.
///
/// # Safety
/// `gram` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn renyi_gram_order(gram: *const RenyiGram) -> usize {
    gram.as_ref().map_or(0, |g| g.0.order())
}

/// Copies the `n * n` row-major entries into `out`, which holds `len` doubles.
///
/// # Safety
/// `gram` must be a live handle; `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn renyi_gram_entries(gram: *const RenyiGram, out: *mut f64, len: usize) -> RenyiStatus {
    guard(|| {
        let entries = deref(gram, "gram")?.0.entries();
        if len < entries.len() {
            return Err(Error::DimensionMismatch {
                expected: entries.len(),
                found: len,
            }
            .into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        ptr::copy_nonoverlapping(entries.as_ptr(), out, entries.len());
        Ok(())
    })
}

/// # Safety
/// `gram` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn renyi_gram_free(gram: *mut RenyiGram) {
    if !gram.is_null() {
        drop(Box::from_raw(gram));
    }
}

/// Entropy in bits with the method in `options` (null means defaults).
///
/// # Safety
/// `gram` must be a live handle; `options` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_entropy(
    gram: *const RenyiGram,
    options: *const RenyiOptions,
    out: *mut f64,
) -> RenyiStatus {
    guard(|| {
        let opts = options.as_ref().copied().unwrap_or_else(|| renyi_default_options());
        let h = entropy(&deref(gram, "gram")?.0, &opts)?;
        write(out, h, "out")
    })
}

/// `S(X_1..X_count) + S(Y) - S(X_1..X_count, Y)`; all three terms share
/// the seed in `options`.
///
/// # Safety
/// `xs` must point to `count` live handles, `y` must be live, `options`
/// null or readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_mutual_information(
    xs: *const *const RenyiGram,
    count: usize,
    y: *const RenyiGram,
    options: *const RenyiOptions,
    out: *mut f64,
) -> RenyiStatus {
    guard(|| {
        let opts = options.as_ref().copied().unwrap_or_else(|| renyi_default_options());
        let mut all = gram_list(xs, count)?;
        let hx = entropy(&hadamard_joint(&all)?, &opts)?;
        let y = &deref(y, "y")?.0;
        let hy = entropy(y, &opts)?;
        all.push(y);
        let hxy = entropy(&hadamard_joint(&all)?, &opts)?;
        write(out, hx + hy - hxy, "out")
    })
}

/// `sum_i S(X_i) - S(X_1..X_count)` for `count >= 2`.
///
/// # Safety
/// `grams` must point to `count` live handles, `options` null or readable
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn renyi_total_correlation(
    grams: *const *const RenyiGram,
    count: usize,
    options: *const RenyiOptions,
    out: *mut f64,
) -> RenyiStatus {
    guard(|| {
        let opts = options.as_ref().copied().unwrap_or_else(|| renyi_default_options());
        let all = gram_list(grams, count)?;
        if all.len() < 2 {
            return Err(Error::InvalidArgument("total correlation needs at least two variables".into()).into());
        }
        let mut parts = all.iter().map(|g| entropy(g, &opts)).collect::<Result<Vec<_>, _>>()?;
        parts.sort_by(f64::total_cmp);
        let joint = entropy(&hadamard_joint(&all)?, &opts)?;
        write(out, parts.iter().sum::<f64>() - joint, "out")
    })
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length
/// plus one. An empty message means the last call succeeded.
///
/// # Safety
/// `buf` must be null or have room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn renyi_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn renyi_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}
