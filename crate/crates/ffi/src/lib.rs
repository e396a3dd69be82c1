//! C ABI over `freqmerge`.
//!
//! Grids and merge plans cross the boundary as opaque handles owned by the
//! caller and released with `fm_grid_free` / `fm_plan_free`. Every fallible
//! call returns an `FmStatus`; on failure `fm_last_error` gives the message
//! for the calling thread. Panics are caught and reported as `FM_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use freqmerge::attention::flop_model;
use freqmerge::reduce::{apply_merge, apply_unmerge, gated_merge_plan, ie_kvd_downsample, GatedMergeParams, MergePlan, NearestAnchor};
use freqmerge::spectral::{cantelli_bound, theorem1_check};
use freqmerge::{score_tokens, Error, ScoringMethod, TokenGrid, TokenSequence};

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    FM_OK = 0,
    FM_NULL_POINTER = 1,
    FM_DIMENSION = 2,
    FM_NON_FINITE = 3,
    FM_ZERO_NORM = 4,
    FM_CONFIG = 5,
    FM_DOMAIN = 6,
    FM_RANGE = 7,
    FM_STALE_CACHE = 8,
    FM_AUDIT = 9,
    FM_IO = 10,
    FM_PANIC = 11,
}

/// Scoring method codes, in the order of `ScoringMethod::ALL`. Functions
/// take the code as `uint32_t` and reject unknown values with `FM_CONFIG`.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmScoringMethod {
    FM_GLOBAL_MEAN_DEVIATION = 0,
    FM_L1_NORM = 1,
    FM_L2_NORM = 2,
    FM_CHANNEL_VARIANCE = 3,
    FM_LAPLACIAN_L1 = 4,
    FM_LAPLACIAN_L2 = 5,
    FM_DFT_SPECTRAL_CENTROID = 6,
    FM_DFT_TOTAL_AMPLITUDE = 7,
    FM_COSINE_TO_NEIGHBORS = 8,
    FM_COSINE_TO_GLOBAL_MEAN = 9,
}

/// Opaque `h × w × c` token grid.
pub struct FmGrid(TokenGrid);

/// Opaque merge plan.
pub struct FmPlan(MergePlan);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FmFlopReport {
    pub qk_flops: u64,
    pub av_flops: u64,
    pub softmax_flops: u64,
    pub projection_flops: u64,
    pub total: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FmImprovementReport {
    pub r: f64,
    pub r_prime: f64,
    pub exact_condition_holds: bool,
    pub first_order_condition_holds: bool,
    pub cantelli_before: f64,
    pub cantelli_after: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::Dimension(_) => FmStatus::FM_DIMENSION,
        Error::NonFinite { .. } => FmStatus::FM_NON_FINITE,
        Error::ZeroNorm(_) => FmStatus::FM_ZERO_NORM,
        Error::Config { .. } => FmStatus::FM_CONFIG,
        Error::Domain(_) => FmStatus::FM_DOMAIN,
        Error::Range { .. } => FmStatus::FM_RANGE,
        Error::StaleCache { .. } => FmStatus::FM_STALE_CACHE,
        Error::Audit(_) => FmStatus::FM_AUDIT,
        Error::Io(_) => FmStatus::FM_IO,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FmStatus::FM_OK
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            FmStatus::FM_NULL_POINTER
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            FmStatus::FM_PANIC
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn method(code: u32) -> Result<ScoringMethod, Fail> {
    ScoringMethod::ALL.get(code as usize).copied().ok_or_else(|| {
        Fail::Lib(Error::Config {
            field: "method".into(),
            message: format!("unknown scoring method code {code}"),
        })
    })
}

fn buffer_len(needed: usize, len: usize) -> Result<(), Fail> {
    if needed != len {
        return Err(Fail::Lib(Error::Dimension(format!("buffer holds {len} values, need {needed}"))));
    }
    Ok(())
}

/// Library version, a static nul-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `fm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `h·w·c` row-major values into a new grid.
///
/// # Safety
/// `data` must point to `h·w·c` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    out_grid: *mut *mut FmGrid,
) -> FmStatus {
    guard(|| {
        let dst = out(out_grid, "out_grid")?;
        *dst = ptr::null_mut();
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::Dimension("grid size overflows".into()))?;
        let values = slice(data, n, "data")?.to_vec();
        let grid = TokenGrid::new(height, width, channels, values)?;
        *dst = Box::into_raw(Box::new(FmGrid(grid)));
        Ok(())
    })
}

/// Releases a grid. Null is ignored.
///
/// # Safety
/// `grid` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_free(grid: *mut FmGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_shape(
    grid: *const FmGrid,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> FmStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        *out(height, "height")? = g.height();
        *out(width, "width")? = g.width();
        *out(channels, "channels")? = g.channels();
        Ok(())
    })
}

/// Copies the grid's values into `buffer`, which must hold exactly `h·w·c`.
///
/// # Safety
/// `buffer` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_grid_read(grid: *const FmGrid, buffer: *mut f64, len: usize) -> FmStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        buffer_len(g.data().len(), len)?;
        slice_mut(buffer, len, "buffer")?.copy_from_slice(g.data());
        Ok(())
    })
}

/// Per-token scores, row-major `h·w`.
///
/// # Safety
/// `scores` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_score_tokens(
    grid: *const FmGrid,
    method_code: u32,
    scores: *mut f64,
    len: usize,
) -> FmStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        let map = score_tokens(g, method(method_code)?)?;
        buffer_len(map.len(), len)?;
        slice_mut(scores, len, "scores")?.copy_from_slice(map.scores());
        Ok(())
    })
}

/// Interpolate-extrapolate KV downsampling by `factor` with blend `alpha`.
///
/// # Safety
/// `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_ie_kvd(
    grid: *const FmGrid,
    factor: usize,
    alpha: f64,
    out_grid: *mut *mut FmGrid,
) -> FmStatus {
    guard(|| {
        let dst = out(out_grid, "out_grid")?;
        *dst = ptr::null_mut();
        let g = &deref(grid, "grid")?.0;
        let small = ie_kvd_downsample(g, factor, alpha, NearestAnchor::default())?;
        *dst = Box::into_raw(Box::new(FmGrid(small)));
        Ok(())
    })
}

/// Laplacian-gated merge plan: one destination per `stride × stride` cell,
/// `⌊ratio·N⌋` sources merged.
///
/// # Safety
/// `out_plan` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_lgtm_plan(
    grid: *const FmGrid,
    method_code: u32,
    stride: usize,
    ratio: f64,
    out_plan: *mut *mut FmPlan,
) -> FmStatus {
    guard(|| {
        let dst = out(out_plan, "out_plan")?;
        *dst = ptr::null_mut();
        let g = &deref(grid, "grid")?.0;
        let plan = gated_merge_plan(g, &GatedMergeParams::new(method(method_code)?, stride, ratio))?;
        *dst = Box::into_raw(Box::new(FmPlan(plan)));
        Ok(())
    })
}

/// Releases a plan. Null is ignored.
///
/// # Safety
/// `plan` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fm_plan_free(plan: *mut FmPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fm_plan_counts(plan: *const FmPlan, original: *mut usize, reduced: *mut usize) -> FmStatus {
    guard(|| {
        let p = &deref(plan, "plan")?.0;
        *out(original, "original")? = p.original_count();
        *out(reduced, "reduced")? = p.reduced_count();
        Ok(())
    })
}

/// Merges the grid's tokens into `reduced`, row-major `N′ × c`.
///
/// # Safety
/// `reduced` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_plan_merge(
    plan: *const FmPlan,
    grid: *const FmGrid,
    reduced: *mut f64,
    len: usize,
) -> FmStatus {
    guard(|| {
        let p = &deref(plan, "plan")?.0;
        let g = &deref(grid, "grid")?.0;
        let merged = apply_merge(&g.to_sequence(), p)?;
        buffer_len(merged.data().len(), len)?;
        slice_mut(reduced, len, "reduced")?.copy_from_slice(merged.data());
        Ok(())
    })
}

/// Broadcasts `N′ × channels` reduced tokens back to an `height × width` grid.
///
/// # Safety
/// `reduced` must point to `len` doubles; `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_plan_unmerge(
    plan: *const FmPlan,
    reduced: *const f64,
    len: usize,
    channels: usize,
    height: usize,
    width: usize,
    out_grid: *mut *mut FmGrid,
) -> FmStatus {
    guard(|| {
        let dst = out(out_grid, "out_grid")?;
        *dst = ptr::null_mut();
        let p = &deref(plan, "plan")?.0;
        let values = slice(reduced, len, "reduced")?.to_vec();
        if channels == 0 || !len.is_multiple_of(channels) {
            return Err(Error::Dimension(format!("{len} values do not split into {channels} channels")).into());
        }
        let seq = TokenSequence::new(len / channels, channels, values)?;
        let grid = apply_unmerge(&seq, p)?.into_grid(height, width)?;
        *dst = Box::into_raw(Box::new(FmGrid(grid)));
        Ok(())
    })
}

/// Cantelli bound `σ² / (σ² + s·μ²)` on the misranking probability.
///
/// # Safety
/// `bound` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_cantelli_bound(mu: f64, sigma2: f64, trials: usize, bound: *mut f64) -> FmStatus {
    guard(|| {
        let dst = out(bound, "bound")?;
        *dst = cantelli_bound(mu, sigma2, trials)?;
        Ok(())
    })
}

/// Improvement conditions for `μ′ = μ − Δμ`, `σ′² = σ² − Δσ²`.
///
/// # Safety
/// `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_theorem1_check(
    mu: f64,
    sigma2: f64,
    delta_mu: f64,
    delta_sigma2: f64,
    trials: usize,
    report: *mut FmImprovementReport,
) -> FmStatus {
    guard(|| {
        let dst = out(report, "report")?;
        let r = theorem1_check(mu, sigma2, delta_mu, delta_sigma2, trials)?;
        *dst = FmImprovementReport {
            r: r.r,
            r_prime: r.r_prime,
            exact_condition_holds: r.exact_condition_holds,
            first_order_condition_holds: r.first_order_condition_holds,
            cantelli_before: r.cantelli_before,
            cantelli_after: r.cantelli_after,
        };
        Ok(())
    })
}

/// FLOPs of one attention block with `n_q` queries over `n_k` keys.
///
/// # Safety
/// `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_flop_model(
    n_q: usize,
    n_k: usize,
    model_dim: usize,
    key_dim: usize,
    heads: usize,
    report: *mut FmFlopReport,
) -> FmStatus {
    guard(|| {
        let dst = out(report, "report")?;
        let f = flop_model(n_q, n_k, model_dim, key_dim, heads);
        *dst = FmFlopReport {
            qk_flops: f.qk_flops,
            av_flops: f.av_flops,
            softmax_flops: f.softmax_flops,
            projection_flops: f.projection_flops,
            total: f.total,
        };
        Ok(())
    })
}
