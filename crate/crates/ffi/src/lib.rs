//! C interface to `bernfield`.
//!
//! Every function returns a [`BfStatus`]; results go through out-pointers.
//! Objects are opaque handles released with the matching `*_free`. After a
//! non-`Ok` status, `bf_last_error_message` describes the failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bernfield::bounds::{
    berry_esseen_terms, epsilon_n, jsz_constant, moment_bound_main, BerryEsseenInputs, BoundParams, CovarianceTable,
};
use bernfield::dependence::{series_constant, DependenceProfile, ProfileOptions, Series};
use bernfield::fields::{Field, FieldModel};
use bernfield::lattice::{cube_weights, LatticePoint, WeightFamily};
use bernfield::montecarlo::empirical_delta_n;
use bernfield::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConditionFailed = 3,
    Unavailable = 4,
    Runtime = 5,
    Panic = 6,
}

/// Random field model.
pub struct BfField(Field);
/// Finitely supported weight family.
pub struct BfWeights(WeightFamily);
/// Shell sums and increment norms of a field.
pub struct BfProfile(DependenceProfile);
/// Autocovariance table of a field.
pub struct BfCovariance(CovarianceTable);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BfBoundParams {
    pub p: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BfBoundReport {
    pub sigma: f64,
    pub eps_n: f64,
    pub c2: f64,
    pub cp: f64,
    pub n0_lhs: f64,
    /// 1 when the variance condition holds, else 0.
    pub n0_condition: i32,
    pub term_i: f64,
    pub term_i_window_form: f64,
    pub term_ii: f64,
    pub term_iii: f64,
    pub total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> BfStatus {
    match e {
        Error::ConditionFailed(_) => BfStatus::ConditionFailed,
        Error::AnalyticUnavailable(_) | Error::MissingData(_) => BfStatus::Unavailable,
        Error::Io(_) | Error::NonFinite(_) => BfStatus::Runtime,
        _ => BfStatus::InvalidArgument,
    }
}

/// Runs `f` with panics and errors turned into status codes.
fn guard(f: impl FnOnce() -> Result<(), (BfStatus, String)>) -> BfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BfStatus::Panic
        }
    }
}

trait Lift<T> {
    fn lift(self) -> Result<T, (BfStatus, String)>;
}

impl<T> Lift<T> for bernfield::Result<T> {
    fn lift(self) -> Result<T, (BfStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(name: &str) -> (BfStatus, String) {
    (BfStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (BfStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(out: *mut T, v: T, name: &str) -> Result<(), (BfStatus, String)> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(v);
    Ok(())
}

/// Message for the last non-`Ok` status on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn bf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `14.5 p / ln p`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_jsz_constant(p: f64, out: *mut f64) -> BfStatus {
    guard(|| write(out, jsz_constant(p).lift()?, "out"))
}

/// Builds a field from its JSON model description.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_field_from_json(json: *const c_char, out: *mut *mut BfField) -> BfStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| (BfStatus::InvalidArgument, e.to_string()))?;
        let model: FieldModel =
            serde_json::from_str(text).map_err(|e| (BfStatus::InvalidArgument, format!("model: {e}")))?;
        let field = model.prepare().lift()?;
        write(out, Box::into_raw(Box::new(BfField(field))), "out")
    })
}

/// # Safety
/// `field` must come from `bf_field_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_field_free(field: *mut BfField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Indicator weights of `{1..n}^dim`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_weights_cube(n: usize, dim: usize, out: *mut *mut BfWeights) -> BfStatus {
    guard(|| write(out, Box::into_raw(Box::new(BfWeights(cube_weights(n, dim).lift()?))), "out"))
}

/// Weights from `len` points: `coords` holds `len * dim` integers row by row.
///
/// # Safety
/// `coords` and `values` must point to arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bf_weights_from_arrays(
    dim: usize,
    coords: *const i64,
    values: *const f64,
    len: usize,
    out: *mut *mut BfWeights,
) -> BfStatus {
    guard(|| {
        if coords.is_null() {
            return Err(null("coords"));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let c = std::slice::from_raw_parts(coords, len * dim);
        let v = std::slice::from_raw_parts(values, len);
        let entries = (0..len)
            .map(|k| Ok((LatticePoint::new(&c[k * dim..(k + 1) * dim])?, v[k])))
            .collect::<bernfield::Result<Vec<_>>>()
            .lift()?;
        let w = WeightFamily::new(dim, entries).lift()?;
        write(out, Box::into_raw(Box::new(BfWeights(w))), "out")
    })
}

/// `|w|_q`.
///
/// # Safety
/// `weights` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_weights_norm(weights: *const BfWeights, q: f64, out: *mut f64) -> BfStatus {
    guard(|| {
        if !(q >= 1.0) {
            return Err((BfStatus::InvalidArgument, format!("q = {q} must be at least 1")));
        }
        write(out, deref(weights, "weights")?.0.norm_lq(q), "out")
    })
}

/// # Safety
/// `weights` must come from a `bf_weights_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_weights_free(weights: *mut BfWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

/// Dependence profile at order `p` with default options and the given seed.
///
/// # Safety
/// `field` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_profile_build(field: *const BfField, p: f64, seed: u64, out: *mut *mut BfProfile) -> BfStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let opts = ProfileOptions { seed, ..Default::default() };
        let prof = DependenceProfile::build(&f.0, p, &opts).lift()?;
        write(out, Box::into_raw(Box::new(BfProfile(prof))), "out")
    })
}

/// `C_2(exponent)` when `kind == 0`, `C_p(exponent)` when `kind == 1`.
///
/// # Safety
/// `profile` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_series_constant(profile: *const BfProfile, kind: i32, exponent: f64, out: *mut f64) -> BfStatus {
    guard(|| {
        let prof = deref(profile, "profile")?;
        let series = match kind {
            0 => Series::C2 { alpha: exponent },
            1 => Series::Cp { beta: exponent },
            _ => return Err((BfStatus::InvalidArgument, format!("series kind {kind}"))),
        };
        write(out, series_constant(&prof.0, series).value, "out")
    })
}

/// # Safety
/// `profile` must come from `bf_profile_build` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_profile_free(profile: *mut BfProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Autocovariance table; `reps` and `seed` are used only for fields without a closed form.
///
/// # Safety
/// `field` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_covariance_build(
    field: *const BfField,
    reps: u64,
    seed: u64,
    out: *mut *mut BfCovariance,
) -> BfStatus {
    guard(|| {
        let f = deref(field, "field")?;
        let cov = CovarianceTable::build(&f.0, reps, seed).lift()?;
        write(out, Box::into_raw(Box::new(BfCovariance(cov))), "out")
    })
}

/// `sigma^2 = sum_j Cov(X_0, X_j)`.
///
/// # Safety
/// `cov` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_covariance_sigma_sq(cov: *const BfCovariance, out: *mut f64) -> BfStatus {
    guard(|| write(out, deref(cov, "cov")?.0.sigma_sq, "out"))
}

/// # Safety
/// `cov` must come from `bf_covariance_build` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_covariance_free(cov: *mut BfCovariance) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

/// `Var(sum w_i X_i) / |w|_2^2 - sigma^2`.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_epsilon_n(weights: *const BfWeights, cov: *const BfCovariance, out: *mut f64) -> BfStatus {
    guard(|| write(out, epsilon_n(&deref(weights, "weights")?.0, &deref(cov, "cov")?.0).lift()?, "out"))
}

/// Upper bound for `|sum w_i X_i|_q`, `q` equal to 2 or to the profile order.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_moment_bound(
    profile: *const BfProfile,
    weights: *const BfWeights,
    q: f64,
    out: *mut f64,
) -> BfStatus {
    guard(|| {
        let b = moment_bound_main(&deref(profile, "profile")?.0, &deref(weights, "weights")?.0, q).lift()?;
        write(out, b, "out")
    })
}

/// Berry-Esseen terms for `sum w_i X_i`. With `certified != 0` the status is
/// `ConditionFailed` when the variance condition fails; `out` is filled either way.
///
/// # Safety
/// Handles and `params` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_berry_esseen(
    profile: *const BfProfile,
    cov: *const BfCovariance,
    weights: *const BfWeights,
    params: *const BfBoundParams,
    x0_norm: f64,
    certified: i32,
    out: *mut BfBoundReport,
) -> BfStatus {
    guard(|| {
        let prof = deref(profile, "profile")?;
        let cov = deref(cov, "cov")?;
        let w = deref(weights, "weights")?;
        let p = deref(params, "params")?;
        let params = BoundParams { p: p.p, gamma: p.gamma, alpha: p.alpha, beta: p.beta };
        let inputs = BerryEsseenInputs::assemble("ffi", &prof.0, &cov.0, &w.0, &params, x0_norm).lift()?;
        let r = berry_esseen_terms(&inputs, &params).lift()?;
        let report = BfBoundReport {
            sigma: r.sigma,
            eps_n: r.eps_n,
            c2: r.c2,
            cp: r.cp,
            n0_lhs: r.n0_lhs,
            n0_condition: r.n0_condition as i32,
            term_i: r.term_i,
            term_i_window_form: r.term_i_window_form,
            term_ii: r.term_ii,
            term_iii: r.term_iii,
            total: r.total,
        };
        write(out, report, "out")?;
        if certified != 0 && !r.n0_condition {
            return Err((BfStatus::ConditionFailed, format!("n0 condition fails: lhs {} <= sigma/2", r.n0_lhs)));
        }
        Ok(())
    })
}

/// Simulated Kolmogorov distance of `S/|w|_2` to `N(0, sigma^2)` and its DKW half-width.
///
/// # Safety
/// Handles must be live; `estimate` and `half_width` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bf_empirical_delta_n(
    field: *const BfField,
    weights: *const BfWeights,
    sigma: f64,
    reps: u64,
    seed: u64,
    estimate: *mut f64,
    half_width: *mut f64,
) -> BfStatus {
    guard(|| {
        if estimate.is_null() || half_width.is_null() {
            return Err(null("output"));
        }
        let r = empirical_delta_n(&deref(field, "field")?.0, &deref(weights, "weights")?.0, sigma, reps, seed).lift()?;
        write(estimate, r.estimate, "estimate")?;
        write(half_width, r.uncertainty, "half_width")
    })
}
