//! C ABI over `wideflow`.
//!
//! Every function returns a [`WfStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and can be fetched with
//! [`wf_last_error`]. Ensembles are owned through an opaque [`WfEnsemble`]
//! handle released with [`wf_ensemble_free`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use wideflow::ensemble::{simulate_from, Ensemble, SimOptions};
use wideflow::gaussian_local::{classify, Stability};
use wideflow::spectral::{ktilde_eigenpair, smallc_loss, solve_xi};
use wideflow::stationary::equidistant_family;
use wideflow::{Error, GroundTruth, Model, Weight};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Unsupported = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Target function selector for [`WfTruth`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WfTruthKind {
    /// `x^2`
    XSquared = 0,
    /// `x^2 / 2`
    HalfXSquared = 1,
    /// `amplitude * sin(k pi x)`
    Sine = 2,
    /// `0`
    Zero = 3,
}

/// A target function. `kind` holds a `WfTruthKind` value; `amplitude` and
/// `k` are read only for `Sine`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct WfTruth {
    pub kind: u32,
    pub amplitude: f64,
    pub k: u32,
}

/// Local stability of a stationary atom.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WfStability {
    Stable = 0,
    Unstable = 1,
    Neutral = 2,
}

/// Opaque particle ensemble.
pub struct WfEnsemble {
    inner: Ensemble,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> WfStatus {
    match err {
        Error::Unsupported(_) => WfStatus::Unsupported,
        e if e.is_numerical() => WfStatus::Numerical,
        _ => WfStatus::InvalidInput,
    }
}

/// Runs `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), WfStatus>) -> WfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            WfStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            WfStatus::Panic
        }
    }
}

fn lib<T>(r: wideflow::Result<T>) -> Result<T, WfStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn fail<T>(status: WfStatus, msg: &str) -> Result<T, WfStatus> {
    set_error(msg);
    Err(status)
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), WfStatus> {
    if p.is_null() {
        fail(WfStatus::NullPointer, &format!("{name} is null"))
    } else {
        Ok(())
    }
}

fn truth(t: &WfTruth) -> Result<GroundTruth, WfStatus> {
    let f = match t.kind {
        k if k == WfTruthKind::XSquared as u32 => GroundTruth::x_squared(),
        k if k == WfTruthKind::HalfXSquared as u32 => GroundTruth::half_x_squared(),
        k if k == WfTruthKind::Sine as u32 => GroundTruth::sine(t.amplitude, t.k),
        k if k == WfTruthKind::Zero as u32 => GroundTruth::zero(),
        k => return fail(WfStatus::InvalidInput, &format!("unknown truth kind {k}")),
    };
    lib(f.validate())?;
    Ok(f)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds an ensemble from `n` particles. With `knot_only` nonzero the
/// coefficients are pinned to 1 and only knots move.
///
/// # Safety
/// `c` and `h` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_new(
    c: *const f64,
    h: *const f64,
    n: usize,
    knot_only: i32,
    out: *mut *mut WfEnsemble,
) -> WfStatus {
    guard(|| {
        non_null(c, "c")?;
        non_null(h, "h")?;
        non_null(out, "out")?;
        let (c, h) = (std::slice::from_raw_parts(c, n), std::slice::from_raw_parts(h, n));
        let weights = c.iter().zip(h).map(|(&c, &h)| Weight::new(c, h)).collect();
        let model = if knot_only != 0 { Model::KnotOnly } else { Model::Full };
        let inner = lib(Ensemble::new(weights, model))?;
        *out = Box::into_raw(Box::new(WfEnsemble { inner }));
        Ok(())
    })
}

/// Releases an ensemble. Null is ignored.
///
/// # Safety
/// `e` must come from [`wf_ensemble_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_free(e: *mut WfEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of particles.
///
/// # Safety
/// `e` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_len(e: *const WfEnsemble, out: *mut usize) -> WfStatus {
    guard(|| {
        non_null(e, "ensemble")?;
        non_null(out, "out")?;
        *out = (*e).inner.len();
        Ok(())
    })
}

/// Simulated time.
///
/// # Safety
/// `e` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_time(e: *const WfEnsemble, out: *mut f64) -> WfStatus {
    guard(|| {
        non_null(e, "ensemble")?;
        non_null(out, "out")?;
        *out = (*e).inner.t();
        Ok(())
    })
}

/// Loss of the ensemble against `f`.
///
/// # Safety
/// `e` must be a live handle; `f` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_loss(e: *const WfEnsemble, f: *const WfTruth, out: *mut f64) -> WfStatus {
    guard(|| {
        non_null(e, "ensemble")?;
        non_null(f, "truth")?;
        non_null(out, "out")?;
        *out = (*e).inner.loss(&truth(&*f)?);
        Ok(())
    })
}

/// One explicit Euler step of size `dt`. On error the ensemble is unchanged.
///
/// # Safety
/// `e` must be a live handle; `f` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_step(e: *mut WfEnsemble, f: *const WfTruth, dt: f64) -> WfStatus {
    guard(|| {
        non_null(e, "ensemble")?;
        non_null(f, "truth")?;
        if !(dt.is_finite() && dt > 0.0) {
            return fail(WfStatus::InvalidInput, "dt must be positive and finite");
        }
        let next = lib((*e).inner.step(dt, &truth(&*f)?))?;
        (*e).inner = next;
        Ok(())
    })
}

/// Advances the ensemble to `t + t_span` with step `dt`, using the same
/// loss-guarded stepper as the CLI. On error the ensemble is unchanged.
///
/// # Safety
/// `e` must be a live handle; `f` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_run(e: *mut WfEnsemble, f: *const WfTruth, dt: f64, t_span: f64) -> WfStatus {
    guard(|| {
        non_null(e, "ensemble")?;
        non_null(f, "truth")?;
        let f = truth(&*f)?;
        let t0 = (*e).inner.t();
        let (_, end) = lib(simulate_from((*e).inner.clone(), &f, SimOptions::new(dt, t_span)))?;
        (*e).inner = end.with_time(t0 + t_span);
        Ok(())
    })
}

/// Copies the particle coordinates into `c` and `h`, each of capacity `cap`.
///
/// # Safety
/// `e` must be a live handle; `c` and `h` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn wf_ensemble_weights(e: *const WfEnsemble, c: *mut f64, h: *mut f64, cap: usize) -> WfStatus {
    guard(|| {
        non_null(e, "ensemble")?;
        non_null(c, "c")?;
        non_null(h, "h")?;
        let ws = (*e).inner.weights();
        if cap < ws.len() {
            return fail(WfStatus::BufferTooSmall, &format!("need {} slots", ws.len()));
        }
        for (i, w) in ws.iter().enumerate() {
            *c.add(i) = w.c;
            *h.add(i) = w.h;
        }
        Ok(())
    })
}

/// Positive roots of `cos x + sech x = 0`, indexed from 0 (root `k` lies
/// near `pi/2 + k pi`).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wf_solve_xi(k: usize, out: *mut f64) -> WfStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = solve_xi(k);
        Ok(())
    })
}

/// Eigenvalue `zeta_k` and eigenfunction value `s_k(h)` of the knot kernel,
/// indexed as in [`wf_solve_xi`].
///
/// # Safety
/// `zeta` and `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wf_ktilde_eval(k: usize, h: f64, zeta: *mut f64, value: *mut f64) -> WfStatus {
    guard(|| {
        non_null(zeta, "zeta")?;
        non_null(value, "value")?;
        if !h.is_finite() {
            return fail(WfStatus::InvalidInput, "h must be finite");
        }
        let pair = ktilde_eigenpair(k);
        *zeta = pair.zeta;
        *value = pair.eval(h);
        Ok(())
    })
}

/// Predicted loss at time `t` for a small-coefficient start, spectral
/// series truncated after `truncation` modes.
///
/// # Safety
/// `f` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wf_smallc_loss(f: *const WfTruth, t: f64, truncation: usize, out: *mut f64) -> WfStatus {
    guard(|| {
        non_null(f, "truth")?;
        non_null(out, "out")?;
        *out = lib(smallc_loss(&truth(&*f)?, t, truncation))?;
        Ok(())
    })
}

/// Knots and coefficients of the `m`-atom stationary family for `x^2`.
///
/// # Safety
/// `knots` and `coefficients` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn wf_equidistant_family(
    m: usize,
    knots: *mut f64,
    coefficients: *mut f64,
    cap: usize,
) -> WfStatus {
    guard(|| {
        non_null(knots, "knots")?;
        non_null(coefficients, "coefficients")?;
        let fam = lib(equidistant_family(m))?;
        if cap < fam.m {
            return fail(WfStatus::BufferTooSmall, &format!("need {} slots", fam.m));
        }
        std::ptr::copy_nonoverlapping(fam.knots.as_ptr(), knots, fam.m);
        std::ptr::copy_nonoverlapping(fam.coefficients.as_ptr(), coefficients, fam.m);
        Ok(())
    })
}

/// Classifies a stationary atom at `(c, h)`. Fails with `Numerical` when the
/// point is not stationary.
///
/// # Safety
/// `f` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wf_classify_atom(c: f64, h: f64, f: *const WfTruth, out: *mut WfStability) -> WfStatus {
    guard(|| {
        non_null(f, "truth")?;
        non_null(out, "out")?;
        let verdict = lib(classify(Weight::new(c, h), &truth(&*f)?))?;
        *out = match verdict.classification {
            Stability::Stable => WfStability::Stable,
            Stability::Unstable => WfStability::Unstable,
            Stability::Neutral => WfStability::Neutral,
        };
        Ok(())
    })
}
