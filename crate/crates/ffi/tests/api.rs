use std::ptr;

use wideflow_ffi::*;

const X2: WfTruth = WfTruth { kind: WfTruthKind::XSquared as u32, amplitude: 0.0, k: 0 };

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe { wf_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn ensemble(c: &[f64], h: &[f64], knot_only: bool) -> (WfStatus, *mut WfEnsemble) {
    let mut e = ptr::null_mut();
    let s = unsafe { wf_ensemble_new(c.as_ptr(), h.as_ptr(), c.len(), knot_only as i32, &mut e) };
    (s, e)
}

#[test]
fn ensemble_lifecycle() {
    let (s, e) = ensemble(&[0.5, -0.2, 1.0], &[0.1, 0.4, 0.7], false);
    assert_eq!(s, WfStatus::Ok);
    let mut n = 0;
    let (mut l0, mut l1, mut t) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(wf_ensemble_len(e, &mut n), WfStatus::Ok);
        assert_eq!(n, 3);
        assert_eq!(wf_ensemble_loss(e, &X2, &mut l0), WfStatus::Ok);
        assert_eq!(wf_ensemble_step(e, &X2, 1e-2), WfStatus::Ok);
        assert_eq!(wf_ensemble_run(e, &X2, 1e-2, 1.0), WfStatus::Ok);
        assert_eq!(wf_ensemble_loss(e, &X2, &mut l1), WfStatus::Ok);
        assert_eq!(wf_ensemble_time(e, &mut t), WfStatus::Ok);
        let (mut c, mut h) = ([0.0; 3], [0.0; 3]);
        assert_eq!(wf_ensemble_weights(e, c.as_mut_ptr(), h.as_mut_ptr(), 2), WfStatus::BufferTooSmall);
        assert_eq!(wf_ensemble_weights(e, c.as_mut_ptr(), h.as_mut_ptr(), 3), WfStatus::Ok);
        assert!(c.iter().chain(&h).all(|v| v.is_finite()));
        wf_ensemble_free(e);
        wf_ensemble_free(ptr::null_mut());
    }
    assert!(l1 < l0);
    assert!((t - 1.01).abs() < 1e-12, "{t}");
}

#[test]
fn errors_are_reported() {
    let (s, e) = ensemble(&[f64::NAN], &[0.5], false);
    assert_eq!(s, WfStatus::InvalidInput);
    assert!(e.is_null());
    assert!(!last_error().is_empty());

    // knot-only pins coefficients to 1
    let (s, e) = ensemble(&[2.0], &[0.5], true);
    assert_eq!(s, WfStatus::Ok);
    let (mut c, mut h) = (0.0, 0.0);
    unsafe {
        assert_eq!(wf_ensemble_weights(e, &mut c, &mut h, 1), WfStatus::Ok);
        wf_ensemble_free(e);
    }
    assert_eq!((c, h), (1.0, 0.5));

    let bad = WfTruth { kind: 99, amplitude: 0.0, k: 0 };
    let (_, e) = ensemble(&[1.0], &[0.5], false);
    let mut out = 0.0;
    unsafe {
        assert_eq!(wf_ensemble_loss(e, &bad, &mut out), WfStatus::InvalidInput);
        assert!(last_error().contains("99"));
        assert_eq!(wf_ensemble_step(e, &X2, -1.0), WfStatus::InvalidInput);
        assert_eq!(wf_ensemble_loss(ptr::null(), &X2, &mut out), WfStatus::NullPointer);
        assert_eq!(wf_ktilde_eval(0, f64::NAN, &mut out, &mut 0.0), WfStatus::InvalidInput);
        wf_ensemble_free(e);
    }
}

#[test]
fn spectral_and_stationary_values() {
    let (mut xi, mut zeta, mut s) = (0.0, 0.0, 0.0);
    let mut loss = 0.0;
    let (mut knots, mut coeffs) = ([0.0; 2], [0.0; 2]);
    let mut st = WfStability::Neutral;
    unsafe {
        assert_eq!(wf_solve_xi(0, &mut xi), WfStatus::Ok);
        assert_eq!(wf_ktilde_eval(0, 0.0, &mut zeta, &mut s), WfStatus::Ok);
        let sine = WfTruth { kind: WfTruthKind::Sine as u32, amplitude: 1e-3, k: 2 };
        assert_eq!(wf_smallc_loss(&sine, 0.0, 10, &mut loss), WfStatus::Ok);
        assert_eq!(wf_equidistant_family(2, knots.as_mut_ptr(), coeffs.as_mut_ptr(), 2), WfStatus::Ok);
        assert_eq!(wf_equidistant_family(0, knots.as_mut_ptr(), coeffs.as_mut_ptr(), 2), WfStatus::InvalidInput);
        let s6 = 6f64.sqrt();
        assert_eq!(wf_classify_atom((4.0 + s6) / 5.0, (s6 - 1.0) / 5.0, &X2, &mut st), WfStatus::Ok);
        assert_eq!(st, WfStability::Unstable);
        assert_eq!(wf_classify_atom(-1.0, 1.0, &X2, &mut st), WfStatus::Ok);
        assert_eq!(st, WfStability::Stable);
        assert_eq!(wf_classify_atom(0.3, 0.3, &X2, &mut st), WfStatus::Numerical);
    }
    assert!((xi - 1.8751040687).abs() < 1e-9);
    assert!((zeta - 0.0808901).abs() < 1e-6);
    assert!((s - 2.0).abs() < 1e-12);
    let direct = wideflow::spectral::smallc_loss(&wideflow::GroundTruth::sine(1e-3, 2), 0.0, 10).unwrap();
    assert_eq!(loss, direct);
    assert!((loss - 0.25e-6).abs() < 0.01 * 0.25e-6, "{loss}");
    assert!((knots[0].min(knots[1]) - 0.16952085).abs() < 1e-7, "{knots:?}");
}

#[test]
fn header_is_valid_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/wideflow.h")).unwrap();
    for name in ["wf_ensemble_new", "wf_ensemble_free", "wf_last_error", "WF_STATUS_OK", "WF_TRUTH_KIND_SINE"] {
        assert!(header.contains(name), "{name}");
    }
    // syntax-check with the system compiler when one is available
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", &format!("{dir}/include/wideflow.h")])
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
