use std::ffi::CStr;
use std::ptr;

use bsl_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bsl_last_error_message()) }.to_string_lossy().into_owned()
}

fn inverse_system(data: &[f64]) -> *mut BslSystem {
    let mut sys = ptr::null_mut();
    let rc = unsafe { bsl_system_new_inverse(1.1, 3.0, -30.0, 30.0, 601, data.as_ptr(), data.len(), &mut sys) };
    assert_eq!(rc, BSL_OK, "{}", last_error());
    sys
}

#[test]
fn gaussian_distances_match_closed_forms() {
    let mut v = 0.0;
    let rc = unsafe { bsl_gaussian_distance(BSL_METRIC_TV, 0.0, 1.0, 0.0, 4.0, 0.0, 0.0, 0, &mut v) };
    assert_eq!(rc, BSL_OK);
    assert!((v - 0.32267456883476866).abs() < 1e-14);
    let rc = unsafe { bsl_gaussian_distance(BSL_METRIC_W1, -1.0, 1.0, 1.0, 1.0, -15.0, 15.0, 3001, &mut v) };
    assert_eq!(rc, BSL_OK);
    assert!((v - 2.0).abs() < 1e-6);
}

#[test]
fn grid_update_and_step_constant() {
    let sys = inverse_system(&[0.8]);
    let mut n = 0usize;
    assert_eq!(unsafe { bsl_system_grid_points(sys, &mut n) }, BSL_OK);
    let xs: Vec<f64> = (0..n).map(|i| -30.0 + 0.1 * i as f64).collect();
    let prior: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let mut post = vec![0.0; n];
    let mut z = 0.0;
    assert_eq!(unsafe { bsl_grid_update(sys, 1, prior.as_ptr(), n, post.as_mut_ptr(), &mut z) }, BSL_OK, "{}", last_error());
    // Prior N(0, 1), y = 1.1 x + N(0, 3): evidence is N(0.8; 0, 1.1^2 + 3).
    let s2 = 1.1f64 * 1.1 + 3.0;
    let expect = (-0.5 * 0.64 / s2).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
    assert!((z - expect).abs() < 1e-10 * expect);
    let mut c = BslConstants { c_h: 0.0, h_lip: 0.0, c_th: 0.0, c_th_star: 0.0, diameter: 0.0 };
    assert_eq!(unsafe { bsl_system_constants(sys, 1, BSL_METRIC_TV, &mut c) }, BSL_OK);
    assert!(c.h_lip.is_nan() && c.c_th.is_nan() && c.diameter == 60.0);
    let mut k = 0.0;
    assert_eq!(unsafe { bsl_step_constant(sys, 1, BSL_METRIC_TV, z, &mut k) }, BSL_OK);
    assert!((k - c.c_h / z).abs() < 1e-12 * k);
    unsafe { bsl_system_free(sys) };
}

#[test]
fn ledger_handle_round_trip() {
    let ks = [2.0, 0.5, 3.0];
    let eps = [0.1, 0.2, 0.0];
    let mut l = ptr::null_mut();
    let rc = unsafe { bsl_ledger_new(BSL_METRIC_TV, BSL_LEDGER_SET2, ks.as_ptr(), eps.as_ptr(), 3, 1, 0.0, &mut l) };
    assert_eq!(rc, BSL_OK);
    let (mut len, mut b, mut fin) = (0usize, 0.0, 0.0);
    unsafe {
        assert_eq!(bsl_ledger_len(l, &mut len), BSL_OK);
        assert_eq!(bsl_ledger_bound(l, 2, &mut b), BSL_OK);
        assert_eq!(bsl_ledger_final_bound(l, &mut fin), BSL_OK);
        assert_eq!(bsl_ledger_bound(l, 0, &mut b), BSL_ERR_INVALID_PARAMETER);
        bsl_ledger_free(l);
    }
    assert_eq!(len, 3);
    assert!((fin - 3.0 * (0.5 * 0.1 + 0.2)).abs() < 1e-15);
}

#[test]
fn vi_bound_scales_with_the_diameter() {
    let floors = [-2.0, -3.0];
    let zs = [0.4, 0.3];
    let (mut tv, mut w1) = (0.0, 0.0);
    unsafe {
        assert_eq!(bsl_vi_bound(BSL_METRIC_TV, 1, 0.5, floors.as_ptr(), zs.as_ptr(), 2, f64::NAN, &mut tv), BSL_OK);
        assert_eq!(bsl_vi_bound(BSL_METRIC_W1, 1, 0.5, floors.as_ptr(), zs.as_ptr(), 2, 7.0, &mut w1), BSL_OK);
        assert_eq!(bsl_vi_bound(BSL_METRIC_W1, 1, 0.5, floors.as_ptr(), zs.as_ptr(), 2, f64::NAN, &mut w1), BSL_ERR_MISSING_DIAMETER);
    }
    let mut again = 0.0;
    unsafe { bsl_vi_bound(BSL_METRIC_W1, 1, 0.5, floors.as_ptr(), zs.as_ptr(), 2, 7.0, &mut again) };
    assert!((again - 7.0 * tv).abs() < 1e-12 * again);
}

#[test]
fn failures_set_codes_and_messages() {
    let mut sys = ptr::null_mut();
    let rc = unsafe { bsl_system_new_inverse(1.0, 1.0, 1.0, -1.0, 201, ptr::null(), 0, &mut sys) };
    assert_eq!(rc, BSL_ERR_INVALID_DOMAIN);
    assert!(sys.is_null());
    assert!(last_error().contains("invalid domain"));

    let mut v = 0.0;
    assert_eq!(unsafe { bsl_gaussian_distance(7, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0, &mut v) }, BSL_ERR_INVALID_PARAMETER);
    assert_eq!(unsafe { bsl_gaussian_distance(BSL_METRIC_TV, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0, &mut v) }, BSL_ERR_DEGENERATE_VARIANCE);
    assert_eq!(unsafe { bsl_system_grid_points(ptr::null(), ptr::null_mut()) }, BSL_ERR_NULL_POINTER);
    assert!(last_error().starts_with("null pointer"));

    let sys = inverse_system(&[0.0]);
    let mut k = 0.0;
    assert_eq!(unsafe { bsl_step_constant(sys, 1, BSL_METRIC_TV, 0.0, &mut k) }, BSL_ERR_ZERO_EVIDENCE);
    assert_eq!(unsafe { bsl_step_constant(sys, 2, BSL_METRIC_TV, 0.1, &mut k) }, BSL_ERR_INVALID_PARAMETER);
    let prior = [1.0; 10];
    let mut post = vec![0.0; 10];
    let mut z = 0.0;
    assert_eq!(unsafe { bsl_grid_update(sys, 1, prior.as_ptr(), 10, post.as_mut_ptr(), &mut z) }, BSL_ERR_DOMAIN_MISMATCH);
    unsafe {
        bsl_system_free(sys);
        bsl_system_free(ptr::null_mut());
        bsl_ledger_free(ptr::null_mut());
    }
}

#[test]
fn codes_mirror_the_library() {
    use bsl_core::Error;
    let pairs = [
        (Error::InvalidDomain(String::new()), BSL_ERR_INVALID_DOMAIN),
        (Error::DomainTooSmall { mass: 0.0 }, BSL_ERR_DOMAIN_TOO_SMALL),
        (Error::ZeroEvidence { evidence: 0.0 }, BSL_ERR_ZERO_EVIDENCE),
        (Error::VacuousBound { step: 1, argument: -1.0 }, BSL_ERR_VACUOUS_BOUND),
        (Error::Config(String::new()), BSL_ERR_CONFIG),
    ];
    for (e, c) in pairs {
        assert_eq!(e.code(), c);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(bsl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
