use std::ffi::CStr;
use std::ptr;

use rbm_lab_ffi::*;

#[test]
fn torus_geometry_round_trip() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { rbm_geometry_torus(2.0, &mut g) }, RbmStatus::Ok);
    let mut c = [0.0; 3];
    assert_eq!(unsafe { rbm_canonicalize(g, [5.0, -2.0, 1.5].as_ptr(), c.as_mut_ptr()) }, RbmStatus::Ok);
    assert_eq!(c, [1.0, -2.0, 1.5]);
    let mut d = [0.0; 3];
    let (x, y) = ([1.9, 0.0, 0.0], [-1.9, 0.0, 0.0]);
    assert_eq!(unsafe { rbm_min_image_diff(g, x.as_ptr(), y.as_ptr(), d.as_mut_ptr()) }, RbmStatus::Ok);
    assert!((d[0] - (-0.2)).abs() < 1e-12);
    let mut dist = 0.0;
    assert_eq!(unsafe { rbm_geodesic_dist(g, x.as_ptr(), y.as_ptr(), &mut dist) }, RbmStatus::Ok);
    assert!((dist - 0.2).abs() < 1e-12);
    assert_eq!(unsafe { rbm_geodesic_dist(ptr::null(), x.as_ptr(), y.as_ptr(), &mut dist) }, RbmStatus::NullPointer);
    unsafe { rbm_geometry_free(g) };
}

#[test]
fn quadrature_and_constants() {
    let mut q = RbmQuadrature::default();
    assert_eq!(unsafe { rbm_integral_i1(1e-8, &mut q) }, RbmStatus::Ok);
    let mut c = RbmClosedForms::default();
    assert_eq!(unsafe { rbm_closed_forms(&mut c) }, RbmStatus::Ok);
    assert!((q.value - c.i1_exact).abs() < 1e-6);
    assert!(q.evaluations > 0);
    assert_eq!(unsafe { rbm_integral_i2(1e-8, &mut q) }, RbmStatus::Ok);
    assert!((q.value - c.i2_exact).abs() < 1e-6);
    let v = unsafe { CStr::from_ptr(rbm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn estimator_and_simulator_are_deterministic() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { rbm_geometry_exterior(&mut g) }, RbmStatus::Ok);
    let (x, v) = ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
    let mut a = RbmHfEstimate::default();
    let mut b = RbmHfEstimate::default();
    for (t, e) in [(1, &mut a), (2, &mut b)] {
        assert_eq!(unsafe { rbm_estimate_hf(g, x.as_ptr(), v.as_ptr(), 1e-3, 64.0, 2000, 9, t, e) }, RbmStatus::Ok);
    }
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.n_hit + a.n_escape, 2000);
    assert!(a.mean < 0.0);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rbm_simulator_new(g, 1e-4, 3, &mut s) }, RbmStatus::Ok);
    let x0 = [1.2, 0.0, 0.0];
    let mut r1 = RbmState::default();
    let mut r2 = RbmState::default();
    assert_eq!(unsafe { rbm_simulator_run(s, x0.as_ptr(), 0, RbmStop::HitSphere, 0.0, &mut r1) }, RbmStatus::Ok);
    assert_eq!(unsafe { rbm_simulator_run(s, x0.as_ptr(), 0, RbmStop::HitSphere, 0.0, &mut r2) }, RbmStatus::Ok);
    assert_eq!(r1.position, r2.position);
    let r = r1.position.iter().map(|c| c * c).sum::<f64>().sqrt();
    assert!((r - 1.0).abs() < 1e-9);
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { rbm_simulator_new(g, -1.0, 3, &mut bad) }, RbmStatus::InvalidArgument);
    assert!(bad.is_null());
    let inside = [0.2, 0.0, 0.0];
    assert_eq!(unsafe { rbm_simulator_run(s, inside.as_ptr(), 0, RbmStop::FixedTime, 1.0, &mut r1) }, RbmStatus::InvalidArgument);
    unsafe {
        rbm_simulator_free(s);
        rbm_geometry_free(g);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rbm_lab.h")).unwrap();
    for name in [
        "typedef struct RbmGeometry RbmGeometry",
        "typedef struct RbmSimulator RbmSimulator",
        "RBM_STATUS_NOT_ON_BOUNDARY",
        "rbm_geometry_torus",
        "rbm_canonicalize",
        "rbm_min_image_diff",
        "rbm_geodesic_dist",
        "rbm_closed_forms",
        "rbm_integral_i1",
        "rbm_integral_i2",
        "rbm_estimate_hf",
        "rbm_simulator_run",
        "rbm_last_error",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}
