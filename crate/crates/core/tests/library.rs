use rbm_lab::coupling::{aligned_pair, log_separation_ladder};
use rbm_lab::excursion::{estimate_hf_mc, HfParams};
use rbm_lab::exponent::{closed_forms, estimate_lambda, integral_i1_cos, reference_frame, Rho};
use rbm_lab::flow::{earthworm_frame, earthworm_unframe, evolve_ensemble, init_lattice};
use rbm_lab::sde::SimConfig;
use rbm_lab::{DomainGeometry, NoiseStream};

#[test]
fn lambda_in_free_space_is_the_excursion_mean() {
    let p = HfParams { n: 20_000, seed: 3, ..HfParams::default() };
    let (x, v) = reference_frame();
    let hf = estimate_hf_mc(&x, &v, &p, &DomainGeometry::exterior()).unwrap();
    let l = estimate_lambda(Rho::Infinite, &p).unwrap();
    assert!((l.lambda - hf.mean).abs() <= f64::EPSILON);
    assert_eq!(l.lambda_star - l.lambda, 1.0);
    assert_eq!(l.stderr, hf.stderr);
}

#[test]
fn cos_path_matches_the_closed_form() {
    let c = closed_forms();
    let r = integral_i1_cos(1e-10).unwrap();
    assert!((r.value - c.i1_exact).abs() < 1e-8);
    assert!((c.lambda_limit - (-0.7740128440865026)).abs() < 1e-15);
}

#[test]
fn ladder_is_reproducible_and_monotone_in_local_time() {
    let g = DomainGeometry::torus(4.0).unwrap();
    let (x0, y0) = aligned_pair(1e-3);
    let cfg = SimConfig::with_dt(1e-7);
    let a = log_separation_ladder(x0, y0, 0.2, 3, NoiseStream::replica(2, 0), &g, &cfg).unwrap();
    let b = log_separation_ladder(x0, y0, 0.2, 3, NoiseStream::replica(2, 0), &g, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.complete);
    for w in a.points.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].lx >= w[0].lx && w[1].ly >= w[0].ly);
    }
}

#[test]
fn ensemble_stays_outside_the_ball_and_frames_round_trip() {
    let g = DomainGeometry::torus(2.5).unwrap();
    let mut ens = init_lattice(6, &g).unwrap();
    let snaps = evolve_ensemble(&mut ens, NoiseStream::new(1, 0), &[0.0, 0.2], &g, 1e-3).unwrap();
    let last = snaps.last().unwrap();
    assert!(last.positions.iter().all(|p| p.norm() >= 1.0 - 1e-12));
    let framed = earthworm_frame(&last.positions, &last.driver, &g).unwrap();
    let back = earthworm_unframe(&framed, &last.driver, &g).unwrap();
    for (p, q) in last.positions.iter().zip(&back) {
        let d = g.canonicalize(p - q).unwrap().coords();
        let d = d.map(|c| c.abs().min((2.0 * 2.5 - c.abs()).abs()));
        assert!(d.norm() < 1e-12);
    }
}
