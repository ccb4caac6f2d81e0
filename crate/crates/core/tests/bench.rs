use std::f64::consts::PI;

use approx::assert_relative_eq;
use landau_core::bench::*;
use landau_core::grid::VelocityGrid;
use landau_core::state::maxwellian;
use landau_core::LandauError;

fn gaussian_grid(n: usize) -> VelocityGrid {
    VelocityGrid::new(n, 6.0).unwrap()
}

#[test]
fn hardy_gaussian_matches_closed_forms() {
    // integral |grad h|^2 = (3/2) pi^{3/2}, integral h^2/|v|^2 = 2 pi^{3/2}.
    let report = |n| {
        let g = gaussian_grid(n);
        hardy_check(&g.sample(|v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp()))
    };
    let coarse = report(32);
    let fine = report(64);
    assert!(coarse.pass && fine.pass);
    assert_relative_eq!(fine.lhs, 1.5 * PI.powf(1.5), max_relative = 2e-2);
    assert_relative_eq!(fine.rhs, 2.0 * PI.powf(1.5), max_relative = 1e-2);
    assert_relative_eq!(fine.ratio, 0.75, max_relative = 2e-2);
    // Central differences converge at second order.
    let err = |r: &HardyReport| (r.lhs - 1.5 * PI.powf(1.5)).abs();
    let order = err(&coarse) / err(&fine);
    assert!((3.0..5.0).contains(&order), "{order}");
}

#[test]
fn hardy_ratio_is_dilation_invariant() {
    let base = gaussian_grid(32);
    let small = VelocityGrid::new(32, 3.0).unwrap();
    let h = base.sample(|v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp());
    let hd = small.sample(|v| (-2.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp());
    assert_relative_eq!(hardy_check(&h).ratio, hardy_check(&hd).ratio, max_relative = 1e-12);
}

#[test]
fn family_is_deterministic_and_fits_in_the_box() {
    let fam = TestFunctionFamily::new(11, 100);
    let a = fam.members().unwrap();
    assert_eq!(a, fam.members().unwrap());
    assert_ne!(a, TestFunctionFamily::new(12, 100).members().unwrap());
    let g = fam.grid().unwrap();
    for m in &a {
        assert!(m.support_defect(&g).unwrap() <= 1e-10);
        let s = m.sample(&g).unwrap();
        assert!(s.values().iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn parseval_holds_for_mixtures() {
    let fam = TestFunctionFamily::new(5, 10);
    let g = fam.grid().unwrap();
    for m in fam.members().unwrap() {
        let s = m.sample(&g).unwrap();
        assert!(parseval_defect(&g, s.values()).unwrap() <= PARSEVAL_TOLERANCE);
    }
}

#[test]
fn transform_of_gaussian_is_gaussian() {
    // Unitary transform of exp(-|v|^2/2) is exp(-|xi|^2/2).
    let g = gaussian_grid(32);
    let h = g.sample(|v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp());
    let (spec, xi2) = unitary_transform(&g, h.values()).unwrap();
    for (z, k2) in spec.iter().zip(&xi2) {
        assert!((z.norm() - (-k2 / 2.0).exp()).abs() <= 1e-7);
    }
}

#[test]
fn maxwellian_split_chain_holds() {
    let g = VelocityGrid::new(32, 7.0).unwrap();
    let s = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
    let r = pitt_split_check(&s, -1.0).unwrap();
    assert!(r.chain_applicable && r.pass);
    assert!(r.r2 <= 1.0);
    assert_eq!(r.endpoint_exponent, 0.8);
    assert!(r.r1.is_finite() && r.r1 > 0.0);
    assert_relative_eq!(r.gradient_energy, r.gradient_energy_fd, max_relative = 0.15);
    assert!(!pitt_split_check(&s, -2.5).unwrap().chain_applicable);
    assert!(pitt_split_check(&s, -3.0).is_err());
}

#[test]
fn cubic_boundary_weight_is_accepted_and_below_rejected() {
    let g = VelocityGrid::new(24, 6.0).unwrap();
    let s = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
    let gamma = -2.5;
    let r = cubic_interpolation_check(&s, -1.0 - 1.5 * gamma, gamma).unwrap();
    assert!(r.ratio > 0.0 && r.ratio <= r.traced_bound);
    assert!(r.local_ratio > 0.0 && r.local_ratio <= r.traced_bound);
    match cubic_interpolation_check(&s, 2.5, gamma) {
        Err(LandauError::InvalidParameter(msg)) => assert!(msg.contains("alpha >= -1-3/2 gamma")),
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn cubic_ratio_spread_is_finite() {
    let fam = TestFunctionFamily::new(9, 50);
    let g = fam.grid().unwrap();
    let ratios: Vec<f64> = fam
        .members()
        .unwrap()
        .iter()
        .map(|m| cubic_interpolation_check(&m.sample(&g).unwrap(), 2.75, -2.5).unwrap().ratio)
        .collect();
    let s = RatioSummary::of("cubic", &ratios);
    assert!(s.min > 0.0 && s.max <= STABILITY_FACTOR * s.median);
}

#[test]
fn mass_chain_holds_on_mixtures() {
    let fam = TestFunctionFamily::new(2, 30);
    let g = fam.grid().unwrap();
    for m in fam.members().unwrap() {
        let r = mass_lower_bound_check(&m.sample(&g).unwrap(), 2.75, -2.5).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.a > 0.0);
        assert_eq!(r.rows.len(), 5);
        for row in r.rows.iter().filter(|row| row.radius >= 4.0 * g.spacing()) {
            // Grid and exact-ball quadrature agree up to the ball's boundary cells.
            assert_relative_eq!(row.k_grid, row.k_quadrature, max_relative = 0.25);
        }
    }
}

#[test]
fn small_set_chain_on_maxwellian() {
    let g = VelocityGrid::new(24, 5.0).unwrap();
    let s = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
    let r = small_set_lemma_check(&s, &[0.25], 4, 100).unwrap();
    assert!(r.pass && r.monotone);
    assert_eq!(r.entries.len(), 4);
    let eps = &r.entries[0];
    assert!(eps.below_resolution);
    assert_relative_eq!(eps.log_delta, 2.0 * r.entropy_majorant / 0.25, max_relative = 1e-15);
    assert!(r.entries[1..].iter().all(|e| e.epsilon.is_none() && e.holds));
    assert_eq!(r, small_set_lemma_check(&s, &[0.25], 4, 100).unwrap());
}

#[test]
fn homogeneity_exponents_are_exact() {
    let fam = TestFunctionFamily::new(1, 3);
    let g = fam.grid().unwrap();
    for m in fam.members().unwrap() {
        for a in homogeneity_audits(&m, &g, 2.75, -2.5).unwrap() {
            assert!(a.error <= EXPONENT_TOLERANCE, "{a:?}");
        }
    }
}
