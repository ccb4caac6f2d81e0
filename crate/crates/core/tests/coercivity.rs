use landau_core::coercivity::*;
use landau_core::grid::VelocityGrid;
use landau_core::ledger::Verdict;
use landau_core::kernel::KernelSpec;
use landau_core::solver::{simulate_with, CollisionOperator, SolverConfig};
use landau_core::state::*;

fn operator(gamma: f64) -> CollisionOperator {
    let g = VelocityGrid::new(16, 6.0).unwrap();
    CollisionOperator::new(&g, KernelSpec::new(gamma, &g).unwrap()).unwrap()
}

fn certificate_for(state: &DistributionState, gamma: f64) -> CoercivityCertificate {
    let q = moments(state).unwrap();
    coercivity_constant(q.mass, q.energy, q.entropy, gamma).unwrap()
}

#[test]
fn maxwellian_passes_with_order_one_ratio() {
    let o = operator(-1.0);
    let s = maxwellian(o.grid(), 1.0, 1.0, [0.0; 3]).unwrap();
    let cert = certificate_for(&s, -1.0);
    let report = verify_coercivity(&s, &o.compute_coefficients(&s).unwrap(), &cert).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    assert!(report.numerical_min_ratio > 0.1 && report.numerical_min_ratio < 10.0);
}

#[test]
fn two_bumps_pass() {
    let o = operator(-2.5);
    let s = two_maxwellians(o.grid(), (0.5, 0.5, [1.2, 0.0, 0.0]), (0.5, 0.5, [-1.2, 0.0, 0.0])).unwrap();
    let cert = certificate_for(&s, -2.5);
    let report = verify_coercivity(&s, &o.compute_coefficients(&s).unwrap(), &cert).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
}

#[test]
fn rescaled_state_reports_unmet_hypotheses() {
    let o = operator(-1.0);
    let s = maxwellian(o.grid(), 1.0, 1.0, [0.0; 3]).unwrap();
    let cert = certificate_for(&s, -1.0);
    let heavier = s.scaled(1.5).unwrap();
    let report = verify_coercivity(&heavier, &o.compute_coefficients(&heavier).unwrap(), &cert).unwrap();
    assert_eq!(report.verdict, Verdict::HypothesesUnmet);
}

#[test]
fn certificate_holds_along_a_trajectory() {
    let o = operator(-2.0);
    let s = two_maxwellians(o.grid(), (0.6, 0.6, [1.0, 0.0, 0.0]), (0.4, 0.8, [-1.5, 0.0, 0.0])).unwrap();
    let cert = certificate_for(&s, -2.0);
    let cfg = SolverConfig {
        t_end: f64::INFINITY,
        max_steps: Some(20),
        output_stride: 5,
        ..Default::default()
    };
    let tr = simulate_with(&o, &s, &cfg).unwrap();
    for state in &tr.states {
        let report = verify_coercivity(state, &o.compute_coefficients(state).unwrap(), &cert).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(entropy_abs(state) <= cert.h_tilde);
    }
}

#[test]
fn majorant_bounds_absolute_entropy() {
    let g = VelocityGrid::new(24, 8.0).unwrap();
    for (m, t) in [(1.0, 1.0), (0.01, 0.2), (20.0, 3.0)] {
        let s = maxwellian(&g, m, t, [0.0; 3]).unwrap();
        let q = moments(&s).unwrap();
        assert!(entropy_abs(&s) <= entropy_majorant(q.mass, q.energy, q.entropy));
    }
}
