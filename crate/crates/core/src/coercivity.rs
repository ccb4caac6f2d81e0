//! Explicit lower bound for the diffusion matrix, `a_bar >= C <v>^gamma`,
//! from mass, energy and entropy bounds.
//!
//! Every constant is carried as a natural logarithm: for ordinary data the
//! bound is of order `exp(-10^4)`.

use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};
use crate::kernel::check_gamma;
use crate::ledger::Verdict;
use crate::solver::CollisionCoefficients;
use crate::state::{moments, DistributionState};

/// Relative slack when comparing a state's moments with the certificate's.
pub const HYPOTHESIS_TOL: f64 = 1e-9;

/// Upper bound for `integral f |log f|`: `H + 2m + 2e + 3 (2 pi)^3 e^1`.
pub fn entropy_majorant(mass: f64, energy: f64, entropy: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    entropy + 2.0 * mass + 2.0 * energy + 3.0 * two_pi.powi(3) * std::f64::consts::E
}

/// `log eta(eps)` with `eta(eps) = (eps / 2) exp(-2 H / eps)`: sets of measure
/// at most `eta(eps)` carry mass at most `eps`.
pub fn small_set_eta(epsilon: f64, entropy_majorant: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(LandauError::InvalidParameter(format!(
            "small-set mass must be positive, got {epsilon}"
        )));
    }
    Ok((0.5 * epsilon).ln() - 2.0 * entropy_majorant / epsilon)
}

/// Right side of `integral_A f <= delta |A| + H / log delta`, with
/// `delta = exp(log_delta)`, `log_delta > 0`. Infinite when `delta |A|`
/// overflows.
pub fn small_set_chain_bound(area: f64, log_delta: f64, entropy_majorant: f64) -> f64 {
    let spread = if area > 0.0 {
        (log_delta + area.ln()).exp()
    } else {
        0.0
    };
    spread + entropy_majorant / log_delta
}

/// The coercivity constant together with every intermediate quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityCertificate {
    pub gamma: f64,
    pub m0: f64,
    pub e0: f64,
    pub h0: f64,
    pub h_tilde: f64,
    /// `2 sqrt(e0 / m0)`; at least half of the mass lies in this ball.
    pub r_star: f64,
    pub log_eta_quarter: f64,
    pub log_eta_eighth: f64,
    /// Constant `c` of `a_bar >= c |v|^gamma` for `|v| >= 2 r_star`.
    pub log_c_case1: f64,
    /// Log of the factor turning `|v|^gamma` into `<v>^gamma` on the outer
    /// region (`|v| <= <v>` and `gamma < 0` give 1).
    pub log_case1_conversion: f64,
    /// Constant `c` of `a_bar >= c` for `|v| <= 2 r_star`.
    pub log_c_case2: f64,
    /// Log of `inf <v>^{-gamma}` over the inner ball, bounded below by 1.
    pub log_case2_conversion: f64,
    pub log_c_coer: f64,
}

impl CoercivityCertificate {
    /// `C_coer` as a float; underflows to zero for typical data.
    pub fn c_coer(&self) -> f64 {
        self.log_c_coer.exp()
    }
}

/// Builds the certificate for states with `m = m0`, `e <= e0`, `H <= h0`.
pub fn coercivity_constant(m0: f64, e0: f64, h0: f64, gamma: f64) -> Result<CoercivityCertificate> {
    check_gamma(gamma)?;
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(LandauError::InvalidMass(m0));
    }
    if !(e0 > 0.0 && e0.is_finite()) {
        return Err(LandauError::InvalidParameter(format!(
            "energy bound must be positive, got {e0}"
        )));
    }
    if !h0.is_finite() {
        return Err(LandauError::InvalidParameter("entropy bound must be finite".into()));
    }
    let pi = std::f64::consts::PI;
    let h_tilde = entropy_majorant(m0, e0, h0);
    let r_star = 2.0 * (e0 / m0).sqrt();
    let log_r = r_star.ln();
    let log_eta_quarter = small_set_eta(0.25 * m0, h_tilde)?;
    let log_eta_eighth = small_set_eta(0.125 * m0, h_tilde)?;

    // Outer region: cone aperture tan^2 = min(2 eta(m/4) / (9 pi R |v|^2), 1).
    let aperture =
        (2f64.ln() + log_eta_quarter - (9.0 * pi).ln() - log_r).min(4f64.ln() + 2.0 * log_r);
    let log_c_case1 = if gamma >= -2.0 {
        (m0 / 32.0).ln() + gamma * 0.5f64.ln() + aperture
    } else {
        (9.0 * m0 / 32.0).ln() + gamma * 1.5f64.ln() + aperture
    };

    // Inner region: excluded ball of measure eta(m/8), cone with
    // tan^2 = min(eta(m/8) / (18 pi R^3), 1).
    let ball = (3.0 / (4.0 * pi)).ln() + log_eta_eighth;
    let cone = (log_eta_eighth - (18.0 * pi).ln() - 3.0 * log_r).min(0.0);
    let log_c_case2 = (gamma + 3.0) / 3.0 * ball + (m0 / (24.0 * r_star)).ln() + cone;

    let log_case1_conversion = 0.0;
    let log_case2_conversion = 0.0;
    let log_c_coer =
        (log_c_case1 + log_case1_conversion).min(log_c_case2 + log_case2_conversion);
    Ok(CoercivityCertificate {
        gamma,
        m0,
        e0,
        h0,
        h_tilde,
        r_star,
        log_eta_quarter,
        log_eta_eighth,
        log_c_case1,
        log_case1_conversion,
        log_c_case2,
        log_case2_conversion,
        log_c_coer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// `min_v lambda_min(a_bar(v)) / <v>^gamma`.
    pub numerical_min_ratio: f64,
    pub log_c_coer: f64,
    pub verdict: Verdict,
}

/// True when `state` has the certificate's mass and at most its energy and
/// entropy (up to [`HYPOTHESIS_TOL`]).
pub fn hypotheses_hold(state: &DistributionState, cert: &CoercivityCertificate) -> Result<bool> {
    let q = moments(state)?;
    let mass_ok = (q.mass - cert.m0).abs() <= HYPOTHESIS_TOL * cert.m0;
    let energy_ok = q.energy <= cert.e0 * (1.0 + HYPOTHESIS_TOL);
    let entropy_ok = q.entropy <= cert.h0 + HYPOTHESIS_TOL * cert.h0.abs().max(1.0);
    Ok(mass_ok && energy_ok && entropy_ok)
}

/// Compares the eigenvalue scan of `coeffs` (which must belong to `state`)
/// with the certificate.
pub fn verify_coercivity(
    state: &DistributionState,
    coeffs: &CollisionCoefficients,
    cert: &CoercivityCertificate,
) -> Result<CoercivityReport> {
    state.grid().check_same(coeffs.a_bar.grid())?;
    let numerical_min_ratio = coeffs.min_coercivity_ratio(cert.gamma);
    let verdict = if !hypotheses_hold(state, cert)? {
        Verdict::HypothesesUnmet
    } else if numerical_min_ratio > 0.0 && numerical_min_ratio.ln() >= cert.log_c_coer {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(CoercivityReport {
        numerical_min_ratio,
        log_c_coer: cert.log_c_coer,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Reference values from a 50-digit evaluation of the closed forms.
    const H_TILDE_REF: f64 = 2023.5543532375788;

    #[test]
    fn majorant_of_unit_maxwellian_moments() {
        assert_relative_eq!(entropy_majorant(1.0, 1.5, -4.25681), H_TILDE_REF, max_relative = 1e-14);
        assert!(entropy_majorant(1e-9, 0.0, 0.0).is_finite());
    }

    #[test]
    fn eta_in_log_space() {
        let log_eta = small_set_eta(0.25, 2023.48).unwrap();
        assert_relative_eq!(log_eta, -16189.919441541680, max_relative = 1e-14);
        // Large eps: the exponential factor disappears.
        assert_relative_eq!(small_set_eta(1e12, 1.0).unwrap(), (0.5e12f64).ln(), max_relative = 1e-12);
        assert!(small_set_eta(0.0, 1.0).is_err());
    }

    #[test]
    fn certificate_for_unit_maxwellian() {
        let cert = coercivity_constant(1.0, 1.5, -4.25681, -1.0).unwrap();
        assert_eq!(cert.r_star, 2.0 * 1.5f64.sqrt());
        assert_relative_eq!(cert.h_tilde, H_TILDE_REF, max_relative = 1e-14);
        assert_relative_eq!(cert.log_eta_quarter, -16190.514267442310, max_relative = 1e-14);
        assert_relative_eq!(cert.log_eta_eighth, -32379.642240523501, max_relative = 1e-14);
        assert_relative_eq!(cert.log_c_case1, -16196.831543181790, max_relative = 1e-13);
        assert_relative_eq!(cert.log_c_case2, -53977.822016590585, max_relative = 1e-13);
        assert_eq!(cert.log_c_coer, cert.log_c_case2);
        assert_eq!(cert.c_coer(), 0.0);
    }

    #[test]
    fn certificate_for_very_soft_and_coulomb() {
        let cert = coercivity_constant(1.0, 1.5, -4.25681, -2.5).unwrap();
        assert_relative_eq!(cert.log_c_case1, -16196.341128555284, max_relative = 1e-13);
        assert_relative_eq!(cert.log_c_case2, -37787.284690349684, max_relative = 1e-13);
        let cert = coercivity_constant(1.0, 1.5, -4.25681, -3.0).unwrap();
        assert_relative_eq!(cert.log_c_case1, -16196.543861109338, max_relative = 1e-13);
        // Exponent (gamma + 3) / 3 vanishes: only the cone factor remains.
        let expected = (1.0 / (24.0 * cert.r_star)).ln() + cert.log_eta_eighth
            - (18.0 * std::f64::consts::PI).ln()
            - 3.0 * cert.r_star.ln();
        assert_relative_eq!(cert.log_c_case2, expected, max_relative = 1e-14);
        assert_relative_eq!(cert.log_c_case2, -32390.438914936050, max_relative = 1e-13);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(coercivity_constant(1.0, 1.5, 0.0, 0.0).is_err());
        assert!(coercivity_constant(1.0, 1.5, 0.0, -3.5).is_err());
        assert!(coercivity_constant(0.0, 1.5, 0.0, -1.0).is_err());
        assert!(coercivity_constant(1.0, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn chain_bound_overflow_is_infinite() {
        assert_eq!(small_set_chain_bound(1.0, 1e5, 10.0), f64::INFINITY);
        assert_relative_eq!(small_set_chain_bound(0.5, 1.0, 2.0), 0.5 * std::f64::consts::E + 2.0);
        assert_eq!(small_set_chain_bound(0.0, 2.0, 2.0), 1.0);
    }

    proptest! {
        #[test]
        fn eta_monotone(eps in 0.01f64..10.0, step in 0.01f64..1.0, h in 1.0f64..5000.0, dh in 0.1f64..100.0) {
            let base = small_set_eta(eps, h).unwrap();
            prop_assert!(small_set_eta(eps + step, h).unwrap() > base);
            prop_assert!(small_set_eta(eps, h + dh).unwrap() < base);
        }

        #[test]
        fn worse_entropy_weakens_certificate(h0 in -10.0f64..10.0, dh in 0.1f64..50.0, gamma in -3.0f64..-0.01) {
            let a = coercivity_constant(1.0, 1.5, h0, gamma).unwrap();
            let b = coercivity_constant(1.0, 1.5, h0 + dh, gamma).unwrap();
            prop_assert!(b.log_c_coer < a.log_c_coer);
        }
    }
}
