//! The Landau kernel for soft potentials and its samples on the difference
//! lattice.
//!
//! For `z != 0`:
//! `a(z) = |z|^{g+2} (I - z z^T / |z|^2)`, `b(z) = -2 |z|^g z` and
//! `c(z) = -2 (g+3) |z|^g`, with `b_i = d_j a_ij` and `c = d_i b_i`.
//! At `g = -3` the scalar kernel is the point mass `-8 pi delta_0`, which is
//! carried symbolically.

use serde::{Deserialize, Serialize};

use crate::convolution::DifferenceField;
use crate::error::{LandauError, Result};
use crate::grid::VelocityGrid;

/// Weight of the point mass in `c` at `gamma = -3`.
pub const COULOMB_DELTA_WEIGHT: f64 = -8.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    /// Radius of the ball over which radial factors are averaged on the
    /// zero-offset cell.
    pub regularization_radius: f64,
}

impl KernelSpec {
    /// Spec with the default regularization radius `h/2`.
    pub fn new(gamma: f64, grid: &VelocityGrid) -> Result<Self> {
        Self::with_radius(gamma, 0.5 * grid.spacing())
    }

    pub fn with_radius(gamma: f64, regularization_radius: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(regularization_radius > 0.0 && regularization_radius.is_finite()) {
            return Err(LandauError::InvalidParameter(format!(
                "regularization radius must be positive, got {regularization_radius}"
            )));
        }
        Ok(Self {
            gamma,
            regularization_radius,
        })
    }

    pub fn is_coulomb(&self) -> bool {
        self.gamma == -3.0
    }
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if (-3.0..0.0).contains(&gamma) {
        Ok(())
    } else {
        Err(LandauError::GammaOutOfRange(gamma))
    }
}

fn norm_squared(z: [f64; 3]) -> f64 {
    z[0] * z[0] + z[1] * z[1] + z[2] * z[2]
}

fn nonzero_norm(z: [f64; 3]) -> Result<f64> {
    let r2 = norm_squared(z);
    if r2 == 0.0 {
        return Err(LandauError::SingularKernel);
    }
    Ok(r2.sqrt())
}

/// `|z|^{gamma+2} (delta_ij - z_i z_j / |z|^2)`.
pub fn eval_a(z: [f64; 3], gamma: f64) -> Result<[[f64; 3]; 3]> {
    let r = nonzero_norm(z)?;
    let radial = r.powf(gamma + 2.0);
    let r2 = r * r;
    Ok(std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            radial * (delta - z[i] * z[j] / r2)
        })
    }))
}

/// `-2 |z|^gamma z`.
pub fn eval_b(z: [f64; 3], gamma: f64) -> Result<[f64; 3]> {
    let r = nonzero_norm(z)?;
    let s = -2.0 * r.powf(gamma);
    Ok([s * z[0], s * z[1], s * z[2]])
}

/// Value of the scalar kernel away from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarKernelValue {
    pub value: f64,
    /// Set at `gamma = -3`, where the kernel is a point mass at the origin.
    pub delta_at_origin: bool,
    pub delta_weight: f64,
}

/// `-2 (gamma+3) |z|^gamma`, or zero plus a flagged point mass at
/// `gamma = -3`.
pub fn eval_c(z: [f64; 3], gamma: f64) -> Result<ScalarKernelValue> {
    let r = nonzero_norm(z)?;
    if gamma == -3.0 {
        return Ok(ScalarKernelValue {
            value: 0.0,
            delta_at_origin: true,
            delta_weight: COULOMB_DELTA_WEIGHT,
        });
    }
    Ok(ScalarKernelValue {
        value: -2.0 * (gamma + 3.0) * r.powf(gamma),
        delta_at_origin: false,
        delta_weight: 0.0,
    })
}

/// Mean of `|z|^p` over the ball of radius `r`: `3 r^p / (p + 3)`.
pub fn ball_average(p: f64, r: f64) -> Result<f64> {
    if p <= -3.0 {
        return Err(LandauError::NonIntegrableExponent(p));
    }
    Ok(3.0 / (p + 3.0) * r.powf(p))
}

/// Kernel samples on the difference lattice of a grid.
#[derive(Debug, Clone)]
pub struct TabulatedKernels {
    pub spec: KernelSpec,
    /// Packed as `[xx, yy, zz, xy, xz, yz]`.
    pub a: [DifferenceField; 6],
    pub b: [DifferenceField; 3],
    /// `None` at `gamma = -3`; the convolution is then `-8 pi f`.
    pub c: Option<DifferenceField>,
    /// Diagonal value used for `a` on the zero-offset cell.
    pub origin_a_diagonal: f64,
    /// Averaged radial factor of `|b|` on the zero-offset cell. The vector
    /// itself averages to zero by oddness.
    pub origin_b_radial: f64,
    pub origin_c: Option<f64>,
}

const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Samples `a`, `b`, `c` on every offset of the grid's difference lattice.
/// The zero offset uses ball averages of the radial factors.
pub fn tabulate_kernels(grid: &VelocityGrid, spec: &KernelSpec) -> Result<TabulatedKernels> {
    check_gamma(spec.gamma)?;
    let gamma = spec.gamma;
    let r = spec.regularization_radius;
    // The angular mean of the projector is (2/3) I.
    let origin_a_diagonal = 2.0 / 3.0 * ball_average(gamma + 2.0, r)?;
    let origin_b_radial = ball_average(gamma + 1.0, r)?;
    let origin_c = if spec.is_coulomb() {
        None
    } else {
        Some(-2.0 * (gamma + 3.0) * ball_average(gamma, r)?)
    };

    let a = SYM_PAIRS.map(|(i, j)| {
        DifferenceField::sample(grid, |d, z| {
            if d == [0, 0, 0] {
                if i == j {
                    origin_a_diagonal
                } else {
                    0.0
                }
            } else {
                eval_a(z, gamma).expect("nonzero offset")[i][j]
            }
        })
    });
    let b = [0, 1, 2].map(|i| {
        DifferenceField::sample(grid, |d, z| {
            if d == [0, 0, 0] {
                0.0
            } else {
                eval_b(z, gamma).expect("nonzero offset")[i]
            }
        })
    });
    let c = match origin_c {
        Some(oc) => Some(DifferenceField::sample(grid, |d, z| {
            if d == [0, 0, 0] {
                oc
            } else {
                eval_c(z, gamma).expect("nonzero offset").value
            }
        })?),
        None => None,
    };
    let [a0, a1, a2, a3, a4, a5] = a;
    let [b0, b1, b2] = b;
    Ok(TabulatedKernels {
        spec: *spec,
        a: [a0?, a1?, a2?, a3?, a4?, a5?],
        b: [b0?, b1?, b2?],
        c,
        origin_a_diagonal,
        origin_b_radial,
        origin_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn a_examples() {
        let a = eval_a([1.0, 0.0, 0.0], -2.0).unwrap();
        assert_eq!(a, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let a = eval_a([0.0, 2.0, 0.0], -1.0).unwrap();
        assert_eq!(a, [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]);
    }

    #[test]
    fn b_examples() {
        assert_eq!(eval_b([1.0, 0.0, 0.0], -2.0).unwrap(), [-2.0, 0.0, 0.0]);
        let b = eval_b([0.0, 0.0, 3.0], -1.0).unwrap();
        assert_relative_eq!(b[2], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn c_examples() {
        let c = eval_c([0.0, 0.6, 0.8], -1.0).unwrap();
        assert_relative_eq!(c.value, -4.0, epsilon = 1e-14);
        assert!(!c.delta_at_origin);
        let c = eval_c([0.3, -1.0, 2.0], -3.0).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(c.delta_at_origin);
        assert_eq!(c.delta_weight, -8.0 * std::f64::consts::PI);
    }

    #[test]
    fn origin_is_rejected() {
        assert_eq!(eval_a([0.0; 3], -1.0), Err(LandauError::SingularKernel));
        assert_eq!(eval_b([0.0; 3], -1.0), Err(LandauError::SingularKernel));
        assert!(eval_c([0.0; 3], -1.0).is_err());
        assert_eq!(
            LandauError::SingularKernel.to_string(),
            "kernel singular at origin; use tabulate_kernels"
        );
    }

    #[test]
    fn ball_average_examples() {
        assert_relative_eq!(ball_average(1.0, 0.5).unwrap(), 0.375);
        assert_relative_eq!(ball_average(0.0, 0.5).unwrap(), 1.0);
        let expected = 3.0 / 2.5 * 0.5f64.powf(-0.5);
        assert_relative_eq!(ball_average(-0.5, 0.5).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 1.69706, epsilon = 1e-5);
        assert!(ball_average(-3.0, 0.5).is_err());
    }

    /// Central-difference derivative of a function of `z`.
    fn central<F: Fn([f64; 3]) -> f64>(func: F, z: [f64; 3], axis: usize, h: f64) -> f64 {
        let mut zp = z;
        let mut zm = z;
        zp[axis] += h;
        zm[axis] -= h;
        (func(zp) - func(zm)) / (2.0 * h)
    }

    #[test]
    fn c_is_divergence_of_b() {
        let gamma = -1.5;
        let z = [1.2, -0.8, 1.2 * 0.5f64.sqrt() + 0.35];
        let scale = 2.0 / norm_squared(z).sqrt();
        let z = z.map(|x| x * scale);
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let div: f64 = (0..3)
                .map(|i| central(|w| eval_b(w, gamma).unwrap()[i], z, i, h))
                .sum();
            errs.push((div - eval_c(z, gamma).unwrap().value).abs());
        }
        assert!(errs[0] < 1e-3);
        let ratio = errs[0] / errs[1];
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn b_is_divergence_of_a() {
        let gamma = -2.5;
        let z = [0.7, 1.1, -0.4];
        for i in 0..3 {
            let div: f64 = (0..3)
                .map(|j| central(|w| eval_a(w, gamma).unwrap()[i][j], z, j, 1e-4))
                .sum();
            assert_relative_eq!(div, eval_b(z, gamma).unwrap()[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn tabulation_origin_values() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let spec = KernelSpec::new(-1.0, &g).unwrap();
        let t = tabulate_kernels(&g, &spec).unwrap();
        assert_relative_eq!(t.origin_a_diagonal, 2.0 / 3.0 * 0.75 * 0.25, epsilon = 1e-15);
        assert_eq!(t.a[0].at([0, 0, 0]), t.origin_a_diagonal);
        assert_eq!(t.a[3].at([0, 0, 0]), 0.0);
        assert_eq!(t.b[1].at([0, 0, 0]), 0.0);
        assert_relative_eq!(t.origin_c.unwrap(), -6.0 * 0.25f64.powf(-1.0), epsilon = 1e-12);
        let z = [0.5, -1.0, 1.5];
        assert_eq!(t.a[4].at([1, -2, 3]), eval_a(z, -1.0).unwrap()[0][2]);

        let coulomb = KernelSpec::new(-3.0, &g).unwrap();
        let t = tabulate_kernels(&g, &coulomb).unwrap();
        assert!(t.c.is_none());
        assert!(t.origin_c.is_none());
    }

    #[test]
    fn rejects_gamma_out_of_range() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        assert!(KernelSpec::new(0.0, &g).is_err());
        assert!(KernelSpec::new(-3.1, &g).is_err());
        assert!(KernelSpec::new(-3.0, &g).is_ok());
    }

    proptest! {
        #[test]
        fn projector_identities(
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0,
            gamma in -3.0f64..-0.01,
        ) {
            let v = [x, y, z];
            prop_assume!(norm_squared(v) > 1e-4);
            let a = eval_a(v, gamma).unwrap();
            let r = norm_squared(v).sqrt();
            let radial = r.powf(gamma + 2.0);
            let scale = radial.max(1.0);
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * v[j]).sum();
                prop_assert!(av.abs() <= 1e-12 * scale * r);
                for j in 0..3 {
                    prop_assert_eq!(a[i][j], a[j][i]);
                    // Projector squared equals itself.
                    let sq: f64 = (0..3).map(|k| a[i][k] * a[k][j]).sum::<f64>() / radial;
                    prop_assert!((sq - a[i][j]).abs() <= 1e-12 * scale);
                }
            }
            let trace = a[0][0] + a[1][1] + a[2][2];
            prop_assert!((trace - 2.0 * radial).abs() <= 1e-12 * scale);
        }

        #[test]
        fn homogeneity_and_oddness(
            x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0,
            lambda in 0.1f64..10.0, gamma in -3.0f64..-0.01,
        ) {
            let v = [x, y, z];
            prop_assume!(norm_squared(v) > 1e-4);
            let a = eval_a(v, gamma).unwrap();
            let al = eval_a(v.map(|c| c * lambda), gamma).unwrap();
            let factor = lambda.powf(gamma + 2.0);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((al[i][j] - factor * a[i][j]).abs() <= 1e-12 * al[i][j].abs().max(1e-300) + 1e-14 * factor);
                }
            }
            let b = eval_b(v, gamma).unwrap();
            let bm = eval_b(v.map(|c| -c), gamma).unwrap();
            for i in 0..3 {
                prop_assert_eq!(b[i], -bm[i]);
            }
        }
    }
}
