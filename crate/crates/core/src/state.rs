//! Distribution states, conserved quantities, entropy and weighted norms.

use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};
use crate::grid::{gradient_energy, integrate_values, ScalarField, VelocityGrid};

/// Relative tolerance for negative values: `f >= -NEGATIVITY_TOL * max f`.
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// Values below this floor contribute nothing to the entropy.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// A nonnegative density on the grid at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionState {
    values: ScalarField,
    time: f64,
    /// Set when the datum is not well contained in the box.
    pub support_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedQuantities {
    pub mass: f64,
    pub momentum: [f64; 3],
    /// `integral f |v|^2 / 2`.
    pub energy: f64,
    /// `integral f log f`.
    pub entropy: f64,
}

impl DistributionState {
    pub fn new(values: ScalarField, time: f64) -> Result<Self> {
        Self::build(values, time, true)
    }

    /// Solver output with clamping disabled: undershoots are kept as they are.
    pub(crate) fn unclamped(values: ScalarField, time: f64) -> Result<Self> {
        Self::build(values, time, false)
    }

    fn build(values: ScalarField, time: f64, check_sign: bool) -> Result<Self> {
        values.check_finite()?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(LandauError::InvalidParameter(format!(
                "state time must be finite and nonnegative, got {time}"
            )));
        }
        let max = values.values().iter().fold(0.0f64, |a, &v| a.max(v));
        let tolerance = NEGATIVITY_TOL * max;
        let negative = values.values().iter().enumerate().find(|(_, &v)| v < -tolerance);
        if let (true, Some((node, &value))) = (check_sign, negative) {
            return Err(LandauError::NegativeDensity {
                node,
                value,
                tolerance,
            });
        }
        let mass = integrate_values(values.grid(), values.values());
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(LandauError::InvalidMass(mass));
        }
        Ok(Self {
            values,
            time,
            support_warning: false,
        })
    }

    pub fn grid(&self) -> &VelocityGrid {
        self.values.grid()
    }

    pub fn field(&self) -> &ScalarField {
        &self.values
    }

    pub fn values(&self) -> &[f64] {
        self.values.values()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// The same density multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::new(self.values.scaled(factor), self.time)?;
        out.support_warning = self.support_warning;
        Ok(out)
    }
}

/// `m (2 pi T)^{-3/2} exp(-|v-u|^2 / (2T))` sampled at the nodes.
pub fn maxwellian(
    grid: &VelocityGrid,
    mass: f64,
    temperature: f64,
    bulk: [f64; 3],
) -> Result<DistributionState> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(LandauError::InvalidMass(mass));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(LandauError::InvalidParameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let field = grid.sample(|v| maxwellian_density(v, mass, temperature, bulk));
    let mut state = DistributionState::new(field, 0.0)?;
    let speed = (bulk[0] * bulk[0] + bulk[1] * bulk[1] + bulk[2] * bulk[2]).sqrt();
    state.support_warning = speed + 3.0 * temperature.sqrt() > 0.5 * grid.extent();
    Ok(state)
}

/// Pointwise Maxwellian density.
pub fn maxwellian_density(v: [f64; 3], mass: f64, temperature: f64, bulk: [f64; 3]) -> f64 {
    let d2 = (v[0] - bulk[0]).powi(2) + (v[1] - bulk[1]).powi(2) + (v[2] - bulk[2]).powi(2);
    mass * (2.0 * std::f64::consts::PI * temperature).powf(-1.5) * (-d2 / (2.0 * temperature)).exp()
}

/// Sum of two Maxwellians with the given `(mass, temperature, bulk)` pairs.
pub fn two_maxwellians(
    grid: &VelocityGrid,
    first: (f64, f64, [f64; 3]),
    second: (f64, f64, [f64; 3]),
) -> Result<DistributionState> {
    let a = maxwellian(grid, first.0, first.1, first.2)?;
    let b = maxwellian(grid, second.0, second.1, second.2)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x + y)
        .collect();
    let mut state = DistributionState::new(ScalarField::from_values(grid, values)?, 0.0)?;
    state.support_warning = a.support_warning || b.support_warning;
    Ok(state)
}

/// `0 log 0 = 0` with a hard floor.
#[inline]
pub(crate) fn entropy_density(f: f64) -> f64 {
    if f < ENTROPY_FLOOR {
        0.0
    } else {
        f * f.ln()
    }
}

/// Mass, momentum, energy and entropy by midpoint quadrature.
pub fn moments(state: &DistributionState) -> Result<ConservedQuantities> {
    Ok(moments_of(state.grid(), state.values()))
}

pub(crate) fn moments_of(grid: &VelocityGrid, f: &[f64]) -> ConservedQuantities {
    let n = f.len();
    let mut px = Vec::with_capacity(n);
    let mut py = Vec::with_capacity(n);
    let mut pz = Vec::with_capacity(n);
    let mut en = Vec::with_capacity(n);
    let mut ent = Vec::with_capacity(n);
    for (idx, &fv) in f.iter().enumerate() {
        let v = grid.node(idx);
        px.push(fv * v[0]);
        py.push(fv * v[1]);
        pz.push(fv * v[2]);
        en.push(0.5 * fv * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
        ent.push(entropy_density(fv));
    }
    ConservedQuantities {
        mass: integrate_values(grid, f),
        momentum: [
            integrate_values(grid, &px),
            integrate_values(grid, &py),
            integrate_values(grid, &pz),
        ],
        energy: integrate_values(grid, &en),
        entropy: integrate_values(grid, &ent),
    }
}

/// `integral f |log f|`.
pub fn entropy_abs(state: &DistributionState) -> f64 {
    let vals: Vec<f64> = state
        .values()
        .iter()
        .map(|&f| entropy_density(f).abs())
        .collect();
    integrate_values(state.grid(), &vals)
}

/// `M_s(f) = integral |f| <v>^s`.
pub fn weighted_l1(state: &DistributionState, s: f64) -> f64 {
    weighted_l1_of(state.grid(), state.values(), s)
}

pub(crate) fn weighted_l1_of(grid: &VelocityGrid, f: &[f64], s: f64) -> f64 {
    let w = grid.bracket_power(s);
    let vals: Vec<f64> = f.iter().zip(&w).map(|(a, b)| a.abs() * b).collect();
    integrate_values(grid, &vals)
}

/// `||f||_{L^2_s} = (integral f^2 <v>^{2s})^{1/2}`.
pub fn weighted_l2(state: &DistributionState, s: f64) -> f64 {
    weighted_l2_squared_of(state.grid(), state.values(), s).sqrt()
}

pub(crate) fn weighted_l2_squared_of(grid: &VelocityGrid, f: &[f64], s: f64) -> f64 {
    let w = grid.bracket_power(2.0 * s);
    let vals: Vec<f64> = f.iter().zip(&w).map(|(a, b)| a * a * b).collect();
    integrate_values(grid, &vals)
}

/// `integral |grad(<v>^beta f)|^2`.
pub fn weighted_h1_seminorm(state: &DistributionState, beta: f64) -> f64 {
    weighted_h1_seminorm_of(state.grid(), state.values(), beta)
}

pub(crate) fn weighted_h1_seminorm_of(grid: &VelocityGrid, f: &[f64], beta: f64) -> f64 {
    let w = grid.bracket_power(beta);
    let weighted: Vec<f64> = f.iter().zip(&w).map(|(a, b)| a * b).collect();
    gradient_energy(grid, &weighted)
}

/// `<v> = (1 + |v|^2)^{1/2}`.
pub fn bracket(v: [f64; 3]) -> f64 {
    (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn reference_grid() -> VelocityGrid {
        VelocityGrid::new(32, 8.0).unwrap()
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let g = reference_grid();
        let f = g.sample(|v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp() / (2.0 * PI).powf(1.5));
        assert_relative_eq!(crate::grid::integrate(&f).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn maxwellian_moments() {
        let g = reference_grid();
        let m = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
        let q = moments(&m).unwrap();
        assert_relative_eq!(q.mass, 1.0, epsilon = 1e-6);
        assert!(q.momentum.iter().all(|p| p.abs() <= 1e-12));
        assert_relative_eq!(q.energy, 1.5, epsilon = 1e-6);
        let h = -1.5 * (2.0 * PI).ln() - 1.5;
        assert_relative_eq!(h, -4.25681, epsilon = 1e-5);
        assert_relative_eq!(q.entropy, h, epsilon = 1e-6);
        assert!(!m.support_warning);
    }

    #[test]
    fn shifted_maxwellian_momentum() {
        let g = reference_grid();
        let m = maxwellian(&g, 1.0, 1.0, [1.0, 0.0, 0.0]).unwrap();
        let q = moments(&m).unwrap();
        assert_relative_eq!(q.momentum[0], 1.0, epsilon = 1e-6);
        assert!(q.momentum[1].abs() < 1e-12);
    }

    #[test]
    fn support_warning_for_wide_data() {
        let g = VelocityGrid::new(16, 4.0).unwrap();
        let m = maxwellian(&g, 1.0, 1.0, [1.5, 0.0, 0.0]).unwrap();
        assert!(m.support_warning);
    }

    #[test]
    fn scaled_entropy_identity() {
        let g = VelocityGrid::new(16, 6.0).unwrap();
        let m = maxwellian(&g, 0.8, 1.3, [0.2, 0.0, -0.1]).unwrap();
        let a = moments(&m).unwrap();
        let b = moments(&m.scaled(2.0).unwrap()).unwrap();
        assert_relative_eq!(b.mass, 2.0 * a.mass, epsilon = 1e-14);
        assert_relative_eq!(b.entropy, 2.0 * a.entropy + 2.0 * a.mass * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_cell_state() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let mut f = ScalarField::zeros(&g);
        f.values_mut()[100] = 1.0 / g.cell_volume();
        let s = DistributionState::new(f, 0.0).unwrap();
        assert_relative_eq!(moments(&s).unwrap().mass, 1.0, epsilon = 1e-15);

        let mut f = ScalarField::zeros(&g);
        f.values_mut()[100] = 1.0;
        let s = DistributionState::new(f, 0.0).unwrap();
        assert_relative_eq!(weighted_l2(&s, 0.0), g.cell_volume().sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_negative_and_empty() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let mut f = ScalarField::constant(&g, 1.0);
        f.values_mut()[3] = -1e-6;
        assert!(matches!(
            DistributionState::new(f, 0.0),
            Err(LandauError::NegativeDensity { node: 3, .. })
        ));
        let mut f = ScalarField::constant(&g, 1.0);
        f.values_mut()[3] = -1e-13;
        assert!(DistributionState::new(f, 0.0).is_ok());
        assert!(matches!(
            DistributionState::new(ScalarField::zeros(&g), 0.0),
            Err(LandauError::InvalidMass(_))
        ));
    }

    #[test]
    fn weighted_moments() {
        let g = reference_grid();
        let m = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
        let q = moments(&m).unwrap();
        assert_relative_eq!(weighted_l1(&m, 0.0), q.mass, epsilon = 1e-15);
        assert_relative_eq!(weighted_l1(&m, 2.0), q.mass + 2.0 * q.energy, epsilon = 1e-13);
        assert_relative_eq!(weighted_l1(&m, 2.0), 4.0, epsilon = 1e-6);
        assert!(weighted_l1(&m, 1.0) >= weighted_l1(&m, 0.5));
    }

    #[test]
    fn maxwellian_l2_norm() {
        let g = reference_grid();
        let m = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
        let exact = (4.0 * PI).powf(-0.75);
        assert_relative_eq!(weighted_l2(&m, 0.0), exact, epsilon = 1e-8);
        assert!(weighted_l2(&m, 1.0) >= weighted_l2(&m, 0.0));
        // Direct versus weighted-then-plain evaluation.
        let w = g.bracket_power(1.5);
        let g_field = m.field().weighted(&w);
        let gs = DistributionState::new(g_field, 0.0).unwrap();
        let a = weighted_l2(&m, 1.5).powi(2);
        let b = weighted_l2(&gs, 0.0).powi(2);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    /// `integral |grad M|^2` for the unit Maxwellian, and the same integral
    /// with the gradient replaced by the central difference quotient of step
    /// `h`. Both follow from `integral M(v+a) M(v-a) = (4 pi)^{-3/2} e^{-|a|^2}`.
    fn gaussian_gradient_energy(h: Option<f64>) -> f64 {
        let base = 1.5 * (4.0 * PI).powf(-1.5);
        match h {
            None => base,
            Some(h) => base * (1.0 - (-h * h).exp()) / (h * h),
        }
    }

    #[test]
    fn maxwellian_gradient_energy() {
        let g = reference_grid();
        let m = maxwellian(&g, 1.0, 1.0, [0.0; 3]).unwrap();
        let discrete = gaussian_gradient_energy(Some(g.spacing()));
        assert_relative_eq!(weighted_h1_seminorm(&m, 0.0), discrete, max_relative = 1e-4);

        // Second-order convergence to the continuum value.
        let exact = gaussian_gradient_energy(None);
        let coarse = weighted_h1_seminorm(&maxwellian(&VelocityGrid::new(24, 6.0).unwrap(), 1.0, 1.0, [0.0; 3]).unwrap(), 0.0);
        let fine = weighted_h1_seminorm(&maxwellian(&VelocityGrid::new(48, 6.0).unwrap(), 1.0, 1.0, [0.0; 3]).unwrap(), 0.0);
        let ratio = (coarse - exact) / (fine - exact);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn h1_weight_shift_consistency() {
        let g = VelocityGrid::new(16, 6.0).unwrap();
        let m = maxwellian(&g, 1.0, 1.0, [0.3, 0.0, 0.0]).unwrap();
        let alpha = 2.75;
        let gamma = -2.5;
        let gfield = m.field().weighted(&g.bracket_power(alpha));
        let gs = DistributionState::new(gfield, 0.0).unwrap();
        let a = weighted_h1_seminorm(&m, alpha + gamma / 2.0);
        let b = weighted_h1_seminorm(&gs, gamma / 2.0);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn constant_interior_has_small_seminorm() {
        let g = VelocityGrid::new(16, 4.0).unwrap();
        let f = g.sample(|v| if v.iter().all(|c| c.abs() < 2.0) { 1.0 } else { 0.0 });
        let s = DistributionState::new(f, 0.0).unwrap();
        // Only the two nodes on either side of each plateau edge contribute,
        // each with a unit squared difference quotient.
        let lines = 3.0 * 8.0 * 8.0;
        let expected = lines * 4.0 * g.cell_volume();
        assert_relative_eq!(weighted_h1_seminorm(&s, 0.0), expected, epsilon = 1e-12);
    }
}
