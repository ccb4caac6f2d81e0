//! Cell-centered velocity grid on `[-L, L]^3`, midpoint quadrature and
//! central-difference stencils.
//!
//! Nodes sit at `v_k = -L + (k + 1/2) h` along each axis, so no node ever
//! coincides with the origin and the node set is symmetric under `v -> -v`.
//! Fields are stored in lexicographic `(i, j, k)` order with `k` fastest.

use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};

const MIN_STENCIL_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    n: usize,
    extent: f64,
    spacing: f64,
    axis: Vec<f64>,
}

impl VelocityGrid {
    /// Builds an `n^3` grid covering `[-extent, extent]^3`.
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < MIN_STENCIL_SIZE {
            return Err(LandauError::GridTooCoarse(n));
        }
        Self::new_relaxed(n, extent)
    }

    /// Same as [`VelocityGrid::new`] without the minimum-size check. Only the
    /// evenness and extent conditions are enforced.
    pub fn new_relaxed(n: usize, extent: f64) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(LandauError::OddGridSize(n));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(LandauError::InvalidExtent(extent));
        }
        let spacing = 2.0 * extent / n as f64;
        // Written as a half-integer multiple of h so that the node set is
        // exactly symmetric in floating point.
        let axis = (0..n)
            .map(|k| (k as f64 + 0.5 - 0.5 * n as f64) * spacing)
            .collect();
        Ok(Self {
            n,
            extent,
            spacing,
            axis,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// Number of nodes, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        (i, j, k)
    }

    #[inline]
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unravel(idx);
        [self.axis[i], self.axis[j], self.axis[k]]
    }

    /// Index of the node obtained by reflecting through the origin.
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        let (i, j, k) = self.unravel(idx);
        let m = self.n - 1;
        self.index(m - i, m - j, m - k)
    }

    /// `|v|^2` at every node.
    pub fn speed_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let v = self.node(idx);
                v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
            })
            .collect()
    }

    /// `<v>^s = (1 + |v|^2)^{s/2}` at every node.
    pub fn bracket_power(&self, s: f64) -> Vec<f64> {
        self.speed_squared()
            .into_iter()
            .map(|v2| (1.0 + v2).powf(0.5 * s))
            .collect()
    }

    /// Samples `func(v)` at every node.
    pub fn sample<F: Fn([f64; 3]) -> f64>(&self, func: F) -> ScalarField {
        let values = (0..self.len()).map(|idx| func(self.node(idx))).collect();
        ScalarField::from_values(self, values).expect("length matches by construction")
    }

    pub fn same_as(&self, other: &VelocityGrid) -> bool {
        self.n == other.n && self.extent == other.extent
    }

    pub(crate) fn check_same(&self, other: &VelocityGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(LandauError::GridMismatch(format!(
                "n = {} / L = {} versus n = {} / L = {}",
                self.n, self.extent, other.n, other.extent
            )))
        }
    }
}

/// Pairwise summation with a fixed split tree, so the result only depends on
/// the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `values[i] * weights[i]`.
pub fn pairwise_dot(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let products: Vec<f64> = values.iter().zip(weights).map(|(a, b)| a * b).collect();
    pairwise_sum(&products)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: VelocityGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &VelocityGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &VelocityGrid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &VelocityGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LandauError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(LandauError::NonFinite(idx)),
            None => Ok(()),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, func: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| func(v)).collect(),
        }
    }

    /// Pointwise product with a weight vector of the same length.
    pub fn weighted(&self, weights: &[f64]) -> Self {
        debug_assert_eq!(weights.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(weights).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: VelocityGrid,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: &VelocityGrid) -> Self {
        let z = vec![0.0; grid.len()];
        Self {
            grid: grid.clone(),
            comps: [z.clone(), z.clone(), z],
        }
    }

    pub fn from_components(grid: &VelocityGrid, comps: [Vec<f64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(LandauError::GridMismatch(
                "vector component length differs from grid size".into(),
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            comps,
        })
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    /// `|F|^2` at every node.
    pub fn norm_squared(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|idx| {
                let f = self.at(idx);
                f[0] * f[0] + f[1] * f[1] + f[2] * f[2]
            })
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// Symmetric 3x3 matrix per node, stored as `[xx, yy, zz, xy, xz, yz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrixField {
    grid: VelocityGrid,
    comps: [Vec<f64>; 6],
}

/// Position of `(row, col)` in the packed symmetric layout.
#[inline]
pub fn sym_slot(row: usize, col: usize) -> usize {
    match (row.min(col), row.max(col)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => unreachable!("index out of range for 3x3"),
    }
}

impl SymMatrixField {
    pub fn from_components(grid: &VelocityGrid, comps: [Vec<f64>; 6]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(LandauError::GridMismatch(
                "matrix component length differs from grid size".into(),
            ));
        }
        if let Some(idx) = comps
            .iter()
            .flat_map(|c| c.iter().enumerate())
            .find(|(_, v)| !v.is_finite())
            .map(|(i, _)| i)
        {
            return Err(LandauError::NonFinite(idx));
        }
        Ok(Self {
            grid: grid.clone(),
            comps,
        })
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn component(&self, row: usize, col: usize) -> &[f64] {
        &self.comps[sym_slot(row, col)]
    }

    pub fn packed(&self, idx: usize) -> [f64; 6] {
        std::array::from_fn(|s| self.comps[s][idx])
    }

    pub fn matrix(&self, idx: usize) -> [[f64; 3]; 3] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.comps[sym_slot(r, c)][idx]))
    }

    /// `xi^T M(v) xi` at one node.
    pub fn quadratic_form(&self, idx: usize, xi: [f64; 3]) -> f64 {
        let m = self.matrix(idx);
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                acc += m[r][c] * xi[r] * xi[c];
            }
        }
        acc
    }
}

/// Midpoint quadrature `h^3 * sum_k field_k`.
pub fn integrate(field: &ScalarField) -> Result<f64> {
    field.check_finite()?;
    Ok(integrate_values(&field.grid, &field.values))
}

/// Midpoint quadrature of a raw node vector on `grid`.
///
/// Each node is first paired with its mirror image `-v` (index `len-1-i`),
/// so the quadrature of an odd field is exactly zero.
pub fn integrate_values(grid: &VelocityGrid, values: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    let len = values.len();
    let folded: Vec<f64> = (0..len / 2)
        .map(|i| values[i] + values[len - 1 - i])
        .collect();
    grid.cell_volume() * pairwise_sum(&folded)
}

/// Central difference along one axis with zero ghost values outside the box.
pub(crate) fn central_difference(grid: &VelocityGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n;
    let stride = match axis {
        0 => n * n,
        1 => n,
        _ => 1,
    };
    let inv = 0.5 / grid.spacing;
    let mut out = vec![0.0; values.len()];
    for (idx, slot) in out.iter_mut().enumerate() {
        let (i, j, k) = grid.unravel(idx);
        let pos = [i, j, k][axis];
        let fwd = if pos + 1 < n { values[idx + stride] } else { 0.0 };
        let bwd = if pos > 0 { values[idx - stride] } else { 0.0 };
        *slot = (fwd - bwd) * inv;
    }
    out
}

/// Second-order central gradient, zero extension outside the box.
pub fn gradient(field: &ScalarField) -> Result<VectorField> {
    field.check_finite()?;
    let g = &field.grid;
    Ok(VectorField {
        grid: g.clone(),
        comps: [
            central_difference(g, &field.values, 0),
            central_difference(g, &field.values, 1),
            central_difference(g, &field.values, 2),
        ],
    })
}

/// Second-order central divergence, zero extension outside the box.
pub fn divergence(vf: &VectorField) -> Result<ScalarField> {
    let g = &vf.grid;
    let mut values = vec![0.0; g.len()];
    for axis in 0..3 {
        if let Some(idx) = vf.comps[axis].iter().position(|v| !v.is_finite()) {
            return Err(LandauError::NonFinite(idx));
        }
        let d = central_difference(g, &vf.comps[axis], axis);
        for (acc, di) in values.iter_mut().zip(d) {
            *acc += di;
        }
    }
    Ok(ScalarField {
        grid: g.clone(),
        values,
    })
}

/// `integral |grad u|^2` for a raw node vector.
pub(crate) fn gradient_energy(grid: &VelocityGrid, values: &[f64]) -> f64 {
    let mut sq = vec![0.0; values.len()];
    for axis in 0..3 {
        for (acc, d) in sq.iter_mut().zip(central_difference(grid, values, axis)) {
            *acc += d * d;
        }
    }
    integrate_values(grid, &sq)
}
