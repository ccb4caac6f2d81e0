//! Linear (non-periodic) convolution of grid fields with kernels sampled on
//! the difference lattice.
//!
//! A kernel is stored on the offsets `z = d h` with `d` in `[-(n-1), n-1]`
//! per axis. Convolution is done by zero padding both operands into a
//! circular buffer of length `2n` per axis, which is long enough that no
//! wrap-around term ever reaches the `n^3` output window.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LandauError, Result};
use crate::grid::{ScalarField, VelocityGrid};

/// Samples of a kernel on the `(2n-1)^3` difference lattice. The center
/// entry is the zero offset.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceField {
    grid: VelocityGrid,
    values: Vec<f64>,
}

impl DifferenceField {
    /// Edge length of the offset lattice, `2n - 1`.
    pub fn width(grid: &VelocityGrid) -> usize {
        2 * grid.n() - 1
    }

    pub fn from_values(grid: &VelocityGrid, values: Vec<f64>) -> Result<Self> {
        let w = Self::width(grid);
        if values.len() != w * w * w {
            return Err(LandauError::GridMismatch(format!(
                "difference lattice needs {} samples, got {}",
                w * w * w,
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(LandauError::NonFinite(idx));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `func(offset, z)` where `offset` is the integer offset and
    /// `z = offset * h`.
    pub fn sample<F>(grid: &VelocityGrid, mut func: F) -> Result<Self>
    where
        F: FnMut([i64; 3], [f64; 3]) -> f64,
    {
        let n = grid.n() as i64;
        let h = grid.spacing();
        let w = Self::width(grid);
        let mut values = Vec::with_capacity(w * w * w);
        for di in -(n - 1)..n {
            for dj in -(n - 1)..n {
                for dk in -(n - 1)..n {
                    let d = [di, dj, dk];
                    values.push(func(d, [di as f64 * h, dj as f64 * h, dk as f64 * h]));
                }
            }
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at integer offset `d`, each component in `[-(n-1), n-1]`.
    pub fn at(&self, d: [i64; 3]) -> f64 {
        let n = self.grid.n() as i64;
        let w = Self::width(&self.grid) as i64;
        let idx = ((d[0] + n - 1) * w + (d[1] + n - 1)) * w + (d[2] + n - 1);
        self.values[idx as usize]
    }
}

/// Transform of a kernel in the padded buffer.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    n: usize,
    data: Vec<Complex64>,
}

/// Transform of a zero-padded grid field.
#[derive(Debug, Clone)]
pub struct FieldSpectrum {
    n: usize,
    data: Vec<Complex64>,
}

/// Reusable FFT plans for one grid size.
#[derive(Clone)]
pub struct Convolver {
    grid: VelocityGrid,
    padded: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("n", &self.grid.n())
            .field("padded", &self.padded)
            .finish()
    }
}

/// Which lines of the padded cube carry nonzero data or are needed.
#[derive(Clone, Copy)]
enum Window {
    Full,
    Lower(usize),
}

impl Window {
    fn limit(self, padded: usize) -> usize {
        match self {
            Window::Full => padded,
            Window::Lower(n) => n,
        }
    }
}

impl Convolver {
    pub fn new(grid: &VelocityGrid) -> Self {
        let padded = 2 * grid.n();
        let mut planner = FftPlanner::<f64>::new();
        Self {
            grid: grid.clone(),
            padded,
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
        }
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    /// Applies a 1-D transform along `axis` on the lines whose other two
    /// indices lie inside the given windows.
    fn transform_axis(
        &self,
        data: &mut [Complex64],
        axis: usize,
        outer: [Window; 2],
        plan: &Arc<dyn Fft<f64>>,
    ) {
        let p = self.padded;
        let strides = [p * p, p, 1];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let lim0 = outer[0].limit(p);
        let lim1 = outer[1].limit(p);
        let mut line = vec![Complex64::new(0.0, 0.0); p];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let stride = strides[axis];
        for a in 0..lim0 {
            for b in 0..lim1 {
                let base = a * strides[others[0]] + b * strides[others[1]];
                if stride == 1 {
                    plan.process_with_scratch(&mut data[base..base + p], &mut scratch);
                } else {
                    for (t, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, value) in line.iter().enumerate() {
                        data[base + t * stride] = *value;
                    }
                }
            }
        }
    }

    /// Transform of a kernel sampled on the difference lattice.
    pub fn kernel_spectrum(&self, kernel: &DifferenceField) -> Result<KernelSpectrum> {
        self.grid.check_same(kernel.grid())?;
        let n = self.grid.n() as i64;
        let p = self.padded;
        let wrap = |d: i64| -> usize { d.rem_euclid(p as i64) as usize };
        let mut data = vec![Complex64::new(0.0, 0.0); p * p * p];
        for di in -(n - 1)..n {
            for dj in -(n - 1)..n {
                for dk in -(n - 1)..n {
                    let idx = (wrap(di) * p + wrap(dj)) * p + wrap(dk);
                    data[idx] = Complex64::new(kernel.at([di, dj, dk]), 0.0);
                }
            }
        }
        for axis in [2, 1, 0] {
            self.transform_axis(&mut data, axis, [Window::Full; 2], &self.forward);
        }
        Ok(KernelSpectrum {
            n: self.grid.n(),
            data,
        })
    }

    /// Transform of a field zero padded into the lower corner of the buffer.
    pub fn field_spectrum(&self, field: &ScalarField) -> Result<FieldSpectrum> {
        self.grid.check_same(field.grid())?;
        field.check_finite()?;
        let n = self.grid.n();
        let p = self.padded;
        let mut data = vec![Complex64::new(0.0, 0.0); p * p * p];
        for (idx, &v) in field.values().iter().enumerate() {
            let (i, j, k) = self.grid.unravel(idx);
            data[(i * p + j) * p + k] = Complex64::new(v, 0.0);
        }
        // Along k only the lines with i, j < n are nonzero; along j only i < n.
        self.transform_axis(&mut data, 2, [Window::Lower(n), Window::Lower(n)], &self.forward);
        self.transform_axis(&mut data, 1, [Window::Lower(n), Window::Full], &self.forward);
        self.transform_axis(&mut data, 0, [Window::Full, Window::Full], &self.forward);
        Ok(FieldSpectrum { n, data })
    }

    /// Inverse transform restricted to the output window. Returns the real
    /// and imaginary parts on the grid, scaled by `h^3`.
    fn inverse_window(&self, mut data: Vec<Complex64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n();
        let p = self.padded;
        self.transform_axis(&mut data, 0, [Window::Full, Window::Full], &self.inverse);
        self.transform_axis(&mut data, 1, [Window::Lower(n), Window::Full], &self.inverse);
        self.transform_axis(&mut data, 2, [Window::Lower(n), Window::Lower(n)], &self.inverse);
        let scale = self.grid.cell_volume() / (p * p * p) as f64;
        let mut re = vec![0.0; self.grid.len()];
        let mut im = vec![0.0; self.grid.len()];
        for idx in 0..self.grid.len() {
            let (i, j, k) = self.grid.unravel(idx);
            let c = data[(i * p + j) * p + k];
            re[idx] = c.re * scale;
            im[idx] = c.im * scale;
        }
        (re, im)
    }

    /// `h^3 sum_m K(v_k - v_m) f_m` from precomputed spectra.
    pub fn apply(&self, field: &FieldSpectrum, kernel: &KernelSpectrum) -> Result<Vec<f64>> {
        self.check_spectra(field, kernel)?;
        let data = field
            .data
            .iter()
            .zip(&kernel.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(self.inverse_window(data).0)
    }

    /// Two real convolutions with one complex inverse transform.
    pub fn apply_pair(
        &self,
        field: &FieldSpectrum,
        first: &KernelSpectrum,
        second: &KernelSpectrum,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_spectra(field, first)?;
        self.check_spectra(field, second)?;
        let i = Complex64::new(0.0, 1.0);
        let data = field
            .data
            .iter()
            .zip(first.data.iter().zip(&second.data))
            .map(|(f, (k1, k2))| f * (k1 + i * k2))
            .collect();
        Ok(self.inverse_window(data))
    }

    fn check_spectra(&self, field: &FieldSpectrum, kernel: &KernelSpectrum) -> Result<()> {
        if field.n != self.grid.n() || kernel.n != self.grid.n() {
            return Err(LandauError::GridMismatch(
                "spectrum built for a different grid size".into(),
            ));
        }
        Ok(())
    }
}

/// One-off convolution of `field` with `kernel`.
pub fn convolve(field: &ScalarField, kernel: &DifferenceField) -> Result<ScalarField> {
    field.grid().check_same(kernel.grid())?;
    let conv = Convolver::new(field.grid());
    let spectrum = conv.kernel_spectrum(kernel)?;
    let fs = conv.field_spectrum(field)?;
    ScalarField::from_values(field.grid(), conv.apply(&fs, &spectrum)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(field: &ScalarField, kernel: &DifferenceField) -> Vec<f64> {
        let g = field.grid();
        let h3 = g.cell_volume();
        (0..g.len())
            .map(|a| {
                let (ai, aj, ak) = g.unravel(a);
                let mut acc = 0.0;
                for b in 0..g.len() {
                    let (bi, bj, bk) = g.unravel(b);
                    let d = [
                        ai as i64 - bi as i64,
                        aj as i64 - bj as i64,
                        ak as i64 - bk as i64,
                    ];
                    acc += kernel.at(d) * field.values()[b];
                }
                acc * h3
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum_on_random_data() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kernel =
            DifferenceField::sample(&g, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let f = ScalarField::from_values(&g, (0..g.len()).map(|_| rng.gen::<f64>()).collect())
            .unwrap();
        let fast = convolve(&f, &kernel).unwrap();
        let slow = direct(&f, &kernel);
        let scale = slow.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = fast
            .values()
            .iter()
            .zip(&slow)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err / scale <= 1e-12, "{}", err / scale);
    }

    #[test]
    fn pair_matches_two_singles() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k1 = DifferenceField::sample(&g, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let k2 = DifferenceField::sample(&g, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let f = ScalarField::from_values(&g, (0..g.len()).map(|_| rng.gen::<f64>()).collect())
            .unwrap();
        let conv = Convolver::new(&g);
        let fs = conv.field_spectrum(&f).unwrap();
        let s1 = conv.kernel_spectrum(&k1).unwrap();
        let s2 = conv.kernel_spectrum(&k2).unwrap();
        let (p1, p2) = conv.apply_pair(&fs, &s1, &s2).unwrap();
        let o1 = conv.apply(&fs, &s1).unwrap();
        let o2 = conv.apply(&fs, &s2).unwrap();
        for idx in 0..g.len() {
            assert!((p1[idx] - o1[idx]).abs() <= 1e-12);
            assert!((p2[idx] - o2[idx]).abs() <= 1e-12);
        }
    }

    #[test]
    fn point_mass_reproduces_kernel() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let kernel = DifferenceField::sample(&g, |d, _| {
            (d[0] * 3 + d[1] * 5 - d[2] * 7) as f64 * 0.1 + 1.0
        })
        .unwrap();
        let mut f = ScalarField::zeros(&g);
        let src = g.index(2, 5, 3);
        let m = 1.7;
        f.values_mut()[src] = m / g.cell_volume();
        let out = convolve(&f, &kernel).unwrap();
        for idx in 0..g.len() {
            let (i, j, k) = g.unravel(idx);
            let d = [i as i64 - 2, j as i64 - 5, k as i64 - 3];
            let expected = m * kernel.at(d);
            assert!((out.values()[idx] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn unit_kernel_gives_total_mass() {
        let g = VelocityGrid::new(8, 3.0).unwrap();
        let kernel = DifferenceField::sample(&g, |_, _| 1.0).unwrap();
        let f = g.sample(|v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp());
        let total = crate::grid::integrate(&f).unwrap();
        let out = convolve(&f, &kernel).unwrap();
        for v in out.values() {
            assert!((v - total).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn rejects_grid_mismatch() {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let other = VelocityGrid::new(8, 3.0).unwrap();
        let kernel = DifferenceField::sample(&other, |_, _| 1.0).unwrap();
        let f = ScalarField::zeros(&g);
        assert!(matches!(
            convolve(&f, &kernel),
            Err(LandauError::GridMismatch(_))
        ));
    }
}
