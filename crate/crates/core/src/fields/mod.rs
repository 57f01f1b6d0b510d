//! Periodic scalar and Hermitian fields on the flat torus, spectral
//! differentiation, normalized integration and a coordinate exterior-algebra
//! kernel.

mod forms;
mod grid;
pub mod io;
pub mod spectral;

pub use forms::{mutation, sigma2_by_wedge, volume_coefficient, Form};
pub use grid::TorusGrid;
pub use spectral::{engine, Deriv, Spectral};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FyError, Result};
use crate::symfunc::HermitianMatrix;

/// Real periodic function sampled on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(FyError::Invalid(format!(
                "field has {} samples, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FyError::Invalid(format!("non-finite sample at point {i}")));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        ScalarField {
            grid,
            data: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x¹, …, x^{2n})`.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.coordinates(i)))
            .collect();
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        ScalarField {
            grid: self.grid,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        ScalarField {
            grid: self.grid,
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn exp(&self) -> Self {
        self.map(f64::exp)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Translate by an integer number of grid cells per axis.
    pub fn translate(&self, shift: &[isize]) -> Self {
        let data = (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.data[self.grid.shifted(i, shift)])
            .collect();
        ScalarField {
            grid: self.grid,
            data,
        }
    }

    /// `∂f/∂z^j` or `∂f/∂z̄^j`.
    pub fn derivative(&self, d: Deriv) -> ComplexField {
        self.to_complex().derivative(d)
    }

    /// The field with its Nyquist modes removed; derivatives never see them.
    pub fn dealias(&self) -> Self {
        let data = engine(self.grid).dealias(&self.data);
        ScalarField::new(self.grid, data).expect("finite")
    }

    /// `(∂_{z^j} f)_j` for all `j`, sharing one forward transform.
    pub fn holomorphic_gradient(&self) -> Vec<ComplexField> {
        let sp = engine(self.grid);
        let c = sp.coefficients_for_derivative(&self.to_complex().data);
        (0..self.grid.dim())
            .map(|j| ComplexField {
                grid: self.grid,
                data: sp.apply(&c, &[Deriv::Z(j)]),
            })
            .collect()
    }
}

/// Complex-valued periodic field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: TorusGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(FyError::Invalid("sample count does not match grid".into()));
        }
        Ok(ComplexField { grid, data })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.data
    }

    pub fn derivative(&self, d: Deriv) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: engine(self.grid).derivative(&self.data, d),
        }
    }

    pub fn re(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn im(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }
}

/// Field of `n×n` Hermitian matrices; entry `(j,k)` of every point is stored
/// contiguously over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    grid: TorusGrid,
    entries: Vec<Vec<Complex64>>,
}

impl HermitianField {
    /// Builds from per-entry arrays, `entries[j * n + k]`, enforcing pointwise
    /// Hermitian symmetry by averaging with the conjugate transpose.
    pub fn from_entries(grid: TorusGrid, entries: Vec<Vec<Complex64>>) -> Result<Self> {
        let n = grid.dim();
        if entries.len() != n * n || entries.iter().any(|e| e.len() != grid.len()) {
            return Err(FyError::Invalid("Hermitian field has the wrong shape".into()));
        }
        let mut out = HermitianField { grid, entries };
        out.hermitize();
        Ok(out)
    }

    fn hermitize(&mut self) {
        let n = self.grid.dim();
        for j in 0..n {
            let d = &mut self.entries[j * n + j];
            d.iter_mut().for_each(|z| z.im = 0.0);
            for k in j + 1..n {
                let (lo, hi) = self.entries.split_at_mut(k * n + j);
                let a = &mut lo[j * n + k];
                let b = &mut hi[0];
                a.par_iter_mut().zip(b.par_iter_mut()).for_each(|(x, y)| {
                    let avg = 0.5 * (*x + y.conj());
                    *x = avg;
                    *y = avg.conj();
                });
            }
        }
    }

    pub fn constant(grid: TorusGrid, m: &HermitianMatrix) -> Self {
        let entries = m
            .to_row_major()
            .into_iter()
            .map(|z| vec![z; grid.len()])
            .collect();
        HermitianField { grid, entries }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, &HermitianMatrix::zeros(grid.dim()))
    }

    /// Samples `f(x)` returning a row-major `n×n` matrix.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> Vec<Complex64> + Sync) -> Result<Self> {
        let n = grid.dim();
        let pts: Vec<Vec<Complex64>> = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.coordinates(i)))
            .collect();
        if pts.iter().any(|p| p.len() != n * n) {
            return Err(FyError::Invalid("matrix function returned wrong size".into()));
        }
        let entries = (0..n * n)
            .map(|e| pts.iter().map(|p| p[e]).collect())
            .collect();
        Self::from_entries(grid, entries)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn entry(&self, j: usize, k: usize) -> &[Complex64] {
        &self.entries[j * self.dim() + k]
    }

    pub fn entries(&self) -> &[Vec<Complex64>] {
        &self.entries
    }

    /// Row-major matrix entries at one point.
    pub fn row_major_at(&self, idx: usize) -> Vec<Complex64> {
        self.entries.iter().map(|e| e[idx]).collect()
    }

    pub fn at(&self, idx: usize) -> HermitianMatrix {
        HermitianMatrix::from_row_major(self.dim(), &self.row_major_at(idx))
            .expect("stored field is Hermitian")
    }

    /// Pointwise `Σ cᵢ Aᵢ` with scalar-field weights.
    pub fn weighted_sum(terms: &[(&ScalarField, &HermitianField)]) -> Self {
        let h0 = terms[0].1;
        let grid = h0.grid;
        let entries = (0..h0.entries.len())
            .map(|e| {
                (0..grid.len())
                    .into_par_iter()
                    .map(|i| {
                        terms
                            .iter()
                            .map(|(w, h)| h.entries[e][i] * w.data[i])
                            .sum::<Complex64>()
                    })
                    .collect()
            })
            .collect();
        HermitianField { grid, entries }
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianField {
            grid: self.grid,
            entries: self
                .entries
                .iter()
                .map(|e| e.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &HermitianField) -> Self {
        HermitianField {
            grid: self.grid,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &HermitianField) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Largest entry modulus over the grid.
    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.iter())
            .fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// The real (1,1)-form `Σ A_{k̄j} i dz^j∧dz̄^k`.
    pub fn to_form(&self) -> Form {
        Form::from_hermitian(self)
    }

    /// Pointwise translation by integer grid shifts.
    pub fn translate(&self, shift: &[isize]) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                (0..self.grid.len())
                    .into_par_iter()
                    .map(|i| e[self.grid.shifted(i, shift)])
                    .collect()
            })
            .collect();
        HermitianField {
            grid: self.grid,
            entries,
        }
    }
}

/// `∂f/∂z^j` (or `∂f/∂z̄^j`) of a scalar field.
pub fn d_holo(f: &ScalarField, d: Deriv) -> ComplexField {
    f.derivative(d)
}

/// Complex Hessian `u_{k̄j} = ∂_j ∂_{k̄} u`, stored at entry `(j,k)`.
pub fn complex_hessian(u: &ScalarField) -> HermitianField {
    let grid = u.grid();
    let n = grid.dim();
    let sp = engine(grid);
    let c = sp.coefficients_for_derivative(&u.to_complex().data);
    let mut entries = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            entries.push(sp.apply(&c, &[Deriv::Z(j), Deriv::ZBar(k)]));
        }
    }
    HermitianField::from_entries(grid, entries).expect("shape is consistent")
}

/// `∫ f ω^n/n!` under the unit-volume normalization: the grid mean.
pub fn integrate(f: &ScalarField) -> f64 {
    // Chunked summation keeps the rounding error well below 1e-14 relative.
    let chunks: Vec<f64> = f.data.par_chunks(4096).map(|c| c.iter().sum()).collect();
    chunks.iter().sum::<f64>() / f.data.len() as f64
}

/// Complex-valued mean.
pub fn integrate_complex(f: &ComplexField) -> Complex64 {
    f.data.iter().sum::<Complex64>() / f.data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, np: usize) -> TorusGrid {
        TorusGrid::new(n, np).unwrap()
    }

    #[test]
    fn d_holo_of_sine() {
        let g = grid(2, 16);
        let u = ScalarField::from_fn(g, |x| x[0].sin());
        let du = d_holo(&u, Deriv::Z(0));
        let err = (0..g.len())
            .map(|i| (du.values()[i] - Complex64::new(0.5 * g.coordinate(i, 0).cos(), 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        // Imaginary axis: ∂_{z¹} sin(x²) = −(i/2) cos(x²).
        let v = ScalarField::from_fn(g, |x| x[1].sin());
        let dv = d_holo(&v, Deriv::Z(0));
        let err = (0..g.len())
            .map(|i| (dv.values()[i] - Complex64::new(0.0, -0.5 * g.coordinate(i, 1).cos())).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn d_holo_of_constant_is_zero() {
        let g = grid(2, 8);
        let c = ScalarField::constant(g, 1234.5);
        for d in [Deriv::Z(0), Deriv::ZBar(1)] {
            assert!(d_holo(&c, d).max_abs() < 1e-12);
        }
    }

    #[test]
    fn ddbar_of_cosine() {
        let g = grid(2, 16);
        let u = ScalarField::from_fn(g, |x| x[0].cos());
        let h = complex_hessian(&u);
        for i in 0..g.len() {
            let want = -0.25 * g.coordinate(i, 0).cos();
            assert!((h.entry(0, 0)[i].re - want).abs() < 1e-12);
            for (j, k) in [(0, 1), (1, 0), (1, 1)] {
                assert!(h.entry(j, k)[i].norm() < 1e-12);
            }
        }
        let c = complex_hessian(&ScalarField::constant(g, 3.0));
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn hessian_matches_analytic_multimode() {
        // u = cos(x¹ + 2x⁴) + 0.3 sin(x² − x³); ∂_j∂_k̄ e^{i m·x} = −(m_j^c)(m̄_k^c) e^{i m·x}/…
        let g = grid(2, 16);
        let modes: [([f64; 4], f64, bool); 2] = [
            ([1.0, 0.0, 0.0, 2.0], 1.0, true),
            ([0.0, 1.0, -1.0, 0.0], 0.3, false),
        ];
        let u = ScalarField::from_fn(g, |x| {
            modes
                .iter()
                .map(|(m, a, is_cos)| {
                    let ph: f64 = m.iter().zip(x).map(|(k, xi)| k * xi).sum();
                    if *is_cos {
                        a * ph.cos()
                    } else {
                        a * ph.sin()
                    }
                })
                .sum()
        });
        let h = complex_hessian(&u);
        for idx in [0, 77, 1234, 40000] {
            let x = g.coordinates(idx);
            for j in 0..2 {
                for k in 0..2 {
                    // For e^{iφ}: ∂_j → (i/2)(m_{2j} − i m_{2j+1}), ∂_k̄ → (i/2)(m_{2k} + i m_{2k+1}).
                    let mut want = Complex64::new(0.0, 0.0);
                    for (m, a, is_cos) in &modes {
                        let sj = Complex64::new(0.0, 0.5) * Complex64::new(m[2 * j], -m[2 * j + 1]);
                        let sk = Complex64::new(0.0, 0.5) * Complex64::new(m[2 * k], m[2 * k + 1]);
                        let ph: f64 = m.iter().zip(&x).map(|(a, b)| a * b).sum();
                        let e = Complex64::from_polar(1.0, ph);
                        // cos = (e + ē)/2, sin = (e − ē)/(2i); ē has symbols negated.
                        let s = sj * sk;
                        let term = if *is_cos {
                            0.5 * (s * e + s * e.conj())
                        } else {
                            (s * e - s * e.conj()) / Complex64::new(0.0, 2.0)
                        };
                        want += term * a;
                    }
                    assert!((h.entry(j, k)[idx] - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid(2, 8);
        assert!((integrate(&ScalarField::constant(g, 2.5)) - 2.5).abs() < 1e-15);
        assert!(integrate(&ScalarField::from_fn(g, |x| x[0].sin())).abs() < 1e-14);
        // Distinct modes are orthogonal; compare with a direct double loop.
        let f = ScalarField::from_fn(g, |x| (x[0] + x[2]).cos() * (2.0 * x[1]).sin());
        let direct: f64 = (0..g.len())
            .map(|i| {
                let x = g.coordinates(i);
                (x[0] + x[2]).cos() * (2.0 * x[1]).sin()
            })
            .sum::<f64>()
            / g.len() as f64;
        assert!(integrate(&f).abs() < 1e-14 && direct.abs() < 1e-14);
    }

    #[test]
    fn hermitian_field_is_exactly_hermitian() {
        let g = grid(2, 8);
        let u = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[3]).sin() * x[1].cos());
        let h = complex_hessian(&u);
        for i in 0..g.len() {
            assert_eq!(h.entry(0, 1)[i], h.entry(1, 0)[i].conj());
            assert_eq!(h.entry(0, 0)[i].im, 0.0);
        }
    }
}
