#![allow(dead_code)]

use fuyau_core::model::ProblemData;
use fuyau_core::{HermitianField, HermitianMatrix, ScalarField, TorusGrid};
use num_complex::Complex64;

/// A non-diagonal constant Kähler metric.
pub fn skew_metric(n: usize) -> HermitianMatrix {
    let mut rows = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        rows[j * n + j] = Complex64::new(1.0 + 0.25 * j as f64, 0.0);
    }
    rows[1] = Complex64::new(0.2, 0.1);
    rows[n] = Complex64::new(0.2, -0.1);
    HermitianMatrix::from_row_major(n, &rows).unwrap()
}

/// `ρ` built from a constant part plus first Fourier modes, so that products
/// with other low-mode fields stay resolved.
pub fn low_mode_rho(grid: TorusGrid, amp: f64) -> HermitianField {
    let n = grid.dim();
    HermitianField::from_fn(grid, |x| {
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            m[j * n + j] = Complex64::new(0.3 / (j + 1) as f64 + amp * (x[2 * j]).cos(), 0.0);
        }
        let off = Complex64::new(amp * x[1].sin(), 0.5 * amp * x[2].cos());
        m[1] = off;
        m[n] = off.conj();
        m
    })
    .unwrap()
}

pub fn low_mode_field(grid: TorusGrid, amp: f64, phase: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        amp * ((x[0] + phase).sin() + 0.5 * (x[1] - x[2]).cos() + 0.3 * (x[3] + 2.0 * phase).cos())
    })
}

pub fn problem(n: usize, big_n: usize, alpha: f64, m0: f64) -> ProblemData {
    let grid = TorusGrid::new(n, big_n).unwrap();
    ProblemData::new(
        skew_metric(n),
        low_mode_rho(grid, 0.2),
        low_mode_field(grid, 0.5, 0.3),
        alpha,
        m0,
    )
    .unwrap()
}
