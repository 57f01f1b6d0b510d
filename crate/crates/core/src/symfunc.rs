//! Elementary symmetric functions of eigenvalues, the Γ₂ cone, and the
//! first and second derivatives of `σ₂^{1/2}` as a function of a Hermitian
//! matrix measured against a background metric.
//!
//! Matrix conventions used throughout the crate:
//!
//! * a covariant Hermitian form `A_{k̄j}` is stored as the matrix `A[j][k]`;
//! * a contravariant tensor `T^{jk̄}` is stored as the matrix `C` for which the
//!   full contraction with a covariant form is `tr(C·A)` and the contraction
//!   with a gradient `v_j = ∂_j u` is `v† C v`.
//!
//! With these conventions the background inverse `g^{jk̄}` is simply `g⁻¹`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{FyError, Result};

/// Hermitian symmetry is accepted up to this multiple of the entry scale.
const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalues closer than this (relative) use the analytic limit of the
/// divided difference in [`second_derivative_form`].
const TIE_TOL: f64 = 1e-8;

/// Eigenvalues `λ₁ ≥ … ≥ λₙ`, `n ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    /// Builds a spectrum, sorting the values into non-increasing order.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(FyError::Domain(format!(
                "spectrum needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FyError::Domain("non-finite eigenvalue".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn largest(&self) -> f64 {
        self.0[0]
    }

    pub fn smallest(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// A Hermitian `n×n` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Wraps `m`, checking Hermitian symmetry. The stored matrix is the exact
    /// average `(m + m†)/2`.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(FyError::Domain("matrix is not square".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let adj = m.adjoint();
        let defect = (&m - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > HERMITIAN_TOL * scale {
            return Err(FyError::Domain(format!(
                "matrix is not Hermitian (defect {defect:e})"
            )));
        }
        Ok(HermitianMatrix((m + adj).scale(0.5)))
    }

    /// Row-major entries; `entries[j * n + k]` is `A[j][k]`.
    pub fn from_row_major(n: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(FyError::Domain(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        HermitianMatrix(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let flat: Vec<Complex64> = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)))
            .collect();
        Self::from_row_major(n, &flat)
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.0[(j, k)]
    }

    pub fn to_row_major(&self) -> Vec<Complex64> {
        let n = self.dim();
        (0..n * n).map(|i| self.0[(i / n, i % n)]).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(self.0.scale(s))
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, s: f64, other: &HermitianMatrix) -> Self {
        HermitianMatrix(&self.0 + other.0.scale(s))
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &DMatrix<Complex64>) -> Self {
        let m = u * &self.0 * u.adjoint();
        HermitianMatrix((&m + m.adjoint()).scale(0.5))
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Real eigenvalues, sorted non-increasing.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// A positive-definite background metric with its inverse and inverse
/// square root precomputed.
#[derive(Debug, Clone)]
pub struct Metric {
    g: HermitianMatrix,
    inv: DMatrix<Complex64>,
    inv_sqrt: DMatrix<Complex64>,
    det: f64,
}

impl Metric {
    pub fn new(g: HermitianMatrix) -> Result<Self> {
        let eig = SymmetricEigen::new(g.0.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(FyError::Domain(format!(
                "metric is not positive definite (smallest eigenvalue {min:e})"
            )));
        }
        let v = &eig.eigenvectors;
        let n = g.dim();
        let diag = |f: &dyn Fn(f64) -> f64| {
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::new(f(eig.eigenvalues[i]), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        };
        let inv = v * diag(&|x| 1.0 / x) * v.adjoint();
        let inv_sqrt = v * diag(&|x| 1.0 / x.sqrt()) * v.adjoint();
        let det = eig.eigenvalues.iter().product();
        Ok(Metric {
            g,
            inv: (&inv + inv.adjoint()).scale(0.5),
            inv_sqrt: (&inv_sqrt + inv_sqrt.adjoint()).scale(0.5),
            det,
        })
    }

    pub fn identity(n: usize) -> Self {
        Metric::new(HermitianMatrix::identity(n)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn form(&self) -> &HermitianMatrix {
        &self.g
    }

    /// `g^{jk̄}` in the contravariant convention.
    pub fn inverse(&self) -> &DMatrix<Complex64> {
        &self.inv
    }

    pub fn inverse_row_major(&self) -> Vec<Complex64> {
        let n = self.dim();
        (0..n * n).map(|i| self.inv[(i / n, i % n)]).collect()
    }

    pub fn inverse_sqrt(&self) -> &DMatrix<Complex64> {
        &self.inv_sqrt
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    /// `g^{-1/2} A g^{-1/2}`.
    pub fn whiten(&self, a: &HermitianMatrix) -> HermitianMatrix {
        let m = &self.inv_sqrt * &a.0 * &self.inv_sqrt;
        HermitianMatrix((&m + m.adjoint()).scale(0.5))
    }

    /// `tr_g A = g^{jk̄} A_{k̄j}`.
    pub fn trace_of(&self, a: &HermitianMatrix) -> f64 {
        (&self.inv * &a.0).trace().re
    }
}

/// Result of a Γ₂ membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeStatus {
    pub in_cone: bool,
    /// `min(σ₁, σ₂)`.
    pub margin: f64,
}

impl ConeStatus {
    pub fn from_sigmas(sigma1: f64, sigma2: f64) -> Self {
        let margin = sigma1.min(sigma2);
        ConeStatus {
            in_cone: margin > 0.0,
            margin,
        }
    }
}

/// All elementary symmetric functions `σ₀ … σₙ` of `values`.
pub fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += x * e[k - 1];
        }
    }
    e
}

/// `σ_k(λ) = Σ_{j₁<…<j_k} λ_{j₁}⋯λ_{j_k}`.
pub fn sigma_k(lambda: &Spectrum, k: usize) -> Result<f64> {
    let n = lambda.dim();
    if k == 0 || k > n {
        return Err(FyError::Domain(format!("sigma_k needs 1 <= k <= {n}, got {k}")));
    }
    Ok(elementary_symmetric(lambda.values())[k])
}

fn sigma12(values: &[f64]) -> (f64, f64) {
    let s1: f64 = values.iter().sum();
    // Pairwise products stay accurate near the cone boundary, unlike
    // (σ₁² − Σλ²)/2.
    let mut s2 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            s2 += values[i] * values[j];
        }
    }
    (s1, s2)
}

pub fn cone_check(lambda: &Spectrum) -> ConeStatus {
    let (s1, s2) = sigma12(lambda.values());
    ConeStatus::from_sigmas(s1, s2)
}

/// Eigenvalues of `A` with respect to the metric `g`, i.e. of
/// `g^{-1/2} A g^{-1/2}`.
pub fn generalized_spectrum(a: &HermitianMatrix, g: &Metric) -> Result<Spectrum> {
    if a.dim() != g.dim() {
        return Err(FyError::Domain("dimension mismatch between form and metric".into()));
    }
    Spectrum::new(g.whiten(a).eigenvalues())
}

/// Convenience wrapper validating `g` on the fly.
pub fn generalized_spectrum_raw(a: &HermitianMatrix, g: &HermitianMatrix) -> Result<Spectrum> {
    generalized_spectrum(a, &Metric::new(g.clone())?)
}

/// `∂σ₂/∂λ_p = σ₁ − λ_p`.
pub fn sigma2_gradient(lambda: &Spectrum) -> Vec<f64> {
    let s1: f64 = lambda.values().iter().sum();
    lambda.values().iter().map(|l| s1 - l).collect()
}

/// First derivative of `A ↦ σ₂(λ(A,g))^{1/2}`.
#[derive(Debug, Clone)]
pub struct FTensor {
    /// Contravariant tensor `F^{jk̄}`: `dF = tr(F·dA)`.
    pub tensor: HermitianMatrix,
    /// `𝓕 = F^{jk̄} g_{k̄j} = (n−1)σ₁ / (2σ₂^{1/2})`.
    pub trace: f64,
    pub spectrum: Spectrum,
}

struct EigenFrame {
    /// `g^{-1/2} U`, the map from eigen coordinates back to coordinates.
    back: DMatrix<Complex64>,
    lambda: Vec<f64>,
    sigma2: f64,
}

/// Eigen decomposition of the whitened form, ordered non-increasing and
/// checked against the cone.
fn eigen_frame(a: &HermitianMatrix, g: &Metric) -> Result<EigenFrame> {
    let w = g.whiten(a);
    let eig = SymmetricEigen::new(w.0);
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let (s1, s2) = sigma12(&lambda);
    let status = ConeStatus::from_sigmas(s1, s2);
    if !status.in_cone {
        return Err(FyError::Cone { margin: status.margin });
    }
    Ok(EigenFrame {
        back: g.inverse_sqrt() * u,
        lambda,
        sigma2: s2,
    })
}

/// `F^{jk̄} = ∂σ₂^{1/2}/∂A_{k̄j}`, assembled in the eigenbasis with diagonal
/// entries `f_p = (σ₁ − λ_p)/(2σ₂^{1/2})` and rotated back to coordinates.
pub fn f_tensor(a: &HermitianMatrix, g: &Metric) -> Result<FTensor> {
    let frame = eigen_frame(a, g)?;
    let n = a.dim();
    let root = frame.sigma2.sqrt();
    let s1: f64 = frame.lambda.iter().sum();
    let f: Vec<f64> = frame.lambda.iter().map(|l| (s1 - l) / (2.0 * root)).collect();
    let diag = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(f[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let m = &frame.back * diag * frame.back.adjoint();
    let tensor = HermitianMatrix((&m + m.adjoint()).scale(0.5));
    Ok(FTensor {
        tensor,
        trace: (n as f64 - 1.0) * s1 / (2.0 * root),
        spectrum: Spectrum::new(frame.lambda)?,
    })
}

/// The quadratic form `F^{jk̄,lm̄} T_{k̄j} T_{m̄l}`, i.e. the second derivative
/// of `s ↦ σ₂^{1/2}(A + sT)` at `s = 0`.
pub fn second_derivative_form(
    a: &HermitianMatrix,
    t: &HermitianMatrix,
    g: &Metric,
) -> Result<f64> {
    let frame = eigen_frame(a, g)?;
    let n = a.dim();
    // T in the eigenframe: U† g^{-1/2} T g^{-1/2} U.
    let th = frame.back.adjoint() * t.matrix() * &frame.back;
    let lam = &frame.lambda;
    let s2 = frame.sigma2;
    let root = s2.sqrt();
    let s1: f64 = lam.iter().sum();
    let f: Vec<f64> = lam.iter().map(|l| (s1 - l) / (2.0 * root)).collect();

    let mut value = 0.0;
    for p in 0..n {
        for q in 0..n {
            let dsp = if p == q { 0.0 } else { 1.0 };
            let fpq = dsp / (2.0 * root) - (s1 - lam[p]) * (s1 - lam[q]) / (4.0 * s2 * root);
            value += fpq * th[(p, p)].re * th[(q, q)].re;
        }
    }
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let gap = lam[p] - lam[q];
            let quotient = if gap.abs() < TIE_TOL * (1.0 + lam[p].abs() + lam[q].abs()) {
                -1.0 / (2.0 * root)
            } else {
                (f[p] - f[q]) / gap
            };
            value += quotient * th[(p, q)].norm_sqr();
        }
    }
    Ok(value)
}

/// Both sides of Gårding's inequality
/// `Σ_i (∂σ₂/∂λ_i)(λ) μ_i ≥ 2 σ₂(λ)^{1/2} σ₂(μ)^{1/2}`.
pub fn garding_pairing(lambda: &Spectrum, mu: &Spectrum) -> Result<(f64, f64)> {
    if lambda.dim() != mu.dim() {
        return Err(FyError::Domain("spectra of different dimension".into()));
    }
    let cl = cone_check(lambda);
    if !cl.in_cone {
        return Err(FyError::Cone { margin: cl.margin });
    }
    let cm = cone_check(mu);
    if !cm.in_cone {
        return Err(FyError::Cone { margin: cm.margin });
    }
    // Pair in the given (sorted) order: both spectra index the same frame
    // only when the caller passes matched orderings, so use raw values.
    let lhs = garding_lhs(lambda.values(), mu.values());
    let rhs = 2.0 * (sigma12(lambda.values()).1 * sigma12(mu.values()).1).sqrt();
    Ok((lhs, rhs))
}

/// `Σ_i (σ₁(λ) − λ_i) μ_i` for unsorted, index-matched vectors.
pub fn garding_lhs(lambda: &[f64], mu: &[f64]) -> f64 {
    let s1: f64 = lambda.iter().sum();
    lambda.iter().zip(mu).map(|(l, m)| (s1 - l) * m).sum()
}

/// `(σ₁, σ₂)` of the eigenvalues of `A` relative to a metric with inverse
/// `h`, computed from traces of `h·A` without an eigensolve. Both matrices are
/// row-major `n×n`.
#[inline]
pub fn pencil_sigma12(a: &[Complex64], h: &[Complex64], n: usize) -> (f64, f64) {
    let mut m = [Complex64::new(0.0, 0.0); 16];
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += h[i * n + k] * a[k * n + j];
            }
            m[i * n + j] = s;
        }
    }
    let tr: f64 = (0..n).map(|i| m[i * n + i].re).sum();
    // σ₂ = Σ_{i<j} (m_ii m_jj − m_ij m_ji): principal 2×2 minors.
    let mut s2 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s2 += (m[i * n + i] * m[j * n + j] - m[i * n + j] * m[j * n + i]).re;
        }
    }
    (tr, s2)
}
