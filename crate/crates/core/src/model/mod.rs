//! Problem data and the two equivalent residual forms of the equation
//!
//! ```text
//! Ψ(t,u)·ωⁿ/n! = i∂∂̄(eᵘω − tαe⁻ᵘρ)∧ω^{n−2} + nα i∂∂̄u∧i∂∂̄u∧ω^{n−2} + tμ ωⁿ/n!
//! ```
//!
//! and `σ₂(λ′) − w²` with `g′ = eᵘg + tαe⁻ᵘρ + 2nα u_{k̄j}`. Along the path
//! every occurrence of `ρ` is replaced by `tρ` and `μ` by `tμ`, so the
//! scalar form at parameter `t` is the `t = 1` form of [`ProblemData::scaled`].

mod problem_file;

pub use problem_file::{
    default_grid_n, preset, problem_hash, random_band_limited_mu, random_band_limited_rho,
    MatrixEntry, Mode, MuSource, Phase, PresetOptions, ProblemFile, RhoSource, ScalarMode, PRESETS,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FyError, Result};
use crate::fields::{complex_hessian, integrate, Form, HermitianField, ScalarField, TorusGrid};
use crate::symfunc::{
    generalized_spectrum, pencil_sigma12, sigma_k, ConeStatus, HermitianMatrix, Metric,
};

/// `κ_c = n(n−1)/2`.
pub fn kappa(n: usize) -> f64 {
    (n * (n - 1)) as f64 / 2.0
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// One instance `(n, g, ρ, μ, α, M₀)` on a fixed grid, with the `u`-independent
/// quantities precomputed.
#[derive(Debug, Clone)]
pub struct ProblemData {
    grid: TorusGrid,
    metric: Metric,
    rho: HermitianField,
    mu: ScalarField,
    alpha: f64,
    m0: f64,
    /// `|∫μ|` of the supplied forcing before mean correction.
    mu_mean_defect: f64,
    omega_nm2: Form,
    dbar_rho_nm2: Form,
    trace_rho: ScalarField,
    sigma2_rho: ScalarField,
    delta_rho: ScalarField,
    rho_tilde: HermitianField,
}

impl ProblemData {
    /// Validates the data and subtracts the grid mean from `mu`.
    pub fn new(
        g: HermitianMatrix,
        rho: HermitianField,
        mu: ScalarField,
        alpha: f64,
        m0: f64,
    ) -> Result<Self> {
        let grid = rho.grid();
        if mu.grid() != grid {
            return Err(FyError::Invalid("rho and mu live on different grids".into()));
        }
        if g.dim() != grid.dim() {
            return Err(FyError::Invalid("metric dimension does not match the grid".into()));
        }
        if !(alpha < 0.0) || !alpha.is_finite() {
            return Err(FyError::Domain(format!("alpha must be negative, got {alpha}")));
        }
        if !(m0 > 0.0) || !m0.is_finite() {
            return Err(FyError::Domain(format!("M0 must be positive, got {m0}")));
        }
        let metric = Metric::new(g)?;
        let mean = integrate(&mu);
        let mu = mu.add_constant(-mean);
        Self::assemble(grid, metric, rho, mu, alpha, m0, mean.abs())
    }

    fn assemble(
        grid: TorusGrid,
        metric: Metric,
        rho: HermitianField,
        mu: ScalarField,
        alpha: f64,
        m0: f64,
        mu_mean_defect: f64,
    ) -> Result<Self> {
        let n = grid.dim();
        let omega_nm2 = Form::omega_power(grid, &metric, n - 2)?;
        let rho_form = rho.to_form();
        let dbar_rho_nm2 = rho_form.partial_bar()?.wedge(&omega_nm2)?;
        let delta_rho = rho_form
            .i_ddbar()?
            .wedge(&omega_nm2)?
            .top_ratio(&metric)?
            .scale(1.0 / factorial(n - 2));
        let h = metric.inverse_row_major();
        let len = grid.len();
        let mut trace = vec![0.0; len];
        let mut s2 = vec![0.0; len];
        trace
            .par_iter_mut()
            .zip(s2.par_iter_mut())
            .enumerate()
            .for_each(|(i, (tr, s))| {
                let a = gather(&rho, i);
                let (s1, sig2) = pencil_sigma12(&a[..n * n], &h, n);
                *tr = s1;
                *s = sig2;
            });
        let trace_rho = ScalarField::new(grid, trace)?;
        let sigma2_rho = ScalarField::new(grid, s2)?;
        let rho_tilde = contravariant_tilde(&rho, &metric);
        Ok(ProblemData {
            grid,
            metric,
            rho,
            mu,
            alpha,
            m0,
            mu_mean_defect,
            omega_nm2,
            dbar_rho_nm2,
            trace_rho,
            sigma2_rho,
            delta_rho,
            rho_tilde,
        })
    }

    /// The same instance with `ρ → sρ` and `μ → sμ`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::assemble(
            self.grid,
            self.metric.clone(),
            self.rho.scale(s),
            self.mu.scale(s),
            self.alpha,
            self.m0,
            self.mu_mean_defect * s.abs(),
        )
    }

    /// Replaces the forcing, mean-correcting it.
    pub fn with_mu(&self, mu: ScalarField) -> Result<Self> {
        let mean = integrate(&mu);
        let mut out = self.clone();
        out.mu = mu.add_constant(-mean);
        out.mu_mean_defect = mean.abs();
        Ok(out)
    }

    pub fn with_m0(&self, m0: f64) -> Result<Self> {
        if !(m0 > 0.0) || !m0.is_finite() {
            return Err(FyError::Domain(format!("M0 must be positive, got {m0}")));
        }
        let mut out = self.clone();
        out.m0 = m0;
        Ok(out)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.dim()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn rho(&self) -> &HermitianField {
        &self.rho
    }

    pub fn mu(&self) -> &ScalarField {
        &self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn mu_mean_defect(&self) -> f64 {
        self.mu_mean_defect
    }

    /// `ω^{n−2}`.
    pub fn omega_nm2(&self) -> &Form {
        &self.omega_nm2
    }

    /// `tr_g ρ = g^{ab̄}ρ_{b̄a}`.
    pub fn trace_rho(&self) -> &ScalarField {
        &self.trace_rho
    }

    /// `σ₂(ρ)` relative to `ω`.
    pub fn sigma2_rho(&self) -> &ScalarField {
        &self.sigma2_rho
    }

    /// The trivial solution `log M₀` of the `t = 0` problem.
    pub fn trivial_solution(&self) -> ScalarField {
        ScalarField::constant(self.grid, self.m0.ln())
    }

    /// Shifts `u` by a constant so that `∫eᵘ = M₀`.
    pub fn normalize(&self, u: &ScalarField) -> ScalarField {
        let shift = (self.m0 / integrate(&u.exp())).ln();
        u.add_constant(shift)
    }

    /// `|∫eᵘ − M₀| / M₀`.
    pub fn constraint_drift(&self, u: &ScalarField) -> f64 {
        (integrate(&u.exp()) - self.m0).abs() / self.m0
    }
}

/// Row-major matrix of `h` at grid point `i`, padded to the largest size.
#[inline]
pub(crate) fn gather(h: &HermitianField, i: usize) -> [Complex64; 16] {
    let mut out = [Complex64::new(0.0, 0.0); 16];
    for (e, entry) in h.entries().iter().enumerate() {
        out[e] = entry[i];
    }
    out
}

/// `tr_g(A)·g⁻¹ − g⁻¹ A g⁻¹` in the contravariant storage convention.
fn contravariant_tilde(a: &HermitianField, g: &Metric) -> HermitianField {
    let grid = a.grid();
    let n = grid.dim();
    let hinv = g.inverse();
    let pts: Vec<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let m = a.at(i);
            let tr = g.trace_of(&m);
            let hah = hinv * m.matrix() * hinv;
            (0..n * n)
                .map(|e| {
                    let (r, c) = (e / n, e % n);
                    hinv[(r, c)] * tr - hah[(r, c)]
                })
                .collect()
        })
        .collect();
    let entries = (0..n * n)
        .map(|e| pts.iter().map(|p| p[e]).collect())
        .collect();
    HermitianField::from_entries(grid, entries).expect("shape is consistent")
}

/// `(g′_{(t,u)})_{k̄j} = eᵘ g_{k̄j} + tα e⁻ᵘ ρ_{k̄j} + 2nα u_{k̄j}`.
pub fn gprime(u: &ScalarField, t: f64, p: &ProblemData) -> HermitianField {
    gprime_with_hessian(u, &complex_hessian(u), t, p)
}

pub(crate) fn gprime_with_hessian(
    u: &ScalarField,
    hess: &HermitianField,
    t: f64,
    p: &ProblemData,
) -> HermitianField {
    let grid = p.grid;
    let n = grid.dim();
    let a = p.alpha;
    let c_hess = 2.0 * n as f64 * a;
    let uv = u.values();
    let entries = (0..n * n)
        .map(|e| {
            let g = p.metric.form().get(e / n, e % n);
            let r = p.rho.entries()[e].as_slice();
            let h = hess.entries()[e].as_slice();
            (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let eu = uv[i].exp();
                    g * eu + r[i] * (t * a / eu) + h[i] * c_hess
                })
                .collect()
        })
        .collect();
    HermitianField::from_entries(grid, entries).expect("shape is consistent")
}

/// Smallest Γ₂ margin `min(σ₁, σ₂)` of `λ′` over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub margin: f64,
    pub worst_point: usize,
}

impl Admissibility {
    pub fn admissible(&self) -> bool {
        self.margin > 0.0
    }
}

/// Cone margin of every grid point of a `g′` field.
pub fn cone_margins(gp: &HermitianField, g: &Metric) -> Vec<ConeStatus> {
    let n = gp.dim();
    let h = g.inverse_row_major();
    (0..gp.grid().len())
        .into_par_iter()
        .map(|i| {
            let a = gather(gp, i);
            let (s1, s2) = pencil_sigma12(&a[..n * n], &h, n);
            ConeStatus::from_sigmas(s1, s2)
        })
        .collect()
}

pub fn admissibility_of(gp: &HermitianField, g: &Metric) -> Admissibility {
    cone_margins(gp, g)
        .iter()
        .enumerate()
        .fold(
            Admissibility {
                margin: f64::INFINITY,
                worst_point: 0,
            },
            |acc, (i, s)| {
                if s.margin < acc.margin || s.margin.is_nan() {
                    Admissibility {
                        margin: s.margin,
                        worst_point: i,
                    }
                } else {
                    acc
                }
            },
        )
}

/// Minimum over the grid of the Γ₂ margin of `λ′_{(t,u)}`.
pub fn admissibility(u: &ScalarField, t: f64, p: &ProblemData) -> Admissibility {
    admissibility_of(&gprime(u, t, p), &p.metric)
}

/// `ρ̃^{jk̄} = g^{jℓ̄}g^{mk̄}((tr_g ρ) g_{ℓ̄m} − ρ_{ℓ̄m})`, contravariant storage.
pub fn tilde_rho(p: &ProblemData) -> &HermitianField {
    &p.rho_tilde
}

/// `Δ_ωρ` from `Δ_ωρ·ωⁿ/n! = i∂∂̄ρ∧ω^{n−2}/(n−2)!`.
pub fn delta_omega_rho(p: &ProblemData) -> &ScalarField {
    &p.delta_rho
}

/// Complex pairing `P(f)` with `P(f)·ωⁿ/n! = i∂f∧∂̄ρ∧ω^{n−2}/(n−2)!`.
pub fn pairing_complex(f: &ScalarField, p: &ProblemData) -> Result<Vec<Complex64>> {
    let n = p.n();
    let form = Form::scalar(f)
        .partial()?
        .wedge(&p.dbar_rho_nm2)?
        .scale_complex(Complex64::new(0.0, 1.0 / factorial(n - 2)));
    form.top_ratio_complex(&p.metric)
}

/// `Re⟨∂e⁻ᵘ, ∂ρ⟩_ω`.
pub fn pairing_du_rho(u: &ScalarField, p: &ProblemData) -> Result<ScalarField> {
    let z = pairing_complex(&u.map(|v| (-v).exp()), p)?;
    ScalarField::new(p.grid, z.into_iter().map(|c| c.re).collect())
}

/// `|Du|²_ω = g^{jk̄}u_j u_k̄` and the contraction `ρ̃^{jk̄}u_j u_k̄`.
fn gradient_quadratics(u: &ScalarField, p: &ProblemData) -> (ScalarField, ScalarField) {
    let n = p.n();
    let grad = u.holomorphic_gradient();
    let h = p.metric.inverse_row_major();
    let (a, b): (Vec<f64>, Vec<f64>) = (0..p.grid.len())
        .into_par_iter()
        .map(|i| {
            let v: Vec<Complex64> = grad.iter().map(|g| g.values()[i]).collect();
            let rt = gather(&p.rho_tilde, i);
            let mut s_g = 0.0;
            let mut s_r = 0.0;
            for k in 0..n {
                for j in 0..n {
                    let w = v[k].conj() * v[j];
                    s_g += (h[k * n + j] * w).re;
                    s_r += (rt[k * n + j] * w).re;
                }
            }
            (s_g, s_r)
        })
        .unzip();
    (
        ScalarField::new(p.grid, a).expect("finite"),
        ScalarField::new(p.grid, b).expect("finite"),
    )
}

/// `|Du|²_ω` on the grid.
pub fn grad_norm_sq(u: &ScalarField, p: &ProblemData) -> ScalarField {
    gradient_quadratics(u, p).0
}

/// `Ψ(t,u)`, assembled with the exterior-algebra kernel.
pub fn residual_divergence(u: &ScalarField, t: f64, p: &ProblemData) -> Result<ScalarField> {
    residual_divergence_with_hessian(u, &complex_hessian(u), t, p)
}

pub(crate) fn residual_divergence_with_hessian(
    u: &ScalarField,
    hess: &HermitianField,
    t: f64,
    p: &ProblemData,
) -> Result<ScalarField> {
    let n = p.n() as f64;
    let eu = u.exp();
    let c = eu.map(|v| -t * p.alpha / v);
    let g_field = HermitianField::constant(p.grid, p.metric.form());
    let inner = HermitianField::weighted_sum(&[(&eu, &g_field), (&c, &p.rho)]);
    let hform = hess.to_form();
    let top = inner
        .to_form()
        .i_ddbar()?
        .add(&hform.wedge(&hform)?.scale(n * p.alpha))?
        .wedge(&p.omega_nm2)?;
    Ok(top.top_ratio(&p.metric)?.axpy(t, &p.mu))
}

/// `Ψ(t,u)` without its Nyquist modes.
///
/// Iterates never contain Nyquist modes, while the pointwise products in `Ψ`
/// do; this projection is the discrete equation the solver drives to zero.
pub fn residual_resolved(u: &ScalarField, t: f64, p: &ProblemData) -> Result<ScalarField> {
    Ok(residual_divergence(u, t, p)?.dealias())
}

/// Right-hand side `w²` of `σ₂(λ′) = w²`.
///
/// Fails with [`FyError::Degenerate`] if `w² ≤ 0` anywhere.
pub fn rhs_w2(u: &ScalarField, t: f64, p: &ProblemData) -> Result<ScalarField> {
    let w2 = rhs_w2_unchecked(u, t, p)?;
    if let Some((i, &v)) = w2
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0))
    {
        return Err(FyError::Degenerate { value: v, point: i });
    }
    Ok(w2)
}

pub(crate) fn rhs_w2_unchecked(u: &ScalarField, t: f64, p: &ProblemData) -> Result<ScalarField> {
    let n = p.n();
    let nf = n as f64;
    let kc = kappa(n);
    let a = p.alpha;
    let (du2, rt) = gradient_quadratics(u, p);
    let pair = pairing_complex(u, p)?;
    let nm2 = factorial(n - 2);
    let data = (0..p.grid.len())
        .into_par_iter()
        .map(|i| {
            let uu = u.values()[i];
            let eu = uu.exp();
            let em = (-uu).exp();
            let brace = 2.0 * kc * du2.values()[i]
                - nf * t * a * em * em * rt.values()[i]
                + 2.0 * nf * t * a * em * em * pair[i].re;
            kc * eu * eu - 2.0 * a * eu * brace
                + t * t * a * a * em * em * p.sigma2_rho.values()[i]
                + 2.0 * nf * t * a * a * em * p.delta_rho.values()[i]
                + t * a * (nf - 1.0) * p.trace_rho.values()[i]
                - 2.0 * nf * a * t * p.mu.values()[i] / nm2
        })
        .collect();
    ScalarField::new(p.grid, data)
}

/// `σ₂(λ′)` pointwise from the generalized eigenvalues of `g′`.
pub fn sigma2_of_gprime(gp: &HermitianField, g: &Metric) -> Result<ScalarField> {
    let data: Result<Vec<f64>> = (0..gp.grid().len())
        .into_par_iter()
        .map(|i| sigma_k(&generalized_spectrum(&gp.at(i), g)?, 2))
        .collect();
    ScalarField::new(gp.grid(), data?)
}

/// `σ₂(λ′) − w²`.
pub fn residual_scalar(u: &ScalarField, t: f64, p: &ProblemData) -> Result<ScalarField> {
    let s2 = sigma2_of_gprime(&gprime(u, t, p), &p.metric)?;
    Ok(s2.sub(&rhs_w2(u, t, p)?))
}

/// Factor `2nα/(n−2)!` with `σ₂(λ′) − w² = factor · Ψ`.
pub fn scalar_form_factor(p: &ProblemData) -> f64 {
    2.0 * p.n() as f64 * p.alpha / factorial(p.n() - 2)
}

/// The expansion
/// `κ_c e^{2u} + t²α²e^{−2u}σ₂(ρ) + (2nα)²σ₂(u_{k̄j}) + tα(n−1)tr_gρ
///  + 2nα{(n−1)eᵘg^{jk̄} + tαe⁻ᵘρ̃^{jk̄}}u_{k̄j}` of `σ₂(λ′)`.
pub fn sigma2_expansion(u: &ScalarField, t: f64, p: &ProblemData) -> ScalarField {
    let n = p.n();
    let nf = n as f64;
    let a = p.alpha;
    let hess = complex_hessian(u);
    let h = p.metric.inverse_row_major();
    let data = (0..p.grid.len())
        .into_par_iter()
        .map(|i| {
            let uu = u.values()[i];
            let eu = uu.exp();
            let em = 1.0 / eu;
            let m = gather(&hess, i);
            let (_, s2h) = pencil_sigma12(&m[..n * n], &h, n);
            let rt = gather(&p.rho_tilde, i);
            let mut lap = 0.0;
            let mut rl = 0.0;
            for k in 0..n {
                for j in 0..n {
                    lap += (h[k * n + j] * m[j * n + k]).re;
                    rl += (rt[k * n + j] * m[j * n + k]).re;
                }
            }
            kappa(n) * eu * eu
                + t * t * a * a * em * em * p.sigma2_rho.values()[i]
                + (2.0 * nf * a).powi(2) * s2h
                + t * a * (nf - 1.0) * p.trace_rho.values()[i]
                + 2.0 * nf * a * ((nf - 1.0) * eu * lap + t * a * em * rl)
        })
        .collect();
    ScalarField::new(p.grid, data).expect("finite")
}

/// Lower bound `κ_c e^{2u} + 4|α|κ_c eᵘ|Du|²` appearing in `w² ≥ (7/8)(…)`.
pub fn w2_leading_terms(u: &ScalarField, p: &ProblemData) -> ScalarField {
    let kc = kappa(p.n());
    let du2 = grad_norm_sq(u, p);
    u.zip_map(&du2, |uu, d| {
        let eu = uu.exp();
        kc * eu * eu + 4.0 * p.alpha.abs() * kc * eu * d
    })
}

/// A solution with `u` normalized and `λ′ ∈ Γ₂` everywhere.
#[derive(Debug, Clone)]
pub struct AdmissibleIterate {
    pub u: ScalarField,
    pub t: f64,
    pub cone_margin_min: f64,
}

impl AdmissibleIterate {
    /// Checks the cone condition and the normalization (relative tolerance).
    pub fn check(u: ScalarField, t: f64, p: &ProblemData, tol: f64) -> Result<Self> {
        let adm = admissibility(&u, t, p);
        if !adm.admissible() {
            return Err(FyError::Cone { margin: adm.margin });
        }
        let drift = p.constraint_drift(&u);
        if drift > tol {
            return Err(FyError::Invalid(format!(
                "normalization drift {drift:e} exceeds {tol:e}"
            )));
        }
        Ok(AdmissibleIterate {
            u,
            t,
            cone_margin_min: adm.margin,
        })
    }
}

/// Output of [`manufacture`].
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub problem: ProblemData,
    /// `u*` after the constant shift to `∫e^{u*} = M₀`.
    pub u_star: ScalarField,
    /// `|∫μ*|` before mean correction.
    pub stokes_defect: f64,
}

/// Builds `μ* = −Ψ(1, u*)|_{μ=0}` so that `u*` solves the `t = 1` problem.
///
/// `u*` is first shifted so that `∫e^{u*} = M₀`; the forcing is then
/// computed for the shifted function and mean-corrected.
pub fn manufacture(u_star: &ScalarField, base: &ProblemData) -> Result<Manufactured> {
    let u = base.normalize(u_star);
    let zero_mu = base.with_mu(ScalarField::zeros(base.grid))?;
    let adm = admissibility(&u, 1.0, &zero_mu);
    if !adm.admissible() {
        return Err(FyError::Cone { margin: adm.margin });
    }
    let mu = residual_divergence(&u, 1.0, &zero_mu)?.scale(-1.0);
    let problem = zero_mu.with_mu(mu)?;
    let stokes_defect = problem.mu_mean_defect();
    Ok(Manufactured {
        problem,
        u_star: u,
        stokes_defect,
    })
}
