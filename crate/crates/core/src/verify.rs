//! Self-check suites run by `fuyau verify`.
//!
//! Every check reduces to `observed ≤ tolerance`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::{run_path, verify_integral_identity, PathOptions};
use crate::error::{FyError, Result};
use crate::fields::{
    complex_hessian, integrate, sigma2_by_wedge, Deriv, Form, HermitianField, ScalarField,
    TorusGrid,
};
use crate::linearized::{apply_l, apply_lstar, LinearizedSystem};
use crate::model::{
    manufacture, preset, residual_divergence, residual_scalar, scalar_form_factor, PresetOptions,
    ProblemData,
};
use crate::symfunc::{
    f_tensor, garding_pairing, generalized_spectrum, second_derivative_form, sigma_k,
    HermitianMatrix, Metric, Spectrum,
};

pub const SUITES: &[&str] = &["symfunc", "fields", "model", "linearized", "identity", "continuation"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckResult {
    pub suite: String,
    pub check: String,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random instances per sampled check.
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            samples: 1000,
        }
    }
}

fn check(suite: &str, name: &str, tolerance: f64, observed: f64) -> CheckResult {
    CheckResult {
        suite: suite.into(),
        check: name.into(),
        tolerance,
        observed,
        // NaN fails.
        passed: observed <= tolerance,
    }
}

/// Runs one suite, or all of them when `only` is `None`.
pub fn run(only: Option<&str>, opts: VerifyOptions) -> Result<VerifyReport> {
    let names: Vec<&str> = match only {
        Some(s) if SUITES.contains(&s) => vec![s],
        Some(s) => {
            return Err(FyError::Invalid(format!(
                "unknown suite '{s}' (known: {})",
                SUITES.join(", ")
            )))
        }
        None => SUITES.to_vec(),
    };
    let mut checks = Vec::new();
    for name in names {
        log::info!("verify suite {name}");
        match run_suite(name, opts) {
            Ok(c) => checks.extend(c),
            // A suite that cannot even run counts as a failed check.
            Err(e) => {
                log::warn!("suite {name} aborted: {e}");
                checks.push(check(name, "suite_completed", 0.0, f64::INFINITY));
            }
        }
    }
    Ok(VerifyReport {
        seed: opts.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn run_suite(name: &str, opts: VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    match name {
        "symfunc" => symfunc_suite(&mut rng, opts.samples),
        "fields" => fields_suite(&mut rng),
        "model" => model_suite(&mut rng),
        "linearized" => linearized_suite(&mut rng),
        "identity" => identity_suite(),
        "continuation" => continuation_suite(),
        _ => unreachable!("suite names are validated"),
    }
}

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Hermitian matrix with entries uniform in `[−scale, scale]`.
pub fn random_hermitian(rng: &mut impl Rng, n: usize, scale: f64) -> HermitianMatrix {
    let mut m = DMatrix::from_element(n, n, c64(0.0, 0.0));
    for j in 0..n {
        m[(j, j)] = c64(rng.random_range(-scale..scale), 0.0);
        for k in j + 1..n {
            let z = c64(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
            m[(j, k)] = z;
            m[(k, j)] = z.conj();
        }
    }
    HermitianMatrix::new(m).expect("hermitian by construction")
}

/// Positive definite metric with condition number at most a few.
pub fn random_metric(rng: &mut impl Rng, n: usize) -> Metric {
    let a = random_hermitian(rng, n, 0.3);
    Metric::new(HermitianMatrix::identity(n).add_scaled(1.0, &a.scale(1.0 / n as f64)))
        .expect("diagonally dominant")
}

/// A spectrum in Γ₂ by rejection from `[−1, 2]ⁿ`.
pub fn random_gamma2(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let s1: f64 = l.iter().sum();
        let s2 = (s1 * s1 - l.iter().map(|x| x * x).sum::<f64>()) / 2.0;
        if s1 > 1e-2 && s2 > 1e-2 {
            return l;
        }
    }
}

/// Random unitary from the QR factorization of a complex Gaussian-like matrix.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> DMatrix<Complex64> {
    let m = DMatrix::from_fn(n, n, |_, _| {
        c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    m.qr().q()
}

/// `A` with `g`-spectrum `λ`: `A = L U diag(λ) U† L†` for `g = L L†`.
pub fn matrix_with_spectrum(rng: &mut impl Rng, lambda: &[f64], g: &Metric) -> HermitianMatrix {
    let n = lambda.len();
    let u = random_unitary(rng, n);
    let d = DMatrix::from_fn(n, n, |i, j| if i == j { c64(lambda[i], 0.0) } else { c64(0.0, 0.0) });
    let l = g
        .form()
        .matrix()
        .clone()
        .cholesky()
        .expect("metric is positive definite")
        .l();
    let m = &l * &u * d * u.adjoint() * l.adjoint();
    HermitianMatrix::new((&m + m.adjoint()).scale(0.5)).expect("hermitian")
}

fn sigma2_of(a: &HermitianMatrix, g: &Metric) -> f64 {
    let s = generalized_spectrum(a, g).expect("metric is positive definite");
    sigma_k(&s, 2).expect("k = 2 is in range")
}

/// Step along `t` that changes `σ₂(a)` by a relative `10⁻⁵`; `σ₂(a + h t)`
/// is a quadratic in `h`, read off from three samples.
fn fd_step(a: &HermitianMatrix, t: &HermitianMatrix, g: &Metric) -> f64 {
    let p0 = sigma2_of(a, g);
    let pp = sigma2_of(&a.add_scaled(1.0, t), g);
    let pm = sigma2_of(&a.add_scaled(-1.0, t), g);
    let b = (pp - pm).abs() / 2.0;
    let c = ((pp + pm) / 2.0 - p0).abs();
    1e-5 * (p0 / b.max(1e-300)).min((p0 / c.max(1e-300)).sqrt()).min(1.0)
}

fn sqrt_sigma2(a: &HermitianMatrix, g: &Metric) -> f64 {
    let s = generalized_spectrum(a, g).expect("metric is positive definite");
    sigma_k(&s, 2).expect("k = 2 is in range").sqrt()
}

fn contract(c: &HermitianMatrix, t: &HermitianMatrix) -> f64 {
    let n = c.dim();
    let mut s = c64(0.0, 0.0);
    for k in 0..n {
        for j in 0..n {
            s += c.get(k, j) * t.get(j, k);
        }
    }
    s.re
}

fn symfunc_suite(rng: &mut ChaCha8Rng, samples: usize) -> Result<Vec<CheckResult>> {
    let suite = "symfunc";
    let mut out = Vec::new();

    // σ₂ by eigenvalues against the wedge ratio, pointwise on random fields.
    let mut worst = 0.0_f64;
    for n in 2..=4 {
        let grid = TorusGrid::new(n, 4)?;
        let per_n = (samples / 3).max(1);
        let g = random_metric(rng, n);
        let mats: Vec<HermitianMatrix> = (0..per_n).map(|_| random_hermitian(rng, n, 1.0)).collect();
        // The sample list is reused cyclically over the grid.
        let rows: Vec<Vec<Complex64>> = mats.iter().map(|m| m.to_row_major()).collect();
        let entries = (0..n * n)
            .map(|e| (0..grid.len()).map(|i| rows[i % per_n][e]).collect())
            .collect();
        let field = HermitianField::from_entries(grid, entries)?;
        let wedge = sigma2_by_wedge(&field.to_form(), &g)?;
        for i in 0..grid.len() {
            let a = field.at(i);
            let s = sigma_k(&generalized_spectrum(&a, &g)?, 2)?;
            worst = worst.max((wedge.values()[i] - s).abs() / s.abs().max(1.0));
        }
    }
    out.push(check(suite, "sigma2_wedge_vs_eigen", 1e-10, worst));

    let mut f_err = 0.0_f64;
    let mut s_err = 0.0_f64;
    let mut concave = f64::NEG_INFINITY;
    for i in 0..samples {
        let n = 2 + i % 3;
        let g = random_metric(rng, n);
        let lambda = random_gamma2(rng, n);
        let a = matrix_with_spectrum(rng, &lambda, &g);
        let t = random_hermitian(rng, n, 1.0);
        let h = fd_step(&a, &t, &g);
        let ft = f_tensor(&a, &g)?;
        let fd = (sqrt_sigma2(&a.add_scaled(h, &t), &g) - sqrt_sigma2(&a.add_scaled(-h, &t), &g))
            / (2.0 * h);
        let an = contract(&ft.tensor, &t);
        f_err = f_err.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3));
        // Richardson-extrapolated central second difference.
        let f0 = sqrt_sigma2(&a, &g);
        let second = |h: f64| {
            (sqrt_sigma2(&a.add_scaled(h, &t), &g) - 2.0 * f0 + sqrt_sigma2(&a.add_scaled(-h, &t), &g))
                / (h * h)
        };
        let h2 = 2e2 * h;
        let fd2 = (4.0 * second(h2) - second(2.0 * h2)) / 3.0;
        let sd = second_derivative_form(&a, &t, &g)?;
        s_err = s_err.max((sd - fd2).abs() / sd.abs().max(fd2.abs()).max(1e-2));
        concave = concave.max(sd);
    }
    out.push(check(suite, "f_tensor_finite_difference", 1e-6, f_err));
    out.push(check(suite, "second_form_finite_difference", 1e-5, s_err));
    out.push(check(suite, "second_form_concavity", 0.0, concave));

    let mut garding = f64::NEG_INFINITY;
    let mut equality = 0.0_f64;
    let mut ellipticity = f64::NEG_INFINITY;
    for i in 0..samples {
        let n = 2 + i % 4;
        let l = random_gamma2(rng, n);
        let m = random_gamma2(rng, n);
        let (lhs, rhs) = garding_pairing(&Spectrum::new(l.clone())?, &Spectrum::new(m)?)?;
        garding = garding.max(rhs - lhs);
        let c = rng.random_range(0.1..3.0);
        let scaled: Vec<f64> = l.iter().map(|x| c * x).collect();
        let (lhs, rhs) = garding_pairing(&Spectrum::new(l.clone())?, &Spectrum::new(scaled)?)?;
        equality = equality.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        // λ₁·σ₂^{11̄} ≥ (2/n)σ₂ with λ₁ the largest eigenvalue.
        let s = Spectrum::new(l)?;
        let s1: f64 = s.values().iter().sum();
        let s2 = sigma_k(&s, 2)?;
        let l1 = s.largest();
        ellipticity = ellipticity.max((2.0 / n as f64 * s2 - l1 * (s1 - l1)) / s2);
    }
    out.push(check(suite, "garding_inequality", 1e-12, garding));
    out.push(check(suite, "garding_equality_proportional", 1e-10, equality));
    out.push(check(suite, "largest_eigenvalue_inequality", 1e-12, ellipticity));
    Ok(out)
}

fn random_low_mode_field(rng: &mut impl Rng, grid: TorusGrid, amp: f64, modes: usize) -> ScalarField {
    let d = grid.axes();
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..modes)
        .map(|_| {
            let k: Vec<f64> = (0..d).map(|_| rng.random_range(-1i32..=1) as f64).collect();
            (k, rng.random_range(-amp..amp), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    ScalarField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(k, a, ph)| a * (k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph).cos())
            .sum()
    })
}

fn fields_suite(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let suite = "fields";
    let mut out = Vec::new();
    let mut vol = 0.0_f64;
    let mut stokes = 0.0_f64;
    for n in 2..=4 {
        let grid = TorusGrid::new(n, if n == 4 { 4 } else { 8 })?;
        let g = random_metric(rng, n);
        let factorial: f64 = (1..=n).map(|k| k as f64).product();
        let ratio = Form::omega_power(grid, &g, n)?.top_ratio(&g)?;
        vol = vol.max(ratio.values().iter().map(|v| (v - factorial).abs()).fold(0.0, f64::max));
        let f = random_low_mode_field(rng, grid, 1.0, 4);
        let h = complex_hessian(&f).to_form();
        let top = h.wedge(&h)?.wedge(&Form::omega_power(grid, &g, n - 2)?)?.top_ratio(&g)?;
        stokes = stokes.max(integrate(&top).abs() / top.max_abs().max(1.0));
    }
    out.push(check(suite, "volume_form_ratio", 1e-12, vol));
    out.push(check(suite, "stokes_hessian_square", 1e-12, stokes));

    let grid = TorusGrid::new(2, 8)?;
    let f = ScalarField::from_fn(grid, |x| (x[0] + 2.0 * x[3]).sin());
    // ∂/∂z¹ of sin(x¹ + 2x⁴) is ½cos(…).
    let d = f.derivative(Deriv::Z(0));
    let want = ScalarField::from_fn(grid, |x| 0.5 * (x[0] + 2.0 * x[3]).cos());
    out.push(check(suite, "spectral_derivative", 1e-12, d.re().sub(&want).max_abs() + d.im().max_abs()));
    let bytes = crate::fields::io::encode_scalar(&f);
    let back = crate::fields::io::decode_scalar(&bytes)?;
    out.push(check(suite, "dump_round_trip", 0.0, back.sub(&f).max_abs()));
    Ok(out)
}

/// `n = 2`, `N = 16` problem with a random metric, low-mode `ρ` and `μ`.
fn low_mode_problem(rng: &mut ChaCha8Rng, m0: f64) -> Result<ProblemData> {
    let grid = TorusGrid::new(2, 16)?;
    let g = random_metric(rng, 2);
    let c = random_hermitian(rng, 2, 0.5);
    let amp = rng.random_range(0.05..0.2);
    let rho = HermitianField::from_fn(grid, |x| {
        let mut m = c.to_row_major();
        m[0] += amp * x[1].cos();
        m[3] += amp * x[2].sin();
        m[1] += c64(0.5 * amp * x[0].sin(), 0.0);
        m[2] += c64(0.5 * amp * x[0].sin(), 0.0);
        m
    })?;
    let mu = random_low_mode_field(rng, grid, 0.5, 3);
    ProblemData::new(g.form().clone(), rho, mu, -1.0, m0)
}

fn model_suite(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let suite = "model";
    let p = low_mode_problem(rng, 50.0)?;
    let mut equiv = 0.0_f64;
    let mut stokes = 0.0_f64;
    for _ in 0..5 {
        let u = p.normalize(&random_low_mode_field(rng, p.grid(), 0.05, 3));
        let t = rng.random_range(0.0..1.0);
        let psi = residual_divergence(&u, t, &p)?;
        let scalar = residual_scalar(&u, t, &p)?;
        let scale = scalar.max_abs().max(u.exp().max().powi(2));
        equiv = equiv.max(scalar.sub(&psi.scale(scalar_form_factor(&p))).max_abs() / scale);
        stokes = stokes.max(integrate(&psi).abs() / psi.max_abs().max(1.0));
    }
    Ok(vec![
        check(suite, "scalar_vs_divergence_form", 1e-8, equiv),
        check(suite, "residual_integrates_to_zero", 1e-10, stokes),
    ])
}

fn linearized_suite(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let suite = "linearized";
    let p = low_mode_problem(rng, 50.0)?;
    let u = p.normalize(&random_low_mode_field(rng, p.grid(), 0.05, 3));
    let t = 0.8;
    let sys = LinearizedSystem::new(&u, t, &p)?;
    let mut adj = 0.0_f64;
    for _ in 0..10 {
        let h = random_low_mode_field(rng, p.grid(), 1.0, 3);
        let psi = random_low_mode_field(rng, p.grid(), 1.0, 3);
        let lh = apply_l(&h, &sys)?;
        let a = integrate(&psi.mul(&lh));
        let b = integrate(&apply_lstar(&psi, &sys).mul(&h));
        let scale = integrate(&psi.mul(&psi)).sqrt() * integrate(&lh.mul(&lh)).sqrt();
        adj = adj.max((a - b).abs() / scale);
    }
    let ones = apply_lstar(&ScalarField::constant(p.grid(), 1.0), &sys).max_abs();
    let h = random_low_mode_field(rng, p.grid(), 1.0, 3);
    let lh = apply_l(&h, &sys)?;
    let r0 = residual_divergence(&u, t, &p)?;
    let err = |eps: f64| -> Result<f64> {
        let r = residual_divergence(&u.axpy(eps, &h), t, &p)?;
        Ok(r.sub(&r0).scale(1.0 / eps).sub(&lh).max_abs())
    };
    let order = (err(1e-3)? / err(5e-4)?).log2();
    Ok(vec![
        check(suite, "adjoint_identity", 1e-8, adj),
        check(suite, "lstar_of_constants", 1e-10, ones),
        // Measured order p ∈ [0.5, 2] ⇔ |log₂ p| ≤ 1.
        check(suite, "gateaux_order_log2", 1.0, order.log2().abs()),
    ])
}

/// Manufactured instance used by the identity suite: `n = 2`, `α = −1`,
/// `M₀ = 10`, `u* = log M₀ + 0.3 sin x¹ cos x³`.
pub fn identity_instance(grid_n: usize) -> Result<(ProblemData, ScalarField)> {
    let m0 = 10.0;
    let base = preset(
        "trivial",
        PresetOptions {
            grid_n: Some(grid_n),
            m0: Some(m0),
            alpha: Some(-1.0),
            ..Default::default()
        },
    )?
    .build(None)?;
    let u = ScalarField::from_fn(base.grid(), |x| m0.ln() + 0.3 * x[0].sin() * x[2].cos());
    let m = manufacture(&u, &base)?;
    Ok((m.problem, m.u_star))
}

fn identity_suite() -> Result<Vec<CheckResult>> {
    let suite = "identity";
    let (p, u) = identity_instance(16)?;
    let d = verify_integral_identity(&u, 2.0, 1.0, &p)?;
    let trivial = preset("trivial", PresetOptions { grid_n: Some(8), ..Default::default() })?.build(None)?;
    let d0 = verify_integral_identity(&trivial.trivial_solution(), 2.0, 1.0, &trivial)?;
    Ok(vec![
        check(suite, "identity_defect_trivial", 1e-12, d0.defect),
        check(suite, "identity_defect_relative", 1e-6, d.defect / d.scale),
        check(suite, "positivity_term", 1e-10, (-d.positivity_min).max(0.0)),
    ])
}

fn continuation_suite() -> Result<Vec<CheckResult>> {
    let suite = "continuation";
    let p = preset("trivial", PresetOptions { grid_n: Some(8), ..Default::default() })?.build(None)?;
    let out = run_path(&p, &PathOptions::default())?;
    let iters = out.report.records.iter().map(|r| r.newton_iterations).max().unwrap_or(0);
    let res = out.report.records.iter().map(|r| r.residual_inf).fold(0.0, f64::max);
    Ok(vec![
        check(suite, "trivial_path_reaches_one", 0.0, 1.0 - out.t),
        check(suite, "trivial_path_residual", 1e-10, res),
        check(suite, "trivial_path_extra_newton_iterations", 0.0, iters as f64 - 1.0),
        check(suite, "trivial_path_exact", 1e-10, out.u.sub(&p.trivial_solution()).max_abs()),
    ])
}
