//! Continuity-method driver `t: 0 → 1` and the diagnostic monitors.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FyError, Result};
use crate::fields::io::{load_scalar, save_scalar, write_atomic};
use crate::fields::{complex_hessian, integrate, Form, ScalarField};
use crate::linearized::{newton_solve, NewtonOptions, NewtonRecord, NewtonSolve};
use crate::model::{
    admissibility_of, gprime_with_hessian, grad_norm_sq, kappa, rhs_w2_unchecked,
    sigma2_of_gprime, w2_leading_terms, AdmissibleIterate, ProblemData,
};

/// Monitors of the a priori bounds at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "sup_eu_over_M0")]
    pub sup_eu_over_m0: f64,
    #[serde(rename = "M0_sup_e_minus_u")]
    pub m0_sup_e_minus_u: f64,
    pub sup_grad_sq: f64,
    /// `sup|∂∂̄u| / (1 + sup|Du|²)` with the `g`-Frobenius norm.
    pub c2_ratio: f64,
    pub min_sigma2: f64,
    pub min_cone_margin: f64,
    /// `min w² / (κ_c e^{2u} + 4|α|κ_c eᵘ|Du|²)`.
    pub w2_ratio_min: f64,
}

impl Diagnostics {
    /// `min σ₂(λ′) / (κ_c (M₀/B₂)²)` with `B₂ = M₀ sup e⁻ᵘ`.
    pub fn sigma2_bound_ratio(&self, n: usize, m0: f64) -> f64 {
        let m0_over_b2 = m0 / self.m0_sup_e_minus_u;
        self.min_sigma2 / (kappa(n) * m0_over_b2 * m0_over_b2)
    }
}

/// Evaluates every monitor at `(t, u)`.
pub fn compute_diagnostics(u: &ScalarField, t: f64, p: &ProblemData) -> Result<Diagnostics> {
    let m0 = p.m0();
    let hess = complex_hessian(u);
    let gp = gprime_with_hessian(u, &hess, t, p);
    let g = p.metric();
    let du2 = grad_norm_sq(u, p);
    let sup_grad_sq = du2.max();
    let sup_hess = (0..p.grid().len())
        .into_par_iter()
        .map(|i| {
            g.whiten(&hess.at(i))
                .eigenvalues()
                .iter()
                .map(|l| l * l)
                .sum::<f64>()
                .sqrt()
        })
        .reduce(|| 0.0, f64::max);
    let w2 = rhs_w2_unchecked(u, t, p)?;
    let lead = w2_leading_terms(u, p);
    Ok(Diagnostics {
        sup_eu_over_m0: u.max().exp() / m0,
        m0_sup_e_minus_u: m0 * (-u.min()).exp(),
        sup_grad_sq,
        c2_ratio: sup_hess / (1.0 + sup_grad_sq),
        min_sigma2: sigma2_of_gprime(&gp, g)?.min(),
        min_cone_margin: admissibility_of(&gp, g).margin,
        w2_ratio_min: w2.zip_map(&lead, |a, b| a / b).min(),
    })
}

/// Both sides of the weighted integral identity at exponent `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefect {
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs|`.
    pub defect: f64,
    /// Sum of the absolute values of the individual integrals.
    pub scale: f64,
    /// Pointwise minimum of `i∂u∧∂̄u∧ω′∧ω^{n−2}` over `ωⁿ/n!`.
    pub positivity_min: f64,
    /// Integral of the same density.
    pub positivity_integral: f64,
}

/// Evaluates
///
/// ```text
/// (k/2)∫e^{−ku}(eᵘω + αe⁻ᵘρ)∧i∂u∧∂̄u∧ω^{n−2}
///   = −(k/2)∫e^{−ku} i∂u∧∂̄u∧ω′∧ω^{n−2} − ∫e^{−ku}μ
///     + (α − α/(k+1))∫e^{−(k+1)u} i∂∂̄ρ∧ω^{n−2}
/// ```
///
/// for the data `(tρ, tμ)`, every wedge product through the form kernel.
pub fn verify_integral_identity(
    u: &ScalarField,
    k: f64,
    t: f64,
    p: &ProblemData,
) -> Result<IdentityDefect> {
    let q = p.scaled(t)?;
    let g = q.metric();
    let a = q.alpha();
    let uf = Form::scalar(u);
    let grad = uf
        .partial()?
        .wedge(&uf.partial_bar()?)?
        .scale_complex(Complex64::i())
        .wedge(q.omega_nm2())?;
    let eu = u.exp();
    let weight = u.map(|v| (-k * v).exp());
    let inner = crate::fields::HermitianField::weighted_sum(&[
        (&eu, &crate::fields::HermitianField::constant(q.grid(), g.form())),
        (&eu.map(|v| a / v), q.rho()),
    ]);
    let lhs_density = inner.to_form().wedge(&grad)?.top_ratio(g)?;
    let hess = complex_hessian(u);
    let omega_prime = gprime_with_hessian(u, &hess, 1.0, &q).to_form();
    let pos = grad.wedge(&omega_prime)?.top_ratio(g)?;
    let ddbar_rho = q
        .rho()
        .to_form()
        .i_ddbar()?
        .wedge(q.omega_nm2())?
        .top_ratio(g)?;
    let lhs = 0.5 * k * integrate(&weight.mul(&lhs_density));
    let r1 = -0.5 * k * integrate(&weight.mul(&pos));
    let r2 = -integrate(&weight.mul(q.mu()));
    let r3 = (a - a / (k + 1.0)) * integrate(&u.map(|v| (-(k + 1.0) * v).exp()).mul(&ddbar_rho));
    let rhs = r1 + r2 + r3;
    Ok(IdentityDefect {
        k,
        lhs,
        rhs,
        defect: (lhs - rhs).abs(),
        scale: lhs.abs() + r1.abs() + r2.abs() + r3.abs(),
        positivity_min: pos.min(),
        positivity_integral: integrate(&pos),
    })
}

/// Adaptive step policy in `t`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepSchedule {
    pub dt0: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Newton corrections at or below this count grow the step.
    pub easy_steps: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            dt0: 0.05,
            dt_max: 0.1,
            dt_min: 1e-6,
            grow: 1.5,
            shrink: 0.5,
            easy_steps: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathOptions {
    pub schedule: StepSchedule,
    pub newton: NewtonOptions,
    /// Every accepted `t` satisfies `‖Ψ‖∞ ≤ tol`.
    pub tol: f64,
    /// Relative bound on `|∫eᵘ − M₀|/M₀` at accepted states.
    pub constraint_tol: f64,
    pub identity_k: f64,
    /// Directory for checkpoint files; `None` disables checkpointing.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from a checkpoint in `checkpoint_dir` when one matches.
    pub resume: bool,
    pub problem_hash: String,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            schedule: StepSchedule::default(),
            newton: NewtonOptions::default(),
            tol: 1e-8,
            constraint_tol: 1e-8,
            identity_k: 2.0,
            checkpoint_dir: None,
            resume: false,
            problem_hash: String::new(),
        }
    }
}

/// One accepted value of `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    /// `‖Ψ‖∞` over the resolved modes.
    pub residual_inf: f64,
    /// `‖Ψ‖∞` including the Nyquist modes.
    pub residual_full_inf: f64,
    pub constraint_drift: f64,
    pub diagnostics: Diagnostics,
    pub identity: IdentityDefect,
    pub seconds: f64,
    pub trace: Vec<NewtonRecord>,
}

/// A rejected attempt, kept as data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedStep {
    pub t_try: f64,
    pub dt: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Converged,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem_hash: String,
    pub n: usize,
    pub grid_n: usize,
    pub alpha: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub tol: f64,
    pub schedule: StepSchedule,
    pub newton: NewtonOptions,
    pub status: PathStatus,
    pub failure_reason: Option<String>,
    pub t_final: f64,
    pub final_residual_inf: f64,
    pub final_residual_full_inf: f64,
    pub records: Vec<StepRecord>,
    pub rejected: Vec<RejectedStep>,
    pub total_seconds: f64,
    /// `‖u − u_ref‖∞` when a reference solution was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_error: Option<f64>,
}

#[derive(Serialize)]
struct CsvRow {
    t: f64,
    dt: f64,
    newton_iterations: usize,
    residual_inf: f64,
    residual_full_inf: f64,
    constraint_drift: f64,
    #[serde(rename = "sup_eu_over_M0")]
    sup_eu_over_m0: f64,
    #[serde(rename = "M0_sup_e_minus_u")]
    m0_sup_e_minus_u: f64,
    sup_grad_sq: f64,
    c2_ratio: f64,
    min_sigma2: f64,
    min_cone_margin: f64,
    w2_ratio_min: f64,
    identity_defect: f64,
    identity_scale: f64,
    positivity_min: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-`t` time series, one row per accepted step.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            let d = &r.diagnostics;
            w.serialize(CsvRow {
                t: r.t,
                dt: r.dt,
                newton_iterations: r.newton_iterations,
                residual_inf: r.residual_inf,
                residual_full_inf: r.residual_full_inf,
                constraint_drift: r.constraint_drift,
                sup_eu_over_m0: d.sup_eu_over_m0,
                m0_sup_e_minus_u: d.m0_sup_e_minus_u,
                sup_grad_sq: d.sup_grad_sq,
                c2_ratio: d.c2_ratio,
                min_sigma2: d.min_sigma2,
                min_cone_margin: d.min_cone_margin,
                w2_ratio_min: d.w2_ratio_min,
                identity_defect: r.identity.defect,
                identity_scale: r.identity.scale,
                positivity_min: r.identity.positivity_min,
            })
            .map_err(|e| FyError::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| FyError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| FyError::Format(e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("report.json"), self.to_json().as_bytes())?;
        write_atomic(&dir.join("diagnostics.csv"), self.to_csv()?.as_bytes())
    }
}

/// Final (or last good) state of a path run.
#[derive(Debug, Clone)]
pub struct PathOutcome {
    pub u: ScalarField,
    pub t: f64,
    pub report: SolveReport,
}

impl PathOutcome {
    pub fn converged(&self) -> bool {
        self.report.status == PathStatus::Converged
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    problem_hash: String,
    t: f64,
    dt: f64,
    records: Vec<StepRecord>,
    rejected: Vec<RejectedStep>,
}

const CHECKPOINT_STATE: &str = "checkpoint.json";
const CHECKPOINT_FIELD: &str = "checkpoint_u.fyf";

fn save_checkpoint(dir: &Path, ck: &Checkpoint, u: &ScalarField) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_scalar(&dir.join(CHECKPOINT_FIELD), u)?;
    let json = serde_json::to_string(ck)?;
    write_atomic(&dir.join(CHECKPOINT_STATE), json.as_bytes())
}

fn load_checkpoint(dir: &Path, hash: &str) -> Result<Option<(Checkpoint, ScalarField)>> {
    let state = dir.join(CHECKPOINT_STATE);
    if !state.exists() {
        return Ok(None);
    }
    let ck: Checkpoint = serde_json::from_slice(&std::fs::read(&state)?)?;
    if ck.problem_hash != hash {
        return Ok(None);
    }
    let u = load_scalar(&dir.join(CHECKPOINT_FIELD))?;
    Ok(Some((ck, u)))
}

fn failure_reason(e: &FyError) -> String {
    match e {
        FyError::Cone { .. } => "cone margin".into(),
        FyError::Stagnation(_) => "newton stagnation".into(),
        other => other.to_string(),
    }
}

fn accept(
    sol: NewtonSolve,
    t: f64,
    dt: f64,
    started: Instant,
    p: &ProblemData,
    opts: &PathOptions,
) -> Result<(ScalarField, StepRecord)> {
    let it = AdmissibleIterate::check(sol.u, t, p, opts.constraint_tol)?;
    if !(sol.residual_inf <= opts.tol) {
        return Err(FyError::Stagnation(format!(
            "accepted residual {:e} above {:e}",
            sol.residual_inf, opts.tol
        )));
    }
    let record = StepRecord {
        t,
        dt,
        newton_iterations: sol.iterations,
        residual_inf: sol.residual_inf,
        residual_full_inf: sol.residual_full_inf,
        constraint_drift: p.constraint_drift(&it.u),
        diagnostics: compute_diagnostics(&it.u, t, p)?,
        identity: verify_integral_identity(&it.u, opts.identity_k, t, p)?,
        seconds: started.elapsed().as_secs_f64(),
        trace: sol.history,
    };
    Ok((it.u, record))
}

/// Runs the continuity method from `u₀ = log M₀` at `t = 0` to `t = 1`.
///
/// A path failure (step underflow) is not an error: the outcome carries the
/// last accepted state and `status = failed`. Model errors such as a
/// degenerate `w²` propagate.
pub fn run_path(p: &ProblemData, opts: &PathOptions) -> Result<PathOutcome> {
    let clock = Instant::now();
    let sched = opts.schedule;
    let newton = NewtonOptions {
        max_tol: opts.newton.max_tol.min(opts.tol),
        ..opts.newton
    };
    let resumed = match (&opts.checkpoint_dir, opts.resume) {
        (Some(dir), true) => load_checkpoint(dir, &opts.problem_hash)?,
        _ => None,
    };
    let (mut u, mut t, mut dt, mut records, mut rejected) = match resumed {
        Some((ck, u)) => {
            let it = AdmissibleIterate::check(u, ck.t, p, opts.constraint_tol)?;
            (it.u, ck.t, ck.dt, ck.records, ck.rejected)
        }
        None => {
            let started = Instant::now();
            let sol = newton_solve(&p.trivial_solution(), 0.0, p, &newton)?;
            let (u, rec) = accept(sol, 0.0, 0.0, started, p, opts)?;
            (u, 0.0, sched.dt0, vec![rec], Vec::new())
        }
    };
    let mut failure = None;
    while t < 1.0 {
        let step = dt.min(1.0 - t);
        let t_try = if step >= 1.0 - t { 1.0 } else { t + step };
        let started = Instant::now();
        let attempt = newton_solve(&u, t_try, p, &newton).and_then(|sol| {
            let corrections = sol.history.len() - 1;
            accept(sol, t_try, step, started, p, opts).map(|a| (a, corrections))
        });
        match attempt {
            Ok(((un, rec), corrections)) => {
                log::info!(
                    "accepted t={t_try} dt={step} newton={} |Psi|={:e}",
                    rec.newton_iterations,
                    rec.residual_inf
                );
                u = un;
                t = t_try;
                records.push(rec);
                if corrections <= sched.easy_steps {
                    dt = (dt * sched.grow).min(sched.dt_max);
                }
                if let Some(dir) = &opts.checkpoint_dir {
                    let ck = Checkpoint {
                        problem_hash: opts.problem_hash.clone(),
                        t,
                        dt,
                        records: records.clone(),
                        rejected: rejected.clone(),
                    };
                    save_checkpoint(dir, &ck, &u)?;
                }
            }
            Err(e @ (FyError::Cone { .. } | FyError::Stagnation(_))) => {
                log::info!("rejected t={t_try} dt={step}: {e}");
                let reason = failure_reason(&e);
                rejected.push(RejectedStep {
                    t_try,
                    dt: step,
                    reason: e.to_string(),
                });
                dt = step * sched.shrink;
                if dt < sched.dt_min {
                    failure = Some(reason);
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    let final_residual_inf = records.last().map_or(f64::NAN, |r| r.residual_inf);
    let final_residual_full_inf = records.last().map_or(f64::NAN, |r| r.residual_full_inf);
    let report = SolveReport {
        problem_hash: opts.problem_hash.clone(),
        n: p.n(),
        grid_n: p.grid().points_per_axis(),
        alpha: p.alpha(),
        m0: p.m0(),
        tol: opts.tol,
        schedule: sched,
        newton,
        status: if failure.is_none() {
            PathStatus::Converged
        } else {
            PathStatus::Failed
        },
        failure_reason: failure,
        t_final: t,
        final_residual_inf,
        final_residual_full_inf,
        records,
        rejected,
        total_seconds: clock.elapsed().as_secs_f64(),
        reference_error: None,
    };
    Ok(PathOutcome { u, t, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{HermitianField, TorusGrid};
    use crate::symfunc::HermitianMatrix;

    fn trivial_problem(grid: TorusGrid, m0: f64) -> ProblemData {
        let rho = HermitianField::constant(grid, &HermitianMatrix::from_real_diagonal(&[1.0, 0.5]));
        ProblemData::new(HermitianMatrix::identity(2), rho, ScalarField::zeros(grid), -1.0, m0)
            .unwrap()
    }

    #[test]
    fn diagnostics_of_constant() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let p = trivial_problem(grid, 1e3);
        let d = compute_diagnostics(&p.trivial_solution(), 0.5, &p).unwrap();
        assert!((d.sup_eu_over_m0 - 1.0).abs() < 1e-12);
        assert!((d.m0_sup_e_minus_u - 1.0).abs() < 1e-12);
        assert_eq!(d.sup_grad_sq, 0.0);
        assert_eq!(d.c2_ratio, 0.0);
        assert!(d.min_cone_margin > 0.0);
    }

    #[test]
    fn diagnostics_closed_form() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let p = trivial_problem(grid, 1e3);
        let u = p.normalize(&ScalarField::from_fn(grid, |x| 1e3f64.ln() + 0.1 * x[0].sin()));
        let d = compute_diagnostics(&u, 1.0, &p).unwrap();
        // Grid mean of e^{0.1 sin x} is I₀(0.1) up to aliasing far below 1e-10.
        let i0: f64 = (0..20)
            .map(|k| {
                let f: f64 = (1..=k).map(|j| j as f64).product();
                (0.05f64).powi(2 * k) / (f * f)
            })
            .sum();
        assert!((d.sup_eu_over_m0 - 0.1f64.exp() / i0).abs() < 1e-10);
        assert!((d.m0_sup_e_minus_u - i0 * 0.1f64.exp()).abs() < 1e-10);
        let shifted = compute_diagnostics(&u.translate(&[3, 1, 0, 5]), 1.0, &p).unwrap();
        for (a, b) in [
            (d.sup_grad_sq, shifted.sup_grad_sq),
            (d.c2_ratio, shifted.c2_ratio),
            (d.min_sigma2, shifted.min_sigma2),
            (d.min_cone_margin, shifted.min_cone_margin),
        ] {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn identity_trivial() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let p = trivial_problem(grid, 1e3);
        let d = verify_integral_identity(&p.trivial_solution(), 2.0, 1.0, &p).unwrap();
        assert!(d.defect <= 1e-12);
    }

    #[test]
    fn trivial_path_one_iteration_per_step() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let p = trivial_problem(grid, 1e3);
        let out = run_path(&p, &PathOptions::default()).unwrap();
        assert!(out.converged());
        assert_eq!(out.t, 1.0);
        assert!(out.report.records.iter().all(|r| r.newton_iterations == 1));
        assert!(out.u.sub(&p.trivial_solution()).max_abs() == 0.0);
        let csv = out.report.to_csv().unwrap();
        assert_eq!(csv.lines().count(), out.report.records.len() + 1);
        let back: SolveReport = serde_json::from_str(&out.report.to_json()).unwrap();
        assert_eq!(back.records.len(), out.report.records.len());
        assert_eq!(back.status, PathStatus::Converged);
    }

    #[test]
    fn resume_from_checkpoint() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let p = trivial_problem(grid, 1e3);
        let dir = tempfile::tempdir().unwrap();
        let opts = PathOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            problem_hash: "abc".into(),
            ..PathOptions::default()
        };
        let full = run_path(&p, &opts).unwrap();
        // A finished checkpoint resumes at t = 1 without new steps.
        let again = run_path(&p, &PathOptions { resume: true, ..opts.clone() }).unwrap();
        assert_eq!(again.report.records.len(), full.report.records.len());
        let other = run_path(
            &p,
            &PathOptions {
                resume: true,
                problem_hash: "other".into(),
                ..opts
            },
        )
        .unwrap();
        assert_eq!(other.report.records.len(), full.report.records.len());
        assert!(other.report.records[0].t == 0.0);
    }
}
