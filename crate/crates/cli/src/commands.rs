use std::fs;
use std::path::{Path, PathBuf};

use fuyau_core::continuation::{run_path, PathOptions, PathOutcome, StepSchedule};
use fuyau_core::fields::io::{load_scalar, save_scalar, save_scalar_csv, write_atomic};
use fuyau_core::fields::mutation;
use fuyau_core::model::{
    admissibility, manufacture as build_manufactured, preset, problem_hash, MuSource, Phase,
    PresetOptions, ProblemData, ProblemFile, ScalarMode,
};
use fuyau_core::verify::{self, VerifyOptions};
use fuyau_core::{FyError, ScalarField};
use serde::Serialize;

use crate::{ManufactureArgs, ProblemArgs, SolveArgs, SolverArgs, SweepArgs, VerifyArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_PATH_FAILED: u8 = 2;
pub const EXIT_CONFIG: u8 = 64;
pub const EXIT_INADMISSIBLE: u8 = 65;
pub const EXIT_IO: u8 = 74;

const DIMENSIONS: [usize; 3] = [2, 3, 4];
const GRID_SIZES: [usize; 3] = [8, 16, 32];

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

fn config(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn io_error(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{what}: {e}"),
    }
}

/// Core errors during setup are configuration errors, except I/O.
fn setup_error(e: FyError) -> CliError {
    match e {
        FyError::Io(_) => io_error("i/o", e),
        other => config(other.to_string()),
    }
}

/// Sizes the global rayon pool from `FY_THREADS` when it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FY_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| config(format!("FY_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| config(format!("cannot size thread pool: {e}")))
}

struct Loaded {
    file: ProblemFile,
    base: Option<PathBuf>,
    data: ProblemData,
    hash: String,
}

fn problem_file(args: &ProblemArgs) -> Result<(ProblemFile, Option<PathBuf>), CliError> {
    if let Some(n) = args.n {
        if !DIMENSIONS.contains(&n) {
            return Err(config(format!("--n must be one of 2, 3, 4 (got {n})")));
        }
    }
    if let Some(g) = args.grid_n {
        if !GRID_SIZES.contains(&g) {
            return Err(config(format!("--grid-N must be one of 8, 16, 32 (got {g})")));
        }
    }
    let (mut file, base) = match (&args.preset, &args.problem) {
        (Some(name), None) => {
            let opts = PresetOptions {
                n: args.n,
                grid_n: args.grid_n,
                m0: args.m0,
                alpha: args.alpha,
                seed: args.seed,
            };
            (preset(name, opts).map_err(setup_error)?, None)
        }
        (None, Some(path)) => {
            let file = ProblemFile::load(path).map_err(setup_error)?;
            if args.n.is_some_and(|n| n != file.n) {
                return Err(config("--n conflicts with the problem file"));
            }
            if args.grid_n.is_some_and(|g| g != file.grid_n) {
                return Err(config("--grid-N conflicts with the problem file"));
            }
            let base = path.parent().map(Path::to_path_buf);
            (file, base)
        }
        _ => return Err(config("give exactly one of --preset or --problem")),
    };
    if let Some(m0) = args.m0 {
        file.m0 = m0;
    }
    if let Some(alpha) = args.alpha {
        file.alpha = alpha;
    }
    if !DIMENSIONS.contains(&file.n) {
        return Err(config(format!("n must be one of 2, 3, 4 (got {})", file.n)));
    }
    if !GRID_SIZES.contains(&file.grid_n) {
        return Err(config(format!("N must be one of 8, 16, 32 (got {})", file.grid_n)));
    }
    Ok((file, base))
}

fn load(file: ProblemFile, base: Option<PathBuf>) -> Result<Loaded, CliError> {
    let data = file.build(base.as_deref()).map_err(setup_error)?;
    let hash = problem_hash(&file, base.as_deref()).map_err(setup_error)?;
    Ok(Loaded {
        file,
        base,
        data,
        hash,
    })
}

/// Copy of `file` whose dump paths no longer depend on `base`.
fn portable(file: &ProblemFile, base: Option<&Path>) -> ProblemFile {
    let fix = |p: &Option<PathBuf>| {
        p.as_ref().map(|p| match base {
            Some(b) if p.is_relative() => {
                let joined = b.join(p);
                fs::canonicalize(&joined).unwrap_or(joined)
            }
            _ => p.clone(),
        })
    };
    let mut out = file.clone();
    out.rho.dump = fix(&file.rho.dump);
    out.mu.dump = fix(&file.mu.dump);
    out
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(&format!("cannot create {}", dir.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_error("json", e))?;
    write_atomic(path, text.as_bytes()).map_err(|e| io_error(&path.display().to_string(), e))
}

fn path_options(s: &SolverArgs, hash: &str, checkpoint: Option<PathBuf>, resume: bool) -> Result<PathOptions, CliError> {
    if !(s.tol > 0.0) {
        return Err(config("--tol must be positive"));
    }
    if !(s.dt0 > 0.0 && s.dt0 <= 1.0) || !(s.dt_max >= s.dt0 && s.dt_max <= 1.0) {
        return Err(config("need 0 < --dt0 <= --dt-max <= 1"));
    }
    Ok(PathOptions {
        schedule: StepSchedule {
            dt0: s.dt0,
            dt_max: s.dt_max,
            ..StepSchedule::default()
        },
        tol: s.tol,
        checkpoint_dir: checkpoint,
        resume,
        problem_hash: hash.to_string(),
        ..PathOptions::default()
    })
}

fn run(p: &ProblemData, opts: &PathOptions) -> Result<PathOutcome, CliError> {
    run_path(p, opts).map_err(|e| match e {
        FyError::Io(_) => io_error("i/o", e),
        other => CliError {
            code: EXIT_PATH_FAILED,
            message: other.to_string(),
        },
    })
}

fn write_outcome(dir: &Path, out: &PathOutcome) -> Result<(), CliError> {
    let wrap = |e: FyError| io_error(&dir.display().to_string(), e);
    out.report.save(dir).map_err(wrap)?;
    save_scalar(&dir.join("u_final.fyf"), &out.u).map_err(wrap)?;
    save_scalar_csv(&dir.join("u_final.csv"), &out.u).map_err(wrap)
}

fn summarize(out: &PathOutcome) {
    let r = &out.report;
    match &r.failure_reason {
        None => println!(
            "converged: t = 1, steps = {}, |Psi|inf = {:.3e}, {:.1} s",
            r.records.len(),
            r.final_residual_inf,
            r.total_seconds
        ),
        Some(reason) => println!(
            "failed at t = {:.6} ({reason}), last |Psi|inf = {:.3e}",
            r.t_final, r.final_residual_inf
        ),
    }
}

pub fn solve(a: &SolveArgs) -> Result<u8, CliError> {
    let (file, base) = problem_file(&a.problem)?;
    let loaded = load(file, base)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("problem.json"), &portable(&loaded.file, loaded.base.as_deref()))?;
    let reference = match &a.reference {
        Some(path) => {
            let r = load_scalar(path).map_err(setup_error)?;
            if r.grid() != loaded.data.grid() {
                return Err(config("reference grid does not match the problem"));
            }
            Some(r)
        }
        None => None,
    };
    let opts = path_options(&a.solver, &loaded.hash, Some(a.out.join("checkpoint")), a.resume)?;
    let mut out = run(&loaded.data, &opts)?;
    if let Some(r) = reference {
        out.report.reference_error = Some(out.u.sub(&r).max_abs());
    }
    write_outcome(&a.out, &out)?;
    summarize(&out);
    if let Some(e) = out.report.reference_error {
        println!("|u - u_ref|inf = {e:.3e}");
    }
    Ok(if out.converged() { EXIT_OK } else { EXIT_PATH_FAILED })
}

pub fn verify(a: &VerifyArgs) -> Result<u8, CliError> {
    if a.samples == 0 {
        return Err(config("--samples must be positive"));
    }
    if a.mutate {
        mutation::set(true);
    }
    let opts = VerifyOptions {
        seed: a.seed,
        samples: a.samples,
    };
    let report = verify::run(a.only.as_deref(), opts).map_err(setup_error)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("verify.json"), &report)?;
    for c in &report.checks {
        println!(
            "{} {}/{}: {:.3e} (tol {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.check,
            c.observed,
            c.tolerance
        );
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Default `u* − log M₀ = 0.05 sin x₁ cos x₃`.
fn default_ustar_modes(axes: usize) -> MuSource {
    let wave = |s: i64| {
        let mut m = vec![0; axes];
        m[0] = 1;
        m[2] = s;
        m
    };
    MuSource {
        modes: [1, -1]
            .into_iter()
            .map(|s| ScalarMode {
                amplitude: 0.025,
                wavevector: wave(s),
                phase: Phase::Sin,
            })
            .collect(),
        dump: None,
    }
}

fn ustar(a: &ManufactureArgs, p: &ProblemData) -> Result<ScalarField, CliError> {
    let grid = p.grid();
    let offset = |modes: MuSource| {
        let f = modes.build(grid, None).map_err(setup_error)?;
        Ok(f.map(|v| v + p.m0().ln()))
    };
    match &a.ustar {
        None => offset(default_ustar_modes(grid.axes())),
        Some(path) if path.extension().is_some_and(|e| e == "fyf") => {
            let u = load_scalar(path).map_err(setup_error)?;
            if u.grid() != grid {
                return Err(config("u* grid does not match the problem"));
            }
            Ok(u)
        }
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(&path.display().to_string(), e))?;
            let modes: MuSource =
                serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
            if modes.dump.is_some() {
                return Err(config("u* mode list cannot reference a dump"));
            }
            offset(modes)
        }
    }
}

#[derive(Serialize)]
struct ManufactureSummary {
    #[serde(rename = "M0")]
    m0: f64,
    stokes_defect: f64,
    cone_margin: f64,
    problem_hash: String,
    u_star: String,
    mu_star: String,
}

pub fn manufacture(a: &ManufactureArgs) -> Result<u8, CliError> {
    let (file, base) = problem_file(&a.problem)?;
    let mut file = portable(&file, base.as_deref());
    file.mu = MuSource::default();
    let loaded = load(file, None)?;
    let u = ustar(a, &loaded.data)?;
    let normalized = loaded.data.normalize(&u);
    let zero_mu = loaded.data.with_mu(ScalarField::zeros(loaded.data.grid())).map_err(setup_error)?;
    let adm = admissibility(&normalized, 1.0, &zero_mu);
    if !adm.admissible() {
        let x = loaded.data.grid().coordinates(adm.worst_point);
        let coords: Vec<String> = x.iter().map(|c| format!("{c:.4}")).collect();
        return Err(CliError {
            code: EXIT_INADMISSIBLE,
            message: format!(
                "u* is not admissible at t = 1: cone margin {:.3e} at grid point {} (x = [{}])",
                adm.margin,
                adm.worst_point,
                coords.join(", ")
            ),
        });
    }
    let m = build_manufactured(&u, &loaded.data).map_err(setup_error)?;
    create_dir(&a.out)?;
    let wrap = |e: FyError| io_error(&a.out.display().to_string(), e);
    save_scalar(&a.out.join("mu_star.fyf"), m.problem.mu()).map_err(wrap)?;
    save_scalar(&a.out.join("u_star.fyf"), &m.u_star).map_err(wrap)?;
    let mut out_file = loaded.file.clone();
    out_file.mu = MuSource {
        modes: Vec::new(),
        dump: Some(PathBuf::from("mu_star.fyf")),
    };
    let problem_path = a.out.join("problem.json");
    out_file.save(&problem_path).map_err(wrap)?;
    let summary = ManufactureSummary {
        m0: out_file.m0,
        stokes_defect: m.stokes_defect,
        cone_margin: adm.margin,
        problem_hash: problem_hash(&out_file, Some(&a.out)).map_err(wrap)?,
        u_star: "u_star.fyf".into(),
        mu_star: "mu_star.fyf".into(),
    };
    write_json(&a.out.join("manufacture.json"), &summary)?;
    println!(
        "manufactured: stokes defect {:.3e}, cone margin {:.3e}, wrote {}",
        m.stokes_defect,
        adm.margin,
        problem_path.display()
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    #[serde(rename = "M0")]
    m0: f64,
    converged: bool,
    t_final: f64,
    residual_inf: f64,
    #[serde(rename = "sup_eu_over_M0")]
    sup_eu_over_m0: f64,
    #[serde(rename = "M0_sup_e_minus_u")]
    m0_sup_e_minus_u: f64,
    sup_grad_sq: f64,
    c2_ratio: f64,
    min_cone_margin: f64,
    failure_reason: String,
}

#[derive(Serialize)]
struct SweepSummary {
    rows: Vec<SweepRow>,
    /// max/min of `sup e^u / M₀` over converged members.
    upper_spread: Option<f64>,
    /// max/min of `M₀ sup e^{−u}` over converged members.
    lower_spread: Option<f64>,
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return None;
    }
    let hi = v.iter().cloned().fold(f64::MIN, f64::max);
    let lo = v.iter().cloned().fold(f64::MAX, f64::min);
    Some(hi / lo)
}

pub fn sweep(a: &SweepArgs) -> Result<u8, CliError> {
    if a.m0_list.len() < 2 {
        return Err(config("--M0-list needs at least two values"));
    }
    if a.m0_list.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(config("every M0 must be positive and finite"));
    }
    let (file, base) = problem_file(&a.problem)?;
    create_dir(&a.out)?;
    let mut rows = Vec::new();
    for &m0 in &a.m0_list {
        let mut f = file.clone();
        f.m0 = m0;
        let loaded = load(f, base.clone())?;
        let dir = a.out.join(format!("M0_{m0:e}"));
        create_dir(&dir)?;
        write_json(&dir.join("problem.json"), &portable(&loaded.file, loaded.base.as_deref()))?;
        let opts = path_options(&a.solver, &loaded.hash, None, false)?;
        let out = match run(&loaded.data, &opts) {
            Ok(o) => o,
            Err(e) if e.code == EXIT_PATH_FAILED => {
                eprintln!("M0 = {m0:e}: {}", e.message);
                rows.push(SweepRow {
                    m0,
                    converged: false,
                    t_final: 0.0,
                    residual_inf: f64::NAN,
                    sup_eu_over_m0: f64::NAN,
                    m0_sup_e_minus_u: f64::NAN,
                    sup_grad_sq: f64::NAN,
                    c2_ratio: f64::NAN,
                    min_cone_margin: f64::NAN,
                    failure_reason: e.message,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        write_outcome(&dir, &out)?;
        print!("M0 = {m0:e}: ");
        summarize(&out);
        let r = &out.report;
        let d = r.records.last().map(|s| s.diagnostics);
        let pick = |f: fn(&fuyau_core::continuation::Diagnostics) -> f64| d.as_ref().map_or(f64::NAN, f);
        rows.push(SweepRow {
            m0,
            converged: out.converged(),
            t_final: r.t_final,
            residual_inf: r.final_residual_inf,
            sup_eu_over_m0: pick(|d| d.sup_eu_over_m0),
            m0_sup_e_minus_u: pick(|d| d.m0_sup_e_minus_u),
            sup_grad_sq: pick(|d| d.sup_grad_sq),
            c2_ratio: pick(|d| d.c2_ratio),
            min_cone_margin: pick(|d| d.min_cone_margin),
            failure_reason: r.failure_reason.clone().unwrap_or_default(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| io_error("csv", e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_error("csv", e))?;
    write_atomic(&a.out.join("sweep.csv"), &bytes).map_err(|e| io_error("sweep.csv", e))?;
    let ok = || rows.iter().filter(|r| r.converged);
    let summary = SweepSummary {
        upper_spread: spread(ok().map(|r| r.sup_eu_over_m0)),
        lower_spread: spread(ok().map(|r| r.m0_sup_e_minus_u)),
        rows,
    };
    write_json(&a.out.join("sweep.json"), &summary)?;
    if let (Some(u), Some(l)) = (summary.upper_spread, summary.lower_spread) {
        println!("spread of sup e^u/M0: {u:.4}, of M0 sup e^-u: {l:.4}");
    }
    let all = summary.rows.iter().all(|r| r.converged);
    Ok(if all { EXIT_OK } else { EXIT_PATH_FAILED })
}
