//! JSON problem files, presets and seeded random data.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProblemData;
use crate::error::{FyError, Result};
use crate::fields::{io, HermitianField, ScalarField, TorusGrid};
use crate::symfunc::{HermitianMatrix, Metric};

pub const PRESETS: &[&str] = &["trivial", "fy-example"];

/// Matrix entry written either as a real number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Real(f64),
    Complex([f64; 2]),
}

impl MatrixEntry {
    fn value(self) -> Complex64 {
        match self {
            MatrixEntry::Real(r) => Complex64::new(r, 0.0),
            MatrixEntry::Complex([re, im]) => Complex64::new(re, im),
        }
    }

    fn from_complex(z: Complex64) -> Self {
        if z.im == 0.0 {
            MatrixEntry::Real(z.re)
        } else {
            MatrixEntry::Complex([z.re, z.im])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

impl Phase {
    fn eval(self, x: f64) -> f64 {
        match self {
            Phase::Cos => x.cos(),
            Phase::Sin => x.sin(),
        }
    }
}

/// `(re + i·im)·phase(m·x)` added to entry `(j,k)` of `ρ` and its conjugate
/// to entry `(k,j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub j: usize,
    pub k: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub wavevector: Vec<i64>,
    pub phase: Phase,
}

/// `amplitude·phase(m·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMode {
    pub amplitude: f64,
    pub wavevector: Vec<i64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RhoSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<Vec<MatrixEntry>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<Mode>,
    /// Hermitian field dump; relative paths resolve against the problem file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump: Option<PathBuf>,
}

/// Forcing term; an empty source means `μ = 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MuSource {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ScalarMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump: Option<PathBuf>,
}

/// Serialized form of [`ProblemData`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    #[serde(rename = "N")]
    pub grid_n: usize,
    pub alpha: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub g: Vec<Vec<MatrixEntry>>,
    pub rho: RhoSource,
    #[serde(default)]
    pub mu: MuSource,
}

fn matrix_from_rows(n: usize, rows: &[Vec<MatrixEntry>], what: &str) -> Result<HermitianMatrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(FyError::Invalid(format!("{what} must be a {n}x{n} matrix")));
    }
    let flat: Vec<Complex64> = rows.iter().flatten().map(|e| e.value()).collect();
    HermitianMatrix::from_row_major(n, &flat)
}

fn rows_from_matrix(m: &HermitianMatrix) -> Vec<Vec<MatrixEntry>> {
    let n = m.dim();
    (0..n)
        .map(|j| (0..n).map(|k| MatrixEntry::from_complex(m.get(j, k))).collect())
        .collect()
}

fn phase_arg(wavevector: &[i64], x: &[f64]) -> f64 {
    wavevector.iter().zip(x).map(|(&m, &xi)| m as f64 * xi).sum()
}

fn check_wavevector(w: &[i64], grid: TorusGrid) -> Result<()> {
    if w.len() != grid.axes() {
        return Err(FyError::Invalid(format!(
            "wavevector {w:?} needs {} components",
            grid.axes()
        )));
    }
    let limit = (grid.points_per_axis() / 2) as i64;
    if w.iter().any(|m| m.abs() >= limit) {
        return Err(FyError::Invalid(format!(
            "wavevector {w:?} is not resolved by N = {}",
            grid.points_per_axis()
        )));
    }
    Ok(())
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

impl RhoSource {
    pub fn build(&self, grid: TorusGrid, base: Option<&Path>) -> Result<HermitianField> {
        let n = grid.dim();
        if let Some(d) = &self.dump {
            let h = io::load_hermitian(&resolve(base, d))?;
            if h.grid() != grid {
                return Err(FyError::Invalid("rho dump grid does not match the problem".into()));
            }
            return Ok(h);
        }
        let c = match &self.constant {
            Some(rows) => matrix_from_rows(n, rows, "rho.constant")?,
            None => HermitianMatrix::zeros(n),
        };
        for m in &self.modes {
            if m.j >= n || m.k >= n {
                return Err(FyError::Invalid(format!("mode index ({}, {}) out of range", m.j, m.k)));
            }
            if m.j == m.k && m.im != 0.0 {
                return Err(FyError::Invalid("diagonal rho modes must be real".into()));
            }
            check_wavevector(&m.wavevector, grid)?;
        }
        let base_entries = c.to_row_major();
        HermitianField::from_fn(grid, |x| {
            let mut e = base_entries.clone();
            for m in &self.modes {
                let v = Complex64::new(m.re, m.im) * m.phase.eval(phase_arg(&m.wavevector, x));
                e[m.j * n + m.k] += v;
                if m.j != m.k {
                    e[m.k * n + m.j] += v.conj();
                }
            }
            e
        })
    }
}

impl MuSource {
    pub fn build(&self, grid: TorusGrid, base: Option<&Path>) -> Result<ScalarField> {
        if let Some(d) = &self.dump {
            let f = io::load_scalar(&resolve(base, d))?;
            if f.grid() != grid {
                return Err(FyError::Invalid("mu dump grid does not match the problem".into()));
            }
            return Ok(f);
        }
        for m in &self.modes {
            check_wavevector(&m.wavevector, grid)?;
        }
        Ok(ScalarField::from_fn(grid, |x| {
            self.modes
                .iter()
                .map(|m| m.amplitude * m.phase.eval(phase_arg(&m.wavevector, x)))
                .sum()
        }))
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty() && self.dump.is_none()
    }
}

impl ProblemFile {
    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.n, self.grid_n)
    }

    /// Builds the problem; relative dump paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<ProblemData> {
        let grid = self.grid()?;
        let g = matrix_from_rows(self.n, &self.g, "g")?;
        let rho = self.rho.build(grid, base)?;
        let mu = self.mu.build(grid, base)?;
        ProblemData::new(g, rho, mu, self.alpha, self.m0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_json().as_bytes())
    }
}

/// SHA-256 of the problem file plus the bytes of any referenced dumps.
pub fn problem_hash(file: &ProblemFile, base: Option<&Path>) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(file)?);
    for d in [&file.rho.dump, &file.mu.dump].into_iter().flatten() {
        h.update(std::fs::read(resolve(base, d))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn random_wavevector(rng: &mut ChaCha8Rng, axes: usize, kmax: i64) -> Vec<i64> {
    loop {
        let w: Vec<i64> = (0..axes).map(|_| rng.random_range(-kmax..=kmax)).collect();
        if w.iter().any(|&m| m != 0) {
            return w;
        }
    }
}

fn random_phase(rng: &mut ChaCha8Rng) -> Phase {
    if rng.random_bool(0.5) {
        Phase::Cos
    } else {
        Phase::Sin
    }
}

/// Seeded band-limited real (1,1)-form scaled so that the largest
/// eigenvalue modulus over the grid (relative to `g`) is one.
pub fn random_band_limited_rho(grid: TorusGrid, g: &Metric, seed: u64) -> Result<RhoSource> {
    let n = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = 2.min(grid.points_per_axis() as i64 / 2 - 1);
    let mut constant = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for j in 0..n {
        constant[j][j] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for k in j + 1..n {
            let z = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            constant[j][k] = z;
            constant[k][j] = z.conj();
        }
    }
    let modes: Vec<Mode> = (0..2 * n + 2)
        .map(|_| {
            let j = rng.random_range(0..n);
            let k = rng.random_range(0..n);
            let re = rng.random_range(-1.0..1.0);
            let im = if j == k { 0.0 } else { rng.random_range(-1.0..1.0) };
            Mode {
                j,
                k,
                re,
                im,
                wavevector: random_wavevector(&mut rng, grid.axes(), kmax),
                phase: random_phase(&mut rng),
            }
        })
        .collect();
    let mut src = RhoSource {
        constant: Some(
            constant
                .iter()
                .map(|r| r.iter().map(|&z| MatrixEntry::from_complex(z)).collect())
                .collect(),
        ),
        modes,
        dump: None,
    };
    let field = src.build(grid, None)?;
    let sup = (0..grid.len())
        .map(|i| {
            g.whiten(&field.at(i))
                .eigenvalues()
                .iter()
                .fold(0.0_f64, |m, l| m.max(l.abs()))
        })
        .fold(0.0_f64, f64::max);
    if sup > 0.0 {
        let s = 1.0 / sup;
        let m = matrix_from_rows(n, src.constant.as_ref().expect("set above"), "rho")?.scale(s);
        src.constant = Some(rows_from_matrix(&m));
        for mode in &mut src.modes {
            mode.re *= s;
            mode.im *= s;
        }
    }
    Ok(src)
}

/// Seeded band-limited mean-zero forcing with `sup|μ| = amplitude`.
pub fn random_band_limited_mu(grid: TorusGrid, seed: u64, amplitude: f64) -> Result<MuSource> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d75_5f73_6565_6400);
    let kmax = 2.min(grid.points_per_axis() as i64 / 2 - 1);
    let mut src = MuSource {
        modes: (0..4)
            .map(|_| ScalarMode {
                amplitude: rng.random_range(-1.0..1.0),
                wavevector: random_wavevector(&mut rng, grid.axes(), kmax),
                phase: random_phase(&mut rng),
            })
            .collect(),
        dump: None,
    };
    let sup = src.build(grid, None)?.max_abs();
    if sup > 0.0 {
        for m in &mut src.modes {
            m.amplitude *= amplitude / sup;
        }
    }
    Ok(src)
}

/// Default points per axis for a complex dimension.
pub fn default_grid_n(n: usize) -> usize {
    if n == 2 {
        16
    } else {
        8
    }
}

/// Overrides applied on top of a preset's defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct PresetOptions {
    pub n: Option<usize>,
    pub grid_n: Option<usize>,
    pub m0: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: u64,
}

/// Builds a named preset:
///
/// * `trivial`: `μ = 0`, constant `ρ`, `α = −1`;
/// * `fy-example`: `α = −2`, `μ = 0`, seeded band-limited `ρ` with `‖ρ‖∞ = 1`.
///
/// Both default to `n = 2`, `N = 16` (`N = 8` for `n ≥ 3`) and `M₀ = 10³`.
pub fn preset(name: &str, opts: PresetOptions) -> Result<ProblemFile> {
    let n = opts.n.unwrap_or(2);
    let grid_n = opts.grid_n.unwrap_or_else(|| default_grid_n(n));
    let grid = TorusGrid::new(n, grid_n)?;
    let m0 = opts.m0.unwrap_or(1e3);
    let identity = HermitianMatrix::identity(n);
    let g = rows_from_matrix(&identity);
    match name {
        "trivial" => {
            let diag: Vec<f64> = (0..n).map(|j| 1.0 / (j + 1) as f64).collect();
            Ok(ProblemFile {
                n,
                grid_n,
                alpha: opts.alpha.unwrap_or(-1.0),
                m0,
                g,
                rho: RhoSource {
                    constant: Some(rows_from_matrix(&HermitianMatrix::from_real_diagonal(&diag))),
                    ..Default::default()
                },
                mu: MuSource::default(),
            })
        }
        "fy-example" => Ok(ProblemFile {
            n,
            grid_n,
            alpha: opts.alpha.unwrap_or(-2.0),
            m0,
            g,
            rho: random_band_limited_rho(grid, &Metric::identity(n), opts.seed)?,
            mu: MuSource::default(),
        }),
        other => Err(FyError::Invalid(format!(
            "unknown preset '{other}' (known: {})",
            PRESETS.join(", ")
        ))),
    }
}
