//! Coordinate exterior algebra of `(p,q)`-forms on the flat torus.
//!
//! A form is stored densely on the basis `dz^I ∧ dz̄^J` with `I`, `J`
//! strictly increasing multi-indices encoded as bit masks. Component
//! `(I, J)` lives at position `index(I) * C(n,q) + index(J)`.

use std::sync::atomic::{AtomicBool, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;

use super::spectral::{engine, Deriv};
use super::{HermitianField, ScalarField, TorusGrid};
use crate::error::{FyError, Result};
use crate::symfunc::{HermitianMatrix, Metric};

/// Deliberate sign fault in the wedge kernel, used to check that the
/// verification suites notice a broken kernel.
pub mod mutation {
    use super::*;

    static WEDGE_SIGN_FAULT: AtomicBool = AtomicBool::new(false);

    /// Drops the `(−1)^{|J||K|}` factor from every wedge sign while enabled.
    pub fn set(enabled: bool) {
        WEDGE_SIGN_FAULT.store(enabled, Ordering::SeqCst);
    }

    pub fn enabled() -> bool {
        WEDGE_SIGN_FAULT.load(Ordering::Relaxed)
    }
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// One coefficient function; constants and zeros are kept symbolic.
#[derive(Debug, Clone, PartialEq)]
enum Coef {
    Zero,
    Const(Complex64),
    Field(Vec<Complex64>),
}

impl Coef {
    fn at(&self, idx: usize) -> Complex64 {
        match self {
            Coef::Zero => ZERO,
            Coef::Const(c) => *c,
            Coef::Field(v) => v[idx],
        }
    }

    fn scaled(&self, s: Complex64) -> Coef {
        match self {
            Coef::Zero => Coef::Zero,
            Coef::Const(c) => Coef::Const(c * s),
            Coef::Field(v) => Coef::Field(v.par_iter().map(|z| z * s).collect()),
        }
    }

    fn product(&self, other: &Coef) -> Coef {
        match (self, other) {
            (Coef::Zero, _) | (_, Coef::Zero) => Coef::Zero,
            (Coef::Const(a), Coef::Const(b)) => Coef::Const(a * b),
            (Coef::Const(a), Coef::Field(v)) | (Coef::Field(v), Coef::Const(a)) => {
                Coef::Field(v.par_iter().map(|z| z * a).collect())
            }
            (Coef::Field(a), Coef::Field(b)) => {
                Coef::Field(a.par_iter().zip(b.par_iter()).map(|(x, y)| x * y).collect())
            }
        }
    }

    fn add_assign(&mut self, other: &Coef, len: usize) {
        *self = match (std::mem::replace(self, Coef::Zero), other) {
            (a, Coef::Zero) => a,
            (Coef::Zero, b) => b.clone(),
            (Coef::Const(a), Coef::Const(b)) => Coef::Const(a + b),
            (Coef::Const(a), Coef::Field(v)) => Coef::Field(v.par_iter().map(|z| z + a).collect()),
            (Coef::Field(mut v), Coef::Const(b)) => {
                v.par_iter_mut().for_each(|z| *z += b);
                Coef::Field(v)
            }
            (Coef::Field(mut v), Coef::Field(w)) => {
                debug_assert_eq!(w.len(), len);
                v.par_iter_mut().zip(w.par_iter()).for_each(|(z, y)| *z += y);
                Coef::Field(v)
            }
        };
    }

    fn expand(&self, len: usize) -> Vec<Complex64> {
        match self {
            Coef::Zero => vec![ZERO; len],
            Coef::Const(c) => vec![*c; len],
            Coef::Field(v) => v.clone(),
        }
    }
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Bit masks with `k` of the low `n` bits set, ascending.
fn masks(n: usize, k: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).collect()
}

fn mask_index(mask: u32) -> usize {
    (0..mask).filter(|m| m.count_ones() == mask.count_ones()).count()
}

/// Sign of merging two disjoint increasing blocks into increasing order.
fn merge_sign(a: u32, b: u32) -> f64 {
    // Each element of `b` must pass every larger element of `a`.
    let mut swaps = 0;
    let mut rest = b;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        swaps += (a >> (bit + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Coefficient `s` with `(dz^I∧dz̄^J) ∧ (dz^K∧dz̄^L) = s·dz^{I∪K}∧dz̄^{J∪L}`.
fn wedge_sign(i: u32, j: u32, k: u32, l: u32) -> f64 {
    if i & k != 0 || j & l != 0 {
        return 0.0;
    }
    let cross = if !mutation::enabled() && (j.count_ones() * k.count_ones()) % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    cross * merge_sign(i, k) * merge_sign(j, l)
}

/// A `(p,q)`-form with coefficients sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    grid: TorusGrid,
    p: usize,
    q: usize,
    comps: Vec<Coef>,
}

impl Form {
    pub fn zero(grid: TorusGrid, p: usize, q: usize) -> Result<Self> {
        let n = grid.dim();
        if p > n || q > n {
            return Err(FyError::Domain(format!("degree ({p},{q}) exceeds n = {n}")));
        }
        Ok(Form {
            grid,
            p,
            q,
            comps: vec![Coef::Zero; binom(n, p) * binom(n, q)],
        })
    }

    /// The function `f` as a `(0,0)`-form.
    pub fn scalar(f: &ScalarField) -> Self {
        Form {
            grid: f.grid(),
            p: 0,
            q: 0,
            comps: vec![Coef::Field(f.to_complex().into_values())],
        }
    }

    pub fn constant_scalar(grid: TorusGrid, c: f64) -> Self {
        Form {
            grid,
            p: 0,
            q: 0,
            comps: vec![Coef::Const(Complex64::new(c, 0.0))],
        }
    }

    /// `Σ A_{k̄j} i dz^j∧dz̄^k` with `A_{k̄j}` stored at entry `(j,k)`.
    pub fn from_hermitian(a: &HermitianField) -> Self {
        let grid = a.grid();
        let n = grid.dim();
        let mut f = Form::zero(grid, 1, 1).expect("n >= 1");
        for j in 0..n {
            for k in 0..n {
                let v: Vec<Complex64> = a.entry(j, k).par_iter().map(|z| I * z).collect();
                f.comps[j * n + k] = Coef::Field(v);
            }
        }
        f
    }

    /// Constant-coefficient real (1,1)-form.
    pub fn from_constant_hermitian(grid: TorusGrid, a: &HermitianMatrix) -> Self {
        let n = grid.dim();
        let mut f = Form::zero(grid, 1, 1).expect("n >= 1");
        for j in 0..n {
            for k in 0..n {
                let c = a.get(j, k);
                f.comps[j * n + k] = if c == ZERO {
                    Coef::Zero
                } else {
                    Coef::Const(I * c)
                };
            }
        }
        f
    }

    /// The Kähler form of a constant metric.
    pub fn omega(grid: TorusGrid, g: &Metric) -> Self {
        Self::from_constant_hermitian(grid, g.form())
    }

    /// `ω^k` (not divided by `k!`); `ω^0 = 1`.
    pub fn omega_power(grid: TorusGrid, g: &Metric, k: usize) -> Result<Self> {
        let om = Self::omega(grid, g);
        let mut acc = Self::constant_scalar(grid, 1.0);
        for _ in 0..k {
            acc = acc.wedge(&om)?;
        }
        Ok(acc)
    }

    /// A single basis term `c·dz^I∧dz̄^J` with a field coefficient.
    pub fn monomial(grid: TorusGrid, i_mask: u32, j_mask: u32, coef: Vec<Complex64>) -> Result<Self> {
        let n = grid.dim();
        if (i_mask | j_mask) >> n != 0 {
            return Err(FyError::Domain("multi-index out of range".into()));
        }
        if coef.len() != grid.len() {
            return Err(FyError::Invalid("coefficient length does not match grid".into()));
        }
        let mut f = Form::zero(grid, i_mask.count_ones() as usize, j_mask.count_ones() as usize)?;
        let at = f.slot(i_mask, j_mask);
        f.comps[at] = Coef::Field(coef);
        Ok(f)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn degree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    fn slot(&self, i_mask: u32, j_mask: u32) -> usize {
        let n = self.grid.dim();
        mask_index(i_mask) * binom(n, self.q) + mask_index(j_mask)
    }

    /// Coefficient of `dz^I∧dz̄^J` expanded to one value per grid point.
    pub fn component(&self, i_mask: u32, j_mask: u32) -> Vec<Complex64> {
        debug_assert_eq!(i_mask.count_ones() as usize, self.p);
        debug_assert_eq!(j_mask.count_ones() as usize, self.q);
        self.comps[self.slot(i_mask, j_mask)].expand(self.grid.len())
    }

    /// Coefficient of `dz^I∧dz̄^J` at one grid point.
    pub fn component_at(&self, i_mask: u32, j_mask: u32, idx: usize) -> Complex64 {
        self.comps[self.slot(i_mask, j_mask)].at(idx)
    }

    fn same_shape(&self, other: &Form) -> Result<()> {
        if self.grid != other.grid || self.p != other.p || self.q != other.q {
            return Err(FyError::Domain(format!(
                "cannot add a ({},{})-form to a ({},{})-form",
                other.p, other.q, self.p, self.q
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        self.same_shape(other)?;
        let len = self.grid.len();
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            a.add_assign(b, len);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Form) -> Result<Form> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Form {
        self.scale_complex(Complex64::new(s, 0.0))
    }

    pub fn scale_complex(&self, s: Complex64) -> Form {
        Form {
            grid: self.grid,
            p: self.p,
            q: self.q,
            comps: self.comps.iter().map(|c| c.scaled(s)).collect(),
        }
    }

    /// Pointwise product with a function.
    pub fn mul_field(&self, f: &ScalarField) -> Form {
        let c = Coef::Field(f.to_complex().into_values());
        Form {
            grid: self.grid,
            p: self.p,
            q: self.q,
            comps: self.comps.iter().map(|a| a.product(&c)).collect(),
        }
    }

    /// Exterior product.
    pub fn wedge(&self, other: &Form) -> Result<Form> {
        if self.grid != other.grid {
            return Err(FyError::Domain("wedge of forms on different grids".into()));
        }
        let n = self.grid.dim();
        let (p, q) = (self.p + other.p, self.q + other.q);
        if p > n || q > n {
            return Err(FyError::Domain(format!(
                "wedge degree ({p},{q}) exceeds n = {n}"
            )));
        }
        let len = self.grid.len();
        let mut out = Form::zero(self.grid, p, q)?;
        let (ai, aj) = (masks(n, self.p), masks(n, self.q));
        let (bi, bj) = (masks(n, other.p), masks(n, other.q));
        for (x, &i) in ai.iter().enumerate() {
            for (y, &j) in aj.iter().enumerate() {
                let a = &self.comps[x * aj.len() + y];
                if *a == Coef::Zero {
                    continue;
                }
                for (z, &k) in bi.iter().enumerate() {
                    for (w, &l) in bj.iter().enumerate() {
                        let b = &other.comps[z * bj.len() + w];
                        let s = wedge_sign(i, j, k, l);
                        if s == 0.0 || *b == Coef::Zero {
                            continue;
                        }
                        let at = out.slot(i | k, j | l);
                        let term = a.product(b).scaled(Complex64::new(s, 0.0));
                        out.comps[at].add_assign(&term, len);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Derivative of every coefficient.
    pub fn derivative(&self, d: Deriv) -> Form {
        let sp = engine(self.grid);
        Form {
            grid: self.grid,
            p: self.p,
            q: self.q,
            comps: self
                .comps
                .iter()
                .map(|c| match c {
                    Coef::Field(v) => Coef::Field(sp.derivative(v, d)),
                    _ => Coef::Zero,
                })
                .collect(),
        }
    }

    /// Prepends `dz^j` (if `dp = 1`) and `dz̄^k` (if `dq = 1`) with the matching
    /// derivatives, times `factor`. Contributions to one target component are
    /// summed in Fourier space before a single inverse transform.
    fn differential(&self, dp: usize, dq: usize, factor: Complex64) -> Result<Form> {
        let n = self.grid.dim();
        let (p, q) = (self.p + dp, self.q + dq);
        if p > n || q > n {
            return Err(FyError::Domain(format!("degree ({p},{q}) exceeds n = {n}")));
        }
        let sp = engine(self.grid);
        let len = self.grid.len();
        let mut out = Form::zero(self.grid, p, q)?;
        let mut acc: Vec<Option<Vec<Complex64>>> = vec![None; out.comps.len()];
        let (si, sj) = (masks(n, self.p), masks(n, self.q));
        let extra_i: Vec<u32> = if dp == 1 { (0..n as u32).map(|b| 1 << b).collect() } else { vec![0] };
        let extra_j: Vec<u32> = if dq == 1 { (0..n as u32).map(|b| 1 << b).collect() } else { vec![0] };
        for (x, &i) in si.iter().enumerate() {
            for (y, &j) in sj.iter().enumerate() {
                let Coef::Field(v) = &self.comps[x * sj.len() + y] else {
                    continue;
                };
                let coeffs = sp.coefficients_for_derivative(v);
                for &ei in &extra_i {
                    for &ej in &extra_j {
                        let s = wedge_sign(ei, ej, i, j);
                        if s == 0.0 {
                            continue;
                        }
                        let mut sym: Vec<&[Complex64]> = Vec::with_capacity(2);
                        if ei != 0 {
                            sym.push(sp.symbol(Deriv::Z(ei.trailing_zeros() as usize)));
                        }
                        if ej != 0 {
                            sym.push(sp.symbol(Deriv::ZBar(ej.trailing_zeros() as usize)));
                        }
                        let w = factor * s;
                        let at = out.slot(ei | i, ej | j);
                        let buf = acc[at].get_or_insert_with(|| vec![ZERO; len]);
                        buf.par_iter_mut().enumerate().for_each(|(m, b)| {
                            *b += sym.iter().fold(coeffs[m] * w, |z, s| z * s[m]);
                        });
                    }
                }
            }
        }
        for (slot, a) in acc.into_iter().enumerate() {
            if let Some(mut buf) = a {
                sp.inverse(&mut buf);
                out.comps[slot] = Coef::Field(buf);
            }
        }
        Ok(out)
    }

    /// `∂α = Σ_j dz^j ∧ ∂_j α`.
    pub fn partial(&self) -> Result<Form> {
        self.differential(1, 0, Complex64::new(1.0, 0.0))
    }

    /// `∂̄α = Σ_k dz̄^k ∧ ∂_k̄ α`.
    pub fn partial_bar(&self) -> Result<Form> {
        self.differential(0, 1, Complex64::new(1.0, 0.0))
    }

    /// `i∂∂̄α = Σ_{j,k} i dz^j∧dz̄^k ∧ ∂_j∂_k̄ α`.
    pub fn i_ddbar(&self) -> Result<Form> {
        self.differential(1, 1, I)
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| match c {
                Coef::Zero => 0.0,
                Coef::Const(z) => z.norm(),
                Coef::Field(v) => v.iter().fold(0.0_f64, |m, z| m.max(z.norm())),
            })
            .fold(0.0, f64::max)
    }
}

/// Coefficient of `ω^n/n!` on `dz^{1…n}∧dz̄^{1…n}`: `det g · iⁿ · (−1)^{n(n−1)/2}`.
///
/// Kept in closed form rather than computed with the kernel so that a faulty
/// kernel cannot normalize its own error away.
pub fn volume_coefficient(g: &Metric) -> Complex64 {
    let n = g.dim();
    let sign = if (n * (n - 1) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    I.powu(n as u32) * (g.determinant() * sign)
}

impl Form {
    /// `T / (ω^n/n!)` for a top-degree form, as a complex field.
    pub fn top_ratio_complex(&self, g: &Metric) -> Result<Vec<Complex64>> {
        let n = self.grid.dim();
        if self.p != n || self.q != n {
            return Err(FyError::Domain(format!(
                "top_ratio needs an ({n},{n})-form, got ({},{})",
                self.p, self.q
            )));
        }
        let v = volume_coefficient(g).inv();
        Ok(self.comps[0].expand(self.grid.len()).into_iter().map(|z| z * v).collect())
    }

    /// Real part of [`Form::top_ratio_complex`].
    pub fn top_ratio(&self, g: &Metric) -> Result<ScalarField> {
        let data = self.top_ratio_complex(g)?.into_iter().map(|z| z.re).collect();
        ScalarField::new(self.grid, data)
    }
}

/// `σ₂` of a real (1,1)-form relative to `ω`, from
/// `σ₂(ω′) = C(n,2)·(ω′)²∧ω^{n−2} / ωⁿ`.
pub fn sigma2_by_wedge(a: &Form, g: &Metric) -> Result<ScalarField> {
    let n = a.grid.dim();
    let t = a.wedge(a)?.wedge(&Form::omega_power(a.grid, g, n - 2)?)?;
    let factorial: f64 = (1..=n).map(|x| x as f64).product();
    Ok(t.top_ratio(g)?.scale(binom(n, 2) as f64 / factorial))
}
