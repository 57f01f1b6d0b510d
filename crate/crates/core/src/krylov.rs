//! Restarted GMRES with right preconditioning.

/// Settings for [`gmres`].
#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Stop once `‖b − Ax‖ ≤ rel_tol·‖b‖`.
    pub rel_tol: f64,
    /// Also stop once `‖b − Ax‖ ≤ abs_tol`.
    pub abs_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            restart: 60,
            max_iter: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual `‖b − Ax‖/‖b‖` of the returned iterate.
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += s * b);
}

/// Solves `A x = b` from `x = 0`, using `A M⁻¹ y = b`, `x = M⁻¹ y`, with
/// modified Gram-Schmidt and Givens rotations.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> GmresOutcome {
    let dim = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; dim];
    if bnorm == 0.0 {
        return GmresOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let target = opts.rel_tol.max(opts.abs_tol / bnorm);
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;
    while total < opts.max_iter {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= target {
            break;
        }
        let m = opts.restart.min(opts.max_iter - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|a| a / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let mut w = apply(&precond(&v[k]));
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                axpy(&mut w, -h[i][k], vi);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let tmp = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = tmp;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            total += 1;
            // A vanishing new direction means the Krylov space is invariant.
            let breakdown = hn <= 1e-300;
            if breakdown || g[k].abs() / bnorm <= target {
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        // Back substitution for the k×k upper-triangular system.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut z = vec![0.0; dim];
        for (i, yi) in y.iter().enumerate() {
            axpy(&mut z, *yi, &v[i]);
        }
        axpy(&mut x, 1.0, &precond(&z));
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rel = norm(&r) / bnorm;
        if rel <= target || k == 0 {
            break;
        }
    }
    GmresOutcome {
        x,
        iterations: total,
        rel_residual: rel,
        converged: rel <= target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        // Tridiagonal convection-diffusion matrix.
        let n = 50;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = 4.0 * x[i];
                    if i > 0 {
                        s -= 1.5 * x[i - 1];
                    }
                    if i + 1 < n {
                        s -= 0.5 * x[i + 1];
                    }
                    s
                })
                .collect()
        };
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = apply(&x_true);
        let out = gmres(
            apply,
            |v: &[f64]| v.iter().map(|a| a / 4.0).collect(),
            &b,
            GmresOptions {
                rel_tol: 1e-12,
                abs_tol: 0.0,
                restart: 10,
                max_iter: 500,
            },
        );
        assert!(out.converged);
        let err = out.x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn zero_rhs() {
        let out = gmres(|x| x.to_vec(), |x| x.to_vec(), &[0.0; 4], GmresOptions::default());
        assert!(out.converged && out.iterations == 0);
    }
}
