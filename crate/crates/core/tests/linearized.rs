mod common;

use fuyau_core::linearized::{apply_l, apply_lstar, min_eigenvalue, newton_solve, LinearizedSystem, NewtonOptions};
use fuyau_core::model::{admissibility, manufacture, residual_divergence};
use fuyau_core::{integrate, ScalarField};

fn base_point(n: usize, big_n: usize) -> (fuyau_core::model::ProblemData, ScalarField) {
    let p = common::problem(n, big_n, -1.0, 50.0);
    let u = p.normalize(&common::low_mode_field(p.grid(), 0.05, 1.1));
    (p, u)
}

fn fd_error(p: &fuyau_core::model::ProblemData, u: &ScalarField, h: &ScalarField, t: f64, eps: f64) -> f64 {
    let sys = LinearizedSystem::new(u, t, p).unwrap();
    let lh = apply_l(h, &sys).unwrap();
    let r0 = residual_divergence(u, t, p).unwrap();
    let r1 = residual_divergence(&u.axpy(eps, h), t, p).unwrap();
    r1.sub(&r0).scale(1.0 / eps).sub(&lh).max_abs()
}

#[test]
fn gateaux_derivative_first_order() {
    for (n, big_n) in [(2, 16), (3, 8)] {
        let (p, u) = base_point(n, big_n);
        assert!(admissibility(&u, 0.7, &p).admissible());
        let h = common::low_mode_field(p.grid(), 1.0, -0.4);
        let e1 = fd_error(&p, &u, &h, 0.7, 1e-3);
        let e2 = fd_error(&p, &u, &h, 0.7, 5e-4);
        let order = (e1 / e2).log2();
        assert!((0.5..=2.0).contains(&order), "n={n}: order {order}, errors {e1:e} {e2:e}");
    }
}

#[test]
fn l_integrates_to_zero() {
    let (p, u) = base_point(2, 16);
    let sys = LinearizedSystem::new(&u, 0.4, &p).unwrap();
    let h = common::low_mode_field(p.grid(), 2.0, 0.9);
    let lh = apply_l(&h, &sys).unwrap();
    assert!(integrate(&lh).abs() <= 1e-10 * lh.max_abs().max(1.0));
}

#[test]
fn adjoint_identity_on_band_limited_pairs() {
    let (p, u) = base_point(2, 16);
    let sys = LinearizedSystem::new(&u, 1.0, &p).unwrap();
    for k in 0..5 {
        let h = common::low_mode_field(p.grid(), 1.0, 0.37 * k as f64);
        let psi = common::low_mode_field(p.grid(), 1.0, 1.0 - 0.21 * k as f64);
        let lh = apply_l(&h, &sys).unwrap();
        let ls = apply_lstar(&psi, &sys);
        let a = integrate(&psi.mul(&lh));
        let b = integrate(&ls.mul(&h));
        let scale = integrate(&psi.mul(&psi)).sqrt() * integrate(&lh.mul(&lh)).sqrt();
        assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
    }
    let one = apply_lstar(&ScalarField::constant(p.grid(), 1.0), &sys);
    assert!(one.max_abs() <= 1e-10);
    assert!(min_eigenvalue(sys.gtilde(), p.metric()) > 0.0);
}

#[test]
fn quadratic_convergence_on_manufactured_instance() {
    let p = common::problem(2, 16, -1.0, 1e3);
    let u_star = ScalarField::from_fn(p.grid(), |x| 1e3f64.ln() + 0.05 * x[0].sin() * x[2].cos());
    let m = manufacture(&u_star, &p).unwrap();
    let u0 = m.u_star.axpy(1.0, &ScalarField::from_fn(p.grid(), |x| 0.02 * x[1].cos()));
    let opts = NewtonOptions {
        rel_tol: 0.0,
        abs_tol: 1e-9,
        ..NewtonOptions::default()
    };
    let out = newton_solve(&u0, 1.0, &m.problem, &opts).unwrap();
    // Residuals below ~1e-12·M₀ sit on the round-off floor and carry no rate.
    let floor = 1e-9;
    let r: Vec<f64> = out.residuals.iter().copied().filter(|&x| x > floor).collect();
    assert!(r.len() >= 3, "{:?}", out.residuals);
    let k = r.len() - 1;
    let rate = (r[k] / r[k - 1]).ln() / (r[k - 1] / r[k - 2]).ln();
    assert!(rate >= 1.7, "{r:?}");
    assert!(out.u.sub(&m.u_star).max_abs() < 1e-8);
    assert!(m.problem.constraint_drift(&out.u) <= 1e-8);
}
