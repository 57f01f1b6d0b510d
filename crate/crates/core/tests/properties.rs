mod common;

use fuyau_core::fields::io::{decode_hermitian, decode_scalar, encode_hermitian, encode_scalar};
use fuyau_core::linearized::{apply_l, LinearizedSystem};
use fuyau_core::model::{residual_divergence, MuSource, Phase, ScalarMode};
use fuyau_core::symfunc::{
    cone_check, elementary_symmetric, f_tensor, garding_pairing, generalized_spectrum, sigma_k,
};
use fuyau_core::{
    complex_hessian, integrate, Deriv, HermitianMatrix, Metric, ScalarField, Spectrum, TorusGrid,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn spectrum(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0_f64, n)
}

fn gamma2(n: usize) -> impl Strategy<Value = Vec<f64>> {
    spectrum(n).prop_filter("in Γ₂", |l| {
        let e = elementary_symmetric(l);
        e[1] > 1e-2 && e[2] > 1e-2
    })
}

fn hermitian(n: usize) -> impl Strategy<Value = HermitianMatrix> {
    prop::collection::vec(-1.0..1.0_f64, n * n).prop_map(move |v| {
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            m[j * n + j] = Complex64::new(v[j * n + j], 0.0);
            for k in j + 1..n {
                let z = Complex64::new(v[j * n + k], v[k * n + j]);
                m[j * n + k] = z;
                m[k * n + j] = z.conj();
            }
        }
        HermitianMatrix::from_row_major(n, &m).unwrap()
    })
}

/// Sum of a few low Fourier modes on an `n = 2`, `N = 8` grid.
fn low_mode_field() -> impl Strategy<Value = ScalarField> {
    let mode = (
        -1.0..1.0_f64,
        prop::collection::vec(-2i64..=2, 4),
        prop::bool::ANY,
    )
        .prop_map(|(amplitude, wavevector, sin)| ScalarMode {
            amplitude,
            wavevector,
            phase: if sin { Phase::Sin } else { Phase::Cos },
        });
    prop::collection::vec(mode, 1..4).prop_map(|modes| {
        let grid = TorusGrid::new(2, 8).unwrap();
        MuSource { modes, dump: None }.build(grid, None).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_k_is_permutation_invariant(l in spectrum(4), k in 1usize..=4) {
        let mut rev = l.clone();
        rev.reverse();
        let a = sigma_k(&Spectrum::new(l).unwrap(), k).unwrap();
        let b = sigma_k(&Spectrum::new(rev).unwrap(), k).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn sigma_k_is_homogeneous(l in spectrum(3), s in 0.1..4.0_f64, k in 1usize..=3) {
        let scaled: Vec<f64> = l.iter().map(|x| s * x).collect();
        let a = sigma_k(&Spectrum::new(l).unwrap(), k).unwrap();
        let b = sigma_k(&Spectrum::new(scaled).unwrap(), k).unwrap();
        prop_assert!((b - s.powi(k as i32) * a).abs() <= 1e-10 * b.abs().max(1.0));
    }

    #[test]
    fn cone_is_closed_under_addition(a in gamma2(3), b in gamma2(3)) {
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(cone_check(&Spectrum::new(sum).unwrap()).in_cone);
    }

    #[test]
    fn garding_holds(a in gamma2(4), b in gamma2(4)) {
        let (lhs, rhs) = garding_pairing(&Spectrum::new(a).unwrap(), &Spectrum::new(b).unwrap()).unwrap();
        prop_assert!(lhs >= rhs - 1e-12);
    }

    #[test]
    fn generalized_spectrum_of_metric_multiple(a in hermitian(3), s in 0.5..2.0_f64) {
        // Eigenvalues of s·g with respect to g are all s.
        let g = Metric::new(HermitianMatrix::identity(3).add_scaled(0.2, &a)).unwrap();
        let l = generalized_spectrum(&g.form().scale(s), &g).unwrap();
        prop_assert!(l.values().iter().all(|x| (x - s).abs() < 1e-12));
    }

    #[test]
    fn f_tensor_trace_identity(l in gamma2(3)) {
        let a = HermitianMatrix::from_real_diagonal(&l);
        let f = f_tensor(&a, &Metric::identity(3)).unwrap();
        let e = elementary_symmetric(&l);
        let want = 2.0 * e[1] / (2.0 * e[2].sqrt());
        prop_assert!((f.trace - want).abs() <= 1e-10 * want.abs().max(1.0));
        prop_assert!((f.tensor.trace() - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivatives_integrate_to_zero(f in low_mode_field()) {
        for j in 0..2 {
            let d = f.derivative(Deriv::Z(j));
            prop_assert!(integrate(&d.re()).abs() < 1e-12);
            prop_assert!(integrate(&d.im()).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_commutes_with_translation(f in low_mode_field(), s in prop::collection::vec(-3isize..=3, 4)) {
        let a = f.translate(&s).derivative(Deriv::ZBar(1));
        let b = f.derivative(Deriv::ZBar(1));
        let b = b.re().translate(&s);
        prop_assert!(a.re().sub(&b).max_abs() < 1e-12);
    }

    #[test]
    fn hessian_trace_has_zero_mean(f in low_mode_field()) {
        // Σ_j ∂_j∂̄_j f = ¼ Δf, whose mean vanishes on the torus.
        let h = complex_hessian(&f);
        let trace: Vec<f64> = (0..h.grid().len()).map(|i| h.at(i).trace()).collect();
        let trace = ScalarField::new(f.grid(), trace).unwrap();
        prop_assert!(integrate(&trace).abs() < 1e-12);
    }

    #[test]
    fn dumps_round_trip(f in low_mode_field()) {
        let back = decode_scalar(&encode_scalar(&f)).unwrap();
        prop_assert_eq!(back.values(), f.values());
        let h = complex_hessian(&f);
        let back = decode_hermitian(&encode_hermitian(&h)).unwrap();
        prop_assert_eq!(back.entries(), h.entries());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn residual_has_zero_mean(f in low_mode_field(), t in 0.0..1.0_f64) {
        let p = common::problem(2, 8, -1.0, 50.0);
        let u = p.normalize(&f.scale(0.05));
        let psi = residual_divergence(&u, t, &p).unwrap();
        prop_assert!(integrate(&psi).abs() <= 1e-10 * psi.max_abs().max(1.0));
    }

    #[test]
    fn normalize_hits_m0(f in low_mode_field(), m0 in 1.0..1e4_f64) {
        let p = common::problem(2, 8, -1.0, m0);
        let u = p.normalize(&f);
        prop_assert!(p.constraint_drift(&u) < 1e-12);
    }

    #[test]
    fn residual_is_translation_equivariant(f in low_mode_field(), s in prop::collection::vec(-2isize..=2, 4)) {
        // With constant data the problem is translation invariant.
        let p = common::problem(2, 8, -1.0, 50.0);
        let p = p.with_mu(ScalarField::zeros(p.grid())).unwrap();
        let rho = fuyau_core::HermitianField::constant(p.grid(), &HermitianMatrix::from_real_diagonal(&[0.5, 0.25]));
        let p = fuyau_core::model::ProblemData::new(p.metric().form().clone(), rho, p.mu().clone(), -1.0, 50.0).unwrap();
        let u = p.normalize(&f.scale(0.05));
        let a = residual_divergence(&u.translate(&s), 0.7, &p).unwrap();
        let b = residual_divergence(&u, 0.7, &p).unwrap().translate(&s);
        prop_assert!(a.sub(&b).max_abs() <= 1e-10 * b.max_abs().max(1.0));
    }

    #[test]
    fn l_is_linear(f in low_mode_field(), h1 in low_mode_field(), h2 in low_mode_field(), a in -2.0..2.0_f64) {
        let p = common::problem(2, 8, -1.0, 50.0);
        let u = p.normalize(&f.scale(0.05));
        let sys = LinearizedSystem::new(&u, 0.5, &p).unwrap();
        let lhs = apply_l(&h1.axpy(a, &h2), &sys).unwrap();
        let rhs = apply_l(&h1, &sys).unwrap().axpy(a, &apply_l(&h2, &sys).unwrap());
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-10 * rhs.max_abs().max(1.0));
    }
}
