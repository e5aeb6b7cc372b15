//! Property tests for the structural identities the library relies on:
//! semigroup laws for the matrix exponential and Gramian, Lyapunov fixed
//! points, closed-form Mehler action on complex exponentials, and lattice
//! eigenfunction residuals under randomized coefficients.

use std::sync::Arc;

use proptest::prelude::*;

use ou_spectra::eigen::{
    lattice_eigenvalue_2d, poly_eigen_2d, residual_generator_1d, solve_1d, SolveOpts,
};
use ou_spectra::gauss::{frob, gramian_qt, lyapunov_qinf, mat_exp};
use ou_spectra::model::{
    mehler_apply, CharExpProfile, CylinderFunction, OUModel, QuadSpec, Spec1D, Spec2D,
};
use ou_spectra::{C64, Mat, Vec64};

const N: usize = 3;

/// Random stable drift: a bounded random matrix shifted left of the
/// imaginary axis by more than its norm.
fn stable_drift() -> impl Strategy<Value = Mat> {
    proptest::collection::vec(-1.0f64..1.0, N * N).prop_map(|entries| {
        let g = Mat::from_row_slice(N, N, &entries);
        let shift = frob(&g) + 0.2;
        g - Mat::identity(N, N) * shift
    })
}

fn diffusion_factor() -> impl Strategy<Value = Mat> {
    proptest::collection::vec(-1.0f64..1.0, N * N).prop_map(|entries| {
        Mat::from_row_slice(N, N, &entries) + Mat::identity(N, N) * 0.3
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mat_exp_is_a_semigroup(a in stable_drift(), s in 0.05f64..1.5, t in 0.05f64..1.5) {
        let whole = mat_exp(&a, s + t).unwrap();
        let split = mat_exp(&a, s).unwrap() * mat_exp(&a, t).unwrap();
        prop_assert!(frob(&(whole.clone() - split)) <= 1e-10 * frob(&whole).max(1.0));
    }

    #[test]
    fn gramian_obeys_the_flow_decomposition(
        a in stable_drift(),
        b in diffusion_factor(),
        s in 0.05f64..1.0,
        t in 0.05f64..1.0,
    ) {
        let q = &b * b.transpose();
        let whole = gramian_qt(&a, &q, s + t, 1e-12).unwrap();
        let es = mat_exp(&a, s).unwrap();
        let split = gramian_qt(&a, &q, s, 1e-12).unwrap()
            + &es * gramian_qt(&a, &q, t, 1e-12).unwrap() * es.transpose();
        prop_assert!(frob(&(whole.clone() - split)) <= 1e-9 * frob(&whole).max(1.0));
    }

    #[test]
    fn stationary_covariance_solves_lyapunov(a in stable_drift(), b in diffusion_factor()) {
        let q = &b * b.transpose();
        let qinf = lyapunov_qinf(&a, &q).unwrap();
        let residual = &a * &qinf + &qinf * a.transpose() + &q;
        prop_assert!(frob(&residual) <= 1e-9 * frob(&q).max(1.0));
        // and is the fixed point of the covariance flow
        let t = 0.7;
        let et = mat_exp(&a, t).unwrap();
        let flow = gramian_qt(&a, &q, t, 1e-12).unwrap() + &et * &qinf * et.transpose();
        prop_assert!(frob(&(qinf.clone() - flow)) <= 1e-9 * frob(&qinf).max(1.0));
    }

    #[test]
    fn mehler_matches_the_gaussian_characteristic_function(
        a in stable_drift(),
        b in diffusion_factor(),
        xi in proptest::collection::vec(-1.2f64..1.2, 2),
        x in proptest::collection::vec(-1.5f64..1.5, N),
        t in 0.1f64..1.0,
    ) {
        let model = OUModel::new(a.clone(), b).unwrap();
        let h1 = Vec64::from_fn(N, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let h2 = Vec64::from_fn(N, |i, _| if i == 1 { 1.0 } else { 0.3 });
        let f = CylinderFunction::new(
            vec![h1.clone(), h2.clone()],
            Arc::new(CharExpProfile { xi: xi.clone() }),
        )
        .unwrap();
        let x = Vec64::from_vec(x);
        let numeric = mehler_apply(&model, &f, t, &x, &QuadSpec::default()).unwrap();
        // closed form: exp(i <xi_lift, e^{tA} x> - xi_lift^T Q_t xi_lift / 2)
        let xi_lift = h1 * xi[0] + h2 * xi[1];
        let mean = (mat_exp(&a, t).unwrap() * &x).dot(&xi_lift);
        let var = (model.qt(t).unwrap() * &xi_lift).dot(&xi_lift);
        let exact = (C64::new(0.0, mean) - C64::new(0.5 * var, 0.0)).exp();
        prop_assert!((numeric - exact).norm() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lattice_eigenfunctions_are_polynomial_1d(
        gamma in -2.0f64..-0.3,
        q in 0.3f64..2.0,
        n in 1u32..5,
    ) {
        let spec = Spec1D::synthetic(gamma, q).unwrap();
        let lam = C64::new(gamma * n as f64, 0.0);
        let ef = solve_1d(&spec, lam, &SolveOpts::default()).unwrap();
        prop_assert!(ef.poly.is_some());
        prop_assert!(residual_generator_1d(&ef) <= 1e-10);
    }

    #[test]
    fn off_lattice_eigenfunctions_have_small_residuals_1d(
        gamma in -2.0f64..-0.3,
        q in 0.3f64..2.0,
        re in -2.5f64..-0.4,
        im in 0.05f64..2.0,
    ) {
        let spec = Spec1D::synthetic(gamma, q).unwrap();
        let ef = solve_1d(&spec, C64::new(re, im), &SolveOpts::default()).unwrap();
        prop_assert!(residual_generator_1d(&ef) <= 1e-8);
    }

    #[test]
    fn lattice_polynomials_satisfy_the_2d_generator(
        a in -2.0f64..-0.3,
        b in 0.4f64..2.5,
        r in 0.3f64..2.0,
        i in 0u32..3,
        j in 0u32..3,
    ) {
        prop_assume!(i + j >= 1);
        let spec = Spec2D::synthetic(a, b, nalgebra::Matrix2::identity() * r).unwrap();
        let (lam, poly) = poly_eigen_2d(&spec, i, j).unwrap();
        prop_assert!((lam - lattice_eigenvalue_2d(&spec, i, j)).norm() <= 1e-12);
        let residual = poly.apply_generator(&spec).add_scaled(&poly, -lam);
        prop_assert!(residual.max_abs_coeff() <= 1e-10 * poly.max_abs_coeff().max(1.0));
    }
}
