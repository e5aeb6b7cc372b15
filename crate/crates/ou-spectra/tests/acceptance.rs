//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with its headline metric.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ou_spectra::builtins::{
    builtin_by_name, demo1d, demo2d_general, demo2d_iso, random_model_with_complex_pair,
    random_model_with_real_pair, Reduction,
};
use ou_spectra::eigen::{
    lattice_eigenvalue_2d, lp_truncated_log_norms, residual_generator_1d, solve_1d,
    solve_2d_isotropic, weyl_residual_minimize, SolveOpts, WeylOpts,
};
use ou_spectra::gauss::{rank2_trace, GaussianMeasure};
use ou_spectra::lift::{
    contraction_check, invariance_test, invariance_test_with_measure, lift_1d, lift_2d, SimConfig,
};
use ou_spectra::model::{
    generator_apply, reduce_1d, reduce_2d, rinf_identity_check, variance_identity_check,
    CharExpProfile, CylinderFunction, OUModel, QuadSpec,
};
use ou_spectra::survey::{run_survey, ModelSource, SurveyConfig};
use ou_spectra::{C64, Mat, Vec64};

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {name}: {detail}");
}

// criterion 1: the reduced stationary variance equals -q/(2 gamma) for
// random stable models with a real adjoint eigenpair
#[test]
fn criterion_01_variance_identity() {
    let start = Instant::now();
    let mut max_rel = 0.0f64;
    for seed in 0..20u64 {
        let n = 2 + (seed as usize % 7);
        let (model, x0, gamma) = random_model_with_real_pair(n, 1000 + seed).unwrap();
        let spec = reduce_1d(&model, &x0, gamma).unwrap();
        let rep = variance_identity_check(&spec, &model).unwrap();
        max_rel = max_rel.max(rep.rel_diff);
    }
    let ok = max_rel <= 1e-8 && start.elapsed().as_secs_f64() < 5.0;
    report(
        1,
        "variance identity",
        ok,
        &format!(
            "20 random real eigenpairs, max rel dev {max_rel:.3e}, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

// criterion 2: the 2x2 reduced covariance satisfies both the finite-time
// pushforward identity and the stationary Lyapunov/Gram equality
#[test]
fn criterion_02_covariance_identity() {
    let start = Instant::now();
    let mut max_dev = 0.0f64;
    for seed in 0..20u64 {
        let n = 3 + (seed as usize % 6);
        let (model, x0, gamma) = random_model_with_complex_pair(n, 2000 + seed).unwrap();
        let spec = reduce_2d(&model, &x0, gamma).unwrap();
        let rep = rinf_identity_check(&spec, &model, &[0.1, 0.5, 1.0, 2.0]).unwrap();
        max_dev = max_dev.max(rep.max_finite_s_dev).max(rep.max_rinf_dev);
    }
    let ok = max_dev <= 1e-8 && start.elapsed().as_secs_f64() < 10.0;
    report(
        2,
        "covariance identity",
        ok,
        &format!(
            "20 random complex eigenpairs, max entrywise dev {max_dev:.3e}, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

fn rotating_iso_model(n: usize) -> (OUModel, ou_spectra::CVec, C64) {
    let mut a = Mat::zeros(n, n);
    a[(0, 0)] = -1.0;
    a[(0, 1)] = -2.0;
    a[(1, 0)] = 2.0;
    a[(1, 1)] = -1.0;
    for i in 2..n {
        a[(i, i)] = -1.0 - 0.1 * (i - 1) as f64;
        a[(i, i - 1)] += 0.3;
    }
    let model = OUModel::new(a, Mat::identity(n, n)).unwrap();
    let x0 = ou_spectra::CVec::from_fn(n, |i, _| match i {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        _ => C64::new(0.0, 0.0),
    });
    (model, x0, C64::new(-1.0, 2.0))
}

// criterion 3: lifted reduced eigenfunctions satisfy L f = lambda f
// pointwise on the full state space, across state dimensions
#[test]
fn criterion_03_lifting_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut max_rel = 0.0f64;
    let opts = SolveOpts::default();
    for &n in &[2usize, 8, 64] {
        // five random eigenvalues through the 1D route
        let (model, x0, gamma) = random_model_with_real_pair(n, 3000 + n as u64).unwrap();
        let spec = reduce_1d(&model, &x0, gamma).unwrap();
        for _ in 0..5 {
            let lam = C64::new(rng.gen_range(-2.0..-0.5), rng.gen_range(-2.0..2.0));
            let ef = solve_1d(&spec, lam, &opts).unwrap();
            let f = lift_1d(&ef, &x0).unwrap();
            for _ in 0..100 {
                let x = Vec64::from_fn(n, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    1.2 * z
                });
                let lf = generator_apply(&model, &f, &x).unwrap();
                let target = f.eval(&x) * lam;
                let rel = (lf - target).norm() / target.norm().max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
        // five random eigenvalues through the isotropic 2D route
        let (model2, x02, gamma2) = rotating_iso_model(n);
        let spec2 = reduce_2d(&model2, &x02, gamma2).unwrap();
        let h1 = Vec64::from_iterator(n, x02.iter().map(|z| z.re));
        let h2 = Vec64::from_iterator(n, x02.iter().map(|z| z.im));
        for _ in 0..5 {
            let lam = C64::new(rng.gen_range(-2.0..-0.5), rng.gen_range(-2.0..2.0));
            let ef = solve_2d_isotropic(&spec2, lam, None, &opts).unwrap();
            let f = lift_2d(&ef, &h1, &h2).unwrap();
            for _ in 0..100 {
                let x = Vec64::from_fn(n, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    1.2 * z
                });
                let lf = generator_apply(&model2, &f, &x).unwrap();
                let target = f.eval(&x) * lam;
                let rel = (lf - target).norm() / target.norm().max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
    }
    let ok = max_rel <= 1e-8 && start.elapsed().as_secs_f64() < 30.0;
    report(
        3,
        "lifting identities",
        ok,
        &format!(
            "n in {{2, 8, 64}}, 10 eigenfunctions each, 100 probes: max rel dev {max_rel:.3e}, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

// criterion 4: residual survey over the half-plane grid, 1D and isotropic
// 2D, single-threaded under the stated runtime budget
#[test]
fn criterion_04_half_plane_survey() {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let grid = SurveyConfig {
        re_min: -3.0,
        re_max: -0.25,
        im_min: -3.0,
        im_max: 3.0,
        step: 0.25,
        times: vec![0.1, 0.2],
        ..SurveyConfig::default()
    };
    let cfg1 = SurveyConfig {
        source: ModelSource::Builtin("demo1d".into()),
        gen_tol: 1e-8,
        semi_tol: 1e-3,
        ..grid.clone()
    };
    let cfg2 = SurveyConfig {
        source: ModelSource::Builtin("demo2d_iso".into()),
        gen_tol: 1e-6,
        semi_tol: 1e-3,
        ..grid
    };
    let (rep1, rep2) = pool.install(|| {
        (run_survey(&cfg1).unwrap(), run_survey(&cfg2).unwrap())
    });
    let secs = start.elapsed().as_secs_f64();
    let ok = rep1.summary.pass_rate == 1.0
        && rep2.summary.pass_rate == 1.0
        && rep1.rows.len() == 300
        && rep2.rows.len() == 300
        && secs < 600.0;
    report(
        4,
        "half-plane survey",
        ok,
        &format!(
            "1D: {}/{} pass (max gen {:.2e}), 2D: {}/{} pass (max gen {:.2e}), {:.1}s single-threaded",
            rep1.summary.passes,
            rep1.rows.len(),
            rep1.summary.max_gen_residual.unwrap_or(f64::NAN),
            rep2.summary.passes,
            rep2.rows.len(),
            rep2.summary.max_gen_residual.unwrap_or(f64::NAN),
            secs
        ),
    );
}

// criterion 5: truncated L1 norms converge for generic eigenvalues while
// truncated L2 norms diverge; lattice eigenvalues are integrable
#[test]
fn criterion_05_l1_vs_lp_dichotomy() {
    let b = demo1d();
    let Reduction::OneD { x0star, gamma } = &b.reduction else {
        panic!("demo1d reduces to 1D")
    };
    let spec = reduce_1d(&b.model, x0star, *gamma).unwrap();
    let opts = SolveOpts::default();
    let mut max_gap = 0.0f64;
    let mut min_growth = f64::INFINITY;
    for k in 0..10 {
        // strongly negative real parts so the L1 tail increment resolves
        // below 1e-6 within the domain cap; imaginary offsets keep the
        // eigenvalues off the lattice
        let lam = C64::new(-4.53 - 0.41 * k as f64, 0.3 + 0.13 * k as f64);
        let ef = solve_1d(&spec, lam, &opts).unwrap();
        assert!(ef.poly.is_none(), "lambda {lam} should be off-lattice");
        max_gap = max_gap.max(ef.tail_gap);
        let t0 = ef.grid_extent / 4.0;
        let n2 = lp_truncated_log_norms(&ef, 2.0, &[t0, 2.0 * t0, 4.0 * t0]).unwrap();
        min_growth = min_growth.min((0.5 * (n2[2] - n2[0])).exp());
    }
    let mut lattice_ok = true;
    for n in 1..=5u32 {
        let lam = C64::new(spec.gamma * n as f64, 0.0);
        let ef = solve_1d(&spec, lam, &opts).unwrap();
        lattice_ok &= ef.poly.is_some();
        lattice_ok &= residual_generator_1d(&ef) <= 1e-12;
        // polynomial-times-Gaussian: every truncated norm converges
        let n1 = lp_truncated_log_norms(&ef, 1.0, &[10.0, 20.0]).unwrap();
        let n2 = lp_truncated_log_norms(&ef, 2.0, &[10.0, 20.0]).unwrap();
        lattice_ok &= (n1[1].exp() - n1[0].exp()).abs() <= 1e-6 * n1[1].exp();
        lattice_ok &= (n2[1] - n2[0]).abs() <= 1e-8;
    }
    let ok = max_gap < 1e-6 && min_growth >= 10.0 && lattice_ok;
    report(
        5,
        "L1 vs Lp dichotomy",
        ok,
        &format!(
            "10 off-lattice: max L1 increment {max_gap:.3e}, min L2 growth over two doublings {min_growth:.2e}; lattice n <= 5 integrable: {lattice_ok}"
        ),
    );
}

// criterion 6: the closed-form rank-2 trace equals the dense trace
#[test]
fn criterion_06_rank2_trace() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut max_rel = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=64);
        let draw = |rng: &mut ChaCha8Rng| {
            Vec64::from_fn(n, |_, _| {
                let z: f64 = rng.sample(StandardNormal);
                z
            })
        };
        let (x1, y1, x2, y2) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let fast = rank2_trace(&x1, &y1, &x2, &y2).unwrap();
        let dense = &x1 * y1.transpose() + &x2 * y2.transpose();
        let slow = dense.trace();
        max_rel = max_rel.max((fast - slow).abs() / slow.abs().max(1e-300));
    }
    let ok = max_rel <= 1e-12 && start.elapsed().as_secs_f64() < 2.0;
    report(
        6,
        "rank-2 trace",
        ok,
        &format!(
            "1000 instances, dims <= 64, max rel dev {max_rel:.3e}, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

fn bounded_test_functions(model: &OUModel, reduction: &Reduction) -> Vec<CylinderFunction> {
    let n = model.state_dim();
    let functionals: Vec<Vec64> = match reduction {
        Reduction::OneD { x0star, .. } => {
            let e2 = Vec64::from_fn(n, |i, _| if i == 1 { 1.0 } else { 0.0 });
            vec![x0star.clone(), e2]
        }
        Reduction::TwoD { x0star, .. } => vec![
            Vec64::from_iterator(n, x0star.iter().map(|z| z.re)),
            Vec64::from_iterator(n, x0star.iter().map(|z| z.im)),
        ],
    };
    (0..10)
        .map(|k| {
            let xi = vec![0.5 + 0.17 * k as f64, -1.3 + 0.23 * k as f64];
            CylinderFunction::new(functionals.clone(), Arc::new(CharExpProfile { xi })).unwrap()
        })
        .collect()
}

// criterion 7: the stationary Gaussian measure is invariant under the
// simulated dynamics; a perturbed start measure is detected
#[test]
fn criterion_07_invariance_monte_carlo() {
    let start = Instant::now();
    let b = demo2d_iso();
    let fns = bounded_test_functions(&b.model, &b.reduction);
    let cfg = SimConfig {
        n_paths: 100_000,
        seed: 7,
        ..SimConfig::default()
    };
    let mut max_sigmas = 0.0f64;
    let mut all_pass = true;
    for (k, f) in fns.iter().enumerate() {
        for &t in &[0.5, 1.0] {
            let rep = invariance_test(&b.model, f, t, &cfg).unwrap();
            // the internal tolerance is 4x the summed standard errors;
            // the criterion asks for 3x
            let sigmas = 4.0 * rep.diff / (rep.tol - 1e-12);
            max_sigmas = max_sigmas.max(sigmas);
            all_pass &= sigmas <= 3.0;
            let _ = k;
        }
    }
    // negative control: inflate the covariance of the start measure
    let qinf = b.model.qinf().unwrap();
    let wrong = GaussianMeasure::new(&qinf * 4.0).unwrap();
    let neg = invariance_test_with_measure(&b.model, &fns[0], 0.5, &wrong, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = all_pass && !neg.passed && secs < 120.0;
    report(
        7,
        "invariance Monte Carlo",
        ok,
        &format!(
            "10 bounded functions, t in {{0.5, 1}}: max deviation {max_sigmas:.2} standard errors; negative control detected: {}; {secs:.1}s",
            !neg.passed
        ),
    );
}

// criterion 8: the semigroup contracts L1 norms of bounded functions
#[test]
fn criterion_08_contraction() {
    let b = demo2d_iso();
    let fns = bounded_test_functions(&b.model, &b.reduction);
    let cfg = SimConfig {
        n_paths: 5000,
        seed: 8,
        ..SimConfig::default()
    };
    let quad = QuadSpec::default();
    let mut all_pass = true;
    let mut max_excess = f64::NEG_INFINITY;
    for f in &fns {
        for &t in &[0.5, 1.0] {
            let rep = contraction_check(&b.model, f, t, &cfg, &quad).unwrap();
            all_pass &= rep.l1_after <= rep.l1_before + 3.0 * rep.stderr + 1e-12;
            max_excess = max_excess.max(rep.l1_after - rep.l1_before);
        }
    }
    report(
        8,
        "contraction",
        all_pass,
        &format!(
            "10 bounded functions, t in {{0.5, 1}}: max ||P(t)f||_1 - ||f||_1 = {max_excess:.3e}"
        ),
    );
}

// criterion 9: approximate eigenfunctions reach small residuals for the
// anisotropic 2D reduction, and machine precision at lattice points
#[test]
fn criterion_09_general_r_evidence() {
    let start = Instant::now();
    let cfg = SurveyConfig {
        source: ModelSource::Builtin("demo2d_general".into()),
        re_min: -2.0,
        re_max: -0.5,
        im_min: -2.0,
        im_max: 2.0,
        step: 0.5,
        weyl_tol: 0.1,
        ..SurveyConfig::default()
    };
    let rep = run_survey(&cfg).unwrap();
    let max_res = rep.summary.max_gen_residual.unwrap_or(f64::NAN);
    let b = demo2d_general();
    let Reduction::TwoD { x0star, gamma } = &b.reduction else {
        panic!("demo2d_general reduces to 2D")
    };
    let spec = reduce_2d(&b.model, x0star, *gamma).unwrap();
    let mut max_lattice = 0.0f64;
    for (i, j) in [(1u32, 0u32), (0, 1), (1, 1)] {
        let lam = lattice_eigenvalue_2d(&spec, i, j);
        let out = weyl_residual_minimize(&spec, lam, &WeylOpts::default()).unwrap();
        max_lattice = max_lattice.max(out.residual);
    }
    let ok = rep.summary.pass_rate == 1.0 && max_lattice <= 1e-6;
    report(
        9,
        "general-R 2D evidence",
        ok,
        &format!(
            "{} grid points all below 0.1 (max {max_res:.3e}); lattice residual max {max_lattice:.3e}; {:.1}s",
            rep.rows.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

// criterion 10: the self-check report is byte-identical across reruns
#[test]
fn criterion_10_determinism() {
    let exe = env!("CARGO_BIN_EXE_spectra");
    let dir = std::env::temp_dir().join("ou-spectra-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let out1 = dir.join("check1.json");
    let out2 = dir.join("check2.json");
    for out in [&out1, &out2] {
        let status = std::process::Command::new(exe)
            .args([
                "check",
                "--builtin",
                "demo1d",
                "--seed",
                "42",
                "--out-json",
                out.to_str().unwrap(),
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "check run failed");
    }
    let b1 = std::fs::read(&out1).unwrap();
    let b2 = std::fs::read(&out2).unwrap();
    let ok = b1 == b2 && !b1.is_empty();
    report(
        10,
        "determinism",
        ok,
        &format!("two seeded self-check reports, {} bytes, byte-identical: {}", b1.len(), b1 == b2),
    );
}

// the named builtins stay loadable and correctly classified
#[test]
fn builtins_resolve() {
    for name in ["demo1d", "demo2d_iso", "demo2d_general", "bigmodel"] {
        builtin_by_name(name).unwrap();
    }
    assert!(builtin_by_name("nope").is_err());
}
