//! Command-line front end: reductions, single-eigenvalue solves, residual
//! surveys, Monte Carlo simulation checks, and the self-check suite.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric failure,
//! 3 self-check failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ou_spectra::builtins::{builtin_by_name, Reduction};
use ou_spectra::eigen::{
    poly_eigen_2d, residual_generator_1d, residual_generator_2d, residual_semigroup_1d,
    residual_semigroup_2d, solve_1d, solve_2d_isotropic, weyl_residual_minimize, SolveOpts,
    WeylOpts,
};
use ou_spectra::error::Error;
use ou_spectra::gauss::spectral_abscissa;
use ou_spectra::lift::{
    contraction_check, invariance_test, pushforward_equivalence_check, SimConfig,
};
use ou_spectra::model::{
    reduce_1d, reduce_2d, rinf_identity_check, variance_identity_check, CharExpProfile,
    CylinderFunction, OUModel, QuadSpec, Spec1D, Spec2D,
};
use ou_spectra::survey::{
    emit_csv, emit_json, render_csv, run_survey, ModelSource, ReductionChoice, SurveyConfig,
};
use ou_spectra::{C64, Vec64};

#[derive(Parser)]
#[command(
    name = "spectra",
    about = "Ornstein-Uhlenbeck semigroup laboratory: reductions, eigenfunctions, residual surveys, simulation",
    version
)]
struct Cli {
    /// Worker threads (default: all cores). Output is identical either way.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reduce a model along its leading adjoint-drift eigenpair and verify
    /// the reduced-coefficient identities.
    Reduce(ReduceArgs),
    /// Solve one eigenvalue candidate for a reduced operator and report
    /// residuals.
    Eigen(EigenArgs),
    /// Residual survey over a grid of eigenvalue candidates.
    Survey(SurveyArgs),
    /// Monte Carlo invariance, pushforward, and contraction checks.
    Simulate(SimulateArgs),
    /// Run the self-check suite on a builtin model and emit a JSON report.
    Check(CheckArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Builtin model name (demo1d, demo2d_iso, demo2d_general, bigmodel).
    #[arg(long, conflicts_with = "model")]
    builtin: Option<String>,
    /// Path to a model file (n=/m=/A<i>=/B<i>= format).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    source: ModelArgs,
    /// Reduction choice: 1d, 2d, or auto.
    #[arg(long, default_value = "auto")]
    reduction: String,
}

#[derive(Args)]
struct EigenArgs {
    /// Eigenvalue candidate, e.g. "-0.5+0.3i".
    #[arg(long, allow_hyphen_values = true)]
    lambda: String,
    /// 1D reduced drift coefficient (negative).
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// 1D reduced diffusion coefficient (positive).
    #[arg(long)]
    q: Option<f64>,
    /// 2D rotation-scaling real part (negative).
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// 2D rotation speed (nonzero).
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// 2D isotropic diffusion coefficient (positive).
    #[arg(long)]
    r: Option<f64>,
    /// Angular mode override for the 2D solve.
    #[arg(long, allow_hyphen_values = true)]
    m: Option<i32>,
    /// Times for semigroup residuals.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2])]
    times: Vec<f64>,
}

#[derive(Args)]
struct SurveyArgs {
    /// Flat key-value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    re_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    re_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Times for semigroup residuals, comma separated.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    gen_tol: Option<f64>,
    #[arg(long)]
    semi_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: ModelArgs,
    /// Transition time.
    #[arg(long, default_value_t = 0.5)]
    time: f64,
    /// Number of Monte Carlo paths.
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CheckArgs {
    /// Builtin model to check.
    #[arg(long, default_value = "demo1d")]
    builtin: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the JSON report here as well as printing the summary.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized; --jobs ignored");
        }
    }
    let outcome = match cli.cmd {
        Cmd::Reduce(args) => cmd_reduce(args),
        Cmd::Eigen(args) => cmd_eigen(args),
        Cmd::Survey(args) => cmd_survey(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Check(args) => cmd_check(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Exit-code classes: configuration/input problems are 1, numeric and
/// accuracy failures are 2.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Domain(_) | Error::Dimension(_)
        | Error::Io { .. } => 1,
        Error::Unstable(_) | Error::Degenerate(_) | Error::Numeric(_) | Error::Accuracy(_) => 2,
    }
}

/// Parse a complex literal such as "-0.5+0.3i", "-1", "0.3i", or "-1-2i".
fn parse_complex(s: &str) -> Result<C64, Error> {
    let t = s.trim().replace(' ', "");
    let bad = || Error::Config(format!("cannot parse complex number '{s}'"));
    if t.is_empty() {
        return Err(bad());
    }
    let parse_imag = |u: &str| -> Result<f64, Error> {
        let body = &u[..u.len() - 1];
        match body {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => body.parse().map_err(|_| bad()),
        }
    };
    // split at the last +/- that is not leading and not an exponent sign
    let bytes = t.as_bytes();
    let mut split = None;
    for i in (1..t.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    if let Some(i) = split {
        let (head, tail) = t.split_at(i);
        if tail.ends_with('i') {
            let re: f64 = head.parse().map_err(|_| bad())?;
            return Ok(C64::new(re, parse_imag(tail)?));
        }
    }
    if t.ends_with('i') {
        Ok(C64::new(0.0, parse_imag(&t)?))
    } else {
        Ok(C64::new(t.parse().map_err(|_| bad())?, 0.0))
    }
}

fn load_model(args: &ModelArgs) -> Result<(OUModel, Option<Reduction>), Error> {
    match (&args.builtin, &args.model) {
        (Some(name), None) => {
            let b = builtin_by_name(name)?;
            Ok((b.model, Some(b.reduction)))
        }
        (None, Some(path)) => Ok((OUModel::from_file(path)?, None)),
        (None, None) => Err(Error::Config(
            "specify a model with --builtin NAME or --model PATH".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn model_source(args: &ModelArgs) -> Option<ModelSource> {
    match (&args.builtin, &args.model) {
        (Some(name), None) => Some(ModelSource::Builtin(name.clone())),
        (None, Some(path)) => Some(ModelSource::File(path.clone())),
        _ => None,
    }
}

fn cmd_reduce(args: ReduceArgs) -> Result<u8, Error> {
    let choice = match args.reduction.as_str() {
        "1d" => ReductionChoice::OneD,
        "2d" => ReductionChoice::TwoD,
        "auto" => ReductionChoice::Auto,
        other => {
            return Err(Error::Config(format!(
                "unknown reduction '{other}' (expected 1d, 2d, or auto)"
            )))
        }
    };
    let cfg = SurveyConfig {
        source: model_source(&args.source).ok_or_else(|| {
            Error::Config("specify a model with --builtin NAME or --model PATH".into())
        })?,
        reduction: choice,
        ..SurveyConfig::default()
    };
    let (model, resolved) = ou_spectra::survey::resolve_model(&cfg)?;
    println!(
        "model: n = {}, spectral abscissa = {:.6e}",
        model.state_dim(),
        spectral_abscissa(model.drift())?
    );
    match resolved {
        ou_spectra::survey::ResolvedReduction::OneD(spec) => {
            print_spec1d(&spec);
            let rep = variance_identity_check(&spec, &model)?;
            println!(
                "variance identity: <Qinf x0*, x0*> = {:.12e}, -q/(2 gamma) = {:.12e}, rel diff {:.3e} [{}]",
                rep.lyapunov_route,
                rep.formula_route,
                rep.rel_diff,
                pass_str(rep.passed)
            );
            Ok(if rep.passed { 0 } else { 2 })
        }
        ou_spectra::survey::ResolvedReduction::TwoDIso(spec)
        | ou_spectra::survey::ResolvedReduction::TwoDGeneral(spec) => {
            print_spec2d(&spec);
            let rep = rinf_identity_check(&spec, &model, &[0.1, 0.5, 1.0, 2.0])?;
            println!(
                "covariance identity: max finite-s deviation {:.3e}, max stationary deviation {:.3e} [{}]",
                rep.max_finite_s_dev,
                rep.max_rinf_dev,
                pass_str(rep.passed)
            );
            Ok(if rep.passed { 0 } else { 2 })
        }
    }
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn print_spec1d(spec: &Spec1D) {
    println!(
        "reduced 1D operator: gamma = {:.12e}, q = {:.12e}, stationary variance = {:.12e}",
        spec.gamma,
        spec.q,
        spec.stationary_variance()
    );
}

fn print_spec2d(spec: &Spec2D) {
    println!(
        "reduced 2D operator: gamma = {:.12e} + {:.12e} i",
        spec.a, spec.b
    );
    println!(
        "R = [[{:.12e}, {:.12e}], [{:.12e}, {:.12e}]]{}",
        spec.r[(0, 0)],
        spec.r[(0, 1)],
        spec.r[(1, 0)],
        spec.r[(1, 1)],
        if spec.isotropic_r().is_some() {
            " (isotropic)"
        } else {
            ""
        }
    );
}

fn cmd_eigen(args: EigenArgs) -> Result<u8, Error> {
    let lambda = parse_complex(&args.lambda)?;
    let opts = SolveOpts::default();
    match (args.gamma, args.q, args.a, args.b, args.r) {
        (Some(gamma), Some(q), None, None, None) => {
            let spec = Spec1D {
                gamma,
                q,
                x0star: Vec64::from_vec(vec![1.0]),
            };
            let ef = solve_1d(&spec, lambda, &opts)?;
            println!("lambda = {} (1D: gamma = {gamma}, q = {q})", fmt_c(lambda));
            println!("gen_residual = {:.6e}", residual_generator_1d(&ef));
            for &t in &args.times {
                println!(
                    "semi_residual(t={t}) = {:.6e}",
                    residual_semigroup_1d(&ef, t)?
                );
            }
            println!("l1_norm = {:.6e}, tail_gap = {:.3e}", ef.l1_norm, ef.tail_gap);
            Ok(0)
        }
        (None, None, Some(a), Some(b), Some(r)) => {
            let spec = Spec2D {
                a,
                b,
                r: nalgebra::Matrix2::new(r, 0.0, 0.0, r),
                c: nalgebra::Matrix2::new(a, -b, b, a),
                h1star: Vec64::from_vec(vec![1.0, 0.0]),
                h2star: Vec64::from_vec(vec![0.0, 1.0]),
            };
            let ef = solve_2d_isotropic(&spec, lambda, args.m, &opts)?;
            println!(
                "lambda = {} (2D isotropic: a = {a}, b = {b}, r = {r}, angular mode m = {})",
                fmt_c(lambda),
                ef.m
            );
            println!("gen_residual = {:.6e}", residual_generator_2d(&ef));
            for &t in &args.times {
                println!(
                    "semi_residual(t={t}) = {:.6e}",
                    residual_semigroup_2d(&ef, t)?
                );
            }
            println!("l1_norm = {:.6e}, tail_gap = {:.3e}", ef.l1_norm, ef.tail_gap);
            Ok(0)
        }
        _ => Err(Error::Config(
            "specify either --gamma and --q (1D) or --a, --b, and --r (2D)".into(),
        )),
    }
}

fn fmt_c(z: C64) -> String {
    if z.im >= 0.0 {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}{}i", z.re, z.im)
    }
}

fn cmd_survey(args: SurveyArgs) -> Result<u8, Error> {
    let mut cfg = match &args.config {
        Some(path) => SurveyConfig::from_file(path)?,
        None => SurveyConfig::default(),
    };
    if let Some(src) = model_source(&args.source) {
        cfg.source = src;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        };
    }
    take!(re_min);
    take!(re_max);
    take!(im_min);
    take!(im_max);
    take!(step);
    take!(gen_tol);
    take!(semi_tol);
    take!(seed);
    if let Some(times) = args.times {
        cfg.times = times;
    }
    if let Some(p) = args.out_csv {
        cfg.out_csv = Some(p);
    }
    if let Some(p) = args.out_json {
        cfg.out_json = Some(p);
    }
    let report = run_survey(&cfg)?;
    if let Some(path) = &cfg.out_csv {
        emit_csv(&report, path)?;
    }
    if let Some(path) = &cfg.out_json {
        emit_json(&report, path)?;
    }
    if cfg.out_csv.is_none() && cfg.out_json.is_none() {
        print!("{}", render_csv(&report));
    }
    eprintln!(
        "survey: {} points, {} passed (rate {:.4}), max gen residual {}, max semigroup residual {}",
        report.summary.points,
        report.summary.passes,
        report.summary.pass_rate,
        opt_fmt(report.summary.max_gen_residual),
        opt_fmt(report.summary.max_semi_residual),
    );
    Ok(0)
}

fn opt_fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3e}"))
}

/// Standard bounded test function on the reduced coordinates of a model.
fn bounded_probe(functionals: Vec<Vec64>) -> Result<CylinderFunction, Error> {
    let xi: Vec<f64> = (0..functionals.len())
        .map(|k| 0.9 - 0.4 * k as f64)
        .collect();
    CylinderFunction::new(functionals, Arc::new(CharExpProfile { xi }))
}

fn reduction_functionals(reduction: &Option<Reduction>, n: usize) -> Vec<Vec64> {
    match reduction {
        Some(Reduction::OneD { x0star, .. }) => vec![x0star.clone()],
        Some(Reduction::TwoD { x0star, .. }) => vec![
            Vec64::from_iterator(x0star.len(), x0star.iter().map(|z| z.re)),
            Vec64::from_iterator(x0star.len(), x0star.iter().map(|z| z.im)),
        ],
        None => {
            let e1 = Vec64::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
            vec![e1]
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Error> {
    let (model, reduction) = load_model(&args.source)?;
    let cfg = SimConfig {
        n_paths: args.paths,
        seed: args.seed,
        ..SimConfig::default()
    };
    let functionals = reduction_functionals(&reduction, model.state_dim());
    let f = bounded_probe(functionals.clone())?;
    let mut all_ok = true;

    let inv = invariance_test(&model, &f, args.time, &cfg)?;
    all_ok &= inv.passed;
    println!(
        "invariance: |E f(start) - E f(t)| = {:.3e} (tol {:.3e}) [{}]",
        inv.diff,
        inv.tol,
        pass_str(inv.passed)
    );

    let push = pushforward_equivalence_check(&model, &functionals, &cfg)?;
    all_ok &= push.passed;
    println!(
        "pushforward: max covariance deviation {:.3e} (band {:.3e}) [{}]",
        push.max_cov_dev,
        push.band,
        pass_str(push.passed)
    );

    let con = contraction_check(&model, &f, args.time, &cfg, &QuadSpec::default())?;
    all_ok &= con.passed;
    println!(
        "contraction: ||P(t)f||_1 = {:.6} vs ||f||_1 = {:.6} (stderr {:.2e}) [{}]",
        con.l1_after,
        con.l1_before,
        con.stderr,
        pass_str(con.passed)
    );

    Ok(if all_ok { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// self-check suite
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CheckItem {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct CheckReport {
    builtin: String,
    seed: u64,
    checks: Vec<CheckItem>,
    passed: bool,
}

fn push_check(checks: &mut Vec<CheckItem>, name: &str, passed: bool, detail: String) {
    println!("{} {} ({detail})", pass_str(passed), name);
    checks.push(CheckItem {
        name: name.to_string(),
        passed,
        detail,
    });
}

fn cmd_check(args: CheckArgs) -> Result<u8, Error> {
    let b = builtin_by_name(&args.builtin)?;
    let mut checks = Vec::new();

    let abscissa = spectral_abscissa(b.model.drift())?;
    push_check(
        &mut checks,
        "stability",
        abscissa < 0.0,
        format!("spectral abscissa {abscissa:.6e}"),
    );

    let survey_cfg = SurveyConfig {
        source: ModelSource::Builtin(args.builtin.clone()),
        re_min: -2.0,
        re_max: -1.0,
        im_min: -1.0,
        im_max: 1.0,
        step: 0.5,
        seed: args.seed,
        ..SurveyConfig::default()
    };

    match &b.reduction {
        Reduction::OneD { x0star, gamma } => {
            let spec = reduce_1d(&b.model, x0star, *gamma)?;
            let var = variance_identity_check(&spec, &b.model)?;
            push_check(
                &mut checks,
                "variance_identity",
                var.passed,
                format!("rel diff {:.3e}", var.rel_diff),
            );
            let mut max_lattice = 0.0f64;
            for n in 1..=3 {
                let lam = C64::new(spec.gamma * n as f64, 0.0);
                let ef = solve_1d(&spec, lam, &SolveOpts::default())?;
                max_lattice = max_lattice.max(residual_generator_1d(&ef));
            }
            push_check(
                &mut checks,
                "lattice_eigenfunctions",
                max_lattice <= 1e-8,
                format!("max generator residual {max_lattice:.3e}"),
            );
        }
        Reduction::TwoD { x0star, gamma } => {
            let spec = reduce_2d(&b.model, x0star, *gamma)?;
            let rinf = rinf_identity_check(&spec, &b.model, &[0.1, 0.5, 1.0, 2.0])?;
            push_check(
                &mut checks,
                "covariance_identity",
                rinf.passed,
                format!(
                    "max deviations {:.3e} / {:.3e}",
                    rinf.max_finite_s_dev, rinf.max_rinf_dev
                ),
            );
            // polynomial lattice eigenfunctions are exact for any R
            let mut max_lattice = 0.0f64;
            for (i, j) in [(1, 0), (1, 1), (2, 1)] {
                let (lam, p) = poly_eigen_2d(&spec, i, j)?;
                let resid = p
                    .apply_generator(&spec)
                    .add_scaled(&p, -lam)
                    .max_abs_coeff();
                max_lattice = max_lattice.max(resid);
            }
            push_check(
                &mut checks,
                "lattice_eigenfunctions",
                max_lattice <= 1e-10,
                format!("max coefficient residual {max_lattice:.3e}"),
            );
            if spec.isotropic_r().is_none() {
                let off = weyl_residual_minimize(
                    &spec,
                    C64::new(-1.0, 1.3),
                    &WeylOpts::default(),
                )?;
                let (lam0, _) = poly_eigen_2d(&spec, 1, 0)?;
                let on = weyl_residual_minimize(&spec, lam0, &WeylOpts::default())?;
                push_check(
                    &mut checks,
                    "approximate_eigenfunctions",
                    off.residual <= 0.1 && on.residual <= 1e-6,
                    format!(
                        "off-lattice residual {:.3e}, lattice residual {:.3e}",
                        off.residual, on.residual
                    ),
                );
            }
        }
    }

    let survey = run_survey(&survey_cfg)?;
    let survey_ok = survey.summary.pass_rate == 1.0 && !survey.rows.is_empty();
    push_check(
        &mut checks,
        "residual_survey",
        survey_ok,
        format!(
            "{} points, pass rate {:.4}, max gen residual {}",
            survey.summary.points,
            survey.summary.pass_rate,
            opt_fmt(survey.summary.max_gen_residual)
        ),
    );

    let cfg = SimConfig {
        n_paths: 10_000,
        seed: args.seed,
        ..SimConfig::default()
    };
    let functionals = reduction_functionals(&Some(b.reduction.clone()), b.model.state_dim());
    let f = bounded_probe(functionals.clone())?;
    let inv = invariance_test(&b.model, &f, 0.5, &cfg)?;
    push_check(
        &mut checks,
        "invariance",
        inv.passed,
        format!("deviation {:.3e} (tol {:.3e})", inv.diff, inv.tol),
    );
    let push = pushforward_equivalence_check(&b.model, &functionals, &cfg)?;
    push_check(
        &mut checks,
        "pushforward",
        push.passed,
        format!("max deviation {:.3e} (band {:.3e})", push.max_cov_dev, push.band),
    );
    let con = contraction_check(&b.model, &f, 0.5, &cfg, &QuadSpec::default())?;
    push_check(
        &mut checks,
        "contraction",
        con.passed,
        format!(
            "||P(t)f||_1 = {:.6} vs ||f||_1 = {:.6}",
            con.l1_after, con.l1_before
        ),
    );

    let passed = checks.iter().all(|c| c.passed);
    let report = CheckReport {
        builtin: args.builtin.clone(),
        seed: args.seed,
        checks,
        passed,
    };
    let json = format!(
        "{}\n",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if let Some(path) = &args.out_json {
        std::fs::write(path, &json).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    println!(
        "check {}: {}/{} checks passed [{}]",
        args.builtin,
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        pass_str(passed)
    );
    Ok(if passed { 0 } else { 3 })
}
