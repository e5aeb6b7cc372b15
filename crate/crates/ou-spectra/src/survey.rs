//! Residual surveys over grids of complex eigenvalue candidates.
//!
//! For each grid point in the open left half-plane the survey reduces the
//! model, solves for the candidate eigenfunction, and records generator and
//! semigroup residuals plus integrability diagnostics. Rows are computed in
//! parallel but reported in grid order, so output is independent of
//! scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builtins::{builtin_by_name, Reduction, BUILTIN_NAMES};
use crate::eigen::{
    lp_truncated_log_norms, residual_generator_1d, residual_generator_2d, residual_semigroup_1d,
    residual_semigroup_2d, solve_1d, solve_2d_isotropic, weyl_residual_minimize, Eigenfunction2D,
    SolveOpts, WeylOpts,
};
use crate::error::{Error, Result};
use crate::gauss::eig_pair;
use crate::model::{reduce_1d, reduce_2d, OUModel, Spec1D, Spec2D};
use crate::{C64, Vec64};

/// Where the surveyed model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSource {
    Builtin(String),
    File(PathBuf),
}

/// Which reduction to apply to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReductionChoice {
    OneD,
    TwoD,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyConfig {
    pub source: ModelSource,
    pub reduction: ReductionChoice,
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub step: f64,
    /// Times at which semigroup residuals are evaluated.
    pub times: Vec<f64>,
    pub gen_tol: f64,
    pub semi_tol: f64,
    /// Pass threshold for rows scored by the approximate-eigenfunction
    /// minimizer (anisotropic 2D reductions, where no exact solver exists).
    pub weyl_tol: f64,
    pub grid_step: f64,
    pub ode_rtol: f64,
    pub seed: u64,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            source: ModelSource::Builtin("demo1d".into()),
            reduction: ReductionChoice::Auto,
            re_min: -2.0,
            re_max: -0.5,
            im_min: -2.0,
            im_max: 2.0,
            step: 0.5,
            times: vec![0.1, 0.2],
            gen_tol: 1e-8,
            semi_tol: 1e-3,
            weyl_tol: 0.1,
            grid_step: 0.01,
            ode_rtol: 1e-12,
            seed: 1,
            out_csv: None,
            out_json: None,
        }
    }
}

impl SurveyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.re_max >= 0.0 {
            return Err(Error::Config(
                "grid must lie in the open left half-plane".into(),
            ));
        }
        if !(self.step > 0.0) {
            return Err(Error::Config(format!(
                "grid step must be > 0, got {}",
                self.step
            )));
        }
        if !(self.gen_tol > 0.0) || !(self.semi_tol > 0.0) || !(self.weyl_tol > 0.0) {
            return Err(Error::Config("tolerances must be > 0".into()));
        }
        if self.times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("semigroup times must be > 0".into()));
        }
        if !(self.grid_step > 0.0) || !(self.ode_rtol > 0.0) {
            return Err(Error::Config("solver options must be > 0".into()));
        }
        Ok(())
    }

    /// Parse a flat `key = value` configuration file. Unknown keys are
    /// rejected so typos fail loudly; `#` starts a comment.
    pub fn from_str_fmt(text: &str) -> Result<Self> {
        let mut cfg = SurveyConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Config(format!("line {}: bad {what} '{value}'", lineno + 1))
            };
            match key {
                "model" => {
                    cfg.source = if BUILTIN_NAMES.contains(&value) {
                        ModelSource::Builtin(value.to_string())
                    } else {
                        ModelSource::File(PathBuf::from(value))
                    };
                }
                "reduction" => {
                    cfg.reduction = match value {
                        "1d" => ReductionChoice::OneD,
                        "2d" => ReductionChoice::TwoD,
                        "auto" => ReductionChoice::Auto,
                        _ => return Err(bad("reduction (1d | 2d | auto)")),
                    };
                }
                "re_min" => cfg.re_min = value.parse().map_err(|_| bad("number"))?,
                "re_max" => cfg.re_max = value.parse().map_err(|_| bad("number"))?,
                "im_min" => cfg.im_min = value.parse().map_err(|_| bad("number"))?,
                "im_max" => cfg.im_max = value.parse().map_err(|_| bad("number"))?,
                "step" => cfg.step = value.parse().map_err(|_| bad("number"))?,
                "times" => {
                    cfg.times = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("time list"))?;
                }
                "gen_tol" => cfg.gen_tol = value.parse().map_err(|_| bad("number"))?,
                "semi_tol" => cfg.semi_tol = value.parse().map_err(|_| bad("number"))?,
                "weyl_tol" => cfg.weyl_tol = value.parse().map_err(|_| bad("number"))?,
                "grid_step" => cfg.grid_step = value.parse().map_err(|_| bad("number"))?,
                "ode_rtol" => cfg.ode_rtol = value.parse().map_err(|_| bad("number"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "out_csv" => cfg.out_csv = Some(PathBuf::from(value)),
                "out_json" => cfg.out_json = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_str_fmt(&text)
    }

    /// Grid points in deterministic order: real part ascending (outer),
    /// imaginary part ascending (inner).
    pub fn grid(&self) -> Vec<C64> {
        let count = |lo: f64, hi: f64| -> i64 {
            if hi < lo {
                0
            } else {
                ((hi - lo) / self.step + 0.5).floor() as i64 + 1
            }
        };
        let n_re = count(self.re_min, self.re_max);
        let n_im = count(self.im_min, self.im_max);
        let mut pts = Vec::with_capacity((n_re * n_im).max(0) as usize);
        for i in 0..n_re {
            let re = self.re_min + i as f64 * self.step;
            for j in 0..n_im {
                let im = self.im_min + j as f64 * self.step;
                pts.push(C64::new(re, im));
            }
        }
        pts
    }
}

/// One surveyed eigenvalue candidate. Diagnostics that could not be computed
/// (row-level failure, or not applicable to the solve route) are `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyRow {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub gen_residual: Option<f64>,
    pub semi_residuals: Vec<Option<f64>>,
    pub l1_norm: Option<f64>,
    pub l2_trunc_ratio: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveySummary {
    pub points: usize,
    pub passes: usize,
    pub pass_rate: f64,
    pub max_gen_residual: Option<f64>,
    pub max_semi_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyReport {
    pub config: SurveyConfig,
    pub rows: Vec<SurveyRow>,
    pub summary: SurveySummary,
    /// Wall-clock seconds; kept out of the serialized artifacts so repeated
    /// runs with the same config are byte-identical.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

/// The reduction resolved for a survey run.
pub enum ResolvedReduction {
    OneD(Spec1D),
    TwoDIso(Spec2D),
    TwoDGeneral(Spec2D),
}

/// Load the model named by the config and reduce it along its leading
/// adjoint-drift eigenpair (or the declared one, for builtins).
pub fn resolve_model(cfg: &SurveyConfig) -> Result<(OUModel, ResolvedReduction)> {
    let (model, reduction) = match &cfg.source {
        ModelSource::Builtin(name) => {
            let b = builtin_by_name(name)?;
            (b.model, Some(b.reduction))
        }
        ModelSource::File(path) => (OUModel::from_file(path)?, None),
    };
    let abscissa = crate::gauss::spectral_abscissa(model.drift())?;
    if abscissa >= 0.0 {
        return Err(Error::Unstable(abscissa));
    }
    let reduction = match reduction {
        Some(r) => r,
        None => leading_adjoint_pair(&model)?,
    };
    let resolved = match (&reduction, cfg.reduction) {
        (Reduction::OneD { x0star, gamma }, ReductionChoice::OneD | ReductionChoice::Auto) => {
            ResolvedReduction::OneD(reduce_1d(&model, x0star, *gamma)?)
        }
        (Reduction::TwoD { x0star, gamma }, ReductionChoice::TwoD | ReductionChoice::Auto) => {
            let spec = reduce_2d(&model, x0star, *gamma)?;
            if spec.isotropic_r().is_some() {
                ResolvedReduction::TwoDIso(spec)
            } else {
                ResolvedReduction::TwoDGeneral(spec)
            }
        }
        (Reduction::OneD { .. }, ReductionChoice::TwoD) => {
            return Err(Error::Config(
                "model has a real leading eigenpair; 2d reduction not applicable".into(),
            ))
        }
        (Reduction::TwoD { .. }, ReductionChoice::OneD) => {
            return Err(Error::Config(
                "model has a complex leading eigenpair; 1d reduction not applicable".into(),
            ))
        }
    };
    Ok((model, resolved))
}

/// Leading eigenpair of the adjoint drift, classified as real or complex.
fn leading_adjoint_pair(model: &OUModel) -> Result<Reduction> {
    let at = model.drift().transpose();
    let eigs = crate::gauss::complex_eigenvalues(&at)?;
    let lead = eigs
        .iter()
        .copied()
        .max_by(|x, y| {
            (x.re, x.im.abs())
                .partial_cmp(&(y.re, y.im.abs()))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| Error::Dimension("empty drift matrix".into()))?;
    // prefer the upper-half-plane representative of a conjugate pair
    let target = C64::new(lead.re, lead.im.abs());
    let (gamma, vec) = eig_pair(&at, target)?;
    let imag_scale = vec.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
    if gamma.im.abs() <= 1e-9 * (1.0 + gamma.norm()) {
        let x0star = Vec64::from_iterator(vec.len(), vec.iter().map(|z| z.re + z.im * 0.0));
        // the shift-inverted iteration can return an arbitrary complex phase;
        // for a real eigenvalue, rotate the vector onto the real axis first
        let x0star = if imag_scale > 1e-9 {
            let phase = vec
                .iter()
                .map(|z| z.norm_sqr())
                .zip(vec.iter())
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(_, z)| z / z.norm())
                .unwrap_or(C64::new(1.0, 0.0));
            Vec64::from_iterator(vec.len(), vec.iter().map(|z| (z / phase).re))
        } else {
            x0star
        };
        Ok(Reduction::OneD {
            x0star,
            gamma: gamma.re,
        })
    } else {
        Ok(Reduction::TwoD {
            x0star: vec,
            gamma,
        })
    }
}

fn solve_opts(cfg: &SurveyConfig) -> SolveOpts {
    SolveOpts {
        grid_step: cfg.grid_step,
        ode_rtol: cfg.ode_rtol,
        ..SolveOpts::default()
    }
}

fn row_1d(spec: &Spec1D, lambda: C64, cfg: &SurveyConfig, opts: &SolveOpts) -> SurveyRow {
    let mut row = empty_row(lambda, cfg.times.len());
    let ef = match solve_1d(spec, lambda, opts) {
        Ok(ef) => ef,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let gen = residual_generator_1d(&ef);
    row.gen_residual = Some(gen);
    let mut all_semi_ok = true;
    for (k, &t) in cfg.times.iter().enumerate() {
        match residual_semigroup_1d(&ef, t) {
            Ok(r) => {
                row.semi_residuals[k] = Some(r);
                all_semi_ok &= r <= cfg.semi_tol;
            }
            Err(e) => {
                row.error = Some(e.to_string());
                all_semi_ok = false;
            }
        }
    }
    row.l1_norm = Some(ef.l1_norm);
    row.l2_trunc_ratio = l2_ratio_1d(&ef);
    row.pass = gen <= cfg.gen_tol && all_semi_ok;
    row
}

fn row_2d_iso(spec: &Spec2D, lambda: C64, cfg: &SurveyConfig, opts: &SolveOpts) -> SurveyRow {
    let mut row = empty_row(lambda, cfg.times.len());
    let ef = match solve_2d_isotropic(spec, lambda, None, opts) {
        Ok(ef) => ef,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let gen = residual_generator_2d(&ef);
    row.gen_residual = Some(gen);
    let mut all_semi_ok = true;
    for (k, &t) in cfg.times.iter().enumerate() {
        match residual_semigroup_2d(&ef, t) {
            Ok(r) => {
                row.semi_residuals[k] = Some(r);
                all_semi_ok &= r <= cfg.semi_tol;
            }
            Err(e) => {
                row.error = Some(e.to_string());
                all_semi_ok = false;
            }
        }
    }
    row.l1_norm = Some(ef.l1_norm);
    row.l2_trunc_ratio = l2_ratio_2d(&ef);
    row.pass = gen <= cfg.gen_tol && all_semi_ok;
    row
}

fn row_2d_general(spec: &Spec2D, lambda: C64, cfg: &SurveyConfig) -> SurveyRow {
    let mut row = empty_row(lambda, cfg.times.len());
    match weyl_residual_minimize(spec, lambda, &WeylOpts::default()) {
        Ok(out) => {
            row.gen_residual = Some(out.residual);
            row.pass = out.residual <= cfg.weyl_tol;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn empty_row(lambda: C64, n_times: usize) -> SurveyRow {
    SurveyRow {
        lambda_re: lambda.re,
        lambda_im: lambda.im,
        gen_residual: None,
        semi_residuals: vec![None; n_times],
        l1_norm: None,
        l2_trunc_ratio: None,
        pass: false,
        error: None,
    }
}

/// Growth of the truncated L2 norm over two doublings of the half-width,
/// within the stored grid: near 1 for integrable (lattice) eigenfunctions,
/// large for the generic L1-only ones.
fn l2_ratio_1d(ef: &crate::eigen::Eigenfunction1D) -> Option<f64> {
    let base = ef.grid_extent / 4.0;
    let norms = lp_truncated_log_norms(ef, 2.0, &[base, ef.grid_extent]).ok()?;
    Some((0.5 * (norms[1] - norms[0])).exp())
}

/// 2D analog of `l2_ratio_1d`: the angular integral is constant for a single
/// angular mode, so only the radial factor int |g|^2 rho_inf rho drho enters.
fn l2_ratio_2d(ef: &Eigenfunction2D) -> Option<f64> {
    let log_trunc = |radius: f64| -> f64 {
        let m = (radius / ef.step).round() as usize;
        let mut amax = f64::NEG_INFINITY;
        let mut terms: Vec<(f64, f64)> = Vec::with_capacity(m);
        for i in 1..=m {
            let rho = i as f64 * ef.step;
            let (g, e) = {
                let (d, e) = ef.g_derivs_parts(rho);
                (d[0], e)
            };
            let n = g.norm();
            if n == 0.0 {
                continue;
            }
            // |g|^2 exp(2e) * exp(-w2) * rho, in the log domain
            let a = 2.0 * (n.ln() + e) - ef.w2(rho) + rho.ln();
            let cw = if i == m { 0.5 } else { 1.0 };
            amax = amax.max(a);
            terms.push((a, cw));
        }
        if terms.is_empty() {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = terms.iter().map(|(a, cw)| cw * (a - amax).exp()).sum();
        amax + (ef.step * sum).ln()
    };
    let base = ef.grid_extent / 4.0;
    let a = log_trunc(base);
    let b = log_trunc(ef.grid_extent);
    if a.is_finite() && b.is_finite() {
        Some((0.5 * (b - a)).exp())
    } else {
        None
    }
}

pub fn run_survey(cfg: &SurveyConfig) -> Result<SurveyReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (_model, resolved) = resolve_model(cfg)?;
    let opts = solve_opts(cfg);
    let grid = cfg.grid();
    let rows: Vec<SurveyRow> = grid
        .par_iter()
        .map(|&lambda| match &resolved {
            ResolvedReduction::OneD(spec) => row_1d(spec, lambda, cfg, &opts),
            ResolvedReduction::TwoDIso(spec) => row_2d_iso(spec, lambda, cfg, &opts),
            ResolvedReduction::TwoDGeneral(spec) => row_2d_general(spec, lambda, cfg),
        })
        .collect();
    let passes = rows.iter().filter(|r| r.pass).count();
    let max_gen = rows
        .iter()
        .filter_map(|r| r.gen_residual)
        .fold(None, fold_max);
    let max_semi = rows
        .iter()
        .flat_map(|r| r.semi_residuals.iter().flatten().copied())
        .fold(None, |acc, v| fold_max(acc, v));
    let summary = SurveySummary {
        points: rows.len(),
        passes,
        pass_rate: if rows.is_empty() {
            1.0
        } else {
            passes as f64 / rows.len() as f64
        },
        max_gen_residual: max_gen,
        max_semi_residual: max_semi,
    };
    Ok(SurveyReport {
        config: cfg.clone(),
        rows,
        summary,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn fold_max(acc: Option<f64>, v: f64) -> Option<f64> {
    match acc {
        None => Some(v),
        Some(a) => Some(a.max(v)),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.11e}"),
        None => "NaN".to_string(),
    }
}

/// Render the report as CSV: a header line and one row per eigenvalue, 12
/// significant digits, LF line endings.
pub fn render_csv(report: &SurveyReport) -> String {
    let mut out = String::new();
    out.push_str("lambda_re,lambda_im,gen_residual");
    for k in 1..=report.config.times.len() {
        let _ = write!(out, ",semi_residual_t{k}");
    }
    out.push_str(",l1_norm,l2_trunc_ratio,pass\n");
    for row in &report.rows {
        let _ = write!(
            out,
            "{:.11e},{:.11e},{}",
            row.lambda_re,
            row.lambda_im,
            fmt_opt(row.gen_residual)
        );
        for s in &row.semi_residuals {
            let _ = write!(out, ",{}", fmt_opt(*s));
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            fmt_opt(row.l1_norm),
            fmt_opt(row.l2_trunc_ratio),
            row.pass
        );
    }
    out
}

pub fn emit_csv(report: &SurveyReport, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(report)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Render the report as JSON with stable field order: config echo, rows,
/// summary. Runtime is excluded so identical configs give identical bytes.
pub fn render_json(report: &SurveyReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn emit_json(report: &SurveyReport, path: &Path) -> Result<()> {
    std::fs::write(path, render_json(report)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
