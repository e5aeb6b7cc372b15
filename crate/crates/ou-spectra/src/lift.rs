//! Lifting reduced eigenfunctions to cylinder functions on the full state
//! space, plus Monte Carlo machinery (exact and Euler path simulation,
//! semigroup estimates, invariance and pushforward checks).
//!
//! The reduction commutes with the generator: if L1 phi = lambda phi then
//! f = phi(<x, x0*>) satisfies L f = lambda f pointwise, and likewise in the
//! 2D case through (h1*, h2*). Scaled eigenfunctions grow like exp(c t^2), so
//! Monte Carlo estimators require the smoothly truncated variants.

use crate::error::{Error, Result};
use crate::gauss::{mat_exp, GaussianMeasure};
use crate::model::{CylinderFunction, Growth, OUModel, Profile, Spec1D};
use crate::{C64, Mat, Vec64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::sync::Arc;

use crate::eigen::{Eigenfunction1D, Eigenfunction2D};

// ---------------------------------------------------------------------------
// eigenfunction profiles
// ---------------------------------------------------------------------------

/// 1-variable profile wrapping a reduced 1D eigenfunction.
#[derive(Debug, Clone)]
pub struct EigenProfile1D {
    pub ef: Eigenfunction1D,
}

impl Profile for EigenProfile1D {
    fn arity(&self) -> usize {
        1
    }
    fn value(&self, u: &[f64]) -> C64 {
        self.ef.value(u[0])
    }
    fn gradient(&self, u: &[f64]) -> Vec<C64> {
        let (d, e) = self.ef.phi_derivs_parts(u[0]);
        vec![d[1] * e.exp()]
    }
    fn hessian(&self, u: &[f64]) -> Vec<C64> {
        let (d, e) = self.ef.phi_derivs_parts(u[0]);
        vec![d[2] * e.exp()]
    }
    fn growth(&self) -> Growth {
        if self.ef.scaled {
            Growth::SuperGaussian
        } else {
            Growth::Polynomial
        }
    }
}

impl Eigenfunction2D {
    /// Value, gradient, and Hessian of phi(t1, t2) = g(rho) e^{i m theta} in
    /// Cartesian coordinates.
    pub fn cartesian_derivs(&self, t1: f64, t2: f64) -> (C64, [C64; 2], [[C64; 2]; 2]) {
        let rho = t1.hypot(t2).max(1e-9);
        let ([g, dg, d2g], ex) = self.g_derivs_parts(rho);
        let scale = ex.exp();
        let (g, dg, d2g) = (g * scale, dg * scale, d2g * scale);
        let im = C64::new(0.0, self.m as f64);
        let ph = {
            let unit = C64::new(t1 / rho, t2 / rho);
            if self.m >= 0 {
                unit.powi(self.m)
            } else {
                unit.conj().powi(-self.m)
            }
        };
        let (ur1, ur2) = (t1 / rho, t2 / rho);
        let (ut1, ut2) = (-ur2, ur1);
        let grad_r = dg * ph;
        let grad_t = g * im * ph / rho;
        let g1 = grad_r * ur1 + grad_t * ut1;
        let g2 = grad_r * ur2 + grad_t * ut2;
        let h_rr = d2g * ph;
        let h_rt = (dg * im * ph) / rho - g * im * ph / (rho * rho);
        let h_tt = (g * im * im * ph) / (rho * rho) + dg * ph / rho;
        let h11 = h_rr * (ur1 * ur1) + h_rt * (2.0 * ur1 * ut1) + h_tt * (ut1 * ut1);
        let h22 = h_rr * (ur2 * ur2) + h_rt * (2.0 * ur2 * ut2) + h_tt * (ut2 * ut2);
        let h12 = h_rr * (ur1 * ur2) + h_rt * (ur1 * ut2 + ur2 * ut1) + h_tt * (ut1 * ut2);
        (g * ph, [g1, g2], [[h11, h12], [h12, h22]])
    }
}

/// 2-variable profile wrapping a reduced radial eigenfunction.
#[derive(Debug, Clone)]
pub struct EigenProfile2D {
    pub ef: Eigenfunction2D,
}

impl Profile for EigenProfile2D {
    fn arity(&self) -> usize {
        2
    }
    fn value(&self, u: &[f64]) -> C64 {
        self.ef.cartesian_derivs(u[0], u[1]).0
    }
    fn gradient(&self, u: &[f64]) -> Vec<C64> {
        let (_, g, _) = self.ef.cartesian_derivs(u[0], u[1]);
        g.to_vec()
    }
    fn hessian(&self, u: &[f64]) -> Vec<C64> {
        let (_, _, h) = self.ef.cartesian_derivs(u[0], u[1]);
        vec![h[0][0], h[0][1], h[1][0], h[1][1]]
    }
    fn growth(&self) -> Growth {
        if self.ef.scaled {
            Growth::SuperGaussian
        } else {
            Growth::Polynomial
        }
    }
}

// ---------------------------------------------------------------------------
// smooth radial truncation
// ---------------------------------------------------------------------------

/// Quintic smoothstep cutoff: chi = 1 on [0, R-1], 0 beyond R, C^2 throughout.
fn cutoff(s: f64, radius: f64) -> (f64, f64, f64) {
    let lo = radius - 1.0;
    if s <= lo {
        return (1.0, 0.0, 0.0);
    }
    if s >= radius {
        return (0.0, 0.0, 0.0);
    }
    let x = s - lo;
    let step = 6.0 * x.powi(5) - 15.0 * x.powi(4) + 10.0 * x.powi(3);
    let dstep = 30.0 * x.powi(4) - 60.0 * x.powi(3) + 30.0 * x.powi(2);
    let d2step = 120.0 * x.powi(3) - 180.0 * x.powi(2) + 60.0 * x;
    (1.0 - step, -dstep, -d2step)
}

/// Radially truncated profile: inner(u) * chi(|u|), with chi the quintic
/// cutoff transitioning on [radius - 1, radius].
#[derive(Clone)]
pub struct CutoffProfile {
    pub inner: Arc<dyn Profile>,
    pub radius: f64,
}

impl CutoffProfile {
    pub fn new(inner: Arc<dyn Profile>, radius: f64) -> Result<Self> {
        if radius <= 1.0 {
            return Err(Error::Domain(format!(
                "cutoff radius must exceed 1, got {radius}"
            )));
        }
        Ok(Self { inner, radius })
    }
}

impl Profile for CutoffProfile {
    fn arity(&self) -> usize {
        self.inner.arity()
    }
    fn value(&self, u: &[f64]) -> C64 {
        let rho = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (chi, _, _) = cutoff(rho, self.radius);
        if chi == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            self.inner.value(u) * chi
        }
    }
    fn gradient(&self, u: &[f64]) -> Vec<C64> {
        let k = self.arity();
        let rho = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let (chi, dchi, _) = cutoff(rho, self.radius);
        if chi == 0.0 && dchi == 0.0 {
            return vec![C64::new(0.0, 0.0); k];
        }
        let v = self.inner.value(u);
        let g = self.inner.gradient(u);
        (0..k)
            .map(|i| g[i] * chi + v * (dchi * u[i] / rho))
            .collect()
    }
    fn hessian(&self, u: &[f64]) -> Vec<C64> {
        let k = self.arity();
        let rho = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let (chi, dchi, d2chi) = cutoff(rho, self.radius);
        if chi == 0.0 && dchi == 0.0 {
            return vec![C64::new(0.0, 0.0); k * k];
        }
        let v = self.inner.value(u);
        let g = self.inner.gradient(u);
        let h = self.inner.hessian(u);
        let mut out = vec![C64::new(0.0, 0.0); k * k];
        for i in 0..k {
            for j in 0..k {
                let ri = u[i] / rho;
                let rj = u[j] / rho;
                let d2rho = (if i == j { 1.0 } else { 0.0 } - ri * rj) / rho;
                out[i * k + j] = h[i * k + j] * chi
                    + g[i] * (dchi * rj)
                    + g[j] * (dchi * ri)
                    + v * (d2chi * ri * rj + dchi * d2rho);
            }
        }
        out
    }
    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
    fn growth(&self) -> Growth {
        Growth::Bounded
    }
}

// ---------------------------------------------------------------------------
// lifts
// ---------------------------------------------------------------------------

/// Lift a 1D eigenfunction to the full state space through x0*.
pub fn lift_1d(ef: &Eigenfunction1D, x0star: &Vec64) -> Result<CylinderFunction> {
    CylinderFunction::new(
        vec![x0star.clone()],
        Arc::new(EigenProfile1D { ef: ef.clone() }),
    )
}

/// Lift a 2D radial eigenfunction through the real pair (h1*, h2*).
pub fn lift_2d(ef: &Eigenfunction2D, h1star: &Vec64, h2star: &Vec64) -> Result<CylinderFunction> {
    CylinderFunction::new(
        vec![h1star.clone(), h2star.clone()],
        Arc::new(EigenProfile2D { ef: ef.clone() }),
    )
}

/// Lift with a smooth radial cutoff at `radius` (transition on
/// [radius - 1, radius]); the result is bounded with compact support in the
/// cylinder coordinate, hence admissible for Monte Carlo estimators.
pub fn lift_truncated_1d(
    ef: &Eigenfunction1D,
    x0star: &Vec64,
    radius: f64,
) -> Result<CylinderFunction> {
    let inner: Arc<dyn Profile> = Arc::new(EigenProfile1D { ef: ef.clone() });
    CylinderFunction::new(vec![x0star.clone()], Arc::new(CutoffProfile::new(inner, radius)?))
}

pub fn lift_truncated_2d(
    ef: &Eigenfunction2D,
    h1star: &Vec64,
    h2star: &Vec64,
    radius: f64,
) -> Result<CylinderFunction> {
    let inner: Arc<dyn Profile> = Arc::new(EigenProfile2D { ef: ef.clone() });
    CylinderFunction::new(
        vec![h1star.clone(), h2star.clone()],
        Arc::new(CutoffProfile::new(inner, radius)?),
    )
}

/// L1(nu_inf) defect || (L1 - lambda)(phi chi_R) || of the truncated reduced
/// eigenfunction, by direct quadrature in the reduced coordinate. The defect
/// is supported on the cutoff annulus; since |phi| rho_inf decays like a power
/// |t|^{Re lambda / |gamma| - 1} there (the scaled eigenfunction grows fast
/// enough to cancel the Gaussian weight), the defect shrinks at a power-law
/// rate in the radius, roughly R^{Re lambda / |gamma|}.
pub fn truncated_eigen_defect(spec: &Spec1D, ef: &Eigenfunction1D, radius: f64) -> Result<f64> {
    let inner: Arc<dyn Profile> = Arc::new(EigenProfile1D { ef: ef.clone() });
    let prof = CutoffProfile::new(inner, radius)?;
    let sigma2 = spec.stationary_variance();
    let z = (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let h = 0.01;
    let m = (radius / h).ceil() as usize;
    let mut vals = Vec::with_capacity(2 * m + 1);
    for i in -(m as i64)..=(m as i64) {
        let t = i as f64 * h;
        let u = [t];
        let g = prof.gradient(&u)[0];
        let hh = prof.hessian(&u)[0];
        let v = prof.value(&u);
        let l1 = hh * (0.5 * spec.q) + g * (spec.gamma * t);
        let rho = (-t * t / (2.0 * sigma2)).exp() / z;
        vals.push((l1 - ef.lambda * v).norm() * rho);
    }
    let mut s = 0.5 * (vals[0] + vals[vals.len() - 1]);
    for v in &vals[1..vals.len() - 1] {
        s += v;
    }
    Ok(s * h)
}

// ---------------------------------------------------------------------------
// path simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Sample the exact Gaussian transition kernel.
    Exact,
    /// Euler-Maruyama with the given step.
    Euler { dt: f64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Paths per deterministic RNG chunk (chunk c uses stream seed ^ c).
    pub chunk: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 1,
            scheme: Scheme::Exact,
            chunk: 4096,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::Config(format!(
                "need at least 100 paths for a meaningful estimate, got {}",
                self.n_paths
            )));
        }
        if self.chunk == 0 {
            return Err(Error::Config("chunk size must be positive".into()));
        }
        if let Scheme::Euler { dt } = self.scheme {
            if !(dt > 0.0 && dt <= 0.1) {
                return Err(Error::Config(format!(
                    "Euler step must lie in (0, 0.1], got {dt}"
                )));
            }
        }
        Ok(())
    }

    fn chunk_seed(&self, c: usize) -> u64 {
        self.seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

fn chunk_ranges(n: usize, chunk: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut lo = 0;
    while lo < n {
        let hi = (lo + chunk).min(n);
        out.push((lo, hi));
        lo = hi;
    }
    out
}

/// Sample U_t(x) from the exact Gaussian transition kernel; columns are
/// independent paths. Deterministic in (seed, chunk layout).
pub fn simulate_exact(
    model: &OUModel,
    t: f64,
    x: &Vec64,
    cfg: &SimConfig,
) -> Result<Mat> {
    cfg.validate()?;
    if t < 0.0 {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    let n = model.state_dim();
    if x.len() != n {
        return Err(Error::Dimension("starting point dimension mismatch".into()));
    }
    let mean = mat_exp(model.drift(), t)? * x;
    let factor = GaussianMeasure::new(model.qt(t)?)?.factor()?;
    let ranges = chunk_ranges(cfg.n_paths, cfg.chunk);
    let blocks: Vec<Mat> = ranges
        .par_iter()
        .enumerate()
        .map(|(c, (lo, hi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.chunk_seed(c));
            let z = Mat::from_fn(n, hi - lo, |_, _| rng.sample(StandardNormal));
            let mut block = &factor * z;
            for mut col in block.column_iter_mut() {
                col += &mean;
            }
            block
        })
        .collect();
    let mut out = Mat::zeros(n, cfg.n_paths);
    for (block, (lo, hi)) in blocks.iter().zip(&ranges) {
        out.columns_mut(*lo, hi - lo).copy_from(block);
    }
    Ok(out)
}

/// Euler-Maruyama paths of the linear SDE; columns are independent paths.
pub fn simulate_euler(
    model: &OUModel,
    t: f64,
    x: &Vec64,
    cfg: &SimConfig,
) -> Result<Mat> {
    cfg.validate()?;
    let dt_req = match cfg.scheme {
        Scheme::Euler { dt } => dt,
        Scheme::Exact => {
            return Err(Error::Config(
                "simulate_euler requires an Euler scheme configuration".into(),
            ))
        }
    };
    if t <= 0.0 {
        return Err(Error::Domain(format!("time must be > 0, got {t}")));
    }
    let n = model.state_dim();
    let m = model.noise_dim();
    if x.len() != n {
        return Err(Error::Dimension("starting point dimension mismatch".into()));
    }
    let steps = (t / dt_req).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let sq = dt.sqrt();
    let ranges = chunk_ranges(cfg.n_paths, cfg.chunk);
    let blocks: Vec<Mat> = ranges
        .par_iter()
        .enumerate()
        .map(|(c, (lo, hi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.chunk_seed(c));
            let cols = hi - lo;
            let mut block = Mat::zeros(n, cols);
            for j in 0..cols {
                block.column_mut(j).copy_from(x);
            }
            let mut xi = Vec64::zeros(m);
            for _ in 0..steps {
                for j in 0..cols {
                    for e in xi.iter_mut() {
                        *e = rng.sample(StandardNormal);
                    }
                    let col = block.column(j).clone_owned();
                    let drift = model.drift() * &col;
                    let noise = model.diffusion() * &xi;
                    block.column_mut(j).copy_from(&(col + drift * dt + noise * sq));
                }
            }
            block
        })
        .collect();
    let mut out = Mat::zeros(n, cfg.n_paths);
    for (block, (lo, hi)) in blocks.iter().zip(&ranges) {
        out.columns_mut(*lo, hi - lo).copy_from(block);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: C64,
    pub stderr: f64,
    pub n_paths: usize,
}

fn mc_mean(f: &CylinderFunction, samples: &Mat) -> McEstimate {
    let n = samples.ncols();
    let mut sum = C64::new(0.0, 0.0);
    let mut sumsq = 0.0;
    for col in samples.column_iter() {
        let v = f.eval(&col.clone_owned());
        sum += v;
        sumsq += v.norm_sqr();
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean.norm_sqr()).max(0.0);
    McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n_paths: n,
    }
}

fn require_mc_admissible(f: &CylinderFunction) -> Result<()> {
    if f.profile().growth() == Growth::SuperGaussian {
        return Err(Error::Validation(
            "profile grows super-Gaussian fast; Monte Carlo expectations \
             against Gaussian kernels are not reliable -- use a truncated lift"
                .into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of P(t) f(x). Rejects profiles with super-Gaussian
/// growth; use the truncated lifts for those.
pub fn mc_semigroup(
    model: &OUModel,
    f: &CylinderFunction,
    t: f64,
    x: &Vec64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    require_mc_admissible(f)?;
    let samples = match cfg.scheme {
        Scheme::Exact => simulate_exact(model, t, x, cfg)?,
        Scheme::Euler { .. } => simulate_euler(model, t, x, cfg)?,
    };
    Ok(mc_mean(f, &samples))
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub mean_initial: C64,
    pub mean_final: C64,
    pub diff: f64,
    pub tol: f64,
    pub passed: bool,
}

fn invariance_core(
    model: &OUModel,
    f: &CylinderFunction,
    t: f64,
    start: &GaussianMeasure,
    cfg: &SimConfig,
) -> Result<InvarianceReport> {
    require_mc_admissible(f)?;
    cfg.validate()?;
    let n = model.state_dim();
    if start.dim() != n {
        return Err(Error::Dimension("starting measure dimension mismatch".into()));
    }
    let x0 = start.sample(cfg.n_paths, cfg.seed)?;
    let est0 = mc_mean(f, &x0);
    // one exact transition step applied to every initial sample
    let et = mat_exp(model.drift(), t)?;
    let factor = GaussianMeasure::new(model.qt(t)?)?.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_A5A5_DEAD_BEEF);
    let z = Mat::from_fn(n, cfg.n_paths, |_, _| rng.sample(StandardNormal));
    let xt = &et * &x0 + &factor * z;
    let est1 = mc_mean(f, &xt);
    let diff = (est1.mean - est0.mean).norm();
    let tol = 4.0 * (est0.stderr + est1.stderr) + 1e-12;
    Ok(InvarianceReport {
        mean_initial: est0.mean,
        mean_final: est1.mean,
        diff,
        tol,
        passed: diff <= tol,
    })
}

/// Check E_nu f(U_t) = E_nu f under the invariant measure by paired sampling.
pub fn invariance_test(
    model: &OUModel,
    f: &CylinderFunction,
    t: f64,
    cfg: &SimConfig,
) -> Result<InvarianceReport> {
    let nu = model.invariant_measure()?;
    invariance_core(model, f, t, &nu, cfg)
}

/// Same check started from an arbitrary Gaussian measure; with a
/// non-invariant start this is the negative control.
pub fn invariance_test_with_measure(
    model: &OUModel,
    f: &CylinderFunction,
    t: f64,
    start: &GaussianMeasure,
    cfg: &SimConfig,
) -> Result<InvarianceReport> {
    invariance_core(model, f, t, start, cfg)
}

#[derive(Debug, Clone)]
pub struct PushforwardReport {
    pub max_cov_dev: f64,
    pub band: f64,
    pub passed: bool,
}

/// Compare the empirical covariance of (<X, x_i*>) under sampled nu_inf with
/// the closed-form pushforward law.
pub fn pushforward_equivalence_check(
    model: &OUModel,
    functionals: &[Vec64],
    cfg: &SimConfig,
) -> Result<PushforwardReport> {
    cfg.validate()?;
    let law = crate::model::pushforward_law(model, functionals)?;
    let nu = model.invariant_measure()?;
    let x = nu.sample(cfg.n_paths, cfg.seed)?;
    let k = functionals.len();
    let npaths = cfg.n_paths as f64;
    // projections: k x n_paths
    let mut proj = Mat::zeros(k, cfg.n_paths);
    for (i, fi) in functionals.iter().enumerate() {
        for (j, col) in x.column_iter().enumerate() {
            proj[(i, j)] = fi.dot(&col.clone_owned());
        }
    }
    let means: Vec<f64> = (0..k).map(|i| proj.row(i).sum() / npaths).collect();
    let mut max_dev: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut c = 0.0;
            for p in 0..cfg.n_paths {
                c += (proj[(i, p)] - means[i]) * (proj[(j, p)] - means[j]);
            }
            c /= npaths - 1.0;
            max_dev = max_dev.max((c - law.cov()[(i, j)]).abs());
            scale = scale.max(law.cov()[(i, j)].abs());
        }
    }
    let band = 6.0 * scale / npaths.sqrt();
    Ok(PushforwardReport {
        max_cov_dev: max_dev,
        band,
        passed: max_dev <= band,
    })
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    /// Monte Carlo estimate of the L1(nu_inf) norm of f.
    pub l1_before: f64,
    /// Same for P(t)f, evaluated by quadrature at the sampled points.
    pub l1_after: f64,
    /// Standard error of the paired difference |P(t)f| - |f|.
    pub stderr: f64,
    pub passed: bool,
}

/// Check the L1(nu_inf) contraction ||P(t)f||_1 <= ||f||_1 for a bounded
/// cylinder function: sample nu_inf once, evaluate |f| directly and |P(t)f|
/// by quadrature at the same points, and compare the paired means.
pub fn contraction_check(
    model: &OUModel,
    f: &CylinderFunction,
    t: f64,
    cfg: &SimConfig,
    quad: &crate::model::QuadSpec,
) -> Result<ContractionReport> {
    cfg.validate()?;
    require_mc_admissible(f)?;
    if t <= 0.0 {
        return Err(Error::Domain(format!("time must be > 0, got {t}")));
    }
    let nu = model.invariant_measure()?;
    let x = nu.sample(cfg.n_paths, cfg.seed)?;
    let cols: Vec<Vec64> = x.column_iter().map(|c| c.clone_owned()).collect();
    let transition = crate::model::MehlerTransition::new(model, f, t)?;
    let diffs: Vec<(f64, f64)> = cols
        .par_iter()
        .map(|xi| -> Result<(f64, f64)> {
            let before = f.eval(xi).norm();
            let after = transition.apply(f, xi, quad)?.norm();
            Ok((before, after))
        })
        .collect::<Result<_>>()?;
    let n = diffs.len() as f64;
    let mean_before: f64 = diffs.iter().map(|d| d.0).sum::<f64>() / n;
    let mean_after: f64 = diffs.iter().map(|d| d.1).sum::<f64>() / n;
    let mean_diff = mean_after - mean_before;
    let var: f64 = diffs
        .iter()
        .map(|d| {
            let v = (d.1 - d.0) - mean_diff;
            v * v
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let stderr = (var / n).sqrt();
    Ok(ContractionReport {
        l1_before: mean_before,
        l1_after: mean_after,
        stderr,
        passed: mean_diff <= 3.0 * stderr + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{solve_1d, solve_2d_isotropic, SolveOpts};
    use crate::gauss::lyapunov_qinf;
    use crate::model::{
        generator_apply, mehler_apply, reduce_1d, reduce_2d, BumpProfile, CharExpProfile, QuadSpec,
    };
    use crate::CVec;
    use approx::assert_relative_eq;

    fn diag_model() -> OUModel {
        OUModel::new(
            Mat::from_diagonal(&Vec64::from_vec(vec![-1.0, -2.0])),
            Mat::identity(2, 2),
        )
        .unwrap()
    }

    fn rot_model() -> OUModel {
        OUModel::new(
            Mat::from_row_slice(2, 2, &[-1.0, -2.0, 2.0, -1.0]),
            Mat::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn lifted_1d_eigenfunction_satisfies_generator_identity() {
        let model = diag_model();
        let x0 = Vec64::from_vec(vec![1.0, 0.0]);
        let spec = reduce_1d(&model, &x0, -1.0).unwrap();
        let lam = C64::new(-1.3, 0.6);
        let ef = solve_1d(&spec, lam, &SolveOpts::default()).unwrap();
        let f = lift_1d(&ef, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_rel: f64 = 0.0;
        for _ in 0..100 {
            let x = Vec64::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let lf = generator_apply(&model, &f, &x).unwrap();
            let target = f.eval(&x) * lam;
            max_rel = max_rel.max((lf - target).norm() / target.norm().max(1.0));
        }
        assert!(max_rel <= 1e-8, "max pointwise deviation {max_rel:.3e}");
    }

    #[test]
    fn lifted_2d_eigenfunction_satisfies_generator_identity() {
        let model = rot_model();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        let x0 = CVec::from_vec(vec![
            C64::new(inv_sqrt2, 0.0),
            C64::new(0.0, inv_sqrt2),
        ]);
        let spec = reduce_2d(&model, &x0, C64::new(-1.0, 2.0)).unwrap();
        // R = I/2 is isotropic with r = 1/2
        let lam = C64::new(-1.1, 0.8);
        let ef = solve_2d_isotropic(&spec, lam, None, &SolveOpts::default()).unwrap();
        let f = lift_2d(&ef, &spec.h1star, &spec.h2star).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut max_rel: f64 = 0.0;
        for _ in 0..100 {
            let x = Vec64::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let lf = generator_apply(&model, &f, &x).unwrap();
            let target = f.eval(&x) * lam;
            max_rel = max_rel.max((lf - target).norm() / target.norm().max(1.0));
        }
        assert!(max_rel <= 1e-8, "max pointwise deviation {max_rel:.3e}");
    }

    #[test]
    fn truncated_defect_decays_with_radius() {
        let model = diag_model();
        let x0 = Vec64::from_vec(vec![1.0, 0.0]);
        let spec = reduce_1d(&model, &x0, -1.0).unwrap();
        let ef = solve_1d(&spec, C64::new(-1.3, 0.6), &SolveOpts::default()).unwrap();
        let defects: Vec<f64> = [4.0, 6.0, 8.0]
            .iter()
            .map(|r| truncated_eigen_defect(&spec, &ef, *r).unwrap())
            .collect();
        // power-law decay ~ R^{Re lambda / |gamma|} = R^{-1.3}:
        // expected step ratios (6/4)^{-1.3} ~ 0.59 and (8/6)^{-1.3} ~ 0.69
        assert!(
            defects[1] < 0.75 * defects[0] && defects[2] < 0.75 * defects[1],
            "defects {defects:?}"
        );
        let predicted = (6.0f64 / 4.0).powf(-1.3);
        let observed = defects[1] / defects[0];
        assert!(
            (observed / predicted - 1.0).abs() < 0.25,
            "decay ratio {observed:.3} vs power-law prediction {predicted:.3}"
        );
        // inside the untruncated region the lifted function still satisfies
        // the eigenrelation pointwise
        let f = lift_truncated_1d(&ef, &x0, 6.0).unwrap();
        let x = Vec64::from_vec(vec![1.2, 0.4]);
        let lf = generator_apply(&model, &f, &x).unwrap();
        let target = f.eval(&x) * ef.lambda;
        assert!((lf - target).norm() <= 1e-8 * target.norm().max(1.0));
    }

    #[test]
    fn exact_sampler_matches_mehler_quadrature() {
        let model = rot_model();
        let f = CylinderFunction::new(
            vec![
                Vec64::from_vec(vec![1.0, 0.0]),
                Vec64::from_vec(vec![0.0, 1.0]),
            ],
            Arc::new(CharExpProfile { xi: vec![0.8, -0.5] }),
        )
        .unwrap();
        let x = Vec64::from_vec(vec![0.4, 0.6]);
        let t = 0.5;
        let exact = mehler_apply(&model, &f, t, &x, &QuadSpec::default()).unwrap();
        let cfg = SimConfig {
            n_paths: 200_000,
            seed: 42,
            ..SimConfig::default()
        };
        let est = mc_semigroup(&model, &f, t, &x, &cfg).unwrap();
        assert!(
            (est.mean - exact).norm() <= 5.0 * est.stderr + 1e-6,
            "mc {:?} vs quadrature {exact:?} (stderr {:.2e})",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn euler_bias_halves_with_step() {
        // deterministic check (no diffusion): global Euler error is O(dt)
        let model = OUModel::new(Mat::from_element(1, 1, -1.0), Mat::zeros(1, 1)).unwrap();
        let x = Vec64::from_vec(vec![1.0]);
        let t = 1.0;
        let exact = (-1.0f64).exp();
        let bias = |dt: f64| {
            let cfg = SimConfig {
                n_paths: 100,
                scheme: Scheme::Euler { dt },
                ..SimConfig::default()
            };
            let s = simulate_euler(&model, t, &x, &cfg).unwrap();
            (s[(0, 0)] - exact).abs()
        };
        let ratio = bias(0.1) / bias(0.05);
        assert!(
            (1.5..=3.0).contains(&ratio),
            "halving ratio {ratio:.3} outside [1.5, 3]"
        );
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let model = rot_model();
        let x = Vec64::from_vec(vec![0.2, -0.5]);
        let cfg = SimConfig {
            n_paths: 500,
            seed: 11,
            ..SimConfig::default()
        };
        let a = simulate_exact(&model, 0.3, &x, &cfg).unwrap();
        let b = simulate_exact(&model, 0.3, &x, &cfg).unwrap();
        assert_eq!(a, b);
        let cfg2 = SimConfig { seed: 12, ..cfg.clone() };
        let c = simulate_exact(&model, 0.3, &x, &cfg2).unwrap();
        assert_ne!(a, c);
        let cfg_e = SimConfig {
            scheme: Scheme::Euler { dt: 0.05 },
            ..cfg
        };
        let d = simulate_euler(&model, 0.3, &x, &cfg_e).unwrap();
        let e = simulate_euler(&model, 0.3, &x, &cfg_e).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn euler_law_approaches_exact_law() {
        // first and second moments of the Euler endpoint vs the exact kernel
        let model = rot_model();
        let x = Vec64::from_vec(vec![1.0, 0.0]);
        let t = 0.5;
        let cfg = SimConfig {
            n_paths: 120_000,
            seed: 3,
            scheme: Scheme::Euler { dt: 0.01 },
            ..SimConfig::default()
        };
        let s = simulate_euler(&model, t, &x, &cfg).unwrap();
        let mean_exact = mat_exp(model.drift(), t).unwrap() * &x;
        let n = cfg.n_paths as f64;
        for i in 0..2 {
            let m = s.row(i).sum() / n;
            assert!(
                (m - mean_exact[i]).abs() < 0.02,
                "component {i}: {m:.4} vs {:.4}",
                mean_exact[i]
            );
        }
        let qt = model.qt(t).unwrap();
        let mut cov00 = 0.0;
        let m0 = s.row(0).sum() / n;
        for p in 0..cfg.n_paths {
            cov00 += (s[(0, p)] - m0) * (s[(0, p)] - m0);
        }
        cov00 /= n - 1.0;
        assert!((cov00 - qt[(0, 0)]).abs() < 0.02, "{cov00:.4} vs {:.4}", qt[(0, 0)]);
    }

    #[test]
    fn invariance_holds_and_wrong_measure_fails() {
        let model = rot_model();
        let f = CylinderFunction::new(
            vec![
                Vec64::from_vec(vec![1.0, 0.0]),
                Vec64::from_vec(vec![0.0, 1.0]),
            ],
            Arc::new(BumpProfile::new(vec![0.0, 0.0], 1.5).unwrap()),
        )
        .unwrap();
        let cfg = SimConfig {
            n_paths: 50_000,
            seed: 5,
            ..SimConfig::default()
        };
        let rep = invariance_test(&model, &f, 0.4, &cfg).unwrap();
        assert!(rep.passed, "diff {:.3e} tol {:.3e}", rep.diff, rep.tol);
        // negative control: start far from stationarity
        let wrong = GaussianMeasure::new(Mat::identity(2, 2) * 9.0).unwrap();
        let rep2 = invariance_test_with_measure(&model, &f, 0.4, &wrong, &cfg).unwrap();
        assert!(!rep2.passed, "diff {:.3e} tol {:.3e}", rep2.diff, rep2.tol);
    }

    #[test]
    fn mc_rejects_unbounded_scaled_eigenfunction() {
        let model = diag_model();
        let x0 = Vec64::from_vec(vec![1.0, 0.0]);
        let spec = reduce_1d(&model, &x0, -1.0).unwrap();
        let ef = solve_1d(&spec, C64::new(-1.3, 0.6), &SolveOpts::default()).unwrap();
        let f = lift_1d(&ef, &x0).unwrap();
        let cfg = SimConfig::default();
        let err = mc_semigroup(&model, &f, 0.2, &Vec64::zeros(2), &cfg);
        assert!(matches!(err, Err(Error::Validation(_))));
        // the truncated lift is admissible
        let ft = lift_truncated_1d(&ef, &x0, 6.0).unwrap();
        assert!(mc_semigroup(&model, &ft, 0.2, &Vec64::zeros(2), &cfg).is_ok());
    }

    #[test]
    fn truncated_eigenrelation_under_mc_semigroup() {
        // E f_R(U_t(x)) vs e^{lambda t} f_R(x) at points where the cutoff
        // region is unlikely to be hit
        let model = diag_model();
        let x0 = Vec64::from_vec(vec![1.0, 0.0]);
        let spec = reduce_1d(&model, &x0, -1.0).unwrap();
        let lam = C64::new(-1.3, 0.6);
        let ef = solve_1d(&spec, lam, &SolveOpts::default()).unwrap();
        let cfg = SimConfig {
            n_paths: 150_000,
            seed: 17,
            ..SimConfig::default()
        };
        let t = 0.2;
        let x = Vec64::from_vec(vec![0.5, 0.3]);
        let mut prev_err = f64::INFINITY;
        for radius in [4.0, 6.0, 8.0] {
            let ft = lift_truncated_1d(&ef, &x0, radius).unwrap();
            let est = mc_semigroup(&model, &ft, t, &x, &cfg).unwrap();
            let target = ft.eval(&x) * (lam * t).exp();
            let err = (est.mean - target).norm();
            assert!(
                err <= 6.0 * est.stderr + prev_err.min(1.0),
                "radius {radius}: err {err:.3e}, stderr {:.3e}",
                est.stderr
            );
            prev_err = err;
        }
    }

    #[test]
    fn pushforward_sampling_matches_law() {
        let model = rot_model();
        let funcs = vec![
            Vec64::from_vec(vec![1.0, 0.0]),
            Vec64::from_vec(vec![0.5, -0.5]),
        ];
        let cfg = SimConfig {
            n_paths: 100_000,
            seed: 23,
            ..SimConfig::default()
        };
        let rep = pushforward_equivalence_check(&model, &funcs, &cfg).unwrap();
        assert!(rep.passed, "dev {:.3e} band {:.3e}", rep.max_cov_dev, rep.band);
    }

    #[test]
    fn lyapunov_matches_sample_covariance_small() {
        // sanity anchor for the invariant sampler itself
        let model = rot_model();
        let qinf = lyapunov_qinf(model.drift(), model.q()).unwrap();
        let nu = model.invariant_measure().unwrap();
        let x = nu.sample(200_000, 31).unwrap();
        let n = x.ncols() as f64;
        let mut c = Mat::zeros(2, 2);
        for col in x.column_iter() {
            c += &col * col.transpose();
        }
        c /= n;
        assert_relative_eq!(c[(0, 0)], qinf[(0, 0)], epsilon = 0.01);
        assert_relative_eq!(c[(1, 1)], qinf[(1, 1)], epsilon = 0.01);
    }

    #[test]
    fn cutoff_profile_oracles_consistent() {
        let inner: Arc<dyn Profile> = Arc::new(BumpProfile::new(vec![0.0, 0.0], 12.0).unwrap());
        let prof = CutoffProfile::new(inner, 3.0).unwrap();
        let f = CylinderFunction::new(
            vec![
                Vec64::from_vec(vec![1.0, 0.0]),
                Vec64::from_vec(vec![0.0, 1.0]),
            ],
            Arc::new(prof),
        )
        .unwrap();
        // probes inside, across the transition annulus, and outside
        let probes = vec![
            vec![0.5, 0.5],
            vec![1.8, 0.9],
            vec![2.4, 0.8],
            vec![2.0, 2.0],
            vec![3.5, 0.1],
        ];
        f.probe_consistency(&probes, 1e-5).unwrap();
    }

    #[test]
    fn semigroup_contracts_bounded_functions() {
        let model = rot_model();
        let f = CylinderFunction::new(
            vec![
                Vec64::from_vec(vec![1.0, 0.0]),
                Vec64::from_vec(vec![0.3, 1.0]),
            ],
            Arc::new(CharExpProfile { xi: vec![1.1, -0.6] }),
        )
        .unwrap();
        let cfg = SimConfig {
            n_paths: 2000,
            seed: 5,
            ..SimConfig::default()
        };
        let rep = contraction_check(&model, &f, 0.5, &cfg, &QuadSpec::default()).unwrap();
        assert!(rep.passed, "{rep:?}");
        // |e^{i<xi,h>}| = 1, so the before-norm is exactly 1 and averaging
        // can only shrink it
        assert!((rep.l1_before - 1.0).abs() < 1e-12);
        assert!(rep.l1_after <= 1.0 + 1e-12);
    }
}
