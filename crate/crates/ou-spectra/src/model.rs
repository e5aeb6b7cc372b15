//! Ornstein-Uhlenbeck model definition, cylinder functions, analytic generator
//! application, Mehler semigroup application, and the 1D/2D reductions with
//! their identity checks.

use crate::error::{Error, Result};
use crate::gauss::{
    frob, gauss_hermite, gramian_qt, lyapunov_qinf, mat_exp, spectral_abscissa, GaussianMeasure,
};
use crate::{C64, CVec, Mat, Vec64};
use nalgebra::Matrix2;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

/// Linear SDE dU = A U dt + B dW with Q = B B^T.
#[derive(Debug, Clone)]
pub struct OUModel {
    a: Mat,
    b: Mat,
    q: Mat,
}

impl OUModel {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!(
                "drift must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "diffusion map has {} rows but state dimension is {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("model matrices must have finite entries".into()));
        }
        let q = &b * b.transpose();
        Ok(Self { a, b, q })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn drift(&self) -> &Mat {
        &self.a
    }

    pub fn diffusion(&self) -> &Mat {
        &self.b
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    /// Spectral abscissa of the drift; errors if nonnegative.
    pub fn require_stable(&self) -> Result<f64> {
        let alpha = spectral_abscissa(&self.a)?;
        if alpha >= 0.0 {
            return Err(Error::Unstable(alpha));
        }
        Ok(alpha)
    }

    /// Stationary covariance Q_inf.
    pub fn qinf(&self) -> Result<Mat> {
        self.require_stable()?;
        lyapunov_qinf(&self.a, &self.q)
    }

    /// Invariant measure, rejecting degenerate stationary covariances.
    pub fn invariant_measure(&self) -> Result<GaussianMeasure> {
        let qinf = self.qinf()?;
        let eig = qinf.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min <= 1e-10 * qinf.trace() {
            return Err(Error::Degenerate(format!(
                "stationary covariance has smallest eigenvalue {min:.3e}; \
                 the invariant measure is degenerate"
            )));
        }
        GaussianMeasure::new(qinf)
    }

    /// Finite-horizon covariance of the transition kernel.
    pub fn qt(&self, t: f64) -> Result<Mat> {
        gramian_qt(&self.a, &self.q, t, 1e-12)
    }

    /// Parse the plain-text model format:
    ///
    /// ```text
    /// # comment
    /// n = 2
    /// m = 2
    /// A0 = -1 -2
    /// A1 = 2 -1
    /// B0 = 1 0
    /// B1 = 0 1
    /// ```
    pub fn from_str_fmt(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut m: Option<usize> = None;
        let mut arows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut brows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let val = val.trim();
            let parse_row = |val: &str| -> Result<Vec<f64>> {
                val.split_whitespace()
                    .map(|tok| {
                        let x: f64 = tok.parse().map_err(|_| {
                            Error::Config(format!("line {}: bad number `{tok}`", lineno + 1))
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Config(format!(
                                "line {}: non-finite entry `{tok}`",
                                lineno + 1
                            )));
                        }
                        Ok(x)
                    })
                    .collect()
            };
            if key == "n" {
                n = Some(val.parse().map_err(|_| {
                    Error::Config(format!("line {}: bad n `{val}`", lineno + 1))
                })?);
            } else if key == "m" {
                m = Some(val.parse().map_err(|_| {
                    Error::Config(format!("line {}: bad m `{val}`", lineno + 1))
                })?);
            } else if let Some(idx) = key.strip_prefix('A') {
                let i: usize = idx.parse().map_err(|_| {
                    Error::Config(format!("line {}: bad row key `{key}`", lineno + 1))
                })?;
                arows.push((i, parse_row(val)?));
            } else if let Some(idx) = key.strip_prefix('B') {
                let i: usize = idx.parse().map_err(|_| {
                    Error::Config(format!("line {}: bad row key `{key}`", lineno + 1))
                })?;
                brows.push((i, parse_row(val)?));
            } else {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
        }
        let n = n.ok_or_else(|| Error::Config("model file missing `n`".into()))?;
        let m = m.ok_or_else(|| Error::Config("model file missing `m`".into()))?;
        let assemble = |rows: &[(usize, Vec<f64>)], nr: usize, nc: usize, what: &str| -> Result<Mat> {
            let mut out = Mat::zeros(nr, nc);
            let mut seen = vec![false; nr];
            for (i, row) in rows {
                if *i >= nr || row.len() != nc {
                    return Err(Error::Config(format!(
                        "{what}{i}: expected {nc} entries in rows 0..{nr}"
                    )));
                }
                seen[*i] = true;
                for (j, v) in row.iter().enumerate() {
                    out[(*i, j)] = *v;
                }
            }
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(Error::Config(format!("{what}{i}: row missing")));
            }
            Ok(out)
        };
        let a = assemble(&arows, n, n, "A")?;
        let b = assemble(&brows, n, m, "B")?;
        Self::new(a, b)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_fmt(&text)
    }

    /// Serialize in the plain-text model format.
    pub fn to_str_fmt(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n = {}\nm = {}\n", self.state_dim(), self.noise_dim()));
        for i in 0..self.state_dim() {
            let row: Vec<String> = (0..self.state_dim())
                .map(|j| format!("{:.17e}", self.a[(i, j)]))
                .collect();
            out.push_str(&format!("A{i} = {}\n", row.join(" ")));
        }
        for i in 0..self.state_dim() {
            let row: Vec<String> = (0..self.noise_dim())
                .map(|j| format!("{:.17e}", self.b[(i, j)]))
                .collect();
            out.push_str(&format!("B{i} = {}\n", row.join(" ")));
        }
        out
    }
}

/// Rough growth class of a profile, used to gate Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Bounded,
    Polynomial,
    SuperGaussian,
}

/// k-variable scalar field with gradient and Hessian oracles.
pub trait Profile: Send + Sync {
    fn arity(&self) -> usize;
    fn value(&self, u: &[f64]) -> C64;
    /// Gradient, length = arity.
    fn gradient(&self, u: &[f64]) -> Vec<C64>;
    /// Hessian, row-major arity x arity.
    fn hessian(&self, u: &[f64]) -> Vec<C64>;
    fn support_radius(&self) -> Option<f64> {
        None
    }
    fn growth(&self) -> Growth {
        Growth::Polynomial
    }
}

/// Cylinder function x -> phi(<x,x1*>, ..., <x,xk*>).
#[derive(Clone)]
pub struct CylinderFunction {
    functionals: Vec<Vec64>,
    profile: Arc<dyn Profile>,
}

impl fmt::Debug for CylinderFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylinderFunction")
            .field("k", &self.functionals.len())
            .field("n", &self.functionals.first().map(|v| v.len()))
            .finish()
    }
}

impl CylinderFunction {
    pub fn new(functionals: Vec<Vec64>, profile: Arc<dyn Profile>) -> Result<Self> {
        if functionals.is_empty() {
            return Err(Error::Validation("cylinder function needs at least one functional".into()));
        }
        if profile.arity() != functionals.len() {
            return Err(Error::Dimension(format!(
                "profile arity {} does not match {} functionals",
                profile.arity(),
                functionals.len()
            )));
        }
        let n = functionals[0].len();
        if functionals.iter().any(|f| f.len() != n) {
            return Err(Error::Dimension("functionals must share one dimension".into()));
        }
        Ok(Self { functionals, profile })
    }

    pub fn arity(&self) -> usize {
        self.functionals.len()
    }

    pub fn state_dim(&self) -> usize {
        self.functionals[0].len()
    }

    pub fn functionals(&self) -> &[Vec64] {
        &self.functionals
    }

    pub fn profile(&self) -> &Arc<dyn Profile> {
        &self.profile
    }

    /// Cylinder coordinates u_j = <x, x_j*>.
    pub fn coords(&self, x: &Vec64) -> Vec<f64> {
        self.functionals.iter().map(|f| f.dot(x)).collect()
    }

    pub fn eval(&self, x: &Vec64) -> C64 {
        self.profile.value(&self.coords(x))
    }

    /// Check the gradient/Hessian oracles against central differences at the
    /// given probe points; max relative deviation must stay under `tol`.
    pub fn probe_consistency(&self, probes: &[Vec<f64>], tol: f64) -> Result<()> {
        let k = self.arity();
        let h = 1e-5;
        for u in probes {
            let g = self.profile.gradient(u);
            let hess = self.profile.hessian(u);
            let mut scale = self.profile.value(u).norm();
            for v in &g {
                scale = scale.max(v.norm());
            }
            scale = scale.max(1e-6);
            for j in 0..k {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (self.profile.value(&up) - self.profile.value(&dn)) / (2.0 * h);
                if (fd - g[j]).norm() > tol * scale.max(fd.norm()) * 10.0 {
                    return Err(Error::Validation(format!(
                        "gradient oracle inconsistent with finite differences at component {j}"
                    )));
                }
                let gp = self.profile.gradient(&up);
                let gd = self.profile.gradient(&dn);
                for i in 0..k {
                    let fd2 = (gp[i] - gd[i]) / (2.0 * h);
                    if (fd2 - hess[i * k + j]).norm() > tol * scale.max(fd2.norm()) * 100.0 {
                        return Err(Error::Validation(format!(
                            "Hessian oracle inconsistent with finite differences at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Apply the generator L f(x) = 1/2 Tr(Q_cyl Hess phi) + sum_j d_j phi <Ax, x_j*>
/// in the cylinder coordinates of `f`.
pub fn generator_apply(model: &OUModel, f: &CylinderFunction, x: &Vec64) -> Result<C64> {
    if x.len() != model.state_dim() || f.state_dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "state dim mismatch: model {}, function {}, point {}",
            model.state_dim(),
            f.state_dim(),
            x.len()
        )));
    }
    let u = f.coords(x);
    let k = f.arity();
    let grad = f.profile.gradient(&u);
    let hess = f.profile.hessian(&u);
    let ax = model.drift() * x;
    let mut out = C64::new(0.0, 0.0);
    for (j, fj) in f.functionals.iter().enumerate() {
        out += grad[j] * fj.dot(&ax);
    }
    for i in 0..k {
        let qxi = model.q() * &f.functionals[i];
        for j in 0..k {
            let qij = qxi.dot(&f.functionals[j]);
            out += hess[i * k + j] * (0.5 * qij);
        }
    }
    Ok(out)
}

/// Gauss-Hermite controls for Mehler and norm quadrature.
#[derive(Debug, Clone)]
pub struct QuadSpec {
    pub tol: f64,
    pub min_order: usize,
    pub max_order: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            min_order: 16,
            max_order: 512,
        }
    }
}

/// Apply the Mehler semigroup: P(t) f(x) = E f(exp(tA) x + Y), Y ~ N(0, Q_t),
/// reduced exactly to the k-dimensional pushforward coordinates.
pub fn mehler_apply(
    model: &OUModel,
    f: &CylinderFunction,
    t: f64,
    x: &Vec64,
    quad: &QuadSpec,
) -> Result<C64> {
    MehlerTransition::new(model, f, t)?.apply(f, x, quad)
}

/// Precomputed Mehler transition for one (model, cylinder function, time):
/// holds e^{tA} and the noise factor of the pushforward covariance, so P(t)f
/// can be evaluated at many points without redoing the matrix exponential
/// and Gramian.
pub struct MehlerTransition {
    t: f64,
    et: Mat,
    /// Cholesky-type factor of (<Q_t x_i*, x_j*>).
    factor: Mat,
}

impl MehlerTransition {
    pub fn new(model: &OUModel, f: &CylinderFunction, t: f64) -> Result<Self> {
        if t < 0.0 {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        let k = f.arity();
        if t == 0.0 {
            return Ok(Self {
                t,
                et: Mat::identity(model.state_dim(), model.state_dim()),
                factor: Mat::zeros(k, k),
            });
        }
        let qt = model.qt(t)?;
        let et = mat_exp(model.drift(), t)?;
        let mut s = Mat::zeros(k, k);
        for i in 0..k {
            let qxi = &qt * &f.functionals[i];
            for j in 0..k {
                s[(i, j)] = qxi.dot(&f.functionals[j]);
            }
        }
        let factor = GaussianMeasure::new(s)?.factor()?;
        Ok(Self { t, et, factor })
    }

    pub fn apply(&self, f: &CylinderFunction, x: &Vec64, quad: &QuadSpec) -> Result<C64> {
        if self.t == 0.0 {
            return Ok(f.profile.value(&f.coords(x)));
        }
        let k = f.arity();
        let factor = &self.factor;
        let mean_state = &self.et * x;
        let mean: Vec<f64> = f.functionals.iter().map(|fj| fj.dot(&mean_state)).collect();

        let eval_order = |order: usize| -> C64 {
        let rule = gauss_hermite(order);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        match k {
            1 => {
                let mut acc = C64::new(0.0, 0.0);
                for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                    let y = std::f64::consts::SQRT_2 * factor[(0, 0)] * z;
                    acc += f.profile.value(&[mean[0] + y]) * *w;
                }
                acc / sqrt_pi
            }
            2 => {
                let mut acc = C64::new(0.0, 0.0);
                for (z1, w1) in rule.nodes.iter().zip(&rule.weights) {
                    for (z2, w2) in rule.nodes.iter().zip(&rule.weights) {
                        let y1 = std::f64::consts::SQRT_2 * (factor[(0, 0)] * z1 + factor[(0, 1)] * z2);
                        let y2 = std::f64::consts::SQRT_2 * (factor[(1, 0)] * z1 + factor[(1, 1)] * z2);
                        acc += f.profile.value(&[mean[0] + y1, mean[1] + y2]) * (w1 * w2);
                    }
                }
                acc / (sqrt_pi * sqrt_pi)
            }
            _ => {
                // general-k tensor rule, recursion over axes
                fn recurse(
                    f: &CylinderFunction,
                    rule: &crate::gauss::QuadRule,
                    factor: &Mat,
                    mean: &[f64],
                    z: &mut Vec<f64>,
                    axis: usize,
                ) -> (C64, f64) {
                    if axis == mean.len() {
                        let k = mean.len();
                        let mut pt = vec![0.0; k];
                        for i in 0..k {
                            let mut y = 0.0;
                            for (j, zj) in z.iter().enumerate() {
                                y += factor[(i, j)] * zj;
                            }
                            pt[i] = mean[i] + std::f64::consts::SQRT_2 * y;
                        }
                        return (f.profile().value(&pt), 1.0);
                    }
                    let mut acc = C64::new(0.0, 0.0);
                    for (zi, wi) in rule.nodes.iter().zip(&rule.weights) {
                        z.push(*zi);
                        let (v, _) = recurse(f, rule, factor, mean, z, axis + 1);
                        z.pop();
                        acc += v * *wi;
                    }
                    (acc, 1.0)
                }
                let mut z = Vec::new();
                let (acc, _) = recurse(f, &rule, factor, &mean, &mut z, 0);
                acc / sqrt_pi.powi(k as i32)
            }
        }
    };

        let mut order = quad.min_order;
        let mut prev = eval_order(order);
        while order * 2 <= quad.max_order {
            order *= 2;
            let cur = eval_order(order);
            let change = (cur - prev).norm();
            prev = cur;
            if change <= quad.tol * (cur.norm() + 1e-12) {
                return Ok(cur);
            }
        }
        Err(Error::Accuracy(format!(
            "Mehler quadrature not converged at order {order} (tol {:.1e})",
            quad.tol
        )))
    }
}

/// 1D reduction data: L1 phi = q/2 phi'' + gamma t phi'.
#[derive(Debug, Clone)]
pub struct Spec1D {
    pub gamma: f64,
    pub q: f64,
    pub x0star: Vec64,
}

impl Spec1D {
    /// Direct construction for synthetic reduced problems (e.g. CLI `eigen`).
    pub fn synthetic(gamma: f64, q: f64) -> Result<Self> {
        if gamma >= 0.0 {
            return Err(Error::Domain(format!("gamma must be < 0, got {gamma}")));
        }
        if q <= 0.0 {
            return Err(Error::Domain(format!("q must be > 0, got {q}")));
        }
        Ok(Self {
            gamma,
            q,
            x0star: Vec64::from_vec(vec![1.0]),
        })
    }

    /// Stationary variance of the reduced invariant measure: -q / (2 gamma).
    pub fn stationary_variance(&self) -> f64 {
        -self.q / (2.0 * self.gamma)
    }
}

/// 2D reduction data: L2 phi = 1/2 Tr(R D^2 phi) + <C t, D phi>,
/// C = [[a, -b], [b, a]].
#[derive(Debug, Clone)]
pub struct Spec2D {
    pub a: f64,
    pub b: f64,
    pub r: Matrix2<f64>,
    pub c: Matrix2<f64>,
    pub h1star: Vec64,
    pub h2star: Vec64,
}

impl Spec2D {
    pub fn synthetic(a: f64, b: f64, r: Matrix2<f64>) -> Result<Self> {
        if a >= 0.0 {
            return Err(Error::Domain(format!("a must be < 0, got {a}")));
        }
        if b == 0.0 {
            return Err(Error::Domain("b must be nonzero; use the 1D reduction".into()));
        }
        validate_r(&r)?;
        Ok(Self {
            a,
            b,
            r,
            c: Matrix2::new(a, -b, b, a),
            h1star: Vec64::from_vec(vec![1.0, 0.0]),
            h2star: Vec64::from_vec(vec![0.0, 1.0]),
        })
    }

    pub fn gamma(&self) -> C64 {
        C64::new(self.a, self.b)
    }

    /// True when R is a scalar multiple of the identity.
    pub fn isotropic_r(&self) -> Option<f64> {
        let r = &self.r;
        let scale = (r[(0, 0)].abs() + r[(1, 1)].abs()).max(1e-300);
        let dev = (r[(0, 0)] - r[(1, 1)]).abs().max(r[(0, 1)].abs()).max(r[(1, 0)].abs());
        if dev <= 1e-10 * scale {
            Some(0.5 * (r[(0, 0)] + r[(1, 1)]))
        } else {
            None
        }
    }
}

fn validate_r(r: &Matrix2<f64>) -> Result<()> {
    let scale = r.norm();
    if (r[(0, 1)] - r[(1, 0)]).abs() > 1e-10 * scale.max(1e-300) {
        return Err(Error::Validation("R must be symmetric".into()));
    }
    if scale == 0.0 {
        return Err(Error::Degenerate(
            "R = 0: the reduced invariant measure would be degenerate".into(),
        ));
    }
    let tr = r.trace();
    let det = r.determinant();
    if tr < 0.0 || det < -1e-10 * scale * scale {
        return Err(Error::Validation("R must be positive semidefinite".into()));
    }
    // For C = [[a,-b],[b,a]] with b != 0, the only real invariant subspaces of
    // C^T are {0} and R^2, so the kernel condition reduces to R != 0.
    Ok(())
}

/// Reduce along a real eigenpair of A^T: checks A^T x0* = gamma x0*, gamma < 0,
/// and computes q = <Q x0*, x0*>.
pub fn reduce_1d(model: &OUModel, x0star: &Vec64, gamma: f64) -> Result<Spec1D> {
    if x0star.len() != model.state_dim() {
        return Err(Error::Dimension("eigenvector dimension mismatch".into()));
    }
    let scale = x0star.norm();
    if scale == 0.0 {
        return Err(Error::Validation("eigenvector must be nonzero".into()));
    }
    let res = (model.drift().transpose() * x0star - x0star * gamma).norm();
    if res > 1e-8 * scale * (1.0 + frob(model.drift())) {
        return Err(Error::Validation(format!(
            "(gamma, x0*) is not an eigenpair of the adjoint drift: residual {res:.3e}"
        )));
    }
    if gamma >= 0.0 {
        return Err(Error::Domain(format!("gamma must be < 0, got {gamma}")));
    }
    let q = (model.q() * x0star).dot(x0star);
    if q <= 1e-10 * frob(model.q()) * scale * scale {
        return Err(Error::Degenerate(format!(
            "q = <Q x0*, x0*> = {q:.3e} vanishes; this would force a degenerate \
             invariant measure"
        )));
    }
    Ok(Spec1D {
        gamma,
        q,
        x0star: x0star.clone(),
    })
}

/// Reduce along a complex eigenpair of A^T with gamma = a + ib, b != 0:
/// h1* = Re x0*, h2* = Im x0*, R_ij = <Q h_i*, h_j*>, C = [[a,-b],[b,a]].
pub fn reduce_2d(model: &OUModel, x0star: &CVec, gamma: C64) -> Result<Spec2D> {
    if x0star.len() != model.state_dim() {
        return Err(Error::Dimension("eigenvector dimension mismatch".into()));
    }
    if gamma.im == 0.0 {
        return Err(Error::Domain(
            "gamma is real: route this model through the 1D reduction".into(),
        ));
    }
    if gamma.re >= 0.0 {
        return Err(Error::Domain(format!("Re gamma must be < 0, got {}", gamma.re)));
    }
    let scale = x0star.norm();
    if scale == 0.0 {
        return Err(Error::Validation("eigenvector must be nonzero".into()));
    }
    let at = model.drift().transpose();
    let h1 = Vec64::from_iterator(x0star.len(), x0star.iter().map(|z| z.re));
    let h2 = Vec64::from_iterator(x0star.len(), x0star.iter().map(|z| z.im));
    // A^T (h1 + i h2) = gamma (h1 + i h2) componentwise
    let re_res = (&at * &h1 - (&h1 * gamma.re - &h2 * gamma.im)).norm();
    let im_res = (&at * &h2 - (&h1 * gamma.im + &h2 * gamma.re)).norm();
    let tol = 1e-8 * scale * (1.0 + frob(model.drift()));
    if re_res > tol || im_res > tol {
        return Err(Error::Validation(format!(
            "(gamma, x0*) is not an eigenpair of the adjoint drift: residuals {re_res:.3e}/{im_res:.3e}"
        )));
    }
    let hs = [&h1, &h2];
    let mut r = Matrix2::zeros();
    for i in 0..2 {
        let qh = model.q() * hs[i];
        for j in 0..2 {
            r[(i, j)] = qh.dot(hs[j]);
        }
    }
    r = (r + r.transpose()) * 0.5;
    validate_r(&r)?;
    Ok(Spec2D {
        a: gamma.re,
        b: gamma.im,
        r,
        c: Matrix2::new(gamma.re, -gamma.im, gamma.im, gamma.re),
        h1star: h1,
        h2star: h2,
    })
}

/// Two-route check of the reduced stationary variance.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub lyapunov_route: f64,
    pub formula_route: f64,
    pub rel_diff: f64,
    pub passed: bool,
}

/// Compare <Q_inf x0*, x0*> with -q/(2 gamma).
pub fn variance_identity_check(spec: &Spec1D, model: &OUModel) -> Result<VarianceReport> {
    model.invariant_measure()?;
    let qinf = model.qinf()?;
    let lhs = (&qinf * &spec.x0star).dot(&spec.x0star);
    let rhs = spec.stationary_variance();
    let rel = (lhs - rhs).abs() / rhs.abs().max(1e-300);
    Ok(VarianceReport {
        lyapunov_route: lhs,
        formula_route: rhs,
        rel_diff: rel,
        passed: rel <= 1e-8,
    })
}

/// Two-route check of the reduced stationary covariance.
#[derive(Debug, Clone)]
pub struct RinfReport {
    pub max_finite_s_dev: f64,
    pub max_rinf_dev: f64,
    pub passed: bool,
}

/// Checks, entrywise to 1e-8:
/// (i) exp(sC) R exp(sC^T) = (<exp(sA) Q exp(sA^T) h_i*, h_j*>) for each s;
/// (ii) the 2x2 Lyapunov solution for (C, R) equals the Gram matrix of Q_inf
///      on (h1*, h2*).
pub fn rinf_identity_check(spec: &Spec2D, model: &OUModel, s_grid: &[f64]) -> Result<RinfReport> {
    model.invariant_measure()?;
    let hs = [&spec.h1star, &spec.h2star];
    let cmat = Mat::from_row_slice(2, 2, &[spec.c[(0, 0)], spec.c[(0, 1)], spec.c[(1, 0)], spec.c[(1, 1)]]);
    let rmat = Mat::from_row_slice(2, 2, &[spec.r[(0, 0)], spec.r[(0, 1)], spec.r[(1, 0)], spec.r[(1, 1)]]);
    let rscale = frob(&rmat).max(1e-300);
    let mut max_s_dev = 0.0f64;
    for &s in s_grid {
        let ec = mat_exp(&cmat, s)?;
        let lhs = &ec * &rmat * ec.transpose();
        let ea = mat_exp(model.drift(), s)?;
        let mid = &ea * model.q() * ea.transpose();
        for i in 0..2 {
            let v = &mid * hs[i];
            for j in 0..2 {
                let dev = (lhs[(i, j)] - v.dot(hs[j])).abs();
                max_s_dev = max_s_dev.max(dev / rscale);
            }
        }
    }
    let rinf = lyapunov_qinf(&cmat, &rmat)?;
    let qinf = model.qinf()?;
    let mut max_rinf_dev = 0.0f64;
    for i in 0..2 {
        let v = &qinf * hs[i];
        for j in 0..2 {
            let dev = (rinf[(i, j)] - v.dot(hs[j])).abs();
            max_rinf_dev = max_rinf_dev.max(dev / frob(&rinf).max(1e-300));
        }
    }
    Ok(RinfReport {
        max_finite_s_dev: max_s_dev,
        max_rinf_dev,
        passed: max_s_dev <= 1e-8 && max_rinf_dev <= 1e-8,
    })
}

/// Law of (<x, x1*>, ...) under the invariant measure: centered Gaussian with
/// covariance (<Q_inf x_i*, x_j*>).
pub fn pushforward_law(model: &OUModel, functionals: &[Vec64]) -> Result<GaussianMeasure> {
    if functionals.is_empty() {
        return Err(Error::Validation("need at least one functional".into()));
    }
    let qinf = model.qinf()?;
    let k = functionals.len();
    let mut cov = Mat::zeros(k, k);
    for i in 0..k {
        let v = &qinf * &functionals[i];
        for j in 0..k {
            cov[(i, j)] = v.dot(&functionals[j]);
        }
    }
    GaussianMeasure::new((&cov + cov.transpose()) * 0.5)
}

// ---------------------------------------------------------------------------
// profiles
// ---------------------------------------------------------------------------

/// phi(u) = sum_j c_j u_j.
#[derive(Debug, Clone)]
pub struct LinearProfile {
    pub coeffs: Vec<C64>,
}

impl Profile for LinearProfile {
    fn arity(&self) -> usize {
        self.coeffs.len()
    }
    fn value(&self, u: &[f64]) -> C64 {
        self.coeffs.iter().zip(u).map(|(c, x)| c * *x).sum()
    }
    fn gradient(&self, _u: &[f64]) -> Vec<C64> {
        self.coeffs.clone()
    }
    fn hessian(&self, _u: &[f64]) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.coeffs.len() * self.coeffs.len()]
    }
}

/// Multivariate polynomial: sum of coeff * prod u_j^{p_j}.
#[derive(Debug, Clone)]
pub struct PolyProfile {
    arity: usize,
    terms: Vec<(Vec<u32>, C64)>,
}

impl PolyProfile {
    pub fn new(arity: usize, terms: Vec<(Vec<u32>, C64)>) -> Result<Self> {
        if terms.iter().any(|(p, _)| p.len() != arity) {
            return Err(Error::Dimension("polynomial term arity mismatch".into()));
        }
        Ok(Self { arity, terms })
    }

    /// Univariate polynomial from power-basis coefficients (low to high).
    pub fn univariate(coeffs: &[C64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| (vec![k as u32], *c))
            .collect();
        Self { arity: 1, terms }
    }
}

fn pow_or_deriv(x: f64, p: u32, order: u32) -> f64 {
    // d^order/dx^order of x^p
    if order > p {
        return 0.0;
    }
    let mut c = 1.0;
    for k in 0..order {
        c *= (p - k) as f64;
    }
    c * x.powi((p - order) as i32)
}

impl Profile for PolyProfile {
    fn arity(&self) -> usize {
        self.arity
    }
    fn value(&self, u: &[f64]) -> C64 {
        self.terms
            .iter()
            .map(|(p, c)| c * p.iter().zip(u).map(|(pj, xj)| xj.powi(*pj as i32)).product::<f64>())
            .sum()
    }
    fn gradient(&self, u: &[f64]) -> Vec<C64> {
        let mut g = vec![C64::new(0.0, 0.0); self.arity];
        for (p, c) in &self.terms {
            for j in 0..self.arity {
                let mut prod = 1.0;
                for (i, (pi, xi)) in p.iter().zip(u).enumerate() {
                    prod *= if i == j {
                        pow_or_deriv(*xi, *pi, 1)
                    } else {
                        xi.powi(*pi as i32)
                    };
                }
                g[j] += c * prod;
            }
        }
        g
    }
    fn hessian(&self, u: &[f64]) -> Vec<C64> {
        let k = self.arity;
        let mut h = vec![C64::new(0.0, 0.0); k * k];
        for (p, c) in &self.terms {
            for a in 0..k {
                for b in 0..k {
                    let mut prod = 1.0;
                    for (i, (pi, xi)) in p.iter().zip(u).enumerate() {
                        let order = (i == a) as u32 + (i == b) as u32;
                        prod *= pow_or_deriv(*xi, *pi, order);
                    }
                    h[a * k + b] += c * prod;
                }
            }
        }
        h
    }
}

/// Smooth compactly supported radial bump: exp(-1/(1 - |u - center|^2/r^2))
/// inside the ball of radius r, zero outside.
#[derive(Debug, Clone)]
pub struct BumpProfile {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BumpProfile {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Domain("bump radius must be positive".into()));
        }
        Ok(Self { center, radius })
    }

    fn s(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) * (x - c))
            .sum::<f64>()
            / (self.radius * self.radius)
    }
}

impl Profile for BumpProfile {
    fn arity(&self) -> usize {
        self.center.len()
    }
    fn value(&self, u: &[f64]) -> C64 {
        let s = self.s(u);
        if s >= 1.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new((-1.0 / (1.0 - s)).exp(), 0.0)
        }
    }
    fn gradient(&self, u: &[f64]) -> Vec<C64> {
        let k = self.arity();
        let s = self.s(u);
        if s >= 1.0 - 1e-12 {
            return vec![C64::new(0.0, 0.0); k];
        }
        let v = (-1.0 / (1.0 - s)).exp();
        let gp = -1.0 / ((1.0 - s) * (1.0 - s)); // d/ds of -1/(1-s)
        (0..k)
            .map(|j| {
                let sj = 2.0 * (u[j] - self.center[j]) / (self.radius * self.radius);
                C64::new(v * gp * sj, 0.0)
            })
            .collect()
    }
    fn hessian(&self, u: &[f64]) -> Vec<C64> {
        let k = self.arity();
        let s = self.s(u);
        if s >= 1.0 - 1e-12 {
            return vec![C64::new(0.0, 0.0); k * k];
        }
        let v = (-1.0 / (1.0 - s)).exp();
        let gp = -1.0 / ((1.0 - s) * (1.0 - s));
        let gpp = -2.0 / ((1.0 - s) * (1.0 - s) * (1.0 - s));
        let r2 = self.radius * self.radius;
        let mut h = vec![C64::new(0.0, 0.0); k * k];
        for a in 0..k {
            let sa = 2.0 * (u[a] - self.center[a]) / r2;
            for b in 0..k {
                let sb = 2.0 * (u[b] - self.center[b]) / r2;
                let sab = if a == b { 2.0 / r2 } else { 0.0 };
                h[a * k + b] = C64::new(v * ((gpp + gp * gp) * sa * sb + gp * sab), 0.0);
            }
        }
        h
    }
    fn support_radius(&self) -> Option<f64> {
        let c = self.center.iter().map(|c| c * c).sum::<f64>().sqrt();
        Some(c + self.radius)
    }
    fn growth(&self) -> Growth {
        Growth::Bounded
    }
}

/// phi(u) = exp(i <xi, u>).
#[derive(Debug, Clone)]
pub struct CharExpProfile {
    pub xi: Vec<f64>,
}

impl Profile for CharExpProfile {
    fn arity(&self) -> usize {
        self.xi.len()
    }
    fn value(&self, u: &[f64]) -> C64 {
        let phase: f64 = self.xi.iter().zip(u).map(|(a, b)| a * b).sum();
        C64::new(0.0, phase).exp()
    }
    fn gradient(&self, u: &[f64]) -> Vec<C64> {
        let v = self.value(u);
        self.xi.iter().map(|xj| v * C64::new(0.0, *xj)).collect()
    }
    fn hessian(&self, u: &[f64]) -> Vec<C64> {
        let k = self.arity();
        let v = self.value(u);
        let mut h = vec![C64::new(0.0, 0.0); k * k];
        for a in 0..k {
            for b in 0..k {
                h[a * k + b] = v * C64::new(0.0, self.xi[a]) * C64::new(0.0, self.xi[b]);
            }
        }
        h
    }
    fn growth(&self) -> Growth {
        Growth::Bounded
    }
}
