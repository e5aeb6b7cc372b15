//! Dense linear algebra and Gaussian-measure primitives: matrix exponentials,
//! finite-horizon Gramians, Lyapunov solves, covariance factorizations and
//! sampling, and the rank-2 trace identity.

use crate::error::{Error, Result};
use crate::{C64, CVec, Mat, Vec64};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Frobenius norm.
pub fn frob(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    let scale = frob(m);
    let dev = (m - m.transpose()).amax();
    if dev > 1e-12 * scale.max(1e-300) && scale > 0.0 {
        return Err(Error::Validation(format!(
            "{what} is not symmetric: max asymmetry {dev:.3e} vs norm {scale:.3e}"
        )));
    }
    Ok(())
}

/// exp(t*A) by scaling-and-squaring with a [6/6] Pade core.
pub fn mat_exp(a: &Mat, t: f64) -> Result<Mat> {
    check_square(a, "drift matrix")?;
    let n = a.nrows();
    let m = a * t;
    let norm = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    if !norm.is_finite() {
        return Err(Error::Numeric("non-finite entries in matrix exponential input".into()));
    }
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let ms = m / 2f64.powi(s as i32);

    // Pade [6/6]: N = sum c_k X^k, D = sum (-1)^k c_k X^k.
    let q = 6usize;
    let mut c = vec![1.0f64; q + 1];
    for k in 1..=q {
        c[k] = c[k - 1] * (q - k + 1) as f64 / (k * (2 * q - k + 1)) as f64;
    }
    let id = Mat::identity(n, n);
    let mut num = id.clone() * c[0];
    let mut den = id.clone() * c[0];
    let mut pw = id.clone();
    for (k, ck) in c.iter().enumerate().skip(1) {
        pw = &pw * &ms;
        num += &pw * *ck;
        if k % 2 == 0 {
            den += &pw * *ck;
        } else {
            den -= &pw * *ck;
        }
    }
    let mut f = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::Numeric("singular Pade denominator in matrix exponential".into()))?;
    for _ in 0..s {
        f = &f * &f;
    }
    Ok(f)
}

/// Finite-horizon covariance Gramian: integral of exp(sA) Q exp(sA^T) over [0, t],
/// by panel-doubling composite Gauss-Legendre quadrature.
pub fn gramian_qt(a: &Mat, q: &Mat, t: f64, tol: f64) -> Result<Mat> {
    check_square(a, "drift matrix")?;
    check_square(q, "diffusion covariance")?;
    if a.nrows() != q.nrows() {
        return Err(Error::Dimension(format!(
            "drift is {}x{} but diffusion covariance is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    check_symmetric(q, "diffusion covariance")?;
    if t < 0.0 {
        return Err(Error::Domain(format!("horizon t must be >= 0, got {t}")));
    }
    let n = a.nrows();
    if t == 0.0 {
        return Ok(Mat::zeros(n, n));
    }
    let rule = gauss_legendre(16);
    let eval = |panels: usize| -> Result<Mat> {
        let mut acc = Mat::zeros(n, n);
        let h = t / panels as f64;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = mid + 0.5 * h * z;
                let e = mat_exp(a, s)?;
                acc += (&e * q * e.transpose()) * (0.5 * h * w);
            }
        }
        Ok(acc)
    };
    let mut panels = (t.ceil() as usize).max(1);
    let mut prev = eval(panels)?;
    for _ in 0..14 {
        panels *= 2;
        let cur = eval(panels)?;
        let diff = frob(&(&cur - &prev));
        let scale = frob(&cur).max(1e-300);
        prev = cur;
        if diff <= tol * scale {
            let sym = (&prev + prev.transpose()) * 0.5;
            return Ok(sym);
        }
    }
    Err(Error::Accuracy(format!(
        "Gramian quadrature did not reach relative tolerance {tol:.1e} at {panels} panels"
    )))
}

/// Stationary covariance: the unique solution of A*S + S*A^T + Q = 0 for stable A.
///
/// Small systems go through the vectorized (Kronecker) linear system; larger ones
/// use the exponential-doubling recursion Q_{2t} = Q_t + exp(tA) Q_t exp(tA)^T.
pub fn lyapunov_qinf(a: &Mat, q: &Mat) -> Result<Mat> {
    check_square(a, "drift matrix")?;
    check_symmetric(q, "diffusion covariance")?;
    if a.nrows() != q.nrows() {
        return Err(Error::Dimension("drift/diffusion size mismatch in Lyapunov solve".into()));
    }
    let alpha = spectral_abscissa(a)?;
    if alpha >= 0.0 {
        return Err(Error::Unstable(alpha));
    }
    let n = a.nrows();
    if n <= 24 {
        // vec(A S + S A^T) = (I (x) A + A (x) I) vec(S), column-major vec.
        let n2 = n * n;
        let mut k = Mat::zeros(n2, n2);
        for col in 0..n {
            for row in 0..n {
                let ri = col * n + row;
                for j in 0..n {
                    k[(ri, col * n + j)] += a[(row, j)];
                    k[(ri, j * n + row)] += a[(col, j)];
                }
            }
        }
        let rhs = DVector::from_iterator(n2, q.iter().map(|v| -v));
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular Kronecker system in Lyapunov solve".into()))?;
        let sig = Mat::from_iterator(n, n, sol.iter().copied());
        return Ok((&sig + sig.transpose()) * 0.5);
    }
    // doubling recursion
    let anorm = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let t0 = 0.5 / (1.0 + anorm);
    let mut acc = gramian_qt(a, q, t0, 1e-13)?;
    let mut e = mat_exp(a, t0)?;
    for _ in 0..120 {
        let next = &acc + &e * &acc * e.transpose();
        let diff = frob(&(&next - &acc));
        let scale = frob(&next).max(1e-300);
        acc = next;
        e = &e * &e;
        if diff <= 1e-15 * scale {
            return Ok((&acc + acc.transpose()) * 0.5);
        }
    }
    Err(Error::Numeric("Lyapunov doubling recursion did not converge".into()))
}

/// Trace of the rank-2 operator v -> <v,y1> x1 + <v,y2> x2.
pub fn rank2_trace(x1: &Vec64, y1: &Vec64, x2: &Vec64, y2: &Vec64) -> Result<f64> {
    let n = x1.len();
    if y1.len() != n || x2.len() != n || y2.len() != n {
        return Err(Error::Dimension(format!(
            "rank-2 trace needs four vectors of equal length, got {}/{}/{}/{}",
            x1.len(),
            y1.len(),
            x2.len(),
            y2.len()
        )));
    }
    Ok(x1.dot(y1) + x2.dot(y2))
}

/// Max real part over the eigenvalues of A.
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    check_square(a, "matrix")?;
    if a.nrows() == 0 {
        return Err(Error::Dimension("empty matrix has no spectral abscissa".into()));
    }
    let eigs = complex_eigenvalues(a)?;
    Ok(eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// All eigenvalues of a real matrix via the real Schur form.
pub fn complex_eigenvalues(a: &Mat) -> Result<Vec<C64>> {
    check_square(a, "matrix")?;
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenpair of A closest to `shift`, by complex shift-inverted power iteration.
pub fn eig_pair(a: &Mat, shift: C64) -> Result<(C64, CVec)> {
    check_square(a, "matrix")?;
    let n = a.nrows();
    let mut mu = shift;
    let mut v = CVec::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.3 - 0.05 * i as f64));
    v /= C64::new(v.norm(), 0.0);
    let ac = DMatrix::<C64>::from_fn(n, n, |i, j| C64::new(a[(i, j)], 0.0));
    let scale = frob(a).max(1e-300);
    for it in 0..60 {
        let delta = if it == 0 { 1e-10 * (1.0 + mu.norm()) } else { 0.0 };
        let shifted = &ac - DMatrix::<C64>::identity(n, n) * (mu + C64::new(delta, delta));
        let lu = shifted.lu();
        let w = match lu.solve(&v) {
            Some(w) => w,
            None => {
                mu += C64::new(1e-8 * (1.0 + mu.norm()), 0.0);
                continue;
            }
        };
        let w = &w / C64::new(w.norm(), 0.0);
        let av = &ac * &w;
        let rayleigh = w.dotc(&av);
        let res = (&av - &w * rayleigh).norm();
        v = w;
        mu = rayleigh;
        if res <= 1e-12 * scale {
            return Ok((mu, v));
        }
    }
    let av = &ac * &v;
    let res = (&av - &v * mu).norm();
    if res <= 1e-8 * scale {
        Ok((mu, v))
    } else {
        Err(Error::Numeric(format!(
            "inverse iteration stalled near {mu}: residual {res:.3e}"
        )))
    }
}

/// Centered Gaussian measure with a positive-semidefinite covariance.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    cov: Mat,
}

impl GaussianMeasure {
    pub fn new(cov: Mat) -> Result<Self> {
        check_square(&cov, "covariance")?;
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("covariance has non-finite entries".into()));
        }
        check_symmetric(&cov, "covariance")?;
        let scale = frob(&cov);
        if scale > 0.0 {
            let eig = cov.clone().symmetric_eigen();
            let min = eig.eigenvalues.min();
            if min < -1e-10 * scale {
                return Err(Error::Degenerate(format!(
                    "covariance has eigenvalue {min:.3e} below the PSD tolerance"
                )));
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { cov })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &Mat {
        &self.cov
    }

    /// Symmetric square-root factor F with F F^T = cov, negative round-off
    /// eigenvalues clipped to zero.
    pub fn factor(&self) -> Result<Mat> {
        let scale = frob(&self.cov);
        let eig = self.cov.clone().symmetric_eigen();
        let n = self.dim();
        let mut d = Mat::zeros(n, n);
        for i in 0..n {
            let v = eig.eigenvalues[i];
            if v < -1e-10 * scale {
                return Err(Error::Degenerate(format!(
                    "covariance eigenvalue {v:.3e} beyond PSD tolerance; cannot factor"
                )));
            }
            d[(i, i)] = v.max(0.0).sqrt();
        }
        Ok(&eig.eigenvectors * d)
    }

    /// `count` i.i.d. draws from N(0, cov) as columns, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Mat> {
        if count == 0 {
            return Err(Error::Domain("sample count must be >= 1".into()));
        }
        let f = self.factor()?;
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Mat::from_fn(n, count, |_, _| StandardNormal.sample(&mut rng));
        Ok(&f * z)
    }
}

/// Quadrature rule: nodes, weights, and log-weights.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

fn golub_welsch(offdiag: &[f64], moment0: f64) -> QuadRule {
    let n = offdiag.len() + 1;
    let mut j = Mat::zeros(n, n);
    for (k, b) in offdiag.iter().enumerate() {
        j[(k, k + 1)] = *b;
        j[(k + 1, k)] = *b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            let lw = moment0.ln() + 2.0 * v0.abs().max(1e-320).ln();
            (eig.eigenvalues[i], moment0 * v0 * v0, lw)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    QuadRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
        log_weights: pairs.iter().map(|p| p.2).collect(),
    }
}

/// ln of the Gauss-Hermite weight at node x for an n-point rule, from the
/// Christoffel function of the orthonormal Hermite system.
fn hermite_log_weight(x: f64, n: usize) -> f64 {
    let mut scale = 0.0f64; // stored p = true p * exp(-scale)
    let mut pm = 0.0f64;
    let mut pc = std::f64::consts::PI.powf(-0.25);
    let mut sum = pc * pc; // true sum * exp(-2 scale)
    for k in 0..n - 1 {
        let kf = k as f64;
        let pn = (x * pc - (kf / 2.0).sqrt() * pm) / ((kf + 1.0) / 2.0).sqrt();
        pm = pc;
        pc = pn;
        sum += pc * pc;
        if pc.abs() > 1e120 {
            let f = 1e-120;
            pm *= f;
            pc *= f;
            sum *= f * f;
            scale += 120.0 * std::f64::consts::LN_10;
        }
    }
    -(sum.ln() + 2.0 * scale)
}

type RuleCache = Mutex<BTreeMap<(char, usize), Arc<QuadRule>>>;

fn rule_cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(BTreeMap::new()))
}

/// Gauss-Hermite rule for weight exp(-x^2) on the whole line.
pub fn gauss_hermite(n: usize) -> Arc<QuadRule> {
    let mut cache = rule_cache().lock().unwrap();
    cache
        .entry(('h', n))
        .or_insert_with(|| {
            let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
            let mut r = golub_welsch(&off, std::f64::consts::PI.sqrt());
            // enforce exact symmetry of the nodes
            let m = r.nodes.len();
            for i in 0..m / 2 {
                let a = 0.5 * (r.nodes[m - 1 - i] - r.nodes[i]);
                r.nodes[i] = -a;
                r.nodes[m - 1 - i] = a;
            }
            if m % 2 == 1 {
                r.nodes[m / 2] = 0.0;
            }
            // The eigenvector-based weights lose all relative accuracy once
            // they fall below machine epsilon squared, which poisons the
            // log-weights used by the overflow-safe semigroup quadrature.
            // Recompute every weight from the Christoffel function instead:
            // w_i = 1 / sum_{k<n} p_k(x_i)^2 with p_k orthonormal for
            // exp(-x^2), evaluated with running rescaling so the sum is exact
            // in the log domain at any order.
            for i in 0..m {
                let lw = hermite_log_weight(r.nodes[i], n);
                r.log_weights[i] = lw;
                r.weights[i] = lw.exp();
            }
            for i in 0..m / 2 {
                let lw = 0.5 * (r.log_weights[i] + r.log_weights[m - 1 - i]);
                r.log_weights[i] = lw;
                r.log_weights[m - 1 - i] = lw;
                let w = lw.exp();
                r.weights[i] = w;
                r.weights[m - 1 - i] = w;
            }
            Arc::new(r)
        })
        .clone()
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Arc<QuadRule> {
    let mut cache = rule_cache().lock().unwrap();
    cache
        .entry(('l', n))
        .or_insert_with(|| {
            let off: Vec<f64> = (1..n)
                .map(|k| {
                    let k = k as f64;
                    k / (4.0 * k * k - 1.0).sqrt()
                })
                .collect();
            Arc::new(golub_welsch(&off, 2.0))
        })
        .clone()
}
