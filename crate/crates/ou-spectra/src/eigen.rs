//! L1 eigenfunctions of the reduced generators.
//!
//! 1D: L1 phi = q/2 phi'' + gamma t phi' with gamma < 0. For every lambda with
//! Re lambda < 0 the equation has a solution integrable against the stationary
//! Gaussian. Off the lattice {n gamma} we integrate the substituted unknown
//! u = phi exp(-w), w(t) = |gamma| t^2 / q, which only grows like a power of t,
//! so the solve never overflows and the stationary weight cancels exactly in
//! every norm quotient. On the lattice the eigenfunctions are Hermite
//! polynomials and are constructed symbolically.
//!
//! 2D: L2 phi = 1/2 Tr(R D^2 phi) + <C t, D phi> with C = [[a,-b],[b,a]].
//! For isotropic R = r I the angular dependence separates as exp(i m theta)
//! and a scaled radial ODE is solved the same way. For general R, lattice
//! eigenvalues admit polynomial eigenfunctions in (z, zbar), and off-lattice
//! values are handled by minimizing the L1 residual quotient over a family of
//! linearly warped radial solutions.

use crate::error::{Error, Result};
use crate::gauss::{gauss_hermite, gauss_legendre, lyapunov_qinf};
use crate::model::{Spec1D, Spec2D};
use crate::{C64, Mat};
use nalgebra::Matrix2;
use std::collections::BTreeMap;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) for small complex systems, landing exactly on grid nodes
// ---------------------------------------------------------------------------

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Advance y from t0 to t1, adapting the step to the embedded error estimate.
fn rk45_advance<const N: usize, F>(
    f: &F,
    t0: f64,
    t1: f64,
    y: &mut [C64; N],
    h: &mut f64,
    rtol: f64,
    atol: f64,
) -> Result<()>
where
    F: Fn(f64, &[C64; N]) -> [C64; N],
{
    let mut t = t0;
    while t < t1 {
        let hs = h.min(t1 - t).max(1e-13);
        let mut k = [[C64::new(0.0, 0.0); N]; 7];
        k[0] = f(t, y);
        for stage in 0..6 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += kj[i] * (a * hs);
                    }
                }
            }
            k[stage + 1] = f(t + DP_C[stage] * hs, &ys);
        }
        // 5th-order solution uses the last A row; error vs the 4th-order weights
        let mut y5 = *y;
        let mut y4 = *y;
        for (j, kj) in k.iter().enumerate() {
            let b5 = if j < 6 { DP_A[5][j] } else { 0.0 };
            for i in 0..N {
                if b5 != 0.0 {
                    y5[i] += kj[i] * (b5 * hs);
                }
                if DP_B4[j] != 0.0 {
                    y4[i] += kj[i] * (DP_B4[j] * hs);
                }
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..N {
            let scale = atol + rtol * y[i].norm().max(y5[i].norm());
            err = err.max((y5[i] - y4[i]).norm() / scale);
        }
        if err <= 1.0 {
            t += hs;
            *y = y5;
            let grow = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
            *h = (hs * grow.clamp(0.2, 5.0)).min(0.05);
        } else {
            *h = (hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)).max(1e-13);
            if *h <= 2e-13 {
                return Err(Error::Numeric(format!(
                    "step size underflow at t = {t:.6e} in eigenfunction integration"
                )));
            }
        }
    }
    Ok(())
}

/// Two-point quintic Hermite interpolation from values and first two
/// derivatives at the endpoints of a step of width h; returns the value and
/// the first two derivatives at relative position s in [0, 1].
#[allow(clippy::too_many_arguments)]
fn quintic_hermite(
    y0: C64,
    d0: C64,
    dd0: C64,
    y1: C64,
    d1: C64,
    dd1: C64,
    h: f64,
    s: f64,
) -> [C64; 3] {
    // basis in tau = s with scaled derivative data D = d h, DD = dd h^2
    let (t2, t3) = (s * s, s * s * s);
    let (t4, t5) = (t2 * t2, t2 * t3);
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = s - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * t3 - t4 + 0.5 * t5;
    let dh0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let dh1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let dh2 = s - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
    let dh3 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
    let dh4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let dh5 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
    let ddh0 = -60.0 * s + 180.0 * t2 - 120.0 * t3;
    let ddh1 = -36.0 * s + 96.0 * t2 - 60.0 * t3;
    let ddh2 = 1.0 - 9.0 * s + 18.0 * t2 - 10.0 * t3;
    let ddh3 = 60.0 * s - 180.0 * t2 + 120.0 * t3;
    let ddh4 = -24.0 * s + 84.0 * t2 - 60.0 * t3;
    let ddh5 = 3.0 * s - 12.0 * t2 + 10.0 * t3;
    let (sd0, sdd0) = (d0 * h, dd0 * (h * h));
    let (sd1, sdd1) = (d1 * h, dd1 * (h * h));
    let v = y0 * h0 + sd0 * h1 + sdd0 * h2 + y1 * h3 + sd1 * h4 + sdd1 * h5;
    let d = (y0 * dh0 + sd0 * dh1 + sdd0 * dh2 + y1 * dh3 + sd1 * dh4 + sdd1 * dh5) / h;
    let dd =
        (y0 * ddh0 + sd0 * ddh1 + sdd0 * ddh2 + y1 * ddh3 + sd1 * ddh4 + sdd1 * ddh5) / (h * h);
    [v, d, dd]
}

fn trapezoid(h: f64, vals: &[f64]) -> f64 {
    if vals.len() < 2 {
        return 0.0;
    }
    let mut s = 0.5 * (vals[0] + vals[vals.len() - 1]);
    for v in &vals[1..vals.len() - 1] {
        s += v;
    }
    s * h
}

fn round_ties_to_even(x: f64) -> f64 {
    let f = x.floor();
    let diff = x - f;
    if diff > 0.5 {
        f + 1.0
    } else if diff < 0.5 {
        f
    } else if (f as i64).rem_euclid(2) == 0 {
        f
    } else {
        f + 1.0
    }
}

/// Evaluate a power-basis polynomial and its first two derivatives.
fn poly_derivs(coeffs: &[C64], x: f64) -> [C64; 3] {
    let mut v = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    let mut dd = C64::new(0.0, 0.0);
    for c in coeffs.iter().rev() {
        dd = dd * x + d * 2.0;
        d = d * x + v;
        v = v * x + c;
    }
    [v, d, dd]
}

// ---------------------------------------------------------------------------
// 1D eigenfunctions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Controls for the adaptive eigenfunction solves.
#[derive(Debug, Clone)]
pub struct SolveOpts {
    /// Initial half-width of the norm domain.
    pub t_init: f64,
    /// Increment when the tail has not yet converged.
    pub t_step: f64,
    /// Hard cap on the norm domain.
    pub t_cap: f64,
    /// Relative tail-mass increment below which the domain is accepted.
    pub tail_tol: f64,
    /// Extra grid beyond the norm domain, for semigroup arguments.
    pub margin: f64,
    /// Grid spacing.
    pub grid_step: f64,
    /// Relative tolerance of the ODE integrator.
    pub ode_rtol: f64,
    /// Parity of the initial data for the forward integration.
    pub init: Parity,
}

impl Default for SolveOpts {
    fn default() -> Self {
        Self {
            t_init: 6.0,
            t_step: 1.0,
            t_cap: 30.0,
            tail_tol: 1e-6,
            margin: 6.0,
            grid_step: 0.01,
            ode_rtol: 1e-12,
            init: Parity::Even,
        }
    }
}

/// A 1D eigenfunction of L1 at eigenvalue lambda.
///
/// When `scaled` is true, phi(t) = u(t) exp(w(t)) with w = |gamma| t^2 / q and
/// the arrays store u and its derivatives on [0, grid_extent]; the value at
/// negative t is parity * u(|t|). When false (Hermite lattice case), phi = u is
/// the polynomial stored in `poly`.
#[derive(Debug, Clone)]
pub struct Eigenfunction1D {
    pub lambda: C64,
    pub gamma: f64,
    pub q: f64,
    pub step: f64,
    /// Half-width T of the norm domain [-T, T].
    pub t_domain: f64,
    /// Extent of the stored grid (T + margin).
    pub grid_extent: f64,
    pub u: Vec<C64>,
    pub du: Vec<C64>,
    pub d2u: Vec<C64>,
    pub scaled: bool,
    /// Sign picked up under t -> -t: +1 (even) or -1 (odd).
    pub parity: f64,
    /// Power-basis coefficients of u(t) in the polynomial (lattice) case.
    pub poly: Option<Vec<C64>>,
    /// L1(nu_inf) norm over [-T, T].
    pub l1_norm: f64,
    /// Relative norm increment over the last domain extension.
    pub tail_gap: f64,
}

impl Eigenfunction1D {
    pub fn sigma2(&self) -> f64 {
        -self.q / (2.0 * self.gamma)
    }

    /// Gaussian exponent w(t) = t^2 / (2 sigma_inf^2).
    pub fn w(&self, t: f64) -> f64 {
        -self.gamma * t * t / self.q
    }

    /// Tail exponent of |phi| rho_inf: Re lambda / |gamma| - 1.
    pub fn tail_exponent(&self) -> f64 {
        self.lambda.re / -self.gamma - 1.0
    }

    fn extrap_params(&self) -> (C64, C64) {
        // u ~ K t^nu (1 + c1 / t^2) with nu = lambda/|gamma| - 1
        let ag = -self.gamma;
        let nu = self.lambda / ag - 1.0;
        let c1 = nu * (nu - 1.0) * (self.q / (4.0 * ag));
        (nu, c1)
    }

    /// u, u', u'' at t >= 0: quintic interpolation on the grid, power-law
    /// asymptotic with its first correction beyond the grid.
    fn u_derivs3(&self, t: f64) -> [C64; 3] {
        debug_assert!(t >= 0.0);
        if let Some(p) = &self.poly {
            return poly_derivs(p, t);
        }
        let n = self.u.len();
        let tg = self.grid_extent;
        if t <= tg {
            let i = ((t / self.step) as usize).min(n - 2);
            let s = (t - i as f64 * self.step) / self.step;
            quintic_hermite(
                self.u[i],
                self.du[i],
                self.d2u[i],
                self.u[i + 1],
                self.du[i + 1],
                self.d2u[i + 1],
                self.step,
                s,
            )
        } else {
            let (nu, c1) = self.extrap_params();
            let base = self.u[n - 1] / (C64::new(1.0, 0.0) + c1 / (tg * tg));
            let pw = (nu * (t / tg).ln()).exp();
            let corr = C64::new(1.0, 0.0) + c1 / (t * t);
            let v = base * pw * corr;
            let d = base * pw * (nu / t * corr - c1 * 2.0 / (t * t * t));
            let dd = base
                * pw
                * (nu * (nu - 1.0) / (t * t)
                    + c1 * ((nu - 2.0) * (nu - 3.0)) / (t * t * t * t));
            [v, d, dd]
        }
    }

    fn u_interp(&self, t: f64) -> (C64, C64) {
        let d = self.u_derivs3(t);
        (d[0], d[1])
    }

    /// Signed u at any real t (applies parity for t < 0).
    pub fn u_at(&self, t: f64) -> C64 {
        let sign = if t < 0.0 { self.parity } else { 1.0 };
        self.u_interp(t.abs()).0 * sign
    }

    /// phi(t) split as (mantissa, exponent): phi = mantissa * exp(exponent).
    pub fn phi_parts(&self, t: f64) -> (C64, f64) {
        let m = self.u_at(t);
        if self.scaled {
            (m, self.w(t))
        } else {
            (m, 0.0)
        }
    }

    /// phi(t) directly; may overflow for very large |t| in the scaled case.
    pub fn value(&self, t: f64) -> C64 {
        let (m, e) = self.phi_parts(t);
        m * e.exp()
    }

    /// phi, phi', phi'' as (mantissas, shared exponent).
    pub fn phi_derivs_parts(&self, t: f64) -> ([C64; 3], f64) {
        let sign = if t < 0.0 { self.parity } else { 1.0 };
        let ta = t.abs();
        let [u, mut dup, mut d2] = self.u_derivs3(ta);
        // odd reflection: u(-t) = p u(t), u'(-t) = -p u'(t), u''(-t) = p u''(t)
        let mut uv = u * sign;
        if t < 0.0 {
            dup = -dup;
        }
        dup *= sign;
        d2 *= sign;
        if !self.scaled {
            return ([uv, dup, d2], 0.0);
        }
        // phi = u e^w: phi' = (u' + w'u)e^w, phi'' = (u'' + 2w'u' + (w'' + w'^2)u)e^w
        let ag = -self.gamma;
        let wp = 2.0 * ag * t / self.q;
        let wpp = 2.0 * ag / self.q;
        let phi = uv;
        let dphi = dup + uv * wp;
        let d2phi = d2 + dup * (2.0 * wp) + uv * (wpp + wp * wp);
        uv = phi;
        ([uv, dphi, d2phi], self.w(t))
    }

    fn z_const(&self) -> f64 {
        (2.0 * PI * self.sigma2()).sqrt()
    }

    /// |phi(t)| rho_inf(t) on a grid node index (scaled weight handled exactly).
    fn weighted_abs(&self, idx: usize) -> f64 {
        let t = idx as f64 * self.step;
        if self.scaled {
            self.u[idx].norm() / self.z_const()
        } else {
            self.u[idx].norm() * (-self.w(t)).exp() / self.z_const()
        }
    }
}

fn hermite_coeffs(n: usize) -> Vec<f64> {
    // probabilists' Hermite polynomials: He_{k+1}(x) = x He_k(x) - k He_{k-1}(x)
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        let mut next = vec![0.0; k + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= k as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

fn hermite_case(spec: &Spec1D, n: usize, opts: &SolveOpts) -> Result<Eigenfunction1D> {
    let sigma = spec.stationary_variance().sqrt();
    let he = hermite_coeffs(n);
    // u(t) = He_n(t / sigma) in the power basis of t
    let coeffs: Vec<C64> = he
        .iter()
        .enumerate()
        .map(|(k, c)| C64::new(c / sigma.powi(k as i32), 0.0))
        .collect();
    let t_dom = opts.t_init.max(8.0 * sigma).min(opts.t_cap);
    let extent = t_dom + opts.margin;
    let nn = (extent / opts.grid_step).round() as usize + 1;
    let mut ef = Eigenfunction1D {
        lambda: C64::new(n as f64 * spec.gamma, 0.0),
        gamma: spec.gamma,
        q: spec.q,
        step: opts.grid_step,
        t_domain: t_dom,
        grid_extent: extent,
        u: Vec::with_capacity(nn),
        du: Vec::with_capacity(nn),
        d2u: Vec::with_capacity(nn),
        scaled: false,
        parity: if n % 2 == 0 { 1.0 } else { -1.0 },
        poly: Some(coeffs.clone()),
        l1_norm: 0.0,
        tail_gap: 0.0,
    };
    for i in 0..nn {
        let d = poly_derivs(&coeffs, i as f64 * opts.grid_step);
        ef.u.push(d[0]);
        ef.du.push(d[1]);
        ef.d2u.push(d[2]);
    }
    let m = (t_dom / opts.grid_step).round() as usize;
    let vals: Vec<f64> = (0..=m).map(|i| ef.weighted_abs(i)).collect();
    ef.l1_norm = 2.0 * trapezoid(opts.grid_step, &vals);
    Ok(ef)
}

/// Detect lambda on the real lattice {n gamma : n >= 0}.
fn lattice_index_1d(spec: &Spec1D, lambda: C64) -> Option<usize> {
    let scale = spec.gamma.abs().max(lambda.norm());
    if lambda.im.abs() > 1e-9 * scale {
        return None;
    }
    let nf = lambda.re / spec.gamma;
    let n = nf.round();
    if n >= 1.0 - 1e-9 && (nf - n).abs() * spec.gamma.abs() <= 1e-9 * scale {
        Some(n as usize)
    } else {
        None
    }
}

/// Solve for the L1 eigenfunction of the reduced 1D generator at lambda,
/// Re lambda < 0. Lattice values return the Hermite polynomial; all other
/// values are integrated forward in the scaled representation.
pub fn solve_1d(spec: &Spec1D, lambda: C64, opts: &SolveOpts) -> Result<Eigenfunction1D> {
    if lambda.re >= 0.0 {
        return Err(Error::Domain(format!(
            "Re lambda must be < 0, got {}",
            lambda.re
        )));
    }
    if let Some(n) = lattice_index_1d(spec, lambda) {
        return hermite_case(spec, n, opts);
    }
    let ag = -spec.gamma;
    let q = spec.q;
    let rhs = move |t: f64, y: &[C64; 3]| -> [C64; 3] {
        [
            y[1],
            y[2],
            (y[2] * (ag * t) + y[1] * (2.0 * ag - lambda)) * (-2.0 / q),
        ]
    };
    let (parity, mut y) = match opts.init {
        Parity::Even => (
            1.0,
            [
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                (lambda - ag) * (2.0 / q),
            ],
        ),
        Parity::Odd => (
            -1.0,
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        ),
    };
    let h0 = opts.grid_step;
    let mut u = vec![y[0]];
    let mut du = vec![y[1]];
    let mut d2u = vec![y[2]];
    let mut h = h0 * 0.1;
    let integrate_to = |target_nodes: usize, u: &mut Vec<C64>, du: &mut Vec<C64>, d2u: &mut Vec<C64>, y: &mut [C64; 3], h: &mut f64| -> Result<()> {
        while u.len() <= target_nodes {
            let i = u.len();
            let t0 = (i - 1) as f64 * h0;
            rk45_advance(&rhs, t0, t0 + h0, y, h, opts.ode_rtol, 1e-300)?;
            u.push(y[0]);
            du.push(y[1]);
            d2u.push(y[2]);
        }
        Ok(())
    };
    // adaptive norm domain
    let mut t_dom = opts.t_init.min(opts.t_cap);
    let nodes_of = |t: f64| (t / h0).round() as usize;
    integrate_to(nodes_of(t_dom), &mut u, &mut du, &mut d2u, &mut y, &mut h)?;
    let seg_mass = |u: &[C64], lo: usize, hi: usize| -> f64 {
        let vals: Vec<f64> = (lo..=hi).map(|i| u[i].norm()).collect();
        trapezoid(h0, &vals)
    };
    let mut norm = seg_mass(&u, 0, nodes_of(t_dom));
    let mut gap = f64::INFINITY;
    while t_dom + opts.t_step <= opts.t_cap + 1e-12 {
        let lo = nodes_of(t_dom);
        t_dom += opts.t_step;
        let hi = nodes_of(t_dom);
        integrate_to(hi, &mut u, &mut du, &mut d2u, &mut y, &mut h)?;
        let inc = seg_mass(&u, lo, hi);
        norm += inc;
        gap = inc / norm.max(1e-300);
        if gap < opts.tail_tol {
            break;
        }
    }
    let extent = t_dom + opts.margin;
    integrate_to(nodes_of(extent), &mut u, &mut du, &mut d2u, &mut y, &mut h)?;
    let z = (2.0 * PI * (q / (2.0 * ag))).sqrt();
    Ok(Eigenfunction1D {
        lambda,
        gamma: spec.gamma,
        q,
        step: h0,
        t_domain: t_dom,
        grid_extent: nodes_of(extent) as f64 * h0,
        u,
        du,
        d2u,
        scaled: true,
        parity,
        poly: None,
        l1_norm: 2.0 * norm / z,
        tail_gap: if gap.is_finite() { gap } else { 1.0 },
    })
}

/// L1 residual quotient ||L1 phi - lambda phi|| / ||phi|| over the norm domain,
/// evaluated from the stored derivative triples. The second derivative is
/// carried as an independent integration variable, so this measures genuine
/// integration error rather than restating the ODE.
pub fn residual_generator_1d(ef: &Eigenfunction1D) -> f64 {
    let ag = -ef.gamma;
    let m = (ef.t_domain / ef.step).round() as usize;
    let mut res = Vec::with_capacity(m + 1);
    let mut den = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let t = i as f64 * ef.step;
        let r = if ef.scaled {
            // (L1 - lambda) phi = [q/2 u'' + |gamma| t u' + (|gamma| - lambda) u] e^w
            ef.d2u[i] * (0.5 * ef.q) + ef.du[i] * (ag * t) + ef.u[i] * (ag - ef.lambda)
        } else {
            ef.d2u[i] * (0.5 * ef.q) + ef.du[i] * (ef.gamma * t) - ef.u[i] * ef.lambda
        };
        let wgt = if ef.scaled { 1.0 } else { (-ef.w(t)).exp() };
        res.push(r.norm() * wgt);
        den.push(ef.u[i].norm() * wgt);
    }
    trapezoid(ef.step, &res) / trapezoid(ef.step, &den).max(1e-300)
}

/// L1 residual quotient ||P(t) phi - e^{lambda t} phi|| / ||phi|| with P(t)
/// the reduced Mehler semigroup, by Gauss-Hermite quadrature in log-weight
/// form. Requires t <= ln(5) / (2 |gamma|) so quadrature arguments stay within
/// reach of the stored grid.
pub fn residual_semigroup_1d(ef: &Eigenfunction1D, t: f64) -> Result<f64> {
    let ag = -ef.gamma;
    if t <= 0.0 {
        return Err(Error::Domain(format!("time must be > 0, got {t}")));
    }
    let t_max = 5.0f64.ln() / (2.0 * ag);
    if t > t_max {
        return Err(Error::Domain(format!(
            "semigroup residual supports t <= {t_max:.4}, got {t}"
        )));
    }
    let sigma2 = ef.sigma2();
    let c = (ef.gamma * t).exp();
    let st = (sigma2 * (1.0 - c * c)).sqrt();
    let elt = (ef.lambda * t).exp();
    let outer = 5.0 * ef.step;
    let m = (ef.t_domain / outer).floor() as usize;
    let eval = |order: usize| -> f64 {
        let rule = gauss_hermite(order);
        let mut num = Vec::with_capacity(m + 1);
        let mut den = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let x = i as f64 * outer;
            let mean = c * x;
            let wx = ef.w(x);
            let mut acc = C64::new(0.0, 0.0);
            if ef.scaled {
                for (z, lw) in rule.nodes.iter().zip(&rule.log_weights) {
                    let arg = mean + std::f64::consts::SQRT_2 * st * z;
                    let e = ef.w(arg) - wx + lw;
                    acc += ef.u_at(arg) * e.exp();
                }
                acc /= PI.sqrt();
                let diff = acc - elt * ef.u_at(x);
                num.push(diff.norm());
                den.push(ef.u_at(x).norm());
            } else {
                for (z, lw) in rule.nodes.iter().zip(&rule.log_weights) {
                    let arg = mean + std::f64::consts::SQRT_2 * st * z;
                    acc += ef.u_at(arg) * lw.exp();
                }
                acc /= PI.sqrt();
                let damp = (-wx).exp();
                let diff = (acc - elt * ef.u_at(x)) * damp;
                num.push(diff.norm());
                den.push(ef.u_at(x).norm() * damp);
            }
        }
        trapezoid(outer, &num) / trapezoid(outer, &den).max(1e-300)
    };
    let mut prev = eval(96);
    for order in [192usize, 384] {
        let cur = eval(order);
        let settled = (cur - prev).abs() <= 1e-3 * cur.max(1e-12);
        prev = cur;
        if settled {
            break;
        }
    }
    Ok(prev)
}

/// ln of the truncated integrals I_p(T) = int_{|t|<=T} |phi|^p d nu_inf for
/// each requested half-width. Computed in the log domain so p > 1 divergence
/// is observable without overflow.
pub fn lp_truncated_log_norms(ef: &Eigenfunction1D, p: f64, half_widths: &[f64]) -> Result<Vec<f64>> {
    if p < 1.0 {
        return Err(Error::Domain(format!("p must be >= 1, got {p}")));
    }
    let ln_z = ef.z_const().ln();
    let max_t = half_widths.iter().cloned().fold(0.0f64, f64::max);
    if ef.poly.is_none() && max_t > ef.grid_extent + 1e-9 {
        return Err(Error::Domain(format!(
            "half-width {max_t} exceeds the stored grid extent {:.2}",
            ef.grid_extent
        )));
    }
    let mut out = Vec::with_capacity(half_widths.len());
    for &tw in half_widths {
        let m = (tw / ef.step).round() as usize;
        // log-domain trapezoid: ln(2 * sum_k c_k h exp(a_k))
        let mut amax = f64::NEG_INFINITY;
        let mut terms: Vec<(f64, f64)> = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let t = i as f64 * ef.step;
            let (mant, _) = ef.phi_parts(t);
            let npart = mant.norm();
            if npart == 0.0 {
                continue;
            }
            let a = if ef.scaled {
                p * npart.ln() + (p - 1.0) * ef.w(t) - ln_z
            } else {
                p * npart.ln() - ef.w(t) - ln_z
            };
            let cw = if i == 0 || i == m { 0.5 } else { 1.0 };
            amax = amax.max(a);
            terms.push((a, cw));
        }
        if terms.is_empty() {
            out.push(f64::NEG_INFINITY);
            continue;
        }
        let sum: f64 = terms.iter().map(|(a, cw)| cw * (a - amax).exp()).sum();
        out.push(amax + (2.0 * ef.step * sum).ln());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// 2D eigenfunctions, isotropic diffusion: phi = g(rho) e^{i m theta}
// ---------------------------------------------------------------------------

/// Radial eigenfunction of L2 with isotropic diffusion R = r I at eigenvalue
/// lambda: phi(t) = g(rho) e^{i m theta}, where g solves
/// r/2 (g'' + g'/rho - m^2 g / rho^2) + a rho g' = (lambda - i m b) g.
///
/// When `scaled`, g = v exp(w2) with w2 = |a| rho^2 / r and the arrays store v.
/// On the lattice the radial part is the polynomial in `poly_radial`
/// (coefficients of rho^{|m| + 2k}).
#[derive(Debug, Clone)]
pub struct Eigenfunction2D {
    pub lambda: C64,
    pub m: i32,
    pub a: f64,
    pub b: f64,
    pub r: f64,
    /// Radial eigenvalue mu = lambda - i m b.
    pub mu: C64,
    pub step: f64,
    pub rho_domain: f64,
    pub grid_extent: f64,
    pub v: Vec<C64>,
    pub dv: Vec<C64>,
    pub d2v: Vec<C64>,
    pub scaled: bool,
    pub poly_radial: Option<Vec<C64>>,
    pub l1_norm: f64,
    pub tail_gap: f64,
}

impl Eigenfunction2D {
    pub fn sigma2(&self) -> f64 {
        self.r / (2.0 * -self.a)
    }

    /// w2(rho) = rho^2 / (2 sigma2).
    pub fn w2(&self, rho: f64) -> f64 {
        -self.a * rho * rho / self.r
    }

    fn extrap_params(&self) -> (C64, C64) {
        // v ~ K rho^s (1 + c1 / rho^2), s = mu/|a| - 2
        let aa = -self.a;
        let s = self.mu / aa - 2.0;
        let mm = (self.m as f64) * (self.m as f64);
        let c1 = (s * s - mm) * (self.r / (4.0 * aa));
        (s, c1)
    }

    /// v, v', v'' at rho >= 0.
    pub fn v_derivs(&self, rho: f64) -> [C64; 3] {
        if let Some(p) = &self.poly_radial {
            // g = sum_k p_k rho^{|m| + 2k}
            let mm = self.m.unsigned_abs() as i32;
            let mut v = C64::new(0.0, 0.0);
            let mut d = C64::new(0.0, 0.0);
            let mut dd = C64::new(0.0, 0.0);
            for (k, c) in p.iter().enumerate() {
                let e = mm + 2 * k as i32;
                let ef = e as f64;
                v += c * rho.powi(e);
                if e >= 1 {
                    d += c * (ef * rho.powi(e - 1));
                }
                if e >= 2 {
                    dd += c * (ef * (ef - 1.0) * rho.powi(e - 2));
                }
            }
            return [v, d, dd];
        }
        let n = self.v.len();
        let tg = self.grid_extent;
        if rho <= tg {
            let i = ((rho / self.step) as usize).min(n - 2);
            let s = (rho - i as f64 * self.step) / self.step;
            quintic_hermite(
                self.v[i],
                self.dv[i],
                self.d2v[i],
                self.v[i + 1],
                self.dv[i + 1],
                self.d2v[i + 1],
                self.step,
                s,
            )
        } else {
            let (sx, c1) = self.extrap_params();
            let base = self.v[n - 1] / (C64::new(1.0, 0.0) + c1 / (tg * tg));
            let pw = (sx * (rho / tg).ln()).exp();
            let corr = C64::new(1.0, 0.0) + c1 / (rho * rho);
            let v = base * pw * corr;
            let d = base * pw * (sx / rho * corr - c1 * 2.0 / (rho * rho * rho));
            // v = base pw (1 + c1 rho^{-2}) => v'' = base pw [s(s-1)/rho^2
            //   + c1 (s-2)(s-3)/rho^4]
            let dd = base
                * pw
                * (sx * (sx - 1.0) / (rho * rho)
                    + c1 * ((sx - 2.0) * (sx - 3.0)) / (rho * rho * rho * rho));
            [v, d, dd]
        }
    }

    /// g, g', g'' (the unscaled radial profile) as mantissas with a shared
    /// exponent: g^{(k)} = mantissa_k * exp(exponent).
    pub fn g_derivs_parts(&self, rho: f64) -> ([C64; 3], f64) {
        let d = self.v_derivs(rho);
        if !self.scaled {
            return (d, 0.0);
        }
        let aa = -self.a;
        let wp = 2.0 * aa * rho / self.r;
        let wpp = 2.0 * aa / self.r;
        let g = d[0];
        let dg = d[1] + d[0] * wp;
        let d2g = d[2] + d[1] * (2.0 * wp) + d[0] * (wpp + wp * wp);
        ([g, dg, d2g], self.w2(rho))
    }

    /// phi at a 2D point (may overflow far outside the grid in the scaled case).
    pub fn value(&self, t1: f64, t2: f64) -> C64 {
        let rho = t1.hypot(t2);
        let (parts, e) = self.g_derivs_parts(rho);
        parts[0] * e.exp() * phase_pow(t1, t2, rho, self.m)
    }
}

fn phase_pow(t1: f64, t2: f64, rho: f64, m: i32) -> C64 {
    if m == 0 {
        return C64::new(1.0, 0.0);
    }
    if rho < 1e-300 {
        return C64::new(0.0, 0.0);
    }
    let unit = C64::new(t1 / rho, t2 / rho);
    if m > 0 {
        unit.powi(m)
    } else {
        unit.conj().powi(-m)
    }
}

/// Series coefficients d_k of v = rho^{|m|} sum_k d_k rho^{2k} near the origin
/// (scaled radial equation).
fn radial_series(mu: C64, aa: f64, r: f64, mm: i32, kmax: usize) -> Vec<C64> {
    let mut d = vec![C64::new(1.0, 0.0)];
    for k in 1..=kmax {
        let kf = k as f64;
        let prev = d[k - 1];
        let num = mu - aa * (mm as f64 + 2.0 * kf);
        let den = 2.0 * r * kf * (mm as f64 + kf);
        d.push(prev * num / den);
    }
    d
}

fn radial_lattice_index(mu: C64, a: f64, mm: i32) -> Option<usize> {
    let scale = a.abs().max(mu.norm());
    if mu.im.abs() > 1e-9 * scale {
        return None;
    }
    let nf = (mu.re / a - mm as f64) / 2.0;
    let n = nf.round();
    if n >= -1e-9 && (nf - n).abs() * a.abs() <= 1e-9 * scale {
        Some(n.max(0.0) as usize)
    } else {
        None
    }
}

fn radial_polynomial_case(
    spec_a: f64,
    spec_b: f64,
    r: f64,
    lambda: C64,
    m: i32,
    nu: usize,
    opts: &SolveOpts,
) -> Eigenfunction2D {
    let mm = m.unsigned_abs() as i32;
    let mu = lambda - C64::new(0.0, m as f64 * spec_b);
    // c_{j+1} = (mu - a (|m| + 2j)) c_j / (2 r (j+1)(|m|+j+1))
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for j in 0..nu {
        let jf = j as f64;
        let num = mu - spec_a * (mm as f64 + 2.0 * jf);
        let den = 2.0 * r * (jf + 1.0) * (mm as f64 + jf + 1.0);
        let next = coeffs[j] * num / den;
        coeffs.push(next);
    }
    let sigma2 = r / (2.0 * -spec_a);
    let rho_dom = opts.t_init.max(8.0 * sigma2.sqrt()).min(opts.t_cap);
    let extent = rho_dom + opts.margin;
    let nn = (extent / opts.grid_step).round() as usize + 1;
    let mut ef = Eigenfunction2D {
        lambda,
        m,
        a: spec_a,
        b: spec_b,
        r,
        mu,
        step: opts.grid_step,
        rho_domain: rho_dom,
        grid_extent: extent,
        v: Vec::with_capacity(nn),
        dv: Vec::with_capacity(nn),
        d2v: Vec::with_capacity(nn),
        scaled: false,
        poly_radial: Some(coeffs),
        l1_norm: 0.0,
        tail_gap: 0.0,
    };
    for i in 0..nn {
        let d = ef.v_derivs(i as f64 * opts.grid_step);
        ef.v.push(d[0]);
        ef.dv.push(d[1]);
        ef.d2v.push(d[2]);
    }
    let mnode = (rho_dom / opts.grid_step).round() as usize;
    let vals: Vec<f64> = (0..=mnode)
        .map(|i| {
            let rho = i as f64 * opts.grid_step;
            ef.v[i].norm() * (-ef.w2(rho)).exp() * rho
        })
        .collect();
    ef.l1_norm = trapezoid(opts.grid_step, &vals) / sigma2;
    ef
}

/// Solve for the radial L1 eigenfunction of the isotropic 2D reduced generator
/// at lambda (Re lambda < 0). The angular index defaults to round(Im lambda / b)
/// with ties toward even.
pub fn solve_2d_isotropic(
    spec: &Spec2D,
    lambda: C64,
    m_opt: Option<i32>,
    opts: &SolveOpts,
) -> Result<Eigenfunction2D> {
    if lambda.re >= 0.0 {
        return Err(Error::Domain(format!(
            "Re lambda must be < 0, got {}",
            lambda.re
        )));
    }
    let r = spec.isotropic_r().ok_or_else(|| {
        Error::Validation(
            "diffusion matrix R is not isotropic; use the polynomial lattice \
             construction or the Weyl residual minimizer"
                .into(),
        )
    })?;
    let m = m_opt.unwrap_or_else(|| round_ties_to_even(lambda.im / spec.b) as i32);
    let mm = m.unsigned_abs() as i32;
    let mu = lambda - C64::new(0.0, m as f64 * spec.b);
    if let Some(nu) = radial_lattice_index(mu, spec.a, mm) {
        return Ok(radial_polynomial_case(spec.a, spec.b, r, lambda, m, nu, opts));
    }
    let aa = -spec.a;
    let mmf = mm as f64;
    let rhs = move |rho: f64, y: &[C64; 3]| -> [C64; 3] {
        let v = y[0];
        let dv = y[1];
        let d2 = y[2];
        let d3 = -d2 / rho + dv * ((1.0 + mmf * mmf) / (rho * rho))
            - v * (2.0 * mmf * mmf / (rho * rho * rho))
            - (d2 * (aa * rho) + dv * (3.0 * aa - mu)) * (2.0 / r);
        [dv, d2, d3]
    };
    let h0 = opts.grid_step;
    let rho_start = 0.1;
    let start_nodes = (rho_start / h0).round() as usize;
    let series = radial_series(mu, aa, r, mm, 40);
    let series_derivs = |rho: f64| -> [C64; 3] {
        let mut v = C64::new(0.0, 0.0);
        let mut d = C64::new(0.0, 0.0);
        let mut dd = C64::new(0.0, 0.0);
        for (k, c) in series.iter().enumerate() {
            let e = mm + 2 * k as i32;
            let ef = e as f64;
            let p = rho.powi(e);
            v += c * p;
            if e >= 1 {
                d += c * (ef * rho.powi(e - 1));
            }
            if e >= 2 {
                dd += c * (ef * (ef - 1.0) * rho.powi(e - 2));
            }
        }
        [v, d, dd]
    };
    let mut v = Vec::new();
    let mut dv = Vec::new();
    let mut d2v = Vec::new();
    for i in 0..=start_nodes {
        let d = series_derivs(i as f64 * h0);
        v.push(d[0]);
        dv.push(d[1]);
        d2v.push(d[2]);
    }
    let sd = series_derivs(rho_start);
    let mut y = [sd[0], sd[1], sd[2]];
    let mut h = h0 * 0.1;
    let integrate_to = |target: usize, v: &mut Vec<C64>, dv: &mut Vec<C64>, d2v: &mut Vec<C64>, y: &mut [C64; 3], h: &mut f64| -> Result<()> {
        while v.len() <= target {
            let i = v.len();
            let r0 = (i - 1) as f64 * h0;
            rk45_advance(&rhs, r0, r0 + h0, y, h, opts.ode_rtol, 1e-300)?;
            v.push(y[0]);
            dv.push(y[1]);
            d2v.push(y[2]);
        }
        Ok(())
    };
    let nodes_of = |t: f64| (t / h0).round() as usize;
    let mut rho_dom = opts.t_init.min(opts.t_cap);
    integrate_to(nodes_of(rho_dom), &mut v, &mut dv, &mut d2v, &mut y, &mut h)?;
    let seg_mass = |v: &[C64], lo: usize, hi: usize| -> f64 {
        let vals: Vec<f64> = (lo..=hi)
            .map(|i| v[i].norm() * (i as f64 * h0))
            .collect();
        trapezoid(h0, &vals)
    };
    let mut norm = seg_mass(&v, 0, nodes_of(rho_dom));
    let mut gap = f64::INFINITY;
    while rho_dom + opts.t_step <= opts.t_cap + 1e-12 {
        let lo = nodes_of(rho_dom);
        rho_dom += opts.t_step;
        let hi = nodes_of(rho_dom);
        integrate_to(hi, &mut v, &mut dv, &mut d2v, &mut y, &mut h)?;
        let inc = seg_mass(&v, lo, hi);
        norm += inc;
        gap = inc / norm.max(1e-300);
        if gap < opts.tail_tol {
            break;
        }
    }
    let extent = rho_dom + opts.margin;
    integrate_to(nodes_of(extent), &mut v, &mut dv, &mut d2v, &mut y, &mut h)?;
    let sigma2 = r / (2.0 * aa);
    Ok(Eigenfunction2D {
        lambda,
        m,
        a: spec.a,
        b: spec.b,
        r,
        mu,
        step: h0,
        rho_domain: rho_dom,
        grid_extent: nodes_of(extent) as f64 * h0,
        v,
        dv,
        d2v,
        scaled: true,
        poly_radial: None,
        l1_norm: norm / sigma2,
        tail_gap: if gap.is_finite() { gap } else { 1.0 },
    })
}

/// L1 residual quotient of the radial generator equation over the norm domain.
pub fn residual_generator_2d(ef: &Eigenfunction2D) -> f64 {
    let aa = -ef.a;
    let mm = (ef.m as f64) * (ef.m as f64);
    let m = (ef.rho_domain / ef.step).round() as usize;
    let mut res = vec![0.0];
    let mut den = vec![0.0];
    for i in 1..=m {
        let rho = i as f64 * ef.step;
        let (r_val, wgt) = if ef.scaled {
            let r_val = (ef.d2v[i] + ef.dv[i] / rho - ef.v[i] * (mm / (rho * rho))) * (0.5 * ef.r)
                + ef.dv[i] * (aa * rho)
                + ef.v[i] * (2.0 * aa - ef.mu);
            (r_val, 1.0)
        } else {
            let r_val = (ef.d2v[i] + ef.dv[i] / rho - ef.v[i] * (mm / (rho * rho))) * (0.5 * ef.r)
                + ef.dv[i] * (ef.a * rho)
                - ef.v[i] * ef.mu;
            (r_val, (-ef.w2(rho)).exp())
        };
        res.push(r_val.norm() * wgt * rho);
        den.push(ef.v[i].norm() * wgt * rho);
    }
    trapezoid(ef.step, &res) / trapezoid(ef.step, &den).max(1e-300)
}

/// Exponentially scaled modified Bessel function I_m(x) e^{-x} for x >= 0.
///
/// Small arguments use the positive-term power series (no cancellation);
/// large arguments the standard asymptotic expansion, whose terms are tiny
/// well before it turns divergent in the range used here.
pub fn bessel_i_scaled(m: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let mf = m as f64;
    if x > 40.0 + mf * mf {
        let mu = 4.0 * mf * mf;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=12u32 {
            let j = (2 * k - 1) as f64;
            term *= -(mu - j * j) / (k as f64 * 8.0 * x);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / (2.0 * PI * x).sqrt()
    } else {
        let half = 0.5 * x;
        let mut term = 1.0;
        for j in 1..=m {
            term *= half / j as f64;
        }
        let mut sum = term;
        let mut k = 1.0f64;
        loop {
            term *= half * half / (k * (k + mf));
            sum += term;
            if term < 1e-18 * sum || k > 500.0 {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    }
}

/// L1 residual quotient ||P(t) phi - e^{lambda t} phi|| / ||phi|| for the
/// isotropic 2D Mehler semigroup, evaluated along a ray (rotation equivariance
/// makes the angular integral a common factor).
///
/// For phi = g(rho) e^{i m theta} the angular part of the Mehler average is a
/// Rice-distribution kernel: with mean norm d and noise scale s^2,
/// P(t)phi(x) = e^{i m theta_mean} int_0^inf g(r) (r/s^2)
///              exp(-(r-d)^2 / (2 s^2)) [I_m(r d / s^2) e^{-r d / s^2}] dr,
/// which reduces the cost from a tensor quadrature to one radial integral.
pub fn residual_semigroup_2d(ef: &Eigenfunction2D, t: f64) -> Result<f64> {
    let aa = -ef.a;
    if t <= 0.0 {
        return Err(Error::Domain(format!("time must be > 0, got {t}")));
    }
    let t_max = 5.0f64.ln() / (2.0 * aa);
    if t > t_max {
        return Err(Error::Domain(format!(
            "semigroup residual supports t <= {t_max:.4}, got {t}"
        )));
    }
    let sigma2 = ef.sigma2();
    let c = (ef.a * t).exp();
    let s2 = sigma2 * (1.0 - c * c);
    let st = s2.sqrt();
    let elt = (ef.lambda * t).exp();
    // the mean of the pushforward started on the positive real ray sits at
    // angle b t, independent of the start radius
    let phase_mean = (C64::new(0.0, ef.m as f64 * ef.b * t)).exp();
    let m_abs = ef.m.unsigned_abs();
    let outer = 5.0 * ef.step;
    let mo = (ef.rho_domain / outer).floor() as usize;
    let eval = |h: f64| -> f64 {
        let mut num = vec![0.0];
        let mut den = vec![0.0];
        for i in 1..=mo {
            let rho = i as f64 * outer;
            let d = c * rho;
            let wx = ef.w2(rho);
            // the scaled integrand peaks at d/c^2 with width st/c (the e^{w2}
            // growth shifts the kernel); the unscaled one at d with width st
            let (r_peak, width) = if ef.scaled { (d / (c * c), st / c) } else { (d, st) };
            let r_lo = (r_peak - 12.0 * width).max(0.0);
            let r_hi = r_peak + 12.0 * width;
            let n = ((r_hi - r_lo) / h).ceil() as usize;
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..=n {
                let r = r_lo + j as f64 * h;
                if r <= 0.0 {
                    continue;
                }
                let xb = r * d / s2;
                let kb = bessel_i_scaled(m_abs, xb);
                let mut le = -(r - d) * (r - d) / (2.0 * s2);
                if ef.scaled {
                    le += ef.w2(r) - wx;
                }
                let cw = if j == 0 || j == n { 0.5 } else { 1.0 };
                acc += ef.v_derivs(r)[0] * (cw * (r / s2) * kb * le.exp());
            }
            // Euler-Maclaurin endpoint term at r = 0: the integrand rises
            // with slope f'(0) = v(0) exp(-d^2/(2 s^2) [- wx]) / s^2 when
            // m = 0 (it vanishes to higher order otherwise), so the
            // trapezoid sum needs the h^2/12 f'(0) boundary correction
            if r_lo <= 0.0 && m_abs == 0 {
                let mut le0 = -d * d / (2.0 * s2);
                if ef.scaled {
                    le0 -= wx;
                }
                let slope = ef.v_derivs(0.0)[0] * (le0.exp() / s2);
                acc += slope * (h / 12.0);
            }
            acc *= phase_mean * h;
            let (diff, dval) = if ef.scaled {
                let v0 = ef.v_derivs(rho)[0];
                (acc - elt * v0, v0.norm())
            } else {
                let damp = (-wx).exp();
                let v0 = ef.v_derivs(rho)[0];
                (((acc - elt * v0) * damp), v0.norm() * damp)
            };
            num.push(diff.norm() * rho);
            den.push(dval * rho);
        }
        trapezoid(outer, &num) / trapezoid(outer, &den).max(1e-300)
    };
    let h0 = ef.step;
    let mut prev = eval(2.0 * h0);
    let cur = eval(h0);
    if (cur - prev).abs() > 1e-3 * cur.max(1e-12) {
        prev = eval(0.5 * h0);
    } else {
        prev = cur;
    }
    Ok(prev)
}

// ---------------------------------------------------------------------------
// polynomial eigenfunctions in (z, zbar) for general diffusion R
// ---------------------------------------------------------------------------

/// Polynomial in z = t1 + i t2 and its conjugate, indexed by (power of z,
/// power of zbar).
#[derive(Debug, Clone, Default)]
pub struct PolyZ {
    pub coeffs: BTreeMap<(u32, u32), C64>,
}

impl PolyZ {
    pub fn monomial(i: u32, j: u32, c: C64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert((i, j), c);
        Self { coeffs }
    }

    fn add_term(&mut self, key: (u32, u32), c: C64) {
        let e = self.coeffs.entry(key).or_insert_with(|| C64::new(0.0, 0.0));
        *e += c;
        if e.norm() == 0.0 {
            self.coeffs.remove(&key);
        }
    }

    pub fn add_scaled(&self, other: &Self, s: C64) -> Self {
        let mut out = self.clone();
        for (k, c) in &other.coeffs {
            out.add_term(*k, c * s);
        }
        out
    }

    pub fn dz(&self) -> Self {
        let mut out = Self::default();
        for (&(i, j), c) in &self.coeffs {
            if i >= 1 {
                out.add_term((i - 1, j), c * (i as f64));
            }
        }
        out
    }

    pub fn dzbar(&self) -> Self {
        let mut out = Self::default();
        for (&(i, j), c) in &self.coeffs {
            if j >= 1 {
                out.add_term((i, j - 1), c * (j as f64));
            }
        }
        out
    }

    /// Multiply by z^p zbar^q.
    pub fn shift(&self, p: u32, q: u32) -> Self {
        let mut out = Self::default();
        for (&(i, j), c) in &self.coeffs {
            out.add_term((i + p, j + q), *c);
        }
        out
    }

    pub fn eval(&self, t1: f64, t2: f64) -> C64 {
        let z = C64::new(t1, t2);
        let zb = z.conj();
        let mut acc = C64::new(0.0, 0.0);
        for (&(i, j), c) in &self.coeffs {
            acc += c * z.powi(i as i32) * zb.powi(j as i32);
        }
        acc
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Apply the 2D reduced generator symbolically. In complex coordinates
    /// L2 = A2 dz^2 + conj(A2) dzbar^2 + C2 dz dzbar + gamma z dz
    ///    + conj(gamma) zbar dzbar, where A2 = (r11 - r22 + 2 i r12)/2 and
    /// C2 = r11 + r22.
    pub fn apply_generator(&self, spec: &Spec2D) -> Self {
        let r = &spec.r;
        let a2 = C64::new((r[(0, 0)] - r[(1, 1)]) / 2.0, r[(0, 1)]);
        let c2 = C64::new(r[(0, 0)] + r[(1, 1)], 0.0);
        let gamma = spec.gamma();
        let dzz = self.dz().dz();
        let dbb = self.dzbar().dzbar();
        let dzb = self.dz().dzbar();
        let drift_z = self.dz().shift(1, 0);
        let drift_b = self.dzbar().shift(0, 1);
        let mut acc = PolyZ::default();
        acc = acc.add_scaled(&dzz, a2);
        acc = acc.add_scaled(&dbb, a2.conj());
        acc = acc.add_scaled(&dzb, c2);
        acc = acc.add_scaled(&drift_z, gamma);
        acc = acc.add_scaled(&drift_b, gamma.conj());
        acc
    }
}

/// Lattice eigenvalue Lambda_{i,j} = i gamma + j conj(gamma).
pub fn lattice_eigenvalue_2d(spec: &Spec2D, i: u32, j: u32) -> C64 {
    let gamma = spec.gamma();
    gamma * (i as f64) + gamma.conj() * (j as f64)
}

/// Construct the polynomial eigenfunction of L2 with leading monomial
/// z^i zbar^j; valid for any symmetric positive semidefinite R. Returns the
/// eigenvalue Lambda = i gamma + j conj(gamma) and the polynomial.
pub fn poly_eigen_2d(spec: &Spec2D, i0: u32, j0: u32) -> Result<(C64, PolyZ)> {
    let gamma = spec.gamma();
    let lam = lattice_eigenvalue_2d(spec, i0, j0);
    let r = &spec.r;
    let a2 = C64::new((r[(0, 0)] - r[(1, 1)]) / 2.0, r[(0, 1)]);
    let c2 = C64::new(r[(0, 0)] + r[(1, 1)], 0.0);
    let deg = i0 + j0;
    let mut c: BTreeMap<(u32, u32), C64> = BTreeMap::new();
    c.insert((i0, j0), C64::new(1.0, 0.0));
    // fill coefficients by descending total degree; each (i,j) receives
    // diffusion contributions from (i+2,j), (i,j+2), (i+1,j+1)
    let mut d = deg as i64 - 2;
    while d >= 0 {
        for i in 0..=(d as u32) {
            let j = d as u32 - i;
            if (i + j) % 2 != deg % 2 {
                continue;
            }
            if (i, j) == (i0, j0) {
                continue;
            }
            let mut src = C64::new(0.0, 0.0);
            if let Some(&ch) = c.get(&(i + 2, j)) {
                src += a2 * (((i + 2) * (i + 1)) as f64) * ch;
            }
            if let Some(&ch) = c.get(&(i, j + 2)) {
                src += a2.conj() * (((j + 2) * (j + 1)) as f64) * ch;
            }
            if let Some(&ch) = c.get(&(i + 1, j + 1)) {
                src += c2 * (((i + 1) * (j + 1)) as f64) * ch;
            }
            if src.norm() == 0.0 {
                continue;
            }
            let denom = lam - (gamma * (i as f64) + gamma.conj() * (j as f64));
            if denom.norm() < 1e-14 {
                return Err(Error::Numeric(format!(
                    "resonant lattice denominator at monomial ({i},{j})"
                )));
            }
            c.insert((i, j), src / denom);
        }
        d -= 2;
    }
    c.retain(|_, v| v.norm() > 0.0);
    Ok((lam, PolyZ { coeffs: c }))
}

// ---------------------------------------------------------------------------
// Weyl residual minimization for general R at off-lattice eigenvalues
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WeylOpts {
    /// Truncation radius of the residual quotient.
    pub disc_radius: f64,
    /// Gauss-Legendre order of the radial quadrature.
    pub radial_order: usize,
    /// Number of uniform angular nodes.
    pub angular_order: usize,
    /// Nelder-Mead iteration budget.
    pub max_iters: usize,
}

impl Default for WeylOpts {
    fn default() -> Self {
        Self {
            disc_radius: 8.0,
            radial_order: 64,
            angular_order: 48,
            max_iters: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeylOutcome {
    /// Best truncated L1 residual quotient found.
    pub residual: f64,
    pub lambda: C64,
    /// True when a lattice polynomial eigenfunction was the best candidate.
    pub used_lattice_polynomial: bool,
    /// Nearest lattice eigenvalue considered, if any.
    pub nearest_lattice: Option<C64>,
    /// Linear warp of the best radial candidate (None for the polynomial).
    pub warp: Option<Matrix2<f64>>,
    /// Inner eigenvalue of the warped radial solution.
    pub lambda_inner: Option<C64>,
    /// Inner isotropic diffusion coefficient of the warped radial solution.
    pub r_inner: Option<f64>,
    pub iterations: usize,
}

struct WeylQuad {
    /// (t1, t2, quadrature weight including the area element and the
    /// stationary density).
    points: Vec<(f64, f64, f64)>,
}

fn weyl_quadrature(spec: &Spec2D, opts: &WeylOpts) -> Result<WeylQuad> {
    let cmat = Mat::from_row_slice(
        2,
        2,
        &[spec.c[(0, 0)], spec.c[(0, 1)], spec.c[(1, 0)], spec.c[(1, 1)]],
    );
    let rmat = Mat::from_row_slice(
        2,
        2,
        &[spec.r[(0, 0)], spec.r[(0, 1)], spec.r[(1, 0)], spec.r[(1, 1)]],
    );
    let rinf = lyapunov_qinf(&cmat, &rmat)?;
    let det = rinf[(0, 0)] * rinf[(1, 1)] - rinf[(0, 1)] * rinf[(1, 0)];
    if det <= 0.0 {
        return Err(Error::Degenerate(
            "stationary covariance of the reduced pair is singular".into(),
        ));
    }
    let inv = [
        rinf[(1, 1)] / det,
        -rinf[(0, 1)] / det,
        -rinf[(1, 0)] / det,
        rinf[(0, 0)] / det,
    ];
    let rule = gauss_legendre(opts.radial_order);
    let nk = opts.angular_order;
    let mut points = Vec::with_capacity(opts.radial_order * nk);
    for (node, w) in rule.nodes.iter().zip(&rule.weights) {
        // map [-1, 1] -> [0, disc_radius]
        let rho = 0.5 * opts.disc_radius * (node + 1.0);
        let wr = 0.5 * opts.disc_radius * w;
        for k in 0..nk {
            let th = 2.0 * PI * k as f64 / nk as f64;
            let (s, c) = th.sin_cos();
            let t1 = rho * c;
            let t2 = rho * s;
            let qf = inv[0] * t1 * t1 + (inv[1] + inv[2]) * t1 * t2 + inv[3] * t2 * t2;
            let dens = (-0.5 * qf).exp();
            points.push((t1, t2, wr * rho * (2.0 * PI / nk as f64) * dens));
        }
    }
    Ok(WeylQuad { points })
}

/// Truncated L1 residual quotient of a polynomial candidate.
fn poly_residual_quotient(spec: &Spec2D, lambda: C64, p: &PolyZ, quad: &WeylQuad) -> f64 {
    let lp = p.apply_generator(spec);
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t1, t2, w) in &quad.points {
        let v = p.eval(t1, t2);
        let r = lp.eval(t1, t2) - lambda * v;
        num += r.norm() * w;
        den += v.norm() * w;
    }
    num / den.max(1e-300)
}

/// Residual quotient of phi(t) = psi(M t), psi a radial eigenfunction of the
/// isotropic problem (a, b, r_inner) at lambda_inner, measured against
/// (L2 - lambda) of the true spec.
fn warped_residual_quotient(
    spec: &Spec2D,
    lambda: C64,
    psi: &Eigenfunction2D,
    mwarp: &Matrix2<f64>,
    quad: &WeylQuad,
) -> f64 {
    let r = &spec.r;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t1, t2, w) in &quad.points {
        let s1 = mwarp[(0, 0)] * t1 + mwarp[(0, 1)] * t2;
        let s2 = mwarp[(1, 0)] * t1 + mwarp[(1, 1)] * t2;
        let rho = s1.hypot(s2).max(1e-12);
        let ([g, dg, d2g], ex) = psi.g_derivs_parts(rho);
        let scale = ex.exp();
        let ph = phase_pow(s1, s2, rho, psi.m);
        let im = C64::new(0.0, psi.m as f64);
        // polar gradient/Hessian of psi = g(rho) e^{i m theta} at s
        let (ur1, ur2) = (s1 / rho, s2 / rho);
        let (ut1, ut2) = (-ur2, ur1);
        let grad_r = dg * ph;
        let grad_t = g * im * ph / rho;
        let gs1 = grad_r * ur1 + grad_t * ut1;
        let gs2 = grad_r * ur2 + grad_t * ut2;
        let h_rr = d2g * ph;
        let h_rt = (dg * im * ph) / rho - g * im * ph / (rho * rho);
        let h_tt = (g * im * im * ph) / (rho * rho) + dg * ph / rho;
        let h11 = h_rr * (ur1 * ur1) + h_rt * (2.0 * ur1 * ut1) + h_tt * (ut1 * ut1);
        let h22 = h_rr * (ur2 * ur2) + h_rt * (2.0 * ur2 * ut2) + h_tt * (ut2 * ut2);
        let h12 = h_rr * (ur1 * ur2) + h_rt * (ur1 * ut2 + ur2 * ut1) + h_tt * (ut1 * ut2);
        // chain rule through s = M t: Hphi = M^T Hpsi M, Dphi = M^T Dpsi
        let (m11, m12, m21, m22) = (mwarp[(0, 0)], mwarp[(0, 1)], mwarp[(1, 0)], mwarp[(1, 1)]);
        let hp11 = h11 * (m11 * m11) + h12 * (2.0 * m11 * m21) + h22 * (m21 * m21);
        let hp22 = h11 * (m12 * m12) + h12 * (2.0 * m12 * m22) + h22 * (m22 * m22);
        let hp12 = h11 * (m11 * m12) + h12 * (m11 * m22 + m12 * m21) + h22 * (m21 * m22);
        let gp1 = gs1 * m11 + gs2 * m21;
        let gp2 = gs1 * m12 + gs2 * m22;
        let drift1 = spec.c[(0, 0)] * t1 + spec.c[(0, 1)] * t2;
        let drift2 = spec.c[(1, 0)] * t1 + spec.c[(1, 1)] * t2;
        let lphi = (hp11 * r[(0, 0)] + hp12 * (2.0 * r[(0, 1)]) + hp22 * r[(1, 1)]) * 0.5
            + gp1 * drift1
            + gp2 * drift2;
        let phi = g * ph;
        let resid = (lphi - lambda * phi).norm() * scale;
        num += resid * w;
        den += phi.norm() * scale * w;
    }
    num / den.max(1e-300)
}

fn sym_inv_sqrt_times(r: &Matrix2<f64>, scale: f64) -> Matrix2<f64> {
    // scale * R^{-1/2} for symmetric positive definite R
    let eig = nalgebra::SymmetricEigen::new(*r);
    let mut d = Matrix2::zeros();
    for i in 0..2 {
        d[(i, i)] = scale / eig.eigenvalues[i].max(1e-12).sqrt();
    }
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Nelder-Mead over a function of n parameters. Returns (best point, best
/// value, iterations used).
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    max_iters: usize,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-10 * (1.0 + simplex[0].1.abs()) || simplex[0].1 < 1e-12 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for i in 0..n {
                centroid[i] += x[i] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let refl: Vec<f64> = (0..n).map(|i| centroid[i] + (centroid[i] - worst.0[i])).collect();
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp: Vec<f64> = (0..n)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]))
                .collect();
            let fe = f(&exp);
            simplex[n] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (refl, fr);
        } else {
            let con: Vec<f64> = (0..n)
                .map(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]))
                .collect();
            let fc = f(&con);
            if fc < worst.1 {
                simplex[n] = (con, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        entry.0[i] = best[i] + 0.5 * (entry.0[i] - best[i]);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (simplex[0].0.clone(), simplex[0].1, iters)
}

/// Minimize the truncated L1 residual quotient for a general (possibly
/// anisotropic) diffusion R at an arbitrary lambda with Re lambda < 0.
///
/// Candidates: (i) exact polynomial eigenfunctions at nearby lattice points
/// i gamma + j conj(gamma) (whose residual is exactly |Lambda - lambda|), and
/// (ii) linearly warped radial solutions phi(t) = psi(M t), with psi an exact
/// isotropic radial eigenfunction whose warp M, inner eigenvalue and inner
/// diffusion strength are tuned by Nelder-Mead.
pub fn weyl_residual_minimize(spec: &Spec2D, lambda: C64, opts: &WeylOpts) -> Result<WeylOutcome> {
    if lambda.re >= 0.0 {
        return Err(Error::Domain(format!(
            "Re lambda must be < 0, got {}",
            lambda.re
        )));
    }
    let quad = weyl_quadrature(spec, opts)?;
    // lattice candidate
    let mut best_lattice: Option<(C64, u32, u32, f64)> = None;
    for i in 0..=40u32 {
        for j in 0..=40u32 {
            if i + j == 0 {
                continue;
            }
            let lam = lattice_eigenvalue_2d(spec, i, j);
            let d = (lam - lambda).norm();
            if best_lattice.map_or(true, |(_, _, _, bd)| d < bd) {
                best_lattice = Some((lam, i, j, d));
            }
        }
    }
    let mut outcome = WeylOutcome {
        residual: f64::INFINITY,
        lambda,
        used_lattice_polynomial: false,
        nearest_lattice: best_lattice.map(|(l, _, _, _)| l),
        warp: None,
        lambda_inner: None,
        r_inner: None,
        iterations: 0,
    };
    if let Some((lam, i, j, d)) = best_lattice {
        if d < 0.5 {
            let (_, p) = poly_eigen_2d(spec, i, j)?;
            // residual of an exact Lambda-eigenfunction against lambda is
            // |Lambda - lambda|; evaluate through the quadrature anyway so the
            // reported number reflects the same truncation
            let rq = poly_residual_quotient(spec, lambda, &p, &quad);
            if rq < outcome.residual {
                outcome.residual = rq;
                outcome.used_lattice_polynomial = true;
                outcome.nearest_lattice = Some(lam);
            }
        }
    }
    if outcome.residual < 1e-10 {
        return Ok(outcome);
    }
    // warped radial family
    let rbar = (spec.r[(0, 0)] * spec.r[(1, 1)] - spec.r[(0, 1)] * spec.r[(1, 0)])
        .max(1e-12)
        .sqrt();
    let m0 = sym_inv_sqrt_times(&spec.r, rbar.sqrt());
    let m_index = round_ties_to_even(lambda.im / spec.b) as i32;
    let mut solve_cache: BTreeMap<(i64, i64, i64), Eigenfunction2D> = BTreeMap::new();
    let disc = opts.disc_radius;
    let mut objective = |x: &[f64]| -> f64 {
        let mw = Matrix2::new(x[0], x[1], x[2], x[3]);
        let lam_in = C64::new(x[4], x[5]);
        let r_in = x[6].exp();
        let mut penalty = 0.0;
        if lam_in.re > -1e-3 {
            penalty += 1e3 * (lam_in.re + 1e-3 + 1.0);
        }
        if !(1e-3..=1e3).contains(&r_in) {
            penalty += 1e3;
        }
        let fro = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
        let det = (x[0] * x[3] - x[1] * x[2]).abs();
        if fro > 6.0 {
            penalty += 1e2 * (fro - 6.0);
        }
        if det < 1e-3 {
            penalty += 1e3;
        }
        if penalty > 0.0 {
            return 1e4 + penalty;
        }
        // quantize solve parameters so the radial ODE is re-solved only when
        // (lambda_inner, r_inner) move; the warp enters analytically
        let key = (
            (lam_in.re * 1e9).round() as i64,
            (lam_in.im * 1e9).round() as i64,
            (x[6] * 1e9).round() as i64,
        );
        let extent = disc * (fro + 0.5) + 2.0;
        if !solve_cache.contains_key(&key) {
            let sp = match Spec2D::synthetic(spec.a, spec.b, Matrix2::new(r_in, 0.0, 0.0, r_in)) {
                Ok(s) => s,
                Err(_) => return 1e5,
            };
            // fixed domain: the warp is applied analytically, so the radial
            // solve only needs to cover the warped disc
            let sopts = SolveOpts {
                t_init: extent,
                t_cap: extent,
                margin: 1.0,
                ..SolveOpts::default()
            };
            match solve_2d_isotropic(&sp, lam_in, Some(m_index), &sopts) {
                Ok(e) => {
                    if solve_cache.len() > 200 {
                        solve_cache.clear();
                    }
                    solve_cache.insert(key, e);
                }
                Err(_) => return 1e5,
            }
        }
        let psi = &solve_cache[&key];
        warped_residual_quotient(spec, lambda, psi, &mw, &quad)
    };
    let x0 = vec![
        m0[(0, 0)],
        m0[(0, 1)],
        m0[(1, 0)],
        m0[(1, 1)],
        lambda.re,
        lambda.im,
        rbar.ln(),
    ];
    let steps = vec![0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.1];
    let (xb, fb, iters) = nelder_mead(&mut objective, &x0, &steps, opts.max_iters);
    outcome.iterations = iters;
    if fb < outcome.residual {
        outcome.residual = fb;
        outcome.used_lattice_polynomial = false;
        outcome.warp = Some(Matrix2::new(xb[0], xb[1], xb[2], xb[3]));
        outcome.lambda_inner = Some(C64::new(xb[4], xb[5]));
        outcome.r_inner = Some(xb[6].exp());
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Spec1D, Spec2D};
    use approx::assert_relative_eq;

    fn spec1() -> Spec1D {
        Spec1D::synthetic(-1.0, 1.0).unwrap()
    }

    fn spec2_iso() -> Spec2D {
        Spec2D::synthetic(-1.0, 2.0, Matrix2::identity()).unwrap()
    }

    #[test]
    fn hermite_lattice_low_orders() {
        let spec = spec1();
        let sigma2 = spec.stationary_variance();
        // n = 1: phi proportional to t
        let e1 = solve_1d(&spec, C64::new(-1.0, 0.0), &SolveOpts::default()).unwrap();
        assert!(!e1.scaled);
        let ratio = e1.value(2.0) / e1.value(1.0);
        assert_relative_eq!(ratio.re, 2.0, epsilon = 1e-12);
        // n = 2: phi proportional to t^2 - sigma^2
        let e2 = solve_1d(&spec, C64::new(-2.0, 0.0), &SolveOpts::default()).unwrap();
        let v0 = e2.value(0.0).re;
        let v1 = e2.value(1.0).re;
        assert_relative_eq!(v1 / v0, (1.0 - sigma2) / (0.0 - sigma2), epsilon = 1e-12);
        for n in 1..5 {
            let ef = solve_1d(&spec, C64::new(-(n as f64), 0.0), &SolveOpts::default()).unwrap();
            assert!(residual_generator_1d(&ef) <= 1e-10, "gen residual n={n}");
            let sr = residual_semigroup_1d(&ef, 0.15).unwrap();
            assert!(sr <= 1e-6, "semigroup residual n={n}: {sr:.3e}");
        }
    }

    #[test]
    fn generic_lambda_residuals_1d() {
        let spec = spec1();
        let lam = C64::new(-1.5, 0.7);
        let ef = solve_1d(&spec, lam, &SolveOpts::default()).unwrap();
        assert!(ef.scaled);
        // |u| ~ t^{Re lambda - 1}, so the relative tail increment at the
        // T = 30 cap is ~1e-4 here; full 1e-6 convergence needs much more
        // negative Re lambda
        assert!(ef.tail_gap < 1e-3, "tail gap {:.3e}", ef.tail_gap);
        let deep = solve_1d(&spec, C64::new(-5.0, 0.7), &SolveOpts::default()).unwrap();
        assert!(deep.tail_gap < 1e-6, "deep tail gap {:.3e}", deep.tail_gap);
        let gr = residual_generator_1d(&ef);
        assert!(gr <= 1e-9, "generator residual {gr:.3e}");
        for t in [0.1, 0.2] {
            let sr = residual_semigroup_1d(&ef, t).unwrap();
            assert!(sr <= 1e-3, "semigroup residual at t={t}: {sr:.3e}");
        }
    }

    #[test]
    fn perturbed_lambda_is_detected() {
        let spec = spec1();
        let ef = solve_1d(&spec, C64::new(-1.5, 0.7), &SolveOpts::default()).unwrap();
        let mut wrong = ef.clone();
        wrong.lambda += C64::new(0.01, 0.0);
        let gr = residual_generator_1d(&wrong);
        assert!(gr > 1e-3, "perturbed residual should exceed 1e-3, got {gr:.3e}");
    }

    #[test]
    fn scale_equivariance_in_q() {
        // doubling the scale of the functional multiplies q by 4 and the
        // eigenfunction becomes phi(t/2)
        let sa = Spec1D::synthetic(-1.0, 1.0).unwrap();
        let sb = Spec1D::synthetic(-1.0, 4.0).unwrap();
        let lam = C64::new(-0.8, 0.3);
        let ea = solve_1d(&sa, lam, &SolveOpts::default()).unwrap();
        let eb = solve_1d(&sb, lam, &SolveOpts::default()).unwrap();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let va = ea.u_at(t / 2.0);
            let vb = eb.u_at(t);
            assert!((va - vb).norm() <= 1e-8 * va.norm().max(1.0), "t={t}");
        }
    }

    #[test]
    fn tail_exponent_matches_asymptotic() {
        let spec = spec1();
        let lam = C64::new(-0.6, 0.2);
        let ef = solve_1d(&spec, lam, &SolveOpts::default()).unwrap();
        assert_relative_eq!(ef.t_domain, 30.0, epsilon = 1e-9); // slow tail hits the cap
        let s = (ef.u_at(28.0).norm() / ef.u_at(20.0).norm()).ln() / (28.0f64 / 20.0).ln();
        assert!(
            (s - ef.tail_exponent()).abs() < 0.05,
            "fitted {s:.4} vs predicted {:.4}",
            ef.tail_exponent()
        );
    }

    #[test]
    fn truncated_norms_separate_p1_from_p2() {
        let spec = spec1();
        let ef = solve_1d(&spec, C64::new(-0.6, 0.0), &SolveOpts::default()).unwrap();
        let widths = [10.0, 15.0, 20.0, 25.0, 30.0];
        let n1 = lp_truncated_log_norms(&ef, 1.0, &widths).unwrap();
        let n2 = lp_truncated_log_norms(&ef, 2.0, &widths).unwrap();
        // p = 1: increments of the linear-domain integrals shrink
        let i1: Vec<f64> = n1.iter().map(|l| l.exp()).collect();
        let mut incs: Vec<f64> = i1.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(incs.windows(2).all(|w| w[1] < w[0]), "increments {incs:?}");
        // p = 2: the log-integral keeps growing by a comparable amount each
        // extension (divergence), driven by the (p-1) w(t) factor
        let incs2: Vec<f64> = n2.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(incs2.iter().all(|d| *d > 10.0), "log increments {incs2:?}");
        incs.clear();
    }

    #[test]
    fn scaled_bessel_matches_reference_values() {
        // high-precision references spanning both branches and the crossover
        let refs = [
            (0u32, 1.0, 0.46575960759364044),
            (1, 2.0, 0.21526928924893766),
            (0, 39.5, 0.063680100828389915),
            (0, 45.0, 0.059638115011731949),
            (2, 60.0, 0.049905561500642217),
            (3, 44.0, 0.054389641628849193),
            (3, 80.0, 0.042215026969056323),
            (1, 1500.0, 0.01029806968913304),
        ];
        for (m, x, want) in refs {
            let got = bessel_i_scaled(m, x);
            assert!(
                (got - want).abs() <= 1e-14 * want,
                "I_{m}({x}) e^-x: got {got:.17}, want {want:.17}"
            );
        }
        assert_eq!(bessel_i_scaled(0, 0.0), 1.0);
        assert_eq!(bessel_i_scaled(2, 0.0), 0.0);
    }

    #[test]
    fn generic_lambda_residuals_2d() {
        let spec = spec2_iso();
        let lam = C64::new(-1.2, 0.9);
        let ef = solve_2d_isotropic(&spec, lam, None, &SolveOpts::default()).unwrap();
        assert_eq!(ef.m, 0);
        let gr = residual_generator_2d(&ef);
        assert!(gr <= 1e-8, "generator residual {gr:.3e}");
        let sr = residual_semigroup_2d(&ef, 0.1).unwrap();
        assert!(sr <= 1e-3, "semigroup residual {sr:.3e}");
    }

    #[test]
    fn lattice_radial_matches_polynomial_construction() {
        let spec = spec2_iso();
        let (lam, p) = poly_eigen_2d(&spec, 2, 1).unwrap();
        assert_relative_eq!(lam.re, -3.0, epsilon = 1e-12);
        assert_relative_eq!(lam.im, 2.0, epsilon = 1e-12);
        let ef = solve_2d_isotropic(&spec, lam, None, &SolveOpts::default()).unwrap();
        assert_eq!(ef.m, 1);
        assert!(ef.poly_radial.is_some());
        // the two constructions agree up to one global constant
        let refp = p.eval(2.0, 0.0) / ef.value(2.0, 0.0);
        for (t1, t2) in [(1.0, 0.5), (0.3, -1.2), (-2.0, 0.7), (0.0, 3.0)] {
            let a = p.eval(t1, t2);
            let b = ef.value(t1, t2) * refp;
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0), "({t1},{t2})");
        }
    }

    #[test]
    fn poly_eigen_anisotropic_is_exact() {
        let r = Matrix2::new(1.3, 0.2, 0.2, 0.8);
        let spec = Spec2D::synthetic(-1.0, 2.0, r).unwrap();
        let (lam, p) = poly_eigen_2d(&spec, 3, 1).unwrap();
        let lp = p.apply_generator(&spec);
        let diff = lp.add_scaled(&p, -lam);
        assert!(
            diff.max_abs_coeff() <= 1e-10 * p.max_abs_coeff(),
            "coefficient residual {:.3e}",
            diff.max_abs_coeff()
        );
    }

    #[test]
    fn polyz_generator_matches_finite_differences() {
        // validate the complex-coordinate form of L2 against central
        // differences in real coordinates
        let r = Matrix2::new(1.3, 0.2, 0.2, 0.8);
        let spec = Spec2D::synthetic(-1.0, 2.0, r).unwrap();
        let mut p = PolyZ::monomial(2, 1, C64::new(1.0, 0.0));
        p = p.add_scaled(&PolyZ::monomial(1, 0, C64::new(0.5, -0.3)), C64::new(1.0, 0.0));
        let lp = p.apply_generator(&spec);
        let h = 1e-4;
        for (t1, t2) in [(0.7, -0.4), (1.3, 0.9), (-0.8, -1.1)] {
            let mut fd = C64::new(0.0, 0.0);
            let d1 = (p.eval(t1 + h, t2) - p.eval(t1 - h, t2)) / (2.0 * h);
            let d2 = (p.eval(t1, t2 + h) - p.eval(t1, t2 - h)) / (2.0 * h);
            let d11 = (p.eval(t1 + h, t2) - p.eval(t1, t2) * 2.0 + p.eval(t1 - h, t2)) / (h * h);
            let d22 = (p.eval(t1, t2 + h) - p.eval(t1, t2) * 2.0 + p.eval(t1, t2 - h)) / (h * h);
            let d12 = (p.eval(t1 + h, t2 + h) - p.eval(t1 + h, t2 - h) - p.eval(t1 - h, t2 + h)
                + p.eval(t1 - h, t2 - h))
                / (4.0 * h * h);
            fd += d11 * (0.5 * r[(0, 0)]) + d22 * (0.5 * r[(1, 1)]) + d12 * r[(0, 1)];
            fd += d1 * (spec.c[(0, 0)] * t1 + spec.c[(0, 1)] * t2);
            fd += d2 * (spec.c[(1, 0)] * t1 + spec.c[(1, 1)] * t2);
            let sym = lp.eval(t1, t2);
            assert!((fd - sym).norm() <= 1e-5 * sym.norm().max(1.0), "({t1},{t2})");
        }
    }

    #[test]
    fn weyl_isotropic_off_lattice_is_near_exact() {
        let spec = spec2_iso();
        let lam = C64::new(-1.7, 0.55);
        let opts = WeylOpts {
            radial_order: 48,
            angular_order: 32,
            max_iters: 40,
            ..WeylOpts::default()
        };
        let out = weyl_residual_minimize(&spec, lam, &opts).unwrap();
        assert!(
            out.residual <= 1e-3,
            "isotropic warped residual {:.3e}",
            out.residual
        );
        assert!(!out.used_lattice_polynomial);
    }

    #[test]
    fn weyl_lattice_polynomial_shortcut() {
        let r = Matrix2::new(1.1, 0.05, 0.05, 0.9);
        let spec = Spec2D::synthetic(-1.0, 2.0, r).unwrap();
        let lam = lattice_eigenvalue_2d(&spec, 1, 1); // = 2a, real
        let out = weyl_residual_minimize(&spec, lam, &WeylOpts::default()).unwrap();
        assert!(out.used_lattice_polynomial);
        assert!(out.residual <= 1e-8, "lattice residual {:.3e}", out.residual);
    }

    #[test]
    fn weyl_mild_anisotropy_below_tenth() {
        let r = Matrix2::new(1.08, 0.03, 0.03, 0.94);
        let spec = Spec2D::synthetic(-1.0, 2.0, r).unwrap();
        let lam = C64::new(-1.7, 0.55);
        let opts = WeylOpts {
            radial_order: 48,
            angular_order: 32,
            max_iters: 150,
            ..WeylOpts::default()
        };
        let out = weyl_residual_minimize(&spec, lam, &opts).unwrap();
        assert!(
            out.residual < 0.1,
            "anisotropic residual {:.3e} (iterations {})",
            out.residual,
            out.iterations
        );
    }
}
