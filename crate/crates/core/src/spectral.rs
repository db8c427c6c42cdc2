//! Poincaré (`λ_p`) and log-Sobolev (`λ_LS`) constants of weighted intervals.
//!
//! The energy is taken over the hull `conv(Ω)` and the mass terms over `Ω`,
//! which may be a finite union of intervals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CurvatureParams;
use crate::density::{classify, ClassifyOptions, ConditionSpec, GridDensity};
use crate::error::{Error, Result};

/// Bisection cap for eigenvalue searches.
pub const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FdEig,
    Shooting,
    LsMinimize,
}

/// A weighted interval with a mass region `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProblem {
    density: GridDensity,
    omega: Vec<(f64, f64)>,
}

impl SpectralProblem {
    /// `Ω` defaults to the whole support of the grid.
    pub fn new(density: GridDensity) -> Self {
        let omega = vec![density.support()];
        Self { density, omega }
    }

    /// Sets `Ω` to a finite union of closed intervals inside the support.
    pub fn with_omega(mut self, omega: &[(f64, f64)]) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::param("omega", "must contain at least one interval"));
        }
        let (a, b) = self.density.support();
        let mut parts: Vec<(f64, f64)> = omega.to_vec();
        for &(lo, hi) in &parts {
            if !(hi > lo) || lo < a - 1e-12 || hi > b + 1e-12 {
                return Err(Error::param("omega", format!("[{lo}, {hi}] is not a proper sub-interval of [{a}, {b}]")));
            }
        }
        parts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in parts {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo.max(a), hi.min(b))),
            }
        }
        self.omega = merged;
        Ok(self)
    }

    pub fn density(&self) -> &GridDensity {
        &self.density
    }

    pub fn omega(&self) -> &[(f64, f64)] {
        &self.omega
    }

    /// `conv(Ω)`.
    pub fn hull(&self) -> (f64, f64) {
        (self.omega[0].0, self.omega[self.omega.len() - 1].1)
    }

    fn in_omega(&self, x: f64) -> bool {
        self.omega.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    /// Hull endpoints, density nodes strictly inside, and the edges of `Ω`.
    fn nodes(&self) -> Vec<f64> {
        let (c, d) = self.hull();
        let mut xs: Vec<f64> = vec![c, d];
        xs.extend((0..self.density.len()).map(|i| self.density.x(i)).filter(|&x| x > c && x < d));
        xs.extend(self.omega.iter().flat_map(|&(lo, hi)| [lo, hi]));
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
        xs
    }

    fn check_positive(&self) -> Result<()> {
        let xs = self.nodes();
        for &x in &xs[1..xs.len() - 1] {
            if !(self.density.eval(x) > 0.0) {
                return Err(Error::InvalidDensity(format!("density vanishes at {x} inside conv(omega)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda: f64,
    /// Nodes at which the extremal function is sampled.
    pub grid: Vec<f64>,
    pub eigenfunction: Vec<f64>,
    /// Relative residual of the method (Rayleigh mismatch or eigen-equation residual).
    pub residual: f64,
    /// `∫_Ω |f|^{p-2} f m` relative to `∫_Ω |f|^{p-1} m`.
    pub balance: f64,
    pub method: Method,
}

/// `(p-1) (2π / (p sin(π/p) D))^p`.
pub fn lambda_p_closed_form(p: f64, diameter: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param("p", "must be finite and > 1"));
    }
    if !(diameter > 0.0) {
        return Err(Error::param("D", "must be > 0"));
    }
    Ok((p - 1.0) * (2.0 * PI / (p * (PI / p).sin() * diameter)).powf(p))
}

/// `N K / (N - 1)`; `N = ∞` gives `K`.
pub fn lichnerowicz(curvature: f64, dimension: f64) -> Result<f64> {
    if !(curvature > 0.0) {
        return Err(Error::param("K", "must be > 0"));
    }
    if !(dimension > 1.0) {
        return Err(Error::param("N", "must be > 1"));
    }
    if dimension.is_infinite() {
        return Ok(curvature);
    }
    Ok(dimension * curvature / (dimension - 1.0))
}

fn phi(q: f64, s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.abs().powf(q - 2.0) * s
    }
}

/// `λ_p` by the finite-element eigensolver when `p = 2` and `Ω` is one
/// interval, by shooting otherwise.
pub fn solve_lambda_p(problem: &SpectralProblem, p: f64) -> Result<SpectralResult> {
    let method = if p == 2.0 && problem.omega.len() == 1 {
        Method::FdEig
    } else {
        Method::Shooting
    };
    solve_lambda_p_with(problem, p, method)
}

pub fn solve_lambda_p_with(problem: &SpectralProblem, p: f64, method: Method) -> Result<SpectralResult> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param("p", "must be finite and > 1"));
    }
    problem.check_positive()?;
    match method {
        Method::FdEig => {
            if p != 2.0 || problem.omega.len() != 1 {
                return Err(Error::Unsupported("the eigensolver needs p = 2 and a single interval".into()));
            }
            fem_lambda2(problem)
        }
        Method::Shooting => shoot_lambda_p(problem, p),
        Method::LsMinimize => Err(Error::Unsupported("use estimate_lambda_ls".into())),
    }
}

/// P1 elements on the hull nodes: stiffness with the element-mean weight,
/// mass lumped from the exact half-element integrals of `h`.
struct Fem {
    xs: Vec<f64>,
    /// element weights `h_e / δ_e`
    stiff: Vec<f64>,
    /// lumped `Ω` masses per node
    mass: Vec<f64>,
}

impl Fem {
    fn new(problem: &SpectralProblem) -> Self {
        let xs = problem.nodes();
        let h = &problem.density;
        let n = xs.len();
        let mut stiff = Vec::with_capacity(n - 1);
        let mut mass = vec![0.0; n];
        for e in 0..n - 1 {
            let (x0, x1) = (xs[e], xs[e + 1]);
            let (h0, h1) = (h.eval(x0), h.eval(x1));
            let len = x1 - x0;
            stiff.push(0.5 * (h0 + h1) / len);
            if problem.in_omega(0.5 * (x0 + x1)) {
                mass[e] += 0.5 * len * (3.0 * h0 + h1) / 4.0;
                mass[e + 1] += 0.5 * len * (h0 + 3.0 * h1) / 4.0;
            }
        }
        Self { xs, stiff, mass }
    }

    fn energy(&self, f: &[f64]) -> f64 {
        self.stiff.iter().enumerate().map(|(e, &k)| k * (f[e + 1] - f[e]).powi(2)).sum()
    }

    /// Gradient of [`Fem::energy`].
    fn energy_grad(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (e, &k) in self.stiff.iter().enumerate() {
            let d = 2.0 * k * (f[e + 1] - f[e]);
            out[e + 1] += d;
            out[e] -= d;
        }
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let prev = if q == 0.0 { f64::EPSILON * (diag[i - 1].abs() + 1.0) } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves a tridiagonal system `(sub, diag, sup) x = rhs` by Gaussian
/// elimination with partial pivoting.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // rows stored as (d, u1, u2) after elimination; row i touches columns i..i+2
    let mut d = diag.to_vec();
    let mut u1: Vec<f64> = sup.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut u2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    let mut lower: Vec<f64> = sub.to_vec();
    for i in 0..n - 1 {
        if lower[i].abs() > d[i].abs() {
            // swap rows i and i+1
            let (ri_d, ri_u1, ri_u2) = (d[i], u1[i], u2[i]);
            d[i] = lower[i];
            u1[i] = d[i + 1];
            u2[i] = if i + 1 < n - 1 { u1[i + 1] } else { 0.0 };
            lower[i] = ri_d;
            d[i + 1] = ri_u1;
            u1[i + 1] = ri_u2;
            b.swap(i, i + 1);
        }
        let piv = if d[i] == 0.0 { f64::MIN_POSITIVE } else { d[i] };
        let m = lower[i] / piv;
        d[i + 1] -= m * u1[i];
        if i + 1 < n - 1 {
            u1[i + 1] -= m * u2[i];
        }
        b[i + 1] -= m * b[i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        let piv = if d[i] == 0.0 { f64::MIN_POSITIVE } else { d[i] };
        x[i] = s / piv;
    }
    x
}

fn fem_lambda2(problem: &SpectralProblem) -> Result<SpectralResult> {
    let fem = Fem::new(problem);
    let n = fem.xs.len();
    if n < 3 {
        return Err(Error::InvalidDensity("need at least three nodes in conv(omega)".into()));
    }
    if fem.mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidDensity("zero lumped mass; the density vanishes on a whole element".into()));
    }
    let root: Vec<f64> = fem.mass.iter().map(|m| m.sqrt()).collect();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for (e, &k) in fem.stiff.iter().enumerate() {
        diag[e] += k;
        diag[e + 1] += k;
        off[e] = -k / (root[e] * root[e + 1]);
    }
    for (d, m) in diag.iter_mut().zip(&fem.mass) {
        *d /= m;
    }
    // Gershgorin bound for the bracket
    let mut hi = (0..n)
        .map(|i| {
            diag[i] + if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    let mut iterations = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi.abs() {
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(Error::BisectionFailed { iterations, lo, hi });
        }
        let mid = 0.5 * (lo + hi);
        if sturm_count(&diag, &off, mid) >= 2 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);

    // inverse iteration, orthogonal to the constant mode
    let shift = lambda * (1.0 + 1e-10) + 1e-300;
    let shifted: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let ground: Vec<f64> = root.clone();
    let ground_norm = ground.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut y: Vec<f64> = fem.xs.iter().map(|&x| (PI * (x - fem.xs[0]) / (fem.xs[n - 1] - fem.xs[0])).cos()).collect();
    for _ in 0..4 {
        let dot: f64 = y.iter().zip(&ground).map(|(a, b)| a * b).sum::<f64>() / (ground_norm * ground_norm);
        y.iter_mut().zip(&ground).for_each(|(a, b)| *a -= dot * b);
        y = solve_tridiagonal(&off, &shifted, &off, &y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
    }
    let mut res = 0.0;
    for i in 0..n {
        let mut cy = diag[i] * y[i] - lambda * y[i];
        if i > 0 {
            cy += off[i - 1] * y[i - 1];
        }
        if i + 1 < n {
            cy += off[i] * y[i + 1];
        }
        res += cy * cy;
    }
    let residual = res.sqrt() / lambda.max(f64::MIN_POSITIVE);
    let mut f: Vec<f64> = y.iter().zip(&root).map(|(v, r)| v / r).collect();
    normalize_sign(&mut f);
    let bal: f64 = f.iter().zip(&fem.mass).map(|(v, m)| v * m).sum();
    let abs: f64 = f.iter().zip(&fem.mass).map(|(v, m)| v.abs() * m).sum();
    Ok(SpectralResult {
        lambda,
        grid: fem.xs,
        eigenfunction: f,
        residual,
        balance: bal / abs,
        method: Method::FdEig,
    })
}

fn normalize_sign(f: &mut [f64]) {
    let m = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let s = if f[0] < 0.0 { -1.0 / m } else { 1.0 / m };
    f.iter_mut().for_each(|v| *v *= s);
}

/// State: `u`, `w = h φ_p(u')`, and the running integrals
/// `∫ |u'|^p h`, `∫_Ω |u|^p h`, `∫_Ω φ_p(u) h`, `∫_Ω |u|^{p-1} h`.
type State = [f64; 6];

struct Shooter<'a> {
    problem: &'a SpectralProblem,
    p: f64,
    q: f64,
    floor: f64,
    nodes: Vec<f64>,
}

struct Shot {
    /// Accumulated clockwise rotation of `(u, w)`.
    angle: f64,
    state: State,
    samples: Vec<f64>,
}

impl<'a> Shooter<'a> {
    fn new(problem: &'a SpectralProblem, p: f64) -> Self {
        Self {
            problem,
            p,
            q: p / (p - 1.0),
            floor: 1e-12 * problem.density.max_value(),
            nodes: problem.nodes(),
        }
    }

    fn rhs(&self, x: f64, y: &State, lambda: f64, inside: bool) -> State {
        let h = self.problem.density.eval(x);
        let up = phi(self.q, y[1] / h.max(self.floor));
        let mut dy = [0.0; 6];
        dy[0] = up;
        dy[2] = up * y[1];
        if inside {
            let pu = phi(self.p, y[0]);
            dy[1] = -lambda * h * pu;
            dy[3] = y[0].abs().powf(self.p) * h;
            dy[4] = pu * h;
            dy[5] = y[0].abs().powf(self.p - 1.0) * h;
        }
        dy
    }

    fn shoot(&self, lambda: f64) -> Result<Shot> {
        let mut y: State = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut angle = 0.0;
        let mut last = 0.0f64;
        let mut samples = vec![1.0];
        let mut dx_hint = (self.nodes[self.nodes.len() - 1] - self.nodes[0]) / 64.0;
        for w in self.nodes.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let inside = self.problem.in_omega(0.5 * (x0 + x1));
            let mut x = x0;
            let mut dx = dx_hint.min(x1 - x0);
            let mut steps = 0usize;
            while x < x1 {
                steps += 1;
                if steps > 1_000_000 {
                    return Err(Error::ShootingFailed { residual: f64::NAN });
                }
                let dx_try = dx.min(x1 - x);
                let (next, err) = dopri_step(|s, v| self.rhs(s, v, lambda, inside), x, &y, dx_try);
                let scale = 1e-10 * (1.0 + y[0].abs().max(next[0].abs())) + 1e-10 * (y[1].abs().max(next[1].abs()));
                let ratio = err / scale;
                if ratio <= 1.0 || dx_try < 1e-14 * (1.0 + x.abs()) {
                    x = if dx_try == x1 - x { x1 } else { x + dx_try };
                    y = next;
                    let a = y[1].atan2(y[0]);
                    let mut d = a - last;
                    if d > PI {
                        d -= 2.0 * PI;
                    } else if d < -PI {
                        d += 2.0 * PI;
                    }
                    angle -= d;
                    last = a;
                }
                let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
                dx = dx_try * factor;
            }
            dx_hint = dx;
            samples.push(y[0]);
        }
        Ok(Shot { angle, state: y, samples })
    }
}

/// One Dormand-Prince 5(4) step; returns the 5th-order solution and an error norm.
fn dopri_step(f: impl Fn(f64, &State) -> State, x: f64, y: &State, h: f64) -> (State, f64) {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut k = [[0.0; 6]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, a) in A[s].iter().enumerate().take(s) {
            for d in 0..6 {
                ys[d] += h * a * k[j][d];
            }
        }
        k[s] = f(x + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err: f64 = 0.0;
    for d in 0..6 {
        let mut e = 0.0;
        for s in 0..7 {
            y5[d] += h * B5[s] * k[s][d];
            e += h * (B5[s] - B4[s]) * k[s][d];
        }
        // only the solution components drive step control
        if d < 2 {
            err = err.max(e.abs());
        }
    }
    (y5, err)
}

fn shoot_lambda_p(problem: &SpectralProblem, p: f64) -> Result<SpectralResult> {
    let shooter = Shooter::new(problem, p);
    let (c, d) = problem.hull();
    let mut lo = 0.0;
    let mut hi = lambda_p_closed_form(p, d - c)?;
    let mut doublings = 0;
    while shooter.shoot(hi)?.angle <= PI {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::BisectionFailed { iterations: doublings, lo, hi });
        }
    }
    let mut iterations = 0;
    while hi - lo > 1e-11 * hi {
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(Error::BisectionFailed { iterations, lo, hi });
        }
        let mid = 0.5 * (lo + hi);
        if shooter.shoot(mid)?.angle > PI {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let shot = shooter.shoot(lambda)?;
    let y = shot.state;
    let rayleigh = y[2] / y[3];
    let residual = (rayleigh - lambda).abs() / lambda;
    let mut f = shot.samples;
    normalize_sign(&mut f);
    Ok(SpectralResult {
        lambda,
        grid: shooter.nodes,
        eigenfunction: f,
        residual,
        balance: y[4] / y[5],
        method: Method::Shooting,
    })
}

/// Options for [`estimate_lambda_ls`].
#[derive(Debug, Clone, PartialEq)]
pub struct LsOptions {
    pub random_starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self {
            random_starts: 8,
            seed: 0x5eed,
            max_iterations: 400,
        }
    }
}

const LOG_FLOOR: f64 = 1e-12;

struct LsFunctional<'a> {
    fem: &'a Fem,
    target: f64,
}

impl LsFunctional<'_> {
    /// `∫_Ω (f² log f² - f² + 1) m`, which equals the entropy under the constraint.
    fn entropy(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.fem.mass)
            .map(|(v, m)| {
                let s = (v * v).max(LOG_FLOOR);
                let d = s - 1.0;
                m * (s * d.ln_1p() - d)
            })
            .sum()
    }

    fn quotient(&self, f: &[f64]) -> (f64, f64, f64) {
        let e = self.fem.energy(f);
        let ent = self.entropy(f);
        (2.0 * e / ent, e, ent)
    }

    fn project(&self, f: &mut [f64]) {
        let n: f64 = f.iter().zip(&self.fem.mass).map(|(v, m)| v * v * m).sum();
        let s = (self.target / n).sqrt();
        f.iter_mut().for_each(|v| *v *= s);
    }

    fn descend(&self, mut f: Vec<f64>, iterations: usize) -> Option<(f64, Vec<f64>)> {
        self.project(&mut f);
        let degenerate = 1e-14 * self.target;
        let (mut q, _, ent) = self.quotient(&f);
        if !(ent > degenerate) {
            return None;
        }
        let n = f.len();
        let mut ge = vec![0.0; n];
        let mut step = 1.0;
        for _ in 0..iterations {
            let (_, e, ent) = self.quotient(&f);
            self.fem.energy_grad(&f, &mut ge);
            let grad: Vec<f64> = (0..n)
                .map(|i| {
                    let s = (f[i] * f[i]).max(LOG_FLOOR);
                    let dent = self.fem.mass[i] * 2.0 * f[i] * s.ln();
                    2.0 * (ge[i] * ent - e * dent) / (ent * ent)
                })
                .collect();
            // precondition by the lumped mass so steps are grid independent
            let dir: Vec<f64> = grad.iter().zip(&self.fem.mass).map(|(g, m)| g / m.max(1e-300)).collect();
            let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if !(slope > 0.0) {
                break;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial: Vec<f64> = f.iter().zip(&dir).map(|(v, d)| v - step * d).collect();
                self.project(&mut trial);
                let (qt, _, ent_t) = self.quotient(&trial);
                if ent_t > degenerate && qt <= q - 1e-4 * step * slope {
                    f = trial;
                    q = qt;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some((q, f))
    }
}

/// Smallest log-Sobolev quotient found by projected descent from seeded random
/// starts and from the perturbed spectral-gap eigenfunction; an upper bound
/// on `λ_LS` that converges under refinement.
pub fn estimate_lambda_ls(problem: &SpectralProblem, opts: &LsOptions) -> Result<SpectralResult> {
    problem.check_positive()?;
    let fem = Fem::new(problem);
    let n = fem.xs.len();
    if n < 3 {
        return Err(Error::InvalidDensity("need at least three nodes in conv(omega)".into()));
    }
    let target: f64 = fem.mass.iter().sum();
    let functional = LsFunctional { fem: &fem, target };
    let (c, d) = problem.hull();
    let len = d - c;

    let eigen = if problem.omega.len() == 1 {
        fem_lambda2(problem).ok().map(|r| r.eigenfunction)
    } else {
        shoot_lambda_p(problem, 2.0).ok().map(|r| {
            let grid = r.grid;
            fem.xs.iter().map(|&x| interpolate(&grid, &r.eigenfunction, x)).collect()
        })
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(phi) = &eigen {
        for eps in [0.3, 0.03, 0.003] {
            starts.push(phi.iter().map(|v| 1.0 + eps * v).collect());
        }
    }
    for s in 0..opts.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
        let modes: Vec<(f64, f64)> = (1..=4).map(|k| (rng.gen_range(-1.0..1.0) / k as f64, k as f64)).collect();
        let amp: f64 = rng.gen_range(0.05..0.8);
        starts.push(
            fem.xs
                .iter()
                .map(|&x| {
                    let s: f64 = modes.iter().map(|(a, k)| a * (k * PI * (x - c) / len).cos()).sum();
                    1.0 + amp * s
                })
                .collect(),
        );
    }

    let best = starts
        .into_par_iter()
        .filter_map(|f| functional.descend(f, opts.max_iterations))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let (lambda, f) = best.ok_or(Error::Inconclusive)?;
    let bal: f64 = f.iter().zip(&fem.mass).map(|(v, m)| (v * v - 1.0) * m).sum();
    Ok(SpectralResult {
        lambda,
        grid: fem.xs.clone(),
        eigenfunction: f,
        residual: 0.0,
        balance: bal / target,
        method: Method::LsMinimize,
    })
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1) - 1;
    let w = ((x - xs[i]) / (xs[i + 1] - xs[i])).clamp(0.0, 1.0);
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

/// Comparison of a measured gap with the bound transferred from the CD model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub measured: f64,
    /// `λ̄` of the CD model class: the closed form at `K = 0`, Lichnerowicz for `K > 0`.
    pub bound: f64,
    /// `bound / Q`.
    pub lower_bound: f64,
    pub diameter: f64,
    pub ratio: f64,
    pub lower_bound_holds: bool,
    /// `measured ≤ bound (1 + tol)`; only meaningful for `Q = 1`.
    pub within_upper: bool,
    pub tolerance: f64,
}

/// Checks `λ_p(h) ≥ λ̄_p / Q` for a density that passes QCD(Q,K,N).
pub fn theorem_gap(h: &GridDensity, q: f64, k: f64, n: f64, p: f64) -> Result<GapReport> {
    let spec = ConditionSpec::qcd(q, k, n)?;
    let verdict = classify(h, &spec, &ClassifyOptions::default())?;
    if !verdict.passed {
        return Err(Error::ClassificationMismatch(format!(
            "density fails QCD({q},{k},{n}) with slack {}",
            verdict.worst_violation
        )));
    }
    let (lo, hi) = h.support_indices().ok_or_else(|| Error::InvalidDensity("empty support".into()))?;
    let diameter = h.x(hi) - h.x(lo);
    let bound = if k == 0.0 {
        lambda_p_closed_form(p, diameter)?
    } else if k > 0.0 && p == 2.0 {
        let _ = CurvatureParams::new(k, n)?;
        lichnerowicz(k, n)?
    } else {
        return Err(Error::Unsupported("the model bound is tabulated for K = 0, or K > 0 with p = 2".into()));
    };
    let sub = h.restrict(h.x(lo), h.x(hi), (hi - lo + 1).max(3))?;
    let measured = solve_lambda_p(&SpectralProblem::new(sub), p)?.lambda;
    let tolerance = 1e-2;
    Ok(GapReport {
        measured,
        bound,
        lower_bound: bound / q,
        diameter,
        ratio: measured / bound,
        lower_bound_holds: measured >= bound / q * (1.0 - tolerance),
        within_upper: measured <= bound * (1.0 + tolerance),
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform(a: f64, b: f64, m: usize) -> GridDensity {
        GridDensity::new(a, b, vec![1.0; m]).unwrap()
    }

    #[test]
    fn closed_forms() {
        assert_relative_eq!(lambda_p_closed_form(2.0, 1.0).unwrap(), PI * PI, max_relative = 1e-14);
        assert_relative_eq!(lambda_p_closed_form(2.0, 3.0).unwrap(), PI * PI / 9.0, max_relative = 1e-14);
        let v = lambda_p_closed_form(3.0, 1.0).unwrap();
        assert_relative_eq!(lambda_p_closed_form(3.0, 2.0).unwrap(), v / 8.0, max_relative = 1e-14);
        assert_eq!(lichnerowicz(1.0, 2.0).unwrap(), 2.0);
        assert_eq!(lichnerowicz(4.0, 5.0).unwrap(), 5.0);
        assert_eq!(lichnerowicz(3.0, f64::INFINITY).unwrap(), 3.0);
        assert!(lichnerowicz(0.0, 2.0).is_err());
        assert!(lambda_p_closed_form(1.0, 1.0).is_err());
    }

    #[test]
    fn uniform_gap() {
        let r = solve_lambda_p(&SpectralProblem::new(uniform(0.0, 1.0, 513)), 2.0).unwrap();
        assert_eq!(r.method, Method::FdEig);
        assert_relative_eq!(r.lambda, PI * PI, max_relative = 1e-4);
        assert!(r.balance.abs() < 1e-6);
        assert!(r.residual < 1e-6);
    }

    #[test]
    fn cosine_gap_is_lichnerowicz() {
        let h = GridDensity::from_fn(-PI / 2.0, PI / 2.0, 1025, f64::cos).unwrap();
        let r = solve_lambda_p(&SpectralProblem::new(h), 2.0).unwrap();
        assert_relative_eq!(r.lambda, 2.0, max_relative = 1e-3);
    }

    #[test]
    fn shooting_matches_closed_form() {
        for p in [1.5, 2.0, 3.0, 4.0] {
            let pr = SpectralProblem::new(uniform(0.0, 1.0, 2));
            let r = solve_lambda_p_with(&pr, p, Method::Shooting).unwrap();
            let exact = lambda_p_closed_form(p, 1.0).unwrap();
            assert_relative_eq!(r.lambda, exact, max_relative = 1e-3);
            assert!(r.balance.abs() < 1e-6, "p={p} balance {}", r.balance);
        }
    }

    #[test]
    fn shooting_and_fem_agree_on_weighted_problem() {
        let h = GridDensity::from_fn(0.0, 2.0, 401, |x| 1.0 + 0.5 * (3.0 * x).sin()).unwrap();
        let pr = SpectralProblem::new(h);
        let a = solve_lambda_p_with(&pr, 2.0, Method::FdEig).unwrap().lambda;
        let b = solve_lambda_p_with(&pr, 2.0, Method::Shooting).unwrap().lambda;
        assert_relative_eq!(a, b, max_relative = 1e-4);
    }

    #[test]
    fn omega_union_and_monotonicity() {
        let h = GridDensity::from_fn(0.0, 1.0, 201, |x| 1.0 + x).unwrap();
        let full = SpectralProblem::new(h.clone());
        let gap = full.clone().with_omega(&[(0.0, 0.3), (0.6, 1.0)]).unwrap();
        assert_eq!(gap.hull(), (0.0, 1.0));
        let a = solve_lambda_p(&full, 2.0).unwrap().lambda;
        let b = solve_lambda_p(&gap, 2.0).unwrap().lambda;
        assert!(b >= a * (1.0 - 1e-6), "{b} < {a}");
        assert!(full.with_omega(&[(0.5, 1.5)]).is_err());
    }

    #[test]
    fn ls_uniform_is_gap() {
        let r = estimate_lambda_ls(&SpectralProblem::new(uniform(-0.5, 0.5, 257)), &LsOptions::default()).unwrap();
        assert!((r.lambda / (PI * PI) - 1.0).abs() < 0.05, "{}", r.lambda);
        assert!(r.balance.abs() < 1e-9);
    }

    #[test]
    fn theorem_gap_examples() {
        let one = uniform(0.0, 1.0, 513);
        let r = theorem_gap(&one, 1.0, 0.0, 2.0, 2.0).unwrap();
        assert!((r.ratio - 1.0).abs() < 0.01);
        let vee = GridDensity::from_fn(-1.0, 1.0, 513, |x| 1.0 + x.abs()).unwrap();
        let r = theorem_gap(&vee, 2.0, 0.0, 2.0, 2.0).unwrap();
        assert!(r.measured >= PI * PI / 8.0);
        assert!(r.lower_bound_holds);
        assert!(matches!(theorem_gap(&vee, 1.0, 0.0, 2.0, 2.0), Err(Error::ClassificationMismatch(_))));
    }

    #[test]
    fn cd_models_can_exceed_the_flat_gap() {
        // The CD(0,N) class has pi^2/D^2 as a lower bound only.
        let h = GridDensity::from_fn(0.0, 1.0, 1025, |x| (1.0 + 3.0 * x).powi(3)).unwrap();
        assert!(classify(&h, &ConditionSpec::cd(0.0, 4.0).unwrap(), &ClassifyOptions::default()).unwrap().passed);
        let r = solve_lambda_p(&SpectralProblem::new(h), 2.0).unwrap();
        assert!((r.lambda - 15.92).abs() < 0.01, "{}", r.lambda);
    }

    #[test]
    fn tridiagonal_solver() {
        let sub = [1.0, 2.0, -1.0];
        let diag = [0.0, 1.0, 3.0, 1.0];
        let sup = [2.0, 1.0, 4.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let b = [
            diag[0] * x[0] + sup[0] * x[1],
            sub[0] * x[0] + diag[1] * x[1] + sup[1] * x[2],
            sub[1] * x[1] + diag[2] * x[2] + sup[2] * x[3],
            sub[2] * x[2] + diag[3] * x[3],
        ];
        let got = solve_tridiagonal(&sub, &diag, &sup, &b);
        for (g, e) in got.iter().zip(&x) {
            assert_relative_eq!(g, e, max_relative = 1e-12);
        }
    }
}
