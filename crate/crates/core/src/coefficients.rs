//! Distortion coefficients of constant-curvature comparison spaces.
//!
//! All functions are pure and allocation free. Infinite coefficient values are
//! carried by [`ExtReal`], whose product follows the measure-theoretic
//! convention `∞ · 0 = 0`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value of `|κ θ²|` the sine ratio is evaluated by its Taylor series.
const TAYLOR_SWITCH: f64 = 1e-8;

/// Curvature lower bound `K` and dimension upper bound `N > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureParams {
    pub curvature: f64,
    pub dimension: f64,
}

impl CurvatureParams {
    pub fn new(curvature: f64, dimension: f64) -> Result<Self> {
        if !curvature.is_finite() {
            return Err(Error::param("K", "curvature must be finite"));
        }
        if !(dimension > 1.0) || !dimension.is_finite() {
            return Err(Error::param("N", format!("dimension must be finite and > 1, got {dimension}")));
        }
        Ok(Self {
            curvature,
            dimension,
        })
    }

    /// The sectional curvature `K / (N - 1)` of the model space.
    pub fn kappa(&self) -> f64 {
        self.curvature / (self.dimension - 1.0)
    }
}

/// A non-negative extended real: either a finite value or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    pub fn finite(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        ExtReal(value)
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    /// The value as an `f64`, `f64::INFINITY` for `+∞`.
    pub fn value(&self) -> f64 {
        self.0
    }

    /// Product with `∞ · 0 = 0`.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: f64) -> f64 {
        if other == 0.0 || self.0 == 0.0 {
            0.0
        } else {
            self.0 * other
        }
    }

    /// `self^e` for `e > 0`, with `∞^e = ∞`.
    pub fn powf(self, e: f64) -> ExtReal {
        ExtReal(self.0.powf(e))
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// The generalized sine `s_κ(θ)`.
pub fn s_kappa(kappa: f64, theta: f64) -> f64 {
    if kappa > 0.0 {
        let r = kappa.sqrt();
        (r * theta).sin() / r
    } else if kappa < 0.0 {
        let r = (-kappa).sqrt();
        (r * theta).sinh() / r
    } else {
        theta
    }
}

/// The generalized cosine `c_κ(t)`, truncated to zero outside `|√κ t| ≤ π/2` when `κ > 0`.
pub fn c_kappa(kappa: f64, t: f64) -> f64 {
    if kappa > 0.0 {
        let arg = kappa.sqrt() * t;
        if arg.abs() <= PI / 2.0 {
            arg.cos()
        } else {
            0.0
        }
    } else if kappa < 0.0 {
        ((-kappa).sqrt() * t).cosh()
    } else {
        1.0
    }
}

/// `D_{K,N}`: `π √((N-1)/K)` for `K > 0`, `+∞` otherwise.
pub fn max_diameter(params: CurvatureParams) -> ExtReal {
    if params.curvature > 0.0 {
        ExtReal::finite(PI * ((params.dimension - 1.0) / params.curvature).sqrt())
    } else {
        ExtReal::INFINITY
    }
}

fn check_open_unit(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::param("t", format!("must lie in the open interval (0, 1), got {t}")))
    }
}

/// `σ^{(t)}_{K,N-1}(θ)` for `t ∈ (0,1)`.
///
/// Boundary values of `t` are rejected: the coefficient jumps to `+∞` at the
/// diameter threshold only for interior `t`, so no convention is imposed.
pub fn sigma(t: f64, theta: f64, params: CurvatureParams) -> Result<ExtReal> {
    check_open_unit(t)?;
    if theta < 0.0 {
        return Err(Error::param("theta", "must be non-negative"));
    }
    Ok(sigma_weight(t, theta, params))
}

/// `τ^{(t)}_{K,N}(θ) = t^{1/N} σ^{(t)}_{K,N-1}(θ)^{1-1/N}` for `t ∈ (0,1)`.
pub fn tau(t: f64, theta: f64, params: CurvatureParams) -> Result<ExtReal> {
    let s = sigma(t, theta, params)?;
    let n = params.dimension;
    Ok(tau_from_sigma(t, s, n))
}

pub(crate) fn tau_from_sigma(t: f64, s: ExtReal, n: f64) -> ExtReal {
    if s.is_infinite() {
        return ExtReal::INFINITY;
    }
    ExtReal::finite(t.powf(1.0 / n) * s.value().powf(1.0 - 1.0 / n))
}

/// Unchecked σ for `t ∈ [0,1]`; the endpoint values are the limits 0 and 1
/// below the diameter threshold.
pub(crate) fn sigma_weight(t: f64, theta: f64, params: CurvatureParams) -> ExtReal {
    let kappa = params.kappa();
    let x = kappa * theta * theta;
    if kappa > 0.0 && x >= PI * PI {
        return ExtReal::INFINITY;
    }
    if theta == 0.0 || t == 0.0 || t == 1.0 {
        return ExtReal::finite(t);
    }
    if x.abs() < TAYLOR_SWITCH {
        return ExtReal::finite(small_angle_ratio(t, x));
    }
    ExtReal::finite(s_kappa(kappa, t * theta) / s_kappa(kappa, theta))
}

/// `s_κ(tθ)/s_κ(θ)` as a series in `x = κθ²`.
fn small_angle_ratio(t: f64, x: f64) -> f64 {
    let t2 = t * t;
    let num = 1.0 - x * t2 / 6.0 + x * x * t2 * t2 / 120.0 - x * x * x * t2 * t2 * t2 / 5040.0;
    let den = 1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0;
    t * num / den
}

/// The quasi-convexity order `Q = 2^{N-n}` obtained from `MCP(K,N)` on an ideal
/// `n`-dimensional sub-Riemannian manifold.
pub fn qcd_from_mcp(dimension_bound: f64, topological_dimension: f64) -> Result<f64> {
    if !(topological_dimension >= 1.0) {
        return Err(Error::param("n", "topological dimension must be at least 1"));
    }
    if topological_dimension > dimension_bound {
        return Err(Error::param(
            "n",
            format!("topological dimension {topological_dimension} exceeds N = {dimension_bound}"),
        ));
    }
    Ok((dimension_bound - topological_dimension).exp2())
}

/// `(a+b)^α ≥ 2^{α-1}(a^α + b^α)` slack for `α ∈ (0, 1]`, used when passing from a
/// topological-dimension interpolation inequality to a quasi one.
pub fn jensen_slack(a: f64, b: f64, alpha: f64) -> f64 {
    (a + b).powf(alpha) - (alpha - 1.0).exp2() * (a.powf(alpha) + b.powf(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(k: f64, n: f64) -> CurvatureParams {
        CurvatureParams::new(k, n).unwrap()
    }

    #[test]
    fn generalized_sine_branches() {
        assert_abs_diff_eq!(s_kappa(1.0, PI / 2.0), 1.0, epsilon = 1e-15);
        assert_eq!(s_kappa(0.0, 3.7), 3.7);
        assert_abs_diff_eq!(s_kappa(-1.0, 1.0), 1.1752011936438014, epsilon = 1e-14);
        // continuity through κ = 0
        assert_abs_diff_eq!(s_kappa(1e-14, 2.0), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s_kappa(-1e-14, 2.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn generalized_cosine_branches() {
        assert_eq!(c_kappa(1.0, 0.0), 1.0);
        assert_eq!(c_kappa(1.0, PI), 0.0);
        assert_abs_diff_eq!(c_kappa(-1.0, 1.0), 1.5430806348152437, epsilon = 1e-14);
        assert_eq!(c_kappa(0.0, 12.0), 1.0);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(0.5, 2.3, p(0.0, 3.0)).unwrap().value(), 0.5);
        assert!(sigma(0.3, PI, p(1.0, 2.0)).unwrap().is_infinite());
        let v = sigma(0.5, PI / 2.0, p(1.0, 2.0)).unwrap().value();
        assert_abs_diff_eq!(v, (PI / 4.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn sigma_rejects_boundary_t() {
        assert!(sigma(0.0, 1.0, p(0.0, 2.0)).is_err());
        assert!(sigma(1.0, 1.0, p(0.0, 2.0)).is_err());
        assert!(tau(1.0, 1.0, p(0.0, 2.0)).is_err());
    }

    #[test]
    fn tau_examples() {
        for &(t, th) in &[(0.2, 0.5), (0.7, 3.0), (0.5, 10.0)] {
            assert_abs_diff_eq!(tau(t, th, p(0.0, 4.0)).unwrap().value(), t, epsilon = 1e-14);
        }
        let v = tau(0.5, PI / 2.0, p(1.0, 2.0)).unwrap().value();
        assert_abs_diff_eq!(v, 0.5f64.sqrt() * (PI / 4.0).sin().sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.59460, epsilon = 1e-5);
        let d = max_diameter(p(2.0, 3.0)).value();
        assert!(tau(0.4, d, p(2.0, 3.0)).unwrap().is_infinite());
        assert!(tau(0.4, d * 1.5, p(2.0, 3.0)).unwrap().is_infinite());
    }

    #[test]
    fn max_diameter_examples() {
        assert_abs_diff_eq!(max_diameter(p(1.0, 2.0)).value(), PI, epsilon = 1e-15);
        assert!(max_diameter(p(0.0, 5.0)).is_infinite());
        assert!(max_diameter(p(-3.0, 5.0)).is_infinite());
        assert_abs_diff_eq!(max_diameter(p(4.0, 2.0)).value(), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn qcd_from_mcp_examples() {
        assert_eq!(qcd_from_mcp(3.0, 3.0).unwrap(), 1.0);
        for d in 1..5 {
            let d = d as f64;
            assert_eq!(qcd_from_mcp(2.0 * d + 3.0, 2.0 * d + 1.0).unwrap(), 4.0);
        }
        assert_eq!(qcd_from_mcp(5.0, 2.0).unwrap(), 8.0);
        assert!(qcd_from_mcp(2.0, 3.0).is_err());
        // strictly increasing in N - n
        let mut last = 0.0;
        for gap in 0..8 {
            let q = qcd_from_mcp(10.0, 10.0 - gap as f64 * 0.5).unwrap();
            assert!(q > last);
            last = q;
        }
    }

    #[test]
    fn jensen_step_holds_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a: f64 = rng.gen_range(0.0..10.0);
            let b: f64 = rng.gen_range(0.0..10.0);
            let alpha: f64 = rng.gen_range(1e-3..=1.0);
            assert!(jensen_slack(a, b, alpha) >= -1e-12 * (a + b + 1.0));
        }
        // equality at a = b
        assert_abs_diff_eq!(jensen_slack(2.0, 2.0, 0.6), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sigma_normalization() {
        for &(k, n) in &[(0.0, 3.0), (1.0, 2.0), (-2.0, 4.0), (3.0, 5.5)] {
            let params = p(k, n);
            for &t in &[0.1, 0.5, 0.9] {
                assert_eq!(sigma(t, 0.0, params).unwrap().value(), t);
            }
            let theta = 0.8 * max_diameter(params).value().min(2.0);
            let near_one = sigma(1.0 - 1e-13, theta, params).unwrap().value();
            assert_abs_diff_eq!(near_one, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigma_solves_its_ode() {
        // σ'' + θ² κ σ = 0 in t, checked by central differences.
        let h = 2e-4;
        for &(k, n, theta) in &[(1.0, 2.0, 2.5), (-1.0, 3.0, 1.7), (4.0, 6.0, 1.1), (0.0, 2.0, 5.0)] {
            let params = p(k, n);
            for i in 1..20 {
                let t = i as f64 / 20.0;
                let f = |s: f64| sigma_weight(s, theta, params).value();
                let second = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
                let residual = second + theta * theta * params.kappa() * f(t);
                assert!(residual.abs() <= 1e-6, "residual {residual} at t={t}");
            }
        }
    }

    #[test]
    fn taylor_branch_is_continuous() {
        let params = p(1e-9, 2.0);
        let theta = 0.5;
        let series = sigma(0.3, theta, params).unwrap().value();
        let direct = s_kappa(1e-9, 0.3 * theta) / s_kappa(1e-9, theta);
        assert_abs_diff_eq!(series, direct, epsilon = 1e-14);
        let params = p(-1e-9, 2.0);
        let series = sigma(0.3, theta, params).unwrap().value();
        assert_abs_diff_eq!(series, 0.3, epsilon = 1e-10);
    }

    #[test]
    fn infinity_times_zero_is_zero() {
        assert_eq!(ExtReal::INFINITY.mul(0.0), 0.0);
        assert!(ExtReal::INFINITY.mul(1e-300).is_infinite());
        assert_eq!(ExtReal::finite(2.0).mul(3.0), 6.0);
        assert_eq!(format!("{}", ExtReal::INFINITY), "inf");
    }
}
