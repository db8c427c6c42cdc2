//! One-dimensional densities and their classification against the CD, MCP,
//! QCD and CGTD defining inequalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{max_diameter, s_kappa, sigma_weight, CurvatureParams, ExtReal};
use crate::error::{Error, Result};

/// A non-negative density on `[a, b]`, sampled at `M ≥ 2` uniform grid points
/// and linearly interpolated in between. Zero outside `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    support: [f64; 2],
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidDensity(format!("support [{a}, {b}] is not a proper interval")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidDensity("at least two grid values are required".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("value {v} at index {i} is not finite and non-negative")));
        }
        Ok(Self {
            support: [a, b],
            values,
        })
    }

    /// Samples `f` at `m` uniform points of `[a, b]`; negative values are clamped to 0.
    pub fn from_fn(a: f64, b: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDensity("at least two grid values are required".into()));
        }
        let h = (b - a) / (m - 1) as f64;
        let values = (0..m)
            .map(|i| {
                let x = if i == m - 1 { b } else { a + i as f64 * h };
                f(x).max(0.0)
            })
            .collect();
        Self::new(a, b, values)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support[0], self.support[1])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        self.support[1] - self.support[0]
    }

    pub fn spacing(&self) -> f64 {
        self.diameter() / (self.len() - 1) as f64
    }

    /// Grid node `i`; the last node is exactly `b`.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.len() {
            self.support[1]
        } else {
            self.support[0] + i as f64 * self.spacing()
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.support();
        if x < a || x > b || x.is_nan() {
            return 0.0;
        }
        let m = self.len();
        let s = (x - a) / self.spacing();
        let i = (s.floor() as usize).min(m - 2);
        let w = (s - i as f64).clamp(0.0, 1.0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Exact integral of the piecewise-linear interpolant.
    pub fn integral(&self) -> f64 {
        let h = self.spacing();
        let inner: f64 = self.values[1..self.len() - 1].iter().sum();
        h * (inner + 0.5 * (self.values[0] + self.values[self.len() - 1]))
    }

    /// Exact integral of the interpolant over `[lo, hi] ∩ [a, b]`.
    pub fn integral_over(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = self.support();
        let lo = lo.max(a);
        let hi = hi.min(b);
        if hi <= lo {
            return 0.0;
        }
        let h = self.spacing();
        let first = (((lo - a) / h).floor() as usize).min(self.len() - 2);
        let last = (((hi - a) / h).ceil() as usize).min(self.len() - 1);
        let mut total = 0.0;
        for i in first..last {
            let x0 = self.x(i).max(lo);
            let x1 = self.x(i + 1).min(hi);
            if x1 > x0 {
                total += 0.5 * (x1 - x0) * (self.eval(x0) + self.eval(x1));
            }
        }
        total
    }

    /// Resamples the interpolant on `m` uniform points of the same support.
    pub fn resample(&self, m: usize) -> Result<Self> {
        let (a, b) = self.support();
        Self::from_fn(a, b, m, |x| self.eval(x))
    }

    /// Restriction of the interpolant to `[lo, hi]`, resampled on `m` points.
    pub fn restrict(&self, lo: f64, hi: f64, m: usize) -> Result<Self> {
        Self::from_fn(lo, hi, m, |x| self.eval(x))
    }

    /// Multiplies the density pointwise by `f`.
    pub fn map_values(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..self.len()).map(|i| f(self.x(i), self.values[i])).collect();
        Self::new(self.support[0], self.support[1], values)
    }

    /// Index range `[lo, hi]` of grid nodes in the closed support of the interpolant.
    pub fn support_indices(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|&v| v > 0.0)?;
        let last = self.values.iter().rposition(|&v| v > 0.0)?;
        Some((first.saturating_sub(1), (last + 1).min(self.len() - 1)))
    }

    /// First grid node strictly between positive values where the density vanishes.
    pub fn interior_zero(&self) -> Option<f64> {
        let first = self.values.iter().position(|&v| v > 0.0)?;
        let last = self.values.iter().rposition(|&v| v > 0.0)?;
        (first..=last).find(|&i| self.values[i] == 0.0).map(|i| self.x(i))
    }
}

/// A CD(K,N) model density `f = u^{N-1}` with `u'' + K/(N-1) u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDensity {
    pub params: CurvatureParams,
    pub support: [f64; 2],
    /// `u` at the left end of the support.
    pub coef_a: f64,
    /// `u'` at the left end of the support.
    pub coef_b: f64,
}

impl ModelDensity {
    /// `u(x)` on the whole line (no truncation).
    pub fn u(&self, x: f64) -> f64 {
        let kappa = self.params.kappa();
        let s = x - self.support[0];
        let c = if kappa > 0.0 {
            (kappa.sqrt() * s).cos()
        } else if kappa < 0.0 {
            ((-kappa).sqrt() * s).cosh()
        } else {
            1.0
        };
        self.coef_a * c + self.coef_b * s_kappa(kappa, s)
    }

    /// `f(x) = u(x)^{N-1}` on the support, zero elsewhere.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support[0] || x > self.support[1] {
            return 0.0;
        }
        self.u(x).max(0.0).powf(self.params.dimension - 1.0)
    }
}

/// Builds the model density with `u(a) = u0`, `u'(a) = slope0` on `support`.
pub fn model_density(params: CurvatureParams, support: (f64, f64), u0: f64, slope0: f64) -> Result<ModelDensity> {
    let (a, b) = support;
    if !(b > a) {
        return Err(Error::param("support", "must be a proper interval"));
    }
    if !(u0 >= 0.0) || !slope0.is_finite() {
        return Err(Error::param("u0", "must be non-negative and finite"));
    }
    let dmax = max_diameter(params);
    if dmax.is_finite() && (b - a) > dmax.value() * (1.0 + 1e-12) {
        return Err(Error::DiameterExceeded {
            diameter: b - a,
            max_diameter: dmax.value(),
        });
    }
    let model = ModelDensity {
        params,
        support: [a, b],
        coef_a: u0,
        coef_b: slope0,
    };
    // On an interval no longer than half a period, non-negative ends and a
    // positive midpoint rule out any interior zero.
    let scale = u0.abs() + slope0.abs() * (b - a) + 1e-300;
    let mid = 0.5 * (a + b);
    if model.u(mid) <= 0.0 {
        return Err(Error::ModelSignChange { x: mid });
    }
    if model.u(b) < -1e-12 * scale {
        return Err(Error::ModelSignChange { x: b });
    }
    Ok(model)
}

/// Uniform sampling of a model density.
pub fn sample_model(model: &ModelDensity, m: usize) -> Result<GridDensity> {
    // Rounding leaves `u` at about 1e-17 where it should vanish; snap those to 0
    // so that chords of maximal length see exact zeros.
    let (a, b) = (model.support[0], model.support[1]);
    let scale = model.coef_a.abs() + model.coef_b.abs() * (b - a);
    GridDensity::from_fn(a, b, m, |x| {
        if model.u(x) <= 1e-12 * scale {
            0.0
        } else {
            model.eval(x)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Cd,
    Mcp,
    Qcd,
    Cgtd,
}

/// A curvature-dimension-type condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub kind: ConditionKind,
    pub params: CurvatureParams,
    /// Quasi-convexity order (QCD only, 1 otherwise).
    pub q_order: f64,
    /// Topological dimension (CGTD only).
    pub topological_dimension: Option<f64>,
}

impl ConditionSpec {
    pub fn cd(k: f64, n: f64) -> Result<Self> {
        Ok(Self {
            kind: ConditionKind::Cd,
            params: CurvatureParams::new(k, n)?,
            q_order: 1.0,
            topological_dimension: None,
        })
    }

    pub fn mcp(k: f64, n: f64) -> Result<Self> {
        Ok(Self {
            kind: ConditionKind::Mcp,
            ..Self::cd(k, n)?
        })
    }

    pub fn qcd(q: f64, k: f64, n: f64) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::param("Q", format!("must be finite and >= 1, got {q}")));
        }
        Ok(Self {
            kind: ConditionKind::Qcd,
            q_order: q,
            ..Self::cd(k, n)?
        })
    }

    pub fn cgtd(k: f64, n: f64, topological: f64) -> Result<Self> {
        if !(topological >= 1.0) || topological > n {
            return Err(Error::param("n", format!("need 1 <= n <= N, got n = {topological}, N = {n}")));
        }
        Ok(Self {
            kind: ConditionKind::Cgtd,
            topological_dimension: Some(topological),
            ..Self::cd(k, n)?
        })
    }

    fn validate(&self) -> Result<()> {
        CurvatureParams::new(self.params.curvature, self.params.dimension)?;
        if !(self.q_order >= 1.0) {
            return Err(Error::param("Q", "must be >= 1"));
        }
        if self.kind == ConditionKind::Cgtd {
            let n = self
                .topological_dimension
                .ok_or_else(|| Error::param("n", "CGTD requires a topological dimension"))?;
            if !(n >= 1.0) || n > self.params.dimension {
                return Err(Error::param("n", "need 1 <= n <= N"));
            }
        }
        Ok(())
    }

    /// Right-hand side of the defining inequality in units of `h^{1/(N-1)}`,
    /// given `v0 = h(x0)^{1/(N-1)}`, `v1 = h(x1)^{1/(N-1)}` and the two
    /// coefficients `σ^{(1-t)}`, `σ^{(t)}`.
    pub(crate) fn rhs(&self, s_left: ExtReal, s_right: ExtReal, v0: f64, v1: f64) -> f64 {
        let a = s_left.mul(v0);
        let b = s_right.mul(v1);
        match self.kind {
            ConditionKind::Cd => a + b,
            ConditionKind::Qcd => (a + b) * self.q_order.powf(-1.0 / (self.params.dimension - 1.0)),
            ConditionKind::Mcp => a,
            ConditionKind::Cgtd => {
                let n = self.topological_dimension.unwrap_or(self.params.dimension);
                let big = a.max(b);
                let small = a.min(b);
                if n <= 1.0 || big.is_infinite() || big == 0.0 {
                    return big;
                }
                let p = (self.params.dimension - 1.0) / (n - 1.0);
                big * (1.0 + (small / big).powf(p)).powf(1.0 / p)
            }
        }
    }
}

/// The (x0, x1, t) triple where the defining inequality is most violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x0: f64,
    pub x1: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub passed: bool,
    /// Smallest signed slack `lhs - rhs` in units of `h^{1/(N-1)}`; negative means violated.
    pub worst_violation: f64,
    pub witness: Witness,
    pub checks_performed: u64,
    /// Slack threshold used for the verdict (`passed ⇔ worst_violation ≥ -tolerance`).
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Grid of interpolation times and tolerance for [`classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    pub t_grid: Vec<f64>,
    /// Extra uniformly random times drawn per grid pair.
    pub random_t_per_pair: usize,
    pub seed: u64,
    /// Absolute part of the pass threshold; the grid part `L·δ` is added.
    pub tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            t_grid: (1..10).map(|i| i as f64 / 10.0).collect(),
            random_t_per_pair: 16,
            seed: 0x5eed,
            tol: 1e-9,
        }
    }
}

pub(crate) fn pair_rng(seed: u64, i: usize, j: usize, m: usize) -> ChaCha8Rng {
    let idx = (i * m + j) as u64;
    ChaCha8Rng::seed_from_u64(seed ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Checks the defining inequality of `spec` for `h` over all ordered pairs of
/// grid nodes in the support and all interpolation times in the options.
pub fn classify(h: &GridDensity, spec: &ConditionSpec, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    spec.validate()?;
    if h.len() < 3 {
        return Err(Error::InvalidDensity("classification needs at least three grid values".into()));
    }
    if let Some(&t) = opts.t_grid.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::param("t_grid", format!("times must lie in (0, 1), got {t}")));
    }
    let (lo, hi) = h
        .support_indices()
        .ok_or_else(|| Error::InvalidDensity("density vanishes identically".into()))?;
    if matches!(spec.kind, ConditionKind::Qcd | ConditionKind::Cgtd) {
        if let Some(x) = h.interior_zero() {
            return Err(Error::InvalidDensity(format!(
                "density vanishes at interior point {x}; its support would be disconnected"
            )));
        }
    }
    let params = spec.params;
    let exponent = 1.0 / (params.dimension - 1.0);
    let delta = h.spacing();

    let dmax = max_diameter(params);
    let diam = h.x(hi) - h.x(lo);
    if dmax.is_finite() && diam > dmax.value() * (1.0 + 1e-12) {
        return Ok(ClassificationReport {
            passed: false,
            worst_violation: f64::NEG_INFINITY,
            witness: Witness {
                x0: h.x(lo),
                x1: h.x(hi),
                t: 0.5,
            },
            checks_performed: 0,
            tolerance: opts.tol,
            diagnostic: Some(format!(
                "support diameter {diam} exceeds the maximal diameter {} for K = {}, N = {}",
                dmax.value(),
                params.curvature,
                params.dimension
            )),
        });
    }

    let v: Vec<f64> = h.values().iter().map(|&x| x.powf(exponent)).collect();
    let lipschitz = (lo..hi).map(|i| (v[i + 1] - v[i]).abs() / delta).fold(0.0, f64::max);
    let threshold = opts.tol + lipschitz * delta;
    let m = h.len();

    let (worst, witness, checks) = (lo..=hi)
        .into_par_iter()
        .map(|i| {
            let mut worst = f64::INFINITY;
            let mut witness = Witness {
                x0: h.x(i),
                x1: h.x(i),
                t: 0.5,
            };
            let mut checks = 0u64;
            let mut times = opts.t_grid.clone();
            for j in lo..=hi {
                if i == j {
                    continue;
                }
                times.truncate(opts.t_grid.len());
                let mut rng = pair_rng(opts.seed, i, j, m);
                for _ in 0..opts.random_t_per_pair {
                    let t: f64 = rng.gen();
                    if t > 0.0 {
                        times.push(t);
                    }
                }
                let (x0, x1) = (h.x(i), h.x(j));
                let d = (x1 - x0).abs();
                for &t in &times {
                    let xt = (1.0 - t) * x0 + t * x1;
                    let lhs = h.eval(xt).powf(exponent);
                    let rhs = spec.rhs(sigma_weight(1.0 - t, d, params), sigma_weight(t, d, params), v[i], v[j]);
                    let slack = lhs - rhs;
                    checks += 1;
                    if slack < worst {
                        worst = slack;
                        witness = Witness { x0, x1, t };
                    }
                }
            }
            (worst, witness, checks)
        })
        .reduce(
            || (f64::INFINITY, Witness { x0: 0.0, x1: 0.0, t: 0.5 }, 0),
            |a, b| {
                let checks = a.2 + b.2;
                if b.0 < a.0 {
                    (b.0, b.1, checks)
                } else {
                    (a.0, a.1, checks)
                }
            },
        );

    Ok(ClassificationReport {
        passed: worst >= -threshold,
        worst_violation: worst,
        witness,
        checks_performed: checks,
        tolerance: threshold,
        diagnostic: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn params(k: f64, n: f64) -> CurvatureParams {
        CurvatureParams::new(k, n).unwrap()
    }

    fn one_plus_abs(m: usize) -> GridDensity {
        GridDensity::from_fn(-1.0, 1.0, m, |x| 1.0 + x.abs()).unwrap()
    }

    #[test]
    fn grid_density_rejects_bad_input() {
        assert!(GridDensity::new(1.0, 0.0, vec![1.0, 1.0]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![1.0]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![1.0, -0.5]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn interpolation_and_integrals() {
        let h = GridDensity::new(0.0, 2.0, vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(h.eval(0.5), 1.0);
        assert_eq!(h.eval(3.0), 0.0);
        assert_abs_diff_eq!(h.integral(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.integral_over(0.0, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.integral_over(0.5, 1.5), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.integral_over(-4.0, 0.5), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn model_density_examples() {
        let flat = model_density(params(0.0, 2.0), (0.0, 1.0), 1.0, 0.0).unwrap();
        assert_eq!(sample_model(&flat, 5).unwrap().values(), &[1.0; 5]);

        let cos = model_density(params(1.0, 2.0), (-PI / 2.0, PI / 2.0), 0.0, 1.0).unwrap();
        for &x in &[-1.0, 0.0, 0.3, 1.2] {
            assert_abs_diff_eq!(cos.eval(x), f64::cos(x), epsilon = 1e-14);
        }
        let s = sample_model(&cos, 3).unwrap();
        assert_abs_diff_eq!(s.values()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values()[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values()[2], 0.0, epsilon = 1e-15);

        let affine = model_density(params(0.0, 3.0), (0.0, 1.0), 0.0, 1.0).unwrap();
        let s = sample_model(&affine, 3).unwrap();
        assert_eq!(s.values(), &[0.0, 0.25, 1.0]);

        assert!(matches!(
            model_density(params(1.0, 2.0), (0.0, 4.0), 0.0, 1.0),
            Err(Error::DiameterExceeded { .. })
        ));
        assert!(matches!(
            model_density(params(0.0, 2.0), (0.0, 1.0), 1.0, -2.0),
            Err(Error::ModelSignChange { .. })
        ));
    }

    #[test]
    fn constant_density_is_cd_with_equality() {
        let h = GridDensity::new(0.0, 1.0, vec![1.0; 33]).unwrap();
        for n in [1.5, 2.0, 7.0] {
            let r = classify(&h, &ConditionSpec::cd(0.0, n).unwrap(), &ClassifyOptions::default()).unwrap();
            assert!(r.passed);
            assert_abs_diff_eq!(r.worst_violation, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_plus_abs_is_not_cd_but_is_qcd2() {
        let h = one_plus_abs(41);
        let r = classify(&h, &ConditionSpec::cd(0.0, 2.0).unwrap(), &ClassifyOptions::default()).unwrap();
        assert!(!r.passed);
        // the endpoint chord at t = 1/2 gives h(0) = 1 against 2
        assert_abs_diff_eq!(r.worst_violation, -1.0, epsilon = 1e-9);
        assert_eq!(r.witness.x0.abs(), 1.0);
        assert_eq!(r.witness.x1, -r.witness.x0);
        assert_abs_diff_eq!(r.witness.t, 0.5, epsilon = 1e-12);

        let r = classify(&h, &ConditionSpec::qcd(2.0, 0.0, 2.0).unwrap(), &ClassifyOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn oversized_support_fails_with_diagnostic() {
        let h = GridDensity::new(0.0, 4.0, vec![1.0; 9]).unwrap();
        let r = classify(&h, &ConditionSpec::cd(1.0, 2.0).unwrap(), &ClassifyOptions::default()).unwrap();
        assert!(!r.passed);
        assert!(r.diagnostic.unwrap().contains("diameter"));
    }

    #[test]
    fn interior_zero_is_rejected_for_qcd() {
        let h = GridDensity::from_fn(0.0, 1.0, 101, |x| (x - 0.5).abs()).unwrap();
        assert!(classify(&h, &ConditionSpec::qcd(2.0, 0.0, 2.0).unwrap(), &ClassifyOptions::default()).is_err());
        let r = classify(&h, &ConditionSpec::cd(0.0, 2.0).unwrap(), &ClassifyOptions::default()).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn q_below_one_rejected() {
        assert!(ConditionSpec::qcd(0.5, 0.0, 2.0).is_err());
        assert!(ConditionSpec::cgtd(0.0, 3.0, 4.0).is_err());
    }

    #[test]
    fn model_densities_pass_cd() {
        let cases = [
            (1.0, 2.0, (-PI / 2.0, PI / 2.0), 0.0, 1.0),
            (0.0, 3.0, (0.0, 1.0), 0.2, 1.0),
            (-1.0, 4.0, (0.0, 2.0), 1.0, -0.3),
            (2.0, 5.0, (0.0, 3.0), 0.5, 0.4),
        ];
        for (k, n, sup, u0, s0) in cases {
            let m = model_density(params(k, n), sup, u0, s0).unwrap();
            let h = sample_model(&m, 65).unwrap();
            let r = classify(&h, &ConditionSpec::cd(k, n).unwrap(), &ClassifyOptions::default()).unwrap();
            assert!(r.passed, "K={k} N={n}: {r:?}");
        }
    }

    #[test]
    fn cgtd_endpoints_recover_cd_and_mcp() {
        let h = one_plus_abs(21);
        let opts = ClassifyOptions::default();
        let cd = classify(&h, &ConditionSpec::cd(0.0, 3.0).unwrap(), &opts).unwrap();
        let cgtd_nn = classify(&h, &ConditionSpec::cgtd(0.0, 3.0, 3.0).unwrap(), &opts).unwrap();
        assert_abs_diff_eq!(cd.worst_violation, cgtd_nn.worst_violation, epsilon = 1e-12);
        let mcp = classify(&h, &ConditionSpec::mcp(0.0, 3.0).unwrap(), &opts).unwrap();
        let cgtd_1 = classify(&h, &ConditionSpec::cgtd(0.0, 3.0, 1.0).unwrap(), &opts).unwrap();
        assert!(cgtd_1.worst_violation <= mcp.worst_violation + 1e-12);
    }
}
