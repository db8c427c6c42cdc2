//! The smallest CD(K,N) density above a given density, and the resulting
//! quasi-convexity order `Q = sup f/h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{max_diameter, s_kappa, sigma_weight, CurvatureParams, ExtReal};
use crate::density::GridDensity;
use crate::error::{Error, Result};

/// Ratios `f/h` are only taken where `h > RATIO_FLOOR · max h`.
pub const RATIO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub envelope: GridDensity,
    pub q_order: f64,
    /// Minimum over the ratio set of `min(Q h - f, f - h)`.
    pub sandwich_margin: f64,
}

/// The chord expression through `(x0, h(x0))` and `(x1, h(x1))` evaluated at `x`.
pub fn chord_value(h: &GridDensity, params: CurvatureParams, x: f64, x0: f64, x1: f64) -> Result<ExtReal> {
    let (x0, x1) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
    if !(x >= x0 && x <= x1) {
        return Err(Error::param("x", format!("{x} is not between {x0} and {x1}")));
    }
    if x1 == x0 || x == x0 {
        return Ok(ExtReal::finite(h.eval(x0)));
    }
    if x == x1 {
        return Ok(ExtReal::finite(h.eval(x1)));
    }
    let e = 1.0 / (params.dimension - 1.0);
    let (v0, v1) = (h.eval(x0).powf(e), h.eval(x1).powf(e));
    let d = x1 - x0;
    let t = (x - x0) / d;
    let (s0, s1) = (sigma_weight(1.0 - t, d, params), sigma_weight(t, d, params));
    let v = s0.mul(v0) + s1.mul(v1);
    if v.is_infinite() {
        return Ok(ExtReal::INFINITY);
    }
    Ok(ExtReal::finite(v.powf(params.dimension - 1.0)))
}

/// Grid sup over chords straddling each node, then `Q` and the sandwich margin.
pub fn cd_upper_envelope(h: &GridDensity, params: CurvatureParams) -> Result<EnvelopeResult> {
    let (lo, hi) = h
        .support_indices()
        .ok_or_else(|| Error::InvalidDensity("density vanishes identically".into()))?;
    let delta = h.spacing();
    let dmax = max_diameter(params);
    let diam = h.x(hi) - h.x(lo);
    if dmax.is_finite() && diam >= dmax.value() {
        return Err(Error::DiameterExceeded {
            diameter: diam,
            max_diameter: dmax.value(),
        });
    }
    let e = 1.0 / (params.dimension - 1.0);
    let kappa = params.kappa();
    let v: Vec<f64> = h.values().iter().map(|&x| x.powf(e)).collect();
    // S[m] = s_κ(m δ); all positive since the support is shorter than D.
    let span = hi - lo;
    let s: Vec<f64> = (0..=span).map(|m| s_kappa(kappa, m as f64 * delta)).collect();

    let env_v: Vec<f64> = (0..h.len())
        .into_par_iter()
        .map(|k| {
            if k < lo || k > hi {
                return 0.0;
            }
            let mut best = v[k];
            for i in lo..k {
                for j in k + 1..=hi {
                    let w = (s[j - k] * v[i] + s[k - i] * v[j]) / s[j - i];
                    if w > best {
                        best = w;
                    }
                }
            }
            best
        })
        .collect();

    let values: Vec<f64> = env_v.iter().map(|&w| w.powf(params.dimension - 1.0)).collect();
    let hmax = h.max_value();
    let holes = h.interior_zero().is_some();
    let mut q: f64 = 1.0;
    for (k, (&f, &hk)) in values.iter().zip(h.values()).enumerate() {
        if holes && hk == 0.0 && f > 0.0 && k > lo && k < hi {
            return Err(Error::UnboundedOrder { x: h.x(k) });
        }
        if hk > RATIO_FLOOR * hmax {
            q = q.max(f / hk);
        }
    }
    let margin = values
        .iter()
        .zip(h.values())
        .filter(|(_, &hk)| hk > RATIO_FLOOR * hmax)
        .map(|(&f, &hk)| (q * hk - f).min(f - hk))
        .fold(f64::INFINITY, f64::min);
    let (a, b) = h.support();
    Ok(EnvelopeResult {
        envelope: GridDensity::new(a, b, values)?,
        q_order: q,
        sandwich_margin: margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{classify, model_density, sample_model, ClassifyOptions, ConditionSpec};
    use approx::assert_abs_diff_eq;

    fn p(k: f64, n: f64) -> CurvatureParams {
        CurvatureParams::new(k, n).unwrap()
    }

    #[test]
    fn chord_examples() {
        let one = GridDensity::new(0.0, 1.0, vec![1.0; 11]).unwrap();
        assert_abs_diff_eq!(chord_value(&one, p(0.0, 3.0), 0.3, 0.1, 0.9).unwrap().value(), 1.0, epsilon = 1e-14);
        let h = GridDensity::from_fn(-1.0, 1.0, 41, |x| 1.0 + x.abs()).unwrap();
        assert_abs_diff_eq!(chord_value(&h, p(0.0, 2.0), 0.0, -1.0, 1.0).unwrap().value(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(chord_value(&h, p(0.0, 2.0), 0.5, 0.5, 0.5).unwrap().value(), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn chord_longer_than_diameter_is_infinite() {
        let h = GridDensity::new(0.0, 4.0, vec![1.0; 9]).unwrap();
        assert!(chord_value(&h, p(1.0, 2.0), 2.0, 0.0, 4.0).unwrap().is_infinite());
    }

    #[test]
    fn constant_is_fixed_point() {
        let h = GridDensity::new(0.0, 1.0, vec![3.0; 50]).unwrap();
        let r = cd_upper_envelope(&h, p(0.0, 4.0)).unwrap();
        assert_abs_diff_eq!(r.q_order, 1.0, epsilon = 1e-12);
        for &f in r.envelope.values() {
            assert_abs_diff_eq!(f, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_plus_abs_has_order_two() {
        let h = GridDensity::from_fn(-1.0, 1.0, 101, |x| 1.0 + x.abs()).unwrap();
        let r = cd_upper_envelope(&h, p(0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(r.q_order, 2.0, epsilon = 1e-12);
        for &f in r.envelope.values() {
            assert_abs_diff_eq!(f, 2.0, epsilon = 1e-12);
        }
        assert!(r.sandwich_margin >= -1e-12);
    }

    #[test]
    fn model_densities_are_their_own_envelope() {
        for (k, n, sup, u0, s0) in [(1.0, 3.0, (0.0, 3.0), 0.0, 1.0), (-2.0, 2.5, (0.0, 1.0), 1.0, -0.5)] {
            let m = model_density(p(k, n), sup, u0, s0).unwrap();
            let h = sample_model(&m, 129).unwrap();
            let r = cd_upper_envelope(&h, p(k, n)).unwrap();
            assert!((r.q_order - 1.0).abs() < 1e-3, "K={k}: {}", r.q_order);
        }
    }

    #[test]
    fn envelope_passes_cd_and_is_idempotent() {
        let h = GridDensity::from_fn(0.0, 2.0, 81, |x| 1.0 + 0.5 * (5.0 * x).sin()).unwrap();
        let params = p(0.5, 3.0);
        let r = cd_upper_envelope(&h, params).unwrap();
        let c = classify(&r.envelope, &ConditionSpec::cd(0.5, 3.0).unwrap(), &ClassifyOptions::default()).unwrap();
        assert!(c.passed, "{c:?}");
        let again = cd_upper_envelope(&r.envelope, params).unwrap();
        assert!(again.q_order <= 1.0 + 1e-8, "{}", again.q_order);
    }

    #[test]
    fn interior_zero_has_no_finite_order() {
        let h = GridDensity::from_fn(0.0, 1.0, 51, |x| (x - 0.5).abs()).unwrap();
        assert!(matches!(cd_upper_envelope(&h, p(0.0, 2.0)), Err(Error::UnboundedOrder { .. })));
    }
}
