//! Wasserstein geodesics on the line by monotone rearrangement, and pointwise
//! checks of the interpolation inequalities along them.
//!
//! Measures are `μ = ρ h dx` with `h` a piecewise-linear reference density.
//! Cumulative functions are integrated exactly (the Lebesgue density is at
//! most quadratic between breakpoints), and geodesics are represented by
//! transporting probability cells, so every interpolant has exact mass.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{sigma_weight, ExtReal};
use crate::density::{ClassificationReport, ConditionKind, ConditionSpec, GridDensity, Witness};
use crate::error::{Error, Result};

/// Uniform probability levels used for the quantile grid.
pub const QUANTILE_LEVELS: usize = 4096;

/// Samples with `ρ0 < RHO_FLOOR · max ρ0` are not checked.
pub const RHO_FLOOR: f64 = 1e-8;

const BISECTION_STEPS: usize = 80;

/// Probability levels closer than this are treated as equal.
const LEVEL_EPS: f64 = 1e-13;

/// An interval carrying a share of the total mass, spread uniformly with
/// respect to the reference measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// A piece of a piecewise-constant Lebesgue density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelativeDensity {
    /// `ρ` sampled on its own grid.
    Sampled(GridDensity),
    /// `ρ = mass_i / m(block_i)` on each block (overlaps add up).
    Blocks(Vec<Block>),
    /// Disjoint sorted cells of constant Lebesgue density `ρ h`.
    Cells(Vec<Cell>),
}

/// A probability measure `ρ · h dx` on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure1D {
    reference: GridDensity,
    rel: RelativeDensity,
    /// Multiplier making the total mass one.
    scale: f64,
    breaks: Vec<f64>,
    cum: Vec<f64>,
}

impl Measure1D {
    /// `ρ · h` for a sampled relative density, normalized to unit mass.
    pub fn new(reference: GridDensity, rel_density: GridDensity) -> Result<Self> {
        Self::build(reference, RelativeDensity::Sampled(rel_density))
    }

    /// Uniform (with respect to the reference) blocks with the given masses.
    pub fn from_blocks(reference: GridDensity, blocks: &[Block]) -> Result<Self> {
        let (a, b) = reference.support();
        let mut out = Vec::with_capacity(blocks.len());
        for blk in blocks {
            if !(blk.hi > blk.lo) || !(blk.mass >= 0.0) || !blk.mass.is_finite() {
                return Err(Error::InvalidDensity(format!("bad block {blk:?}")));
            }
            if blk.lo < a - 1e-12 || blk.hi > b + 1e-12 {
                return Err(Error::InvalidDensity(format!("block {blk:?} leaves the reference support")));
            }
            let m = reference.integral_over(blk.lo, blk.hi);
            if blk.mass > 0.0 && m <= 0.0 {
                return Err(Error::InvalidDensity(format!("block {blk:?} has zero reference mass")));
            }
            out.push(Block {
                lo: blk.lo.max(a),
                hi: blk.hi.min(b),
                mass: if blk.mass > 0.0 { blk.mass / m } else { 0.0 },
            });
        }
        Self::build(reference, RelativeDensity::Blocks(out))
    }

    /// A measure given directly by a piecewise-constant Lebesgue density.
    pub fn from_cells(reference: GridDensity, cells: Vec<Cell>) -> Result<Self> {
        for w in cells.windows(2) {
            if w[1].lo < w[0].hi - 1e-12 * (1.0 + w[0].hi.abs()) {
                return Err(Error::InvalidDensity("cells must be sorted and disjoint".into()));
            }
        }
        Self::build(reference, RelativeDensity::Cells(cells))
    }

    /// One uniform block of unit mass.
    pub fn uniform(reference: GridDensity, lo: f64, hi: f64) -> Result<Self> {
        Self::from_blocks(reference, &[Block { lo, hi, mass: 1.0 }])
    }

    fn build(reference: GridDensity, rel: RelativeDensity) -> Result<Self> {
        let (a, b) = reference.support();
        let mut breaks: Vec<f64> = (0..reference.len()).map(|i| reference.x(i)).collect();
        match &rel {
            RelativeDensity::Sampled(g) => breaks.extend((0..g.len()).map(|i| g.x(i))),
            RelativeDensity::Blocks(bs) => breaks.extend(bs.iter().flat_map(|b| [b.lo, b.hi])),
            RelativeDensity::Cells(cs) => breaks.extend(cs.iter().flat_map(|c| [c.lo, c.hi])),
        }
        breaks.retain(|&x| x >= a && x <= b);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
        let mut m = Self {
            reference,
            rel,
            scale: 1.0,
            breaks,
            cum: Vec::new(),
        };
        let mut cum = Vec::with_capacity(m.breaks.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in m.breaks.windows(2) {
            acc += m.piece_integral(w[0], w[1]);
            cum.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::InvalidDensity("measure has zero mass".into()));
        }
        m.scale = 1.0 / acc;
        for c in &mut cum {
            *c /= acc;
        }
        m.cum = cum;
        Ok(m)
    }

    pub fn reference(&self) -> &GridDensity {
        &self.reference
    }

    pub fn relative(&self) -> &RelativeDensity {
        &self.rel
    }

    /// Unnormalized Lebesgue density.
    fn raw_lebesgue(&self, x: f64) -> f64 {
        match &self.rel {
            RelativeDensity::Sampled(g) => g.eval(x) * self.reference.eval(x),
            RelativeDensity::Blocks(bs) => {
                let r: f64 = bs.iter().filter(|b| x >= b.lo && x < b.hi).map(|b| b.mass).sum();
                if r == 0.0 {
                    0.0
                } else {
                    r * self.reference.eval(x)
                }
            }
            RelativeDensity::Cells(cs) => {
                let i = cs.partition_point(|c| c.hi <= x);
                match cs.get(i) {
                    Some(c) if x >= c.lo => c.density,
                    _ => 0.0,
                }
            }
        }
    }

    /// Lebesgue density `ρ h` of the normalized measure.
    pub fn lebesgue_density(&self, x: f64) -> f64 {
        self.scale * self.raw_lebesgue(x)
    }

    /// Relative density `ρ` (zero where the reference vanishes).
    pub fn rho(&self, x: f64) -> f64 {
        let h = self.reference.eval(x);
        if h > 0.0 {
            self.lebesgue_density(x) / h
        } else {
            0.0
        }
    }

    /// Two-point Gauss rule, exact for the quadratic pieces between breakpoints.
    fn piece_integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let off = half / 3f64.sqrt();
        half * (self.raw_lebesgue(mid - off) + self.raw_lebesgue(mid + off))
    }

    /// Total mass (one up to rounding).
    pub fn mass(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.breaks[0] {
            return 0.0;
        }
        let n = self.breaks.len();
        if x >= self.breaks[n - 1] {
            return self.cum[n - 1];
        }
        let k = self.breaks.partition_point(|&b| b <= x) - 1;
        self.cum[k] + self.scale * self.piece_integral(self.breaks[k], x)
    }

    /// Mass of `[lo, hi]`.
    pub fn mass_of(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    fn solve_in_piece(&self, k: usize, p: f64, leftmost: bool) -> f64 {
        let (mut lo, mut hi) = (self.breaks[k], self.breaks[k + 1]);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f = self.cum[k] + self.scale * self.piece_integral(self.breaks[k], mid);
            let go_left = if leftmost { f >= p } else { f > p };
            if go_left {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if leftmost {
            hi
        } else {
            lo
        }
    }

    /// `inf {x : F(x) ≥ p}` (the end of the support for `p ≥ 1`).
    pub fn quantile_left(&self, p: f64) -> f64 {
        let n = self.breaks.len();
        let p = p.min(self.cum[n - 1]);
        let first = self.cum.partition_point(|&c| c <= 0.0);
        if p <= 0.0 {
            return self.breaks[first.saturating_sub(1)];
        }
        // first piece whose right end reaches p
        let k = self.cum.partition_point(|&c| c < p - LEVEL_EPS).max(1) - 1;
        self.solve_in_piece(k.min(n - 2), p, true)
    }

    /// `sup {x : F(x) ≤ p}` (the start of the support for `p ≤ 0`).
    pub fn quantile_right(&self, p: f64) -> f64 {
        let n = self.breaks.len();
        let total = self.cum[n - 1];
        if p >= total {
            let last = self.cum.partition_point(|&c| c < total);
            return self.breaks[last.min(n - 1)];
        }
        let p = p.max(0.0);
        // last piece whose left end is at most p
        let k = self.cum.partition_point(|&c| c <= p + LEVEL_EPS).max(1) - 1;
        self.solve_in_piece(k.min(n - 2), p, false)
    }

    /// CDF values at breakpoints, as candidate quantile levels.
    fn break_levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.cum.iter().copied()
    }
}

/// A sampled monotone map on the reference grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMap {
    pub x: Vec<f64>,
    pub image: Vec<f64>,
}

/// Quantile cells shared by a pair of measures.
struct Coupling {
    /// `(p, Δp, a0, b0, a1, b1)`: the probability in `[p, p + Δp]` moves from
    /// `[a0, b0]` to `[a1, b1]`.
    cells: Vec<(f64, f64, f64, f64, f64, f64)>,
}

impl Coupling {
    fn new(mu0: &Measure1D, mu1: &Measure1D) -> Result<Self> {
        if mu0.reference != mu1.reference {
            return Err(Error::param("mu1", "both measures must share the same reference density"));
        }
        let mut levels: Vec<f64> = (0..=QUANTILE_LEVELS).map(|l| l as f64 / QUANTILE_LEVELS as f64).collect();
        levels.extend(mu0.break_levels().chain(mu1.break_levels()).filter(|&p| p > 0.0 && p < 1.0));
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);
        let cells = levels
            .par_windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                (
                    w[0],
                    w[1] - w[0],
                    mu0.quantile_right(w[0]),
                    mu0.quantile_left(w[1]),
                    mu1.quantile_right(w[0]),
                    mu1.quantile_left(w[1]),
                )
            })
            .collect();
        Ok(Self { cells })
    }

    fn cells_at(&self, t: f64) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::with_capacity(self.cells.len());
        for &(_, dp, a0, b0, a1, b1) in &self.cells {
            let lo = (1.0 - t) * a0 + t * a1;
            let hi = ((1.0 - t) * b0 + t * b1).max(lo);
            let lo = out.last().map_or(lo, |c| lo.max(c.hi));
            if hi > lo {
                out.push(Cell {
                    lo,
                    hi,
                    density: dp / (hi - lo),
                });
            } else if let Some(c) = out.last_mut() {
                // a numerically empty cell: keep its mass with the neighbour
                c.density += dp / (c.hi - c.lo);
            }
        }
        out
    }
}

/// `T = G⁻¹ ∘ F`, sampled at the reference grid nodes.
pub fn monotone_map(mu0: &Measure1D, mu1: &Measure1D) -> Result<MonotoneMap> {
    if mu0.reference != mu1.reference {
        return Err(Error::param("mu1", "both measures must share the same reference density"));
    }
    let r = &mu0.reference;
    let x: Vec<f64> = (0..r.len()).map(|i| r.x(i)).collect();
    let image = x.iter().map(|&xi| mu1.quantile_left(mu0.cdf(xi))).collect();
    Ok(MonotoneMap { x, image })
}

/// Time-`t` marginal of the Wasserstein geodesic from `μ0` to `μ1`.
#[derive(Debug, Clone)]
pub struct DisplacementPath {
    pub t: f64,
    /// `T_1(x_i)` at the reference grid nodes.
    pub map_samples: Vec<f64>,
    /// `J_t(x_i) = (1-t) + t T_1'(x_i)`; not meaningful where `ρ0 = 0`.
    pub jacobian_samples: Vec<f64>,
    /// `ρ_t` sampled at the reference grid nodes.
    pub rho_t: GridDensity,
    /// The exact cell representation of `μ_t`.
    pub measure: Measure1D,
}

pub fn displacement_interpolation(mu0: &Measure1D, mu1: &Measure1D, t: f64) -> Result<DisplacementPath> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param("t", format!("must lie in [0, 1], got {t}")));
    }
    let coupling = Coupling::new(mu0, mu1)?;
    let reference = mu0.reference.clone();
    let measure = Measure1D::from_cells(reference.clone(), coupling.cells_at(t))?;
    let map = monotone_map(mu0, mu1)?;
    let jacobian_samples = map
        .x
        .iter()
        .zip(&map.image)
        .map(|(&x0, &x1)| {
            let g1 = mu1.lebesgue_density(x1);
            let j1 = if g1 > 0.0 { mu0.lebesgue_density(x0) / g1 } else { f64::INFINITY };
            (1.0 - t) + t * j1
        })
        .collect();
    let (a, b) = reference.support();
    let rho_values = (0..reference.len()).map(|i| measure.rho(reference.x(i))).collect();
    Ok(DisplacementPath {
        t,
        map_samples: map.image,
        jacobian_samples,
        rho_t: GridDensity::new(a, b, rho_values)?,
        measure,
    })
}

type Coefficient = Arc<dyn Fn(f64, f64) -> ExtReal + Send + Sync>;

/// The coefficient pair `(σ0, σ1)` and dimension `N` of an interpolation inequality.
/// Each coefficient maps `(t, θ)` to `σ^{(t)}(θ)`.
#[derive(Clone)]
pub struct InterpolationWeights {
    pub sigma0: Coefficient,
    pub sigma1: Coefficient,
    pub dimension: f64,
}

impl std::fmt::Debug for InterpolationWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InterpolationWeights").field("dimension", &self.dimension).finish_non_exhaustive()
    }
}

impl InterpolationWeights {
    pub fn new(sigma0: Coefficient, sigma1: Coefficient, dimension: f64) -> Result<Self> {
        if !(dimension > 1.0) {
            return Err(Error::param("N", "must be > 1"));
        }
        Ok(Self {
            sigma0,
            sigma1,
            dimension,
        })
    }

    /// CD and QCD use `Q^{-1/(N-1)} σ_{K,N-1}` on both sides (`Q = 1` for CD);
    /// MCP drops the second coefficient.
    pub fn from_condition(spec: &ConditionSpec) -> Result<Self> {
        let params = spec.params;
        let n = params.dimension;
        let factor = spec.q_order.powf(-1.0 / (n - 1.0));
        let scaled: Coefficient = Arc::new(move |t, theta| {
            let s = sigma_weight(t, theta, params);
            if s.is_infinite() {
                s
            } else {
                ExtReal::finite(factor * s.value())
            }
        });
        match spec.kind {
            ConditionKind::Cd | ConditionKind::Qcd => Self::new(scaled.clone(), scaled, n),
            ConditionKind::Mcp => Self::new(scaled, Arc::new(|_, _| ExtReal::ZERO), n),
            ConditionKind::Cgtd => Err(Error::Unsupported(
                "CGTD has no two-coefficient interpolation form".into(),
            )),
        }
    }
}

/// Options for [`verify_interpolation`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub t_grid: Vec<f64>,
    /// Relative slack tolerance.
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            t_grid: (1..10).map(|i| i as f64 / 10.0).collect(),
            tol: 1e-9,
        }
    }
}

/// Checks `ρ_t^{-1/N}(x_t) ≥ (1-t)^{1/N} σ0^{(1-t)}(d)^{(N-1)/N} ρ0^{-1/N}(x0)
/// + t^{1/N} σ1^{(t)}(d)^{(N-1)/N} ρ1^{-1/N}(x1)` at the centre of every
/// quantile cell. Slacks are divided by `max(1, lhs, rhs)`.
pub fn verify_interpolation(
    mu0: &Measure1D,
    mu1: &Measure1D,
    weights: &InterpolationWeights,
    opts: &VerifyOptions,
) -> Result<ClassificationReport> {
    if let Some(&t) = opts.t_grid.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::param("t_grid", format!("times must lie in (0, 1), got {t}")));
    }
    let coupling = Coupling::new(mu0, mu1)?;
    let h = &mu0.reference;
    let n = weights.dimension;
    let samples: Vec<(f64, f64, f64, f64)> = coupling
        .cells
        .par_iter()
        .map(|&(p, dp, a0, b0, a1, b1)| {
            let p = p + 0.5 * dp;
            let x0 = if b0 > a0 { mu0.quantile_left(p).clamp(a0, b0) } else { a0 };
            let x1 = if b1 > a1 { mu1.quantile_left(p).clamp(a1, b1) } else { a1 };
            (x0, x1, mu0.rho(x0), mu1.rho(x1))
        })
        .collect();
    let rho_max = samples.iter().map(|s| s.2).fold(0.0, f64::max);
    let floor = RHO_FLOOR * rho_max;

    let (worst, witness, checks) = samples
        .par_iter()
        .filter(|s| s.2 >= floor && s.2 > 0.0)
        .map(|&(x0, x1, r0, r1)| {
            let mut worst = f64::INFINITY;
            let mut witness = Witness { x0, x1, t: 0.5 };
            let d = (x1 - x0).abs();
            let g0 = r0 * h.eval(x0);
            let g1 = r1 * h.eval(x1);
            let j1 = if g1 > 0.0 { g0 / g1 } else { f64::INFINITY };
            for &t in &opts.t_grid {
                let xt = (1.0 - t) * x0 + t * x1;
                let jt = (1.0 - t) + t * j1;
                let ht = h.eval(xt);
                // ρ_t^{-1/N} = (J_t h_t / (ρ0 h0))^{1/N}
                let lhs = if ht > 0.0 { (jt * ht / g0).powf(1.0 / n) } else { 0.0 };
                let s0 = (weights.sigma0)(1.0 - t, d).powf((n - 1.0) / n);
                let s1 = (weights.sigma1)(t, d).powf((n - 1.0) / n);
                let term0 = s0.mul((1.0 - t).powf(1.0 / n) * r0.powf(-1.0 / n));
                let term1 = if r1 > 0.0 { s1.mul(t.powf(1.0 / n) * r1.powf(-1.0 / n)) } else if s1.value() == 0.0 { 0.0 } else { f64::INFINITY };
                let rhs = term0 + term1;
                let slack = if rhs.is_infinite() {
                    f64::NEG_INFINITY
                } else {
                    (lhs - rhs) / lhs.max(rhs).max(1.0)
                };
                if slack < worst {
                    worst = slack;
                    witness = Witness { x0, x1, t };
                }
            }
            (worst, witness, opts.t_grid.len() as u64)
        })
        .reduce(
            || (f64::INFINITY, Witness { x0: 0.0, x1: 0.0, t: 0.5 }, 0),
            |a, b| {
                let c = a.2 + b.2;
                if b.0 < a.0 {
                    (b.0, b.1, c)
                } else {
                    (a.0, a.1, c)
                }
            },
        );
    Ok(ClassificationReport {
        passed: worst >= -opts.tol,
        worst_violation: worst,
        witness,
        checks_performed: checks,
        tolerance: opts.tol,
        diagnostic: Some("checked at quantile-cell centres; null sets are invisible to the grid".into()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiBmReport {
    /// `Z_t(A, B) = (1-t) A + t B`.
    pub z: (f64, f64),
    pub mass_a: f64,
    pub mass_b: f64,
    pub mass_z: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
}

/// `m(Z_t)^{1/N} ≥ Q^{-1/N} ((1-t) m(A)^{1/N} + t m(B)^{1/N})` for intervals `A`, `B`.
pub fn quasi_bm_1d(
    reference: &GridDensity,
    a: (f64, f64),
    b: (f64, f64),
    t: f64,
    q: f64,
    n: f64,
) -> Result<QuasiBmReport> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param("t", "must lie in [0, 1]"));
    }
    if !(q >= 1.0) || !(n > 1.0) {
        return Err(Error::param("Q", "need Q >= 1 and N > 1"));
    }
    if !(a.1 >= a.0) || !(b.1 >= b.0) {
        return Err(Error::param("A", "intervals must satisfy lo <= hi"));
    }
    let z = ((1.0 - t) * a.0 + t * b.0, (1.0 - t) * a.1 + t * b.1);
    let mass_a = reference.integral_over(a.0, a.1);
    let mass_b = reference.integral_over(b.0, b.1);
    let mass_z = reference.integral_over(z.0, z.1);
    let lhs = mass_z.powf(1.0 / n);
    let rhs = q.powf(-1.0 / n) * ((1.0 - t) * mass_a.powf(1.0 / n) + t * mass_b.powf(1.0 / n));
    let slack = lhs - rhs;
    Ok(QuasiBmReport {
        z,
        mass_a,
        mass_b,
        mass_z,
        lhs,
        rhs,
        slack,
        passed: slack >= -1e-12 * (1.0 + rhs),
    })
}
