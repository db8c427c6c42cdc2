//! Planar demonstrator of L¹ localization: exact discrete transport between
//! `g₊ m` and `g₋ m`, the Kantorovich potential, transport rays, and the
//! needle decomposition with its balance and concavity properties.
//!
//! Everything here is Euclidean and discrete. Cells are clustered into atoms
//! by grid coarsening, the atoms are matched by a transportation simplex, and
//! the potential is extended to the whole plane by
//! `u(x) = min_j (|x - y_j| + u(y_j))` over sink atoms `y_j`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{classify, ClassifyOptions, ConditionSpec, GridDensity};
use crate::error::{Error, Result};

/// A rectangular grid of cells on `[0, width] × [0, height]` with a weight
/// (cell measure) and a value of `g` per cell, stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarInstance {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    weights: Vec<f64>,
    g: Vec<f64>,
}

impl PlanarInstance {
    /// Lebesgue cell weights.
    pub fn new(nx: usize, ny: usize, width: f64, height: f64, g: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("grid", "needs at least one cell in each direction"));
        }
        let area = width * height / (nx * ny) as f64;
        Self::with_weights(nx, ny, width, height, vec![area; nx * ny], g)
    }

    pub fn with_weights(nx: usize, ny: usize, width: f64, height: f64, weights: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("grid", "needs at least one cell in each direction"));
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::param("grid", "width and height must be > 0"));
        }
        if weights.len() != nx * ny || g.len() != nx * ny {
            return Err(Error::param("g", format!("expected {} cell values", nx * ny)));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("weights", "cell weights must be finite and >= 0"));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("g", "values must be finite"));
        }
        let positive: f64 = g.iter().zip(&weights).map(|(v, w)| v.max(0.0) * w).sum();
        let negative: f64 = g.iter().zip(&weights).map(|(v, w)| (-v).max(0.0) * w).sum();
        if (positive - negative).abs() > 1e-10 * positive.max(negative).max(1.0) {
            return Err(Error::Unbalanced { positive, negative });
        }
        Ok(Self {
            nx,
            ny,
            width,
            height,
            weights,
            g,
        })
    }

    /// Builds `g` from its values at cell centres.
    pub fn from_fn(nx: usize, ny: usize, width: f64, height: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (dx, dy) = (width / nx as f64, height / ny as f64);
        let g = (0..nx * ny)
            .map(|k| f((((k % nx) as f64) + 0.5) * dx, (((k / nx) as f64) + 0.5) * dy))
            .collect();
        Self::new(nx, ny, width, height, g)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (self.width / self.nx as f64, self.height / self.ny as f64)
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let (dx, dy) = self.cell_size();
        [((k % self.nx) as f64 + 0.5) * dx, ((k / self.nx) as f64 + 0.5) * dy]
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        let eps = 1e-12 * (self.width + self.height);
        p[0] >= -eps && p[0] <= self.width + eps && p[1] >= -eps && p[1] <= self.height + eps
    }
}

/// A point mass: the `g₊ m` or `g₋ m` mass of one coarsening block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: [f64; 2],
    pub mass: f64,
    /// Cell indices the atom was clustered from.
    pub cells: Vec<usize>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Clusters `g₊ m` and `g₋ m` into at most `cap` atoms each by coarsening the
/// grid into `f × f` blocks, for the smallest sufficient `f`.
pub fn cluster(instance: &PlanarInstance, cap: usize) -> Result<(Vec<Atom>, Vec<Atom>, usize)> {
    if cap == 0 {
        return Err(Error::param("atom_cap", "must be >= 1"));
    }
    let max_factor = instance.nx.max(instance.ny);
    let mut last = 0;
    for f in 1..=max_factor {
        let src = coarsen(instance, f, 1.0);
        let snk = coarsen(instance, f, -1.0);
        last = src.len().max(snk.len());
        if last <= cap {
            return Ok((src, snk, f));
        }
    }
    Err(Error::AtomCap {
        atoms: last,
        cap,
        factor: max_factor,
    })
}

fn coarsen(instance: &PlanarInstance, f: usize, sign: f64) -> Vec<Atom> {
    let bx = instance.nx.div_ceil(f);
    let by = instance.ny.div_ceil(f);
    let mut atoms = Vec::new();
    for bj in 0..by {
        for bi in 0..bx {
            let mut mass = 0.0;
            let mut moment = [0.0, 0.0];
            let mut cells = Vec::new();
            for j in bj * f..((bj + 1) * f).min(instance.ny) {
                for i in bi * f..((bi + 1) * f).min(instance.nx) {
                    let k = j * instance.nx + i;
                    let w = (sign * instance.g[k]).max(0.0) * instance.weights[k];
                    if w > 0.0 {
                        let c = instance.center(k);
                        mass += w;
                        moment[0] += w * c[0];
                        moment[1] += w * c[1];
                        cells.push(k);
                    }
                }
            }
            if mass > 0.0 {
                atoms.push(Atom {
                    position: [moment[0] / mass, moment[1] / mass],
                    mass,
                    cells,
                });
            }
        }
    }
    atoms
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub source: usize,
    pub sink: usize,
    pub mass: f64,
}

/// Optimal plan of the transportation problem with cost `|x - y|`, with the
/// dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub sources: Vec<Atom>,
    pub sinks: Vec<Atom>,
    /// Basic flows with positive mass.
    pub flows: Vec<Flow>,
    /// Duals `α_i`, `β_j` with `α_i + β_j ≤ |x_i - y_j|`, equality on the basis.
    pub source_potential: Vec<f64>,
    pub sink_potential: Vec<f64>,
    pub primal_cost: f64,
    pub dual_value: f64,
    /// `|primal - dual|`; zero up to rounding for an optimal basis.
    pub duality_gap: f64,
    /// `max(0, max_ij (α_i + β_j - c_ij))`; zero up to rounding.
    pub dual_infeasibility: f64,
    pub pivots: usize,
}

struct Basis {
    cells: Vec<(usize, usize, f64)>,
    n: usize,
    m: usize,
}

impl Basis {
    /// Adjacency over nodes `0..n` (sources) and `n..n+m` (sinks).
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (e, &(i, j, _)) in self.cells.iter().enumerate() {
            adj[i].push(e);
            adj[self.n + j].push(e);
        }
        adj
    }

    fn potentials(&self, cost: &[f64], adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut pot = vec![f64::NAN; n + m];
        let mut stack = Vec::new();
        for root in 0..n + m {
            if !pot[root].is_nan() {
                continue;
            }
            pot[root] = 0.0;
            stack.push(root);
            while let Some(node) = stack.pop() {
                for &e in &adj[node] {
                    let (i, j, _) = self.cells[e];
                    let other = if node == i { n + j } else { i };
                    if pot[other].is_nan() {
                        pot[other] = cost[i * m + j] - pot[node];
                        stack.push(other);
                    }
                }
            }
        }
        (pot[..n].to_vec(), pot[n..].to_vec())
    }

    /// Basis edges on the tree path from sink node `n + j` to source node `i`.
    fn path(&self, adj: &[Vec<usize>], i: usize, j: usize) -> Vec<usize> {
        let total = self.n + self.m;
        let mut parent_edge = vec![usize::MAX; total];
        let mut seen = vec![false; total];
        let start = self.n + j;
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &e in &adj[node] {
                let (a, b, _) = self.cells[e];
                let other = if node == a { self.n + b } else { a };
                if !seen[other] {
                    seen[other] = true;
                    parent_edge[other] = e;
                    queue.push_back(other);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = i;
        while node != start {
            let e = parent_edge[node];
            edges.push(e);
            let (a, b, _) = self.cells[e];
            node = if node == a { self.n + b } else { a };
        }
        edges.reverse();
        edges
    }
}

/// Exact transportation simplex (north-west corner start, MODI pricing).
pub fn solve_transport(sources: &[Atom], sinks: &[Atom]) -> Result<TransportPlan> {
    let (n, m) = (sources.len(), sinks.len());
    if n == 0 || m == 0 {
        if n + m > 0 {
            let positive = sources.iter().map(|a| a.mass).sum();
            let negative = sinks.iter().map(|a| a.mass).sum();
            return Err(Error::Unbalanced { positive, negative });
        }
        return Ok(TransportPlan {
            sources: Vec::new(),
            sinks: Vec::new(),
            flows: Vec::new(),
            source_potential: Vec::new(),
            sink_potential: Vec::new(),
            primal_cost: 0.0,
            dual_value: 0.0,
            duality_gap: 0.0,
            dual_infeasibility: 0.0,
            pivots: 0,
        });
    }
    let cost: Vec<f64> = (0..n * m)
        .map(|k| dist(sources[k / m].position, sinks[k % m].position))
        .collect();
    let cmax = cost.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut supply: Vec<f64> = sources.iter().map(|a| a.mass).collect();
    let mut demand: Vec<f64> = sinks.iter().map(|a| a.mass).collect();
    let mut cells = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]).max(0.0);
        cells.push((i, j, x));
        supply[i] -= x;
        demand[j] -= x;
        if i == n - 1 && j == m - 1 {
            break;
        } else if i == n - 1 {
            j += 1;
        } else if j == m - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let mut basis = Basis { cells, n, m };

    let max_pivots = 50 * (n + m) * (n + m) + 1000;
    let mut pivots = 0;
    loop {
        let adj = basis.adjacency();
        let (alpha, beta) = basis.potentials(&cost, &adj);
        let mut best = (0.0, usize::MAX);
        for i in 0..n {
            for j in 0..m {
                let r = cost[i * m + j] - alpha[i] - beta[j];
                if r < best.0 {
                    best = (r, i * m + j);
                }
            }
        }
        if best.0 >= -1e-12 * cmax {
            let flows: Vec<Flow> = basis
                .cells
                .iter()
                .filter(|c| c.2 > 0.0)
                .map(|&(source, sink, mass)| Flow { source, sink, mass })
                .collect();
            let primal_cost = flows.iter().map(|f| f.mass * cost[f.source * m + f.sink]).sum::<f64>();
            let dual_value = sources.iter().zip(&alpha).map(|(a, u)| a.mass * u).sum::<f64>()
                + sinks.iter().zip(&beta).map(|(b, v)| b.mass * v).sum::<f64>();
            return Ok(TransportPlan {
                sources: sources.to_vec(),
                sinks: sinks.to_vec(),
                flows,
                duality_gap: (primal_cost - dual_value).abs(),
                dual_infeasibility: (-best.0).max(0.0),
                primal_cost,
                dual_value,
                source_potential: alpha,
                sink_potential: beta,
                pivots,
            });
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::SolverStalled { iterations: pivots });
        }
        let (ei, ej) = (best.1 / m, best.1 % m);
        // Cycle: entering (+), then alternating -, +, ... along the path from sink ej to source ei.
        let path = basis.path(&adj, ei, ej);
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 && basis.cells[e].2 < theta {
                theta = basis.cells[e].2;
                leaving = e;
            }
        }
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis.cells[e].2 -= theta;
            } else {
                basis.cells[e].2 += theta;
            }
        }
        basis.cells[leaving] = (ei, ej, theta);
    }
}

/// `u(x) = min_j (|x - y_j| - β_j)`: the 1-Lipschitz extension of the sink duals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KantorovichPotential {
    sinks: Vec<[f64; 2]>,
    offsets: Vec<f64>,
}

impl KantorovichPotential {
    pub fn from_plan(plan: &TransportPlan) -> Self {
        Self {
            sinks: plan.sinks.iter().map(|a| a.position).collect(),
            offsets: plan.sink_potential.iter().map(|b| -b).collect(),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        if self.sinks.is_empty() {
            return 0.0;
        }
        self.sinks
            .iter()
            .zip(&self.offsets)
            .map(|(y, o)| dist(x, *y) + o)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Plan, potential and cell values of the potential for an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Solution {
    pub plan: TransportPlan,
    pub potential: KantorovichPotential,
    /// `u` at each cell centre.
    pub cell_potential: Vec<f64>,
    pub coarsening: usize,
}

/// L¹ optimal transport from `g₊ m` to `g₋ m` on clustered atoms.
pub fn solve_l1_ot(instance: &PlanarInstance, atom_cap: usize) -> Result<L1Solution> {
    let (sources, sinks, coarsening) = cluster(instance, atom_cap)?;
    let plan = solve_transport(&sources, &sinks)?;
    let potential = KantorovichPotential::from_plan(&plan);
    let cell_potential = (0..instance.g.len())
        .into_par_iter()
        .map(|k| potential.eval(instance.center(k)))
        .collect();
    Ok(L1Solution {
        plan,
        potential,
        cell_potential,
        coarsening,
    })
}

/// A transport ray: `u` decreases at unit rate from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Ray {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }

    pub fn direction(&self) -> [f64; 2] {
        let l = self.length();
        [(self.end[0] - self.start[0]) / l, (self.end[1] - self.start[1]) / l]
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        let e = self.direction();
        [self.start[0] + s * e[0], self.start[1] + s * e[1]]
    }

    /// Arclength of the projection (clamped to the ray) and the distance to it.
    pub fn project(&self, x: [f64; 2]) -> (f64, f64) {
        let e = self.direction();
        let s = ((x[0] - self.start[0]) * e[0] + (x[1] - self.start[1]) * e[1]).clamp(0.0, self.length());
        (s, dist(x, self.point(s)))
    }
}

/// Rays and the atoms excluded as branching points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySet {
    pub rays: Vec<Ray>,
    /// Source atoms sending mass in two non-collinear directions.
    pub branching_atoms: Vec<usize>,
}

/// Chains the plan's segments into maximal collinear rays and extends each
/// ray within the domain as long as `u` stays saturated (`u(a) - u(b) ≥ |a - b| - tol`).
pub fn extract_rays(instance: &PlanarInstance, solution: &L1Solution, tol: f64) -> Result<RaySet> {
    if !(tol >= 0.0) {
        return Err(Error::param("tol", "must be >= 0"));
    }
    let plan = &solution.plan;
    let total: f64 = plan.flows.iter().map(|f| f.mass).sum();
    let (dx, dy) = instance.cell_size();
    let cell = dx.min(dy);
    let angle_tol = 1e-6;
    let line_tol = 1e-9 * (instance.width + instance.height);

    // (angle, offset, s0, s1) per segment, in the line's own coordinates.
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut dirs: Vec<Vec<f64>> = vec![Vec::new(); plan.sources.len()];
    for f in &plan.flows {
        if f.mass <= 1e-12 * total {
            continue;
        }
        let (a, b) = (plan.sources[f.source].position, plan.sinks[f.sink].position);
        let len = dist(a, b);
        if len <= line_tol {
            continue;
        }
        let e = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let angle = e[1].atan2(e[0]);
        let offset = -e[1] * a[0] + e[0] * a[1];
        let s0 = e[0] * a[0] + e[1] * a[1];
        segs.push((angle, offset, s0, s0 + len));
        dirs[f.source].push(angle);
    }
    let branching_atoms = dirs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.iter().any(|a| angle_gap(*a, d[0]) > angle_tol))
        .map(|(i, _)| i)
        .collect();

    segs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)).then(p.2.total_cmp(&q.2)));
    let mut merged: Vec<(f64, f64, f64, f64)> = Vec::new();
    for s in segs {
        if let Some(last) = merged.last_mut() {
            if angle_gap(s.0, last.0) <= angle_tol && (s.1 - last.1).abs() <= line_tol && s.2 <= last.3 + line_tol {
                last.3 = last.3.max(s.3);
                continue;
            }
        }
        merged.push(s);
    }

    let u = &solution.potential;
    let rays = merged
        .par_iter()
        .map(|&(angle, offset, s0, s1)| {
            let e = [angle.cos(), angle.sin()];
            let base = [-e[1] * offset, e[0] * offset];
            let at = |s: f64| [base[0] + s * e[0], base[1] + s * e[1]];
            let step = 0.5 * cell;
            let mut hi = s1;
            let u1 = u.eval(at(s1));
            loop {
                let next = hi + step;
                if !instance.contains(at(next)) || u1 - u.eval(at(next)) < next - s1 - tol {
                    break;
                }
                hi = next;
            }
            hi = extend_to_edge(instance, &at, hi, step, |s| u1 - u.eval(at(s)) >= s - s1 - tol);
            let mut lo = s0;
            let u0 = u.eval(at(s0));
            loop {
                let next = lo - step;
                if !instance.contains(at(next)) || u.eval(at(next)) - u0 < s0 - next - tol {
                    break;
                }
                lo = next;
            }
            lo = -extend_to_edge(instance, &|s: f64| at(-s), -lo, step, |s| u.eval(at(-s)) - u0 >= s0 + s - tol);
            Ray {
                start: at(lo),
                end: at(hi),
            }
        })
        .collect();
    Ok(RaySet { rays, branching_atoms })
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Largest `s ∈ [from, from + step]` inside the domain with `ok(s)`, by bisection.
fn extend_to_edge(
    instance: &PlanarInstance,
    at: &dyn Fn(f64) -> [f64; 2],
    from: f64,
    step: f64,
    ok: impl Fn(f64) -> bool,
) -> f64 {
    let (mut lo, mut hi) = (from, from + step);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if instance.contains(at(mid)) && ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// One needle: the cells of a tube around a ray, projected to arclength bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Needle {
    pub ray: Ray,
    pub bin_width: f64,
    /// `h_q` per bin: projected mass over bin width.
    pub density: Vec<f64>,
    /// Projected `g m` per bin.
    pub g_mass: Vec<f64>,
    pub mass: f64,
    /// `|∫ g m_q|`.
    pub balance_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleDecomposition {
    pub potential: Vec<f64>,
    pub needles: Vec<Needle>,
    /// Measure of cells with `g ≠ 0` assigned to no needle.
    pub uncovered_mass: f64,
    /// `∫ |g| m` over cells assigned to no needle.
    pub off_ray_g_mass: f64,
    /// Measure of all cells assigned to some needle.
    pub covered_mass: f64,
    /// Fraction of covered mass split between equidistant rays.
    pub ambiguous_fraction: f64,
    pub tube_width: f64,
    pub coarsening: usize,
    pub branching_atoms: usize,
}

/// Assigns every cell within `tube_width` of a ray to its nearest ray
/// (splitting ties evenly) and bins mass and `g m` along it. Cells of branching
/// atoms are left out.
pub fn needle_disintegration(
    instance: &PlanarInstance,
    solution: &L1Solution,
    rays: &RaySet,
    tube_width: f64,
) -> Result<NeedleDecomposition> {
    let (dx, dy) = instance.cell_size();
    if !(tube_width >= dx.hypot(dy) * (1.0 - 1e-12)) {
        return Err(Error::param("tube_width", "must be at least one cell diagonal"));
    }
    let cell = dx.min(dy);
    let n_cells = instance.g.len();
    let mut excluded = vec![false; n_cells];
    for &a in &rays.branching_atoms {
        for &k in &solution.plan.sources[a].cells {
            excluded[k] = true;
        }
    }
    let tie = 1e-9 * cell;
    let assignment: Vec<Vec<(usize, f64)>> = (0..n_cells)
        .into_par_iter()
        .map(|k| {
            if excluded[k] || instance.weights[k] == 0.0 {
                return Vec::new();
            }
            let c = instance.center(k);
            let hits: Vec<(usize, f64, f64)> = rays
                .rays
                .iter()
                .enumerate()
                .map(|(r, ray)| {
                    let (s, d) = ray.project(c);
                    (r, s, d)
                })
                .filter(|h| h.2 <= tube_width * (1.0 + 1e-9))
                .collect();
            let Some(best) = hits.iter().map(|h| h.2).reduce(f64::min) else {
                return Vec::new();
            };
            hits.into_iter().filter(|h| h.2 <= best + tie).map(|h| (h.0, h.1)).collect()
        })
        .collect();

    let mut needles: Vec<Needle> = rays
        .rays
        .iter()
        .map(|ray| {
            let bins = (ray.length() / cell).floor() as usize + 1;
            Needle {
                ray: *ray,
                bin_width: cell,
                density: vec![0.0; bins],
                g_mass: vec![0.0; bins],
                mass: 0.0,
                balance_residual: 0.0,
            }
        })
        .collect();
    let (mut uncovered, mut off_g, mut covered, mut ambiguous) = (0.0, 0.0, 0.0, 0.0);
    for (k, hits) in assignment.iter().enumerate() {
        let (w, g) = (instance.weights[k], instance.g[k]);
        if hits.is_empty() {
            if g != 0.0 {
                uncovered += w;
            }
            off_g += g.abs() * w;
            continue;
        }
        covered += w;
        if hits.len() > 1 {
            ambiguous += w;
        }
        let share = 1.0 / hits.len() as f64;
        for &(r, s) in hits {
            let nd = &mut needles[r];
            let b = ((s / cell).floor() as usize).min(nd.density.len() - 1);
            nd.density[b] += share * w;
            nd.g_mass[b] += share * g * w;
            nd.mass += share * w;
        }
    }
    for nd in &mut needles {
        nd.balance_residual = nd.g_mass.iter().sum::<f64>().abs();
        for d in &mut nd.density {
            *d /= nd.bin_width;
        }
    }
    needles.retain(|n| n.mass > 0.0);
    Ok(NeedleDecomposition {
        potential: solution.cell_potential.clone(),
        needles,
        uncovered_mass: uncovered,
        off_ray_g_mass: off_g,
        covered_mass: covered,
        ambiguous_fraction: if covered > 0.0 { ambiguous / covered } else { 0.0 },
        tube_width,
        coarsening: solution.coarsening,
        branching_atoms: rays.branching_atoms.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleTolerances {
    /// Per-needle `|∫ g m_q|` relative to the needle mass.
    pub balance: f64,
    /// `∫ |g| m` off all needles relative to `∫ |g| m`.
    pub leak: f64,
    /// Concavity slack threshold, in cell widths (negative).
    pub concavity_cells: f64,
}

impl Default for NeedleTolerances {
    fn default() -> Self {
        Self {
            balance: 1e-3,
            leak: 1e-2,
            concavity_cells: -5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleCheck {
    pub balance_ratio: f64,
    /// Worst CD(0, n) slack of `h_q^{1/(n-1)}`, as a horizontal offset in cell
    /// widths (slack divided by `max v / bins`); 0 when there are fewer than three bins.
    pub concavity_cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleReport {
    pub passed: bool,
    pub needles: usize,
    pub max_balance_ratio: f64,
    pub worst_concavity_cells: f64,
    pub leak_ratio: f64,
    pub per_needle: Vec<NeedleCheck>,
}

/// Balance, leak and CD(0, n) concavity checks for every needle.
pub fn verify_needles(
    instance: &PlanarInstance,
    dec: &NeedleDecomposition,
    ambient_n: f64,
    tol: &NeedleTolerances,
) -> Result<NeedleReport> {
    if !(ambient_n > 1.0) {
        return Err(Error::param("ambient_n", "must be > 1"));
    }
    let spec = ConditionSpec::cd(0.0, ambient_n)?;
    let opts = ClassifyOptions::default();
    let per_needle: Result<Vec<NeedleCheck>> = dec
        .needles
        .par_iter()
        .map(|nd| {
            let balance_ratio = nd.balance_residual / nd.mass;
            let bins = nd.density.len();
            if bins < 3 {
                return Ok(NeedleCheck {
                    balance_ratio,
                    concavity_cells: 0.0,
                });
            }
            let w = nd.bin_width;
            let h = GridDensity::new(0.5 * w, (bins as f64 - 0.5) * w, nd.density.clone())?;
            let report = classify(&h, &spec, &opts)?;
            let vmax = h.max_value().powf(1.0 / (ambient_n - 1.0));
            let concavity_cells = (report.worst_violation / (vmax / bins as f64)).min(0.0);
            Ok(NeedleCheck {
                balance_ratio,
                concavity_cells,
            })
        })
        .collect();
    let per_needle = per_needle?;
    let max_balance_ratio = per_needle.iter().map(|c| c.balance_ratio).fold(0.0, f64::max);
    let worst_concavity_cells = per_needle.iter().map(|c| c.concavity_cells).fold(0.0, f64::min);
    let total_g: f64 = instance.g.iter().zip(&instance.weights).map(|(g, w)| g.abs() * w).sum();
    let leak_ratio = if total_g > 0.0 { dec.off_ray_g_mass / total_g } else { 0.0 };
    Ok(NeedleReport {
        passed: max_balance_ratio <= tol.balance
            && worst_concavity_cells >= tol.concavity_cells
            && leak_ratio <= tol.leak,
        needles: dec.needles.len(),
        max_balance_ratio,
        worst_concavity_cells,
        leak_ratio,
        per_needle,
    })
}

/// Largest `|u(x) - u(y)| - |x - y|` over pairs of cells sampled on a stride.
pub fn lipschitz_excess(instance: &PlanarInstance, u: &[f64], max_samples: usize) -> f64 {
    let stride = (u.len() / max_samples.max(1)).max(1);
    let idx: Vec<usize> = (0..u.len()).step_by(stride).collect();
    idx.par_iter()
        .map(|&a| {
            idx.iter()
                .map(|&b| (u[a] - u[b]).abs() - dist(instance.center(a), instance.center(b)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Options for the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeOptions {
    pub atom_cap: usize,
    /// Saturation tolerance for ray extension, in cell widths. The potential
    /// of a clustered plan is affine along rays only up to the clustering
    /// error, so this is a grid quantity.
    pub ray_tol: f64,
    /// Tube width in cell diagonals.
    pub tube_cells: f64,
    pub ambient_n: f64,
    pub tolerances: NeedleTolerances,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            atom_cap: 400,
            ray_tol: 0.1,
            tube_cells: 1.0,
            ambient_n: 2.0,
            tolerances: NeedleTolerances::default(),
        }
    }
}

/// Result of [`localize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub solution: L1Solution,
    pub rays: RaySet,
    pub decomposition: NeedleDecomposition,
    pub report: NeedleReport,
    pub lipschitz_excess: f64,
}

/// Transport, rays, needles and their verification in one call.
pub fn localize(instance: &PlanarInstance, opts: &LocalizeOptions) -> Result<Localization> {
    let solution = solve_l1_ot(instance, opts.atom_cap)?;
    let (dx, dy) = instance.cell_size();
    let rays = extract_rays(instance, &solution, opts.ray_tol * dx.min(dy))?;
    let decomposition = needle_disintegration(instance, &solution, &rays, opts.tube_cells * dx.hypot(dy))?;
    let report = verify_needles(instance, &decomposition, opts.ambient_n, &opts.tolerances)?;
    let lipschitz_excess = lipschitz_excess(instance, &solution.cell_potential, 400);
    Ok(Localization {
        solution,
        rays,
        decomposition,
        report,
        lipschitz_excess,
    })
}

/// Per-needle densities as CSV: `needle,s,h,g_mass`, `s` at bin centres.
pub fn needle_csv(dec: &NeedleDecomposition) -> String {
    let mut out = String::from("needle,s,h,g_mass\n");
    for (q, nd) in dec.needles.iter().enumerate() {
        for (b, (h, g)) in nd.density.iter().zip(&nd.g_mass).enumerate() {
            out.push_str(&format!("{q},{},{h},{g}\n", (b as f64 + 0.5) * nd.bin_width));
        }
    }
    out
}

/// `+1` on the left half of `[0,1]²`, `-1` on the right half.
pub fn half_square(n: usize) -> Result<PlanarInstance> {
    if !n.is_multiple_of(2) {
        return Err(Error::param("grid", "half-square instance needs an even width"));
    }
    PlanarInstance::from_fn(n, n, 1.0, 1.0, |x, _| if x < 0.5 { 1.0 } else { -1.0 })
}
