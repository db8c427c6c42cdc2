//! Acceptance suite: one PASS/FAIL line per criterion, with timings.
//!
//! Runs without the libtest harness so the lines are always printed. Exits
//! non-zero if any criterion fails, except those listed in `KNOWN_FAILURES`,
//! which still print FAIL. `ACCEPTANCE_ONLY=3,8` runs a subset.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcdlab::coefficients::CurvatureParams;
use qcdlab::constants::{table_row, Space};
use qcdlab::density::{classify, model_density, sample_model, ClassifyOptions, ConditionSpec, GridDensity};
use qcdlab::envelope::cd_upper_envelope;
use qcdlab::heisenberg::{
    cc_distance, distortion_beta_estimate, group_mul, juillet_shrinkage, log_identity, quasi_bm_estimate,
    shoot_geodesic, Ball, BmOptions, Geometry, H1Point, ShootingConfig, ShrinkConstruction,
};
use qcdlab::localization::{half_square, localize, LocalizeOptions};
use qcdlab::spectral::{
    estimate_lambda_ls, lambda_p_closed_form, solve_lambda_p, solve_lambda_p_with, LsOptions, Method, SpectralProblem,
};
use qcdlab::transport::{verify_interpolation, Block, InterpolationWeights, Measure1D, VerifyOptions};

/// Criteria whose statement is false as written. They are run in full and
/// reported, but do not fail the suite.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    5,
    "the upper clause lambda_2 <= pi^2/D^2 fails already for CD(0,N) models, e.g. (1+3x)^3 on [0,1] has lambda_2 = 15.92",
)];

type Verdict = qcdlab::Result<(bool, String)>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

fn uniform(m: usize) -> GridDensity {
    GridDensity::from_fn(0.0, 1.0, m, |_| 1.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c01_li_yau() -> Verdict {
    let r = solve_lambda_p(&SpectralProblem::new(uniform(2048)), 2.0)?;
    let err = rel(r.lambda, PI * PI);
    Ok((err <= 5e-3, format!("lambda_2 = {:.6}, rel err {err:.2e} (tol 5e-3)", r.lambda)))
}

fn c02_p_gaps() -> Verdict {
    let problem = SpectralProblem::new(uniform(2048));
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for p in [1.5, 2.0, 3.0, 4.0] {
        let r = solve_lambda_p_with(&problem, p, Method::Shooting)?;
        let err = rel(r.lambda, lambda_p_closed_form(p, 1.0)?);
        worst = worst.max(err);
        parts.push(format!("p={p}: {:.4}", r.lambda));
    }
    Ok((worst <= 1e-2, format!("{}; worst rel err {worst:.2e} (tol 1e-2)", parts.join(", "))))
}

fn c03_lichnerowicz() -> Verdict {
    let model = model_density(CurvatureParams::new(1.0, 2.0)?, (-FRAC_PI_2, FRAC_PI_2), 0.0, 1.0)?;
    let r = solve_lambda_p(&SpectralProblem::new(sample_model(&model, 2049)?), 2.0)?;
    let err = rel(r.lambda, 2.0);
    Ok((err <= 1e-2, format!("lambda_2 = {:.6}, rel err {err:.2e} (tol 1e-2)", r.lambda)))
}

fn c04_envelope() -> Verdict {
    let h = GridDensity::from_fn(-1.0, 1.0, 401, |x| 1.0 + x.abs())?;
    let r = cd_upper_envelope(&h, CurvatureParams::new(0.0, 2.0)?)?;
    let q_err = rel(r.q_order, 2.0);
    let env_err = r.envelope.values().iter().map(|&v| rel(v, 2.0)).fold(0.0, f64::max);
    let cd = classify(&r.envelope, &ConditionSpec::cd(0.0, 2.0)?, &ClassifyOptions::default())?;
    Ok((
        q_err <= 1e-2 && env_err <= 1e-2 && cd.passed,
        format!("q_order = {:.6}, max |f/2 - 1| = {env_err:.2e}, envelope CD(0,2) passed = {}", r.q_order, cd.passed),
    ))
}

/// A CD(0,N) model on `[0, D]` times an oscillation with values in `[1, Q]`.
fn random_qcd_density(rng: &mut ChaCha8Rng, q: f64, m: usize) -> qcdlab::Result<(GridDensity, f64, f64)> {
    let n = [2.0, 3.0, 4.0][rng.gen_range(0..3)];
    let d: f64 = rng.gen_range(0.5..2.0);
    let u0: f64 = rng.gen_range(0.5..1.5);
    let slope = rng.gen_range(-0.8 * u0 / d..1.0);
    let model = model_density(CurvatureParams::new(0.0, n)?, (0.0, d), u0, slope)?;
    let freq = rng.gen_range(1..=4) as f64;
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let h = GridDensity::from_fn(0.0, d, m, |x| {
        let osc = 1.0 + (q - 1.0) * 0.5 * (1.0 + (2.0 * PI * freq * x / d + phase).sin());
        model.eval(x) * osc
    })?;
    Ok((h, n, d))
}

fn c05_factor_q_sandwich() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tol = 5e-3;
    let (mut below, mut above) = (0, 0);
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi: f64 = 0.0;
    for i in 0..50 {
        let q = if i % 2 == 0 { 2.0 } else { 4.0 };
        let (h, _, d) = random_qcd_density(&mut rng, q, 513)?;
        let lambda = solve_lambda_p(&SpectralProblem::new(h), 2.0)?.lambda;
        let lo = PI * PI / (q * d * d);
        let hi = PI * PI / (d * d);
        worst_lo = worst_lo.min(lambda / lo);
        worst_hi = worst_hi.max(lambda / hi);
        if lambda < lo * (1.0 - tol) {
            below += 1;
        }
        if lambda > hi * (1.0 + tol) {
            above += 1;
        }
    }
    Ok((
        below == 0 && above == 0,
        format!(
            "50 densities: {below} below pi^2/(Q D^2), {above} above pi^2/D^2; min lambda/lower {worst_lo:.3}, max lambda/upper {worst_hi:.3} (tol {tol})"
        ),
    ))
}

fn c06_log_sobolev() -> Verdict {
    let ls = estimate_lambda_ls(&SpectralProblem::new(uniform(1024)), &LsOptions::default())?;
    let err = rel(ls.lambda, PI * PI);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::INFINITY;
    for _ in 0..6 {
        let (h, n, _) = random_qcd_density(&mut rng, 4.0, 257)?;
        let env = cd_upper_envelope(&h, CurvatureParams::new(0.0, n)?)?;
        let a = estimate_lambda_ls(&SpectralProblem::new(h), &LsOptions::default())?.lambda;
        let b = estimate_lambda_ls(&SpectralProblem::new(env.envelope), &LsOptions::default())?.lambda;
        worst = worst.min(a - 0.25 * b * (1.0 - 1e-3));
    }
    Ok((
        err <= 5e-2 && worst >= 0.0,
        format!("LS(uniform) = {:.4}, rel err {err:.2e} (tol 5e-2); min LS(h) - LS(envelope)/4 over 6 QCD(4) densities = {worst:.3}", ls.lambda),
    ))
}

/// Random blocks inside `[lo, hi]`.
fn random_blocks(rng: &mut ChaCha8Rng, lo: f64, hi: f64, max_width: f64) -> Vec<Block> {
    (0..rng.gen_range(1..=3))
        .map(|_| {
            let w = rng.gen_range(0.02..max_width).min(hi - lo);
            let a = rng.gen_range(lo..=hi - w);
            Block {
                lo: a,
                hi: a + w,
                mass: rng.gen_range(0.2..1.0),
            }
        })
        .collect()
}

fn c07_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q = 2.0;
    let verify_opts = VerifyOptions::default();
    let mut disagreements = 0;
    let (mut passing, mut failing) = (0, 0);
    for i in 0..20 {
        // Even densities are sandwiched with factor Q, odd ones with 3Q and may fail.
        let factor = if i % 2 == 0 { q } else { 3.0 * q };
        let (h, n, d) = random_qcd_density(&mut rng, factor, 129)?;
        let spec = ConditionSpec::qcd(q, 0.0, n)?;
        let verdict = classify(&h, &spec, &ClassifyOptions::default())?;
        let weights = InterpolationWeights::from_condition(&spec)?;
        let mut any_violation = false;
        let mut violation_while_passing = false;
        for k in 0..50 {
            // Half of the pairs of a failing density are small blocks around its witness.
            let (b0, b1) = if !verdict.passed && k % 2 == 1 {
                let w = verdict.witness;
                let eps = rng.gen_range(0.005..0.02) * d;
                let around = |x: f64| {
                    let a = (x - eps).max(0.0);
                    vec![Block { lo: a, hi: (a + 2.0 * eps).min(d), mass: 1.0 }]
                };
                (around(w.x0), around(w.x1))
            } else {
                (random_blocks(&mut rng, 0.0, d, 0.3 * d), random_blocks(&mut rng, 0.0, d, 0.3 * d))
            };
            let mu0 = Measure1D::from_blocks(h.clone(), &b0)?;
            let mu1 = Measure1D::from_blocks(h.clone(), &b1)?;
            let r = verify_interpolation(&mu0, &mu1, &weights, &verify_opts)?;
            if !r.passed {
                any_violation = true;
                if verdict.passed {
                    violation_while_passing = true;
                }
            }
        }
        if verdict.passed {
            passing += 1;
        } else {
            failing += 1;
        }
        if violation_while_passing || (!verdict.passed && !any_violation) {
            disagreements += 1;
        }
    }
    Ok((
        disagreements == 0,
        format!("20 densities ({passing} pass, {failing} fail QCD({q},0,N)), 50 pairs each: {disagreements} disagreements"),
    ))
}

fn c08_heisenberg_distances() -> Verdict {
    let cfg = ShootingConfig::default();
    let d1 = cc_distance(H1Point::new(1.0, 0.0, 0.0), &cfg)?;
    let dv = cc_distance(H1Point::new(0.0, 0.0, 1.0), &cfg)?;
    let oracle = log_identity(H1Point::new(0.0, 0.0, 1.0)).length;
    let e1 = (d1 - 1.0).abs();
    let ev = (dv - 2.0 * PI.sqrt()).abs();
    let dist = |a, b| shoot_geodesic(a, b, &cfg).map(|g| g.length);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let point = |rng: &mut ChaCha8Rng| H1Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (mut li, mut di, mut tri): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for _ in 0..100 {
        let (a, b, c, g) = (point(&mut rng), point(&mut rng), point(&mut rng), point(&mut rng));
        let lambda: f64 = rng.gen_range(0.25..3.0);
        let dab = dist(a, b)?;
        li = li.max((dist(group_mul(g, a), group_mul(g, b))? - dab).abs() / (1.0 + dab));
        di = di.max((dist(a.dilate(lambda), b.dilate(lambda))? - lambda * dab).abs() / (1.0 + lambda * dab));
        tri = tri.min(dab + dist(b, c)? - dist(a, c)?);
    }
    let inv_ok = li <= 1e-6 && di <= 1e-6 && tri >= -1e-6;
    Ok((
        e1 <= 1e-6 && ev <= 1e-3 && inv_ok,
        format!(
            "d(1,0,0) err {e1:.1e}; d(0,0,1) = {dv:.6} (oracle {oracle:.6}, err {ev:.1e}); 100 samples: left-inv {li:.1e}, dilation {di:.1e}, min triangle slack {tri:.2e}"
        ),
    ))
}

fn c09_distortion_bound() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    for k in 0..10 {
        let x = H1Point::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let step = H1Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5));
        let y = group_mul(x, step);
        let t: f64 = rng.gen_range(0.1..0.9);
        let b = distortion_beta_estimate(Geometry::Heisenberg, x, y, t, 0.05, 20_000, 900 + k)?;
        worst = worst.min((b.estimate - t.powi(5) + 2.0 * b.stderr) / t.powi(5));
    }
    Ok((worst >= 0.0, format!("10 configurations: min (beta - t^5 + 2 stderr)/t^5 = {worst:.3}")))
}

fn c10_brunn_minkowski() -> Verdict {
    let opts = BmOptions {
        samples: 1_000_000,
        ..BmOptions::default()
    };
    let a = Ball {
        center: H1Point::IDENTITY,
        radius: 0.2,
    };
    let b = Ball {
        center: H1Point::new(0.0, 0.0, 0.5),
        radius: 0.2,
    };
    let bm = quasi_bm_estimate(&a, &b, 0.5, &opts)?;
    let bm_ok = bm.slack_bm >= -2.0 * bm.stderr_bm && bm.slack_qbm >= -2.0 * bm.stderr_qbm;
    let mut ratios = Vec::new();
    for r in [0.1, 0.05, 0.025] {
        ratios.push(juillet_shrinkage(r, 1.0, 0.5, ShrinkConstruction::Matched, &opts)?.ratio);
    }
    let shrink_ok = ratios[1] <= 0.5 && ratios[0] > ratios[1] && ratios[1] > ratios[2] && ratios[2] > 0.25;
    Ok((
        bm_ok && shrink_ok,
        format!(
            "slack_bm {:.4} +- {:.4}, slack_qbm {:.4} +- {:.4}; shrinkage at r = 0.1, 0.05, 0.025: {:.3}, {:.3}, {:.3} (limit 0.25)",
            bm.slack_bm, bm.stderr_bm, bm.slack_qbm, bm.stderr_qbm, ratios[0], ratios[1], ratios[2]
        ),
    ))
}

fn c11_localization() -> Verdict {
    let n = 64;
    let instance = half_square(n)?;
    let loc = localize(&instance, &LocalizeOptions::default())?;
    let plan = &loc.solution.plan;
    let cell = 1.0 / n as f64;
    // Best constant c for u ≈ -x + c in the sup norm is the midrange of u + x.
    let shifted: Vec<f64> = loc
        .solution
        .cell_potential
        .iter()
        .enumerate()
        .map(|(k, u)| u + instance.center(k)[0])
        .collect();
    let (lo, hi) = shifted.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let deviation_cells = 0.5 * (hi - lo) / cell;
    let gap_ok = plan.duality_gap <= 1e-9 * plan.primal_cost.max(1.0);
    let report = &loc.report;
    Ok((
        gap_ok && deviation_cells <= 2.0 && report.max_balance_ratio <= 1e-3 && report.worst_concavity_cells >= -5.0,
        format!(
            "duality gap {:.1e}; |u + x - c| <= {deviation_cells:.2} cells; {} needles, max balance {:.1e}, worst concavity {:.2} cells",
            plan.duality_gap, report.needles, report.max_balance_ratio, report.worst_concavity_cells
        ),
    ))
}

fn c12_constants() -> Verdict {
    let out = qcdlab::cli::run(["qcdlab", "constants"]);
    let golden = include_str!("golden/constants.json");
    let rows_ok = {
        let g = table_row(Space::Grushin);
        let s = table_row(Space::Sasakian);
        let t = table_row(Space::ThreeSasakian);
        let c = table_row(Space::Corank1);
        (g.topological_dimension.as_str(), g.geodesic_dimension.as_str(), g.q, g.k) == ("2", "5", 8.0, 1.5)
            && (s.geodesic_dimension.as_str(), s.q, s.k) == ("2d+3", 4.0, 1.0)
            && (t.geodesic_dimension.as_str(), t.q, t.k) == ("4d+9", 64.0, 3.0)
            && (c.geodesic_dimension.as_str(), c.q, c.k) == ("n+2", 4.0, 1.0)
    };
    let exact = out.code == 0 && out.stdout == golden;
    Ok((rows_ok && exact, format!("rows match: {rows_ok}; byte-exact against golden: {exact}")))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "Li-Yau gap of [0,1]", budget: Duration::from_secs(1), run: c01_li_yau },
        Criterion { id: 2, name: "p-spectral gaps by shooting", budget: Duration::from_secs(5), run: c02_p_gaps },
        Criterion { id: 3, name: "Lichnerowicz gap of cos", budget: Duration::from_secs(60), run: c03_lichnerowicz },
        Criterion { id: 4, name: "CD envelope of 1 + |x|", budget: Duration::from_secs(60), run: c04_envelope },
        Criterion { id: 5, name: "factor-Q spectral sandwich", budget: Duration::from_secs(60), run: c05_factor_q_sandwich },
        Criterion { id: 6, name: "log-Sobolev", budget: Duration::from_secs(120), run: c06_log_sobolev },
        Criterion { id: 7, name: "classify vs verify_interpolation", budget: Duration::from_secs(120), run: c07_oracle_equivalence },
        Criterion { id: 8, name: "Heisenberg distances", budget: Duration::from_secs(30), run: c08_heisenberg_distances },
        Criterion { id: 9, name: "distortion lower bound", budget: Duration::from_secs(60), run: c09_distortion_bound },
        Criterion { id: 10, name: "Brunn-Minkowski on H1", budget: Duration::from_secs(300), run: c10_brunn_minkowski },
        Criterion { id: 11, name: "localization half-square", budget: Duration::from_secs(30), run: c11_localization },
        Criterion { id: 12, name: "constants table", budget: Duration::from_secs(5), run: c12_constants },
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let verdict = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match verdict {
            Ok((ok, detail)) => (ok && elapsed <= c.budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "{} {:>2} {:<34} {:>7.2}s / {:>3}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        let known = KNOWN_FAILURES.iter().find(|(id, _)| *id == c.id);
        match (ok, known) {
            (false, Some((_, why))) => println!("      known failure: {why}"),
            (false, None) => failed.push(c.id),
            (true, Some(_)) => println!("      listed as a known failure but passed"),
            (true, None) => {}
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
