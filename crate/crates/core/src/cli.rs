//! The `qcdlab` command line.
//!
//! Exit codes: 0 when the computation finished (whatever the verdict), 2 for
//! usage and input errors, 3 when a solver did not converge. JSON reports carry
//! a `meta` block with the tool version, seed, grid sizes and tolerances.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::coefficients::{max_diameter, sigma, tau, CurvatureParams, ExtReal};
use crate::constants::{space_constants, Space, SpaceConstants};
use crate::density::{classify, ClassifyOptions, ConditionSpec, GridDensity};
use crate::envelope::cd_upper_envelope;
use crate::error::{Error, Result};
use crate::heisenberg::{
    distortion_beta_estimate, juillet_shrinkage, log_identity, quasi_bm_estimate, shoot_geodesic, Ball, BmOptions,
    Geometry, H1Point, ShootingConfig, ShrinkConstruction,
};
use crate::io;
use crate::localization::{half_square, localize, needle_csv, LocalizeOptions, PlanarInstance};
use crate::spectral::{estimate_lambda_ls, lambda_p_closed_form, solve_lambda_p, LsOptions, SpectralProblem, SpectralResult};
use crate::transport::{displacement_interpolation, verify_interpolation, InterpolationWeights, VerifyOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "QCDLAB_THREADS";

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Parser)]
#[command(name = "qcdlab", version, about = "Quasi curvature-dimension laboratory")]
pub struct Cli {
    /// Seed for every stochastic routine; echoed in the report.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    /// Tabular data (densities, eigenfunctions, needles); not every command has one.
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distortion coefficients σ, τ and the maximal diameter.
    Coeff(CoeffArgs),
    /// Checks a density against CD, MCP, QCD or CGTD.
    Classify(ClassifyArgs),
    /// Minimal CD(K,N) density above a given density.
    Envelope(EnvelopeArgs),
    /// Displacement interpolation between two measures.
    Interp(InterpArgs),
    /// The p-spectral gap.
    Lambda(LambdaArgs),
    /// Log-Sobolev constant by Rayleigh-quotient minimization.
    Ls(LsArgs),
    /// Table of sub-Riemannian spaces and their constants.
    Constants(ConstantsArgs),
    /// The Heisenberg group.
    #[command(subcommand)]
    H1(H1Command),
    /// Needle decomposition of a balanced function on a planar grid.
    Localize(LocalizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoeffKind {
    Sigma,
    Tau,
    Dmax,
}

#[derive(Debug, Args)]
pub struct CoeffArgs {
    #[arg(long, value_enum)]
    pub kind: CoeffKind,
    #[arg(long = "K", allow_hyphen_values = true)]
    pub k: f64,
    #[arg(long = "N")]
    pub n: f64,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    Cd,
    Mcp,
    Qcd,
    Cgtd,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ConditionArg,
    #[arg(long = "K", allow_hyphen_values = true)]
    pub k: f64,
    #[arg(long = "N")]
    pub n: f64,
    /// Required for `qcd`.
    #[arg(long = "Q")]
    pub q: Option<f64>,
    /// Topological dimension; required for `cgtd`.
    #[arg(long = "n")]
    pub topological: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long = "K", allow_hyphen_values = true)]
    pub k: f64,
    #[arg(long = "N")]
    pub n: f64,
    /// Resample the density to this many grid points first.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InterpArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub mu0: PathBuf,
    #[arg(long)]
    pub mu1: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Also verify the interpolation inequality of this condition along the geodesic.
    #[arg(long, value_enum)]
    pub check: Option<ConditionArg>,
    #[arg(long = "K", allow_hyphen_values = true, default_value_t = 0.0)]
    pub k: f64,
    #[arg(long = "N", default_value_t = 2.0)]
    pub n: f64,
    #[arg(long = "Q", default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct LambdaArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long)]
    pub p: f64,
    /// Mass region as `a,b`; repeat for a union of intervals.
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    pub omega: Vec<(f64, f64)>,
    /// Densities with fewer grid points are resampled to this many.
    #[arg(long, default_value_t = 2049)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct LsArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    pub omega: Vec<(f64, f64)>,
    /// Densities with fewer grid points are resampled to this many.
    #[arg(long, default_value_t = 1025)]
    pub grid: usize,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value_t = 400)]
    pub max_iterations: usize,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// One of heisenberg, grushin, sasakian, 3sasakian, corank1; all rows when omitted.
    #[arg(long)]
    pub space: Option<Space>,
    #[arg(long = "D", default_value_t = 1.0)]
    pub diameter: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryArg {
    Heisenberg,
    Euclidean,
}

impl From<GeometryArg> for Geometry {
    fn from(g: GeometryArg) -> Self {
        match g {
            GeometryArg::Heisenberg => Geometry::Heisenberg,
            GeometryArg::Euclidean => Geometry::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstructionArg {
    Matched,
    VerticalBalls,
}

#[derive(Debug, Subcommand)]
pub enum H1Command {
    /// CC distance by geodesic shooting.
    Dist(DistArgs),
    /// Monte-Carlo Brunn-Minkowski slack for two balls.
    Bm(BmArgs),
    /// Midpoint-set shrinkage for two small sets.
    Shrink(ShrinkArgs),
    /// Distortion coefficient β_t by the area formula.
    Beta(BetaArgs),
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub target: H1Point,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0,0,0")]
    pub from: H1Point,
}

#[derive(Debug, Args)]
pub struct BmArgs {
    #[arg(long = "centerA", value_parser = parse_point, allow_hyphen_values = true)]
    pub center_a: H1Point,
    #[arg(long = "radiusA")]
    pub radius_a: f64,
    #[arg(long = "centerB", value_parser = parse_point, allow_hyphen_values = true)]
    pub center_b: H1Point,
    #[arg(long = "radiusB")]
    pub radius_b: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long = "Q", default_value_t = 4.0)]
    pub q: f64,
    #[arg(long)]
    pub voxel: Option<f64>,
    #[arg(long, value_enum, default_value_t = GeometryArg::Heisenberg)]
    pub geometry: GeometryArg,
}

#[derive(Debug, Args)]
pub struct ShrinkArgs {
    #[arg(long)]
    pub radius: f64,
    #[arg(long)]
    pub height: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, value_enum, default_value_t = ConstructionArg::Matched)]
    pub construction: ConstructionArg,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0,0,0")]
    pub x: H1Point,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub y: H1Point,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.05)]
    pub r: f64,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = GeometryArg::Heisenberg)]
    pub geometry: GeometryArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoInstance {
    /// `+1` on the left half of the unit square, `-1` on the right half.
    HalfSquare,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Grid shape `WxH`.
    #[arg(long, value_parser = parse_grid)]
    pub grid: (usize, usize),
    /// CSV with `H` rows of `W` values of `g`, bottom row first.
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    pub g: Option<PathBuf>,
    /// Built-in instance instead of `--g`.
    #[arg(long, value_enum)]
    pub demo: Option<DemoInstance>,
    /// Domain size `w,h`.
    #[arg(long, value_parser = parse_pair, default_value = "1,1")]
    pub size: (f64, f64),
    /// Tube width in cell diagonals.
    #[arg(long, default_value_t = 1.0)]
    pub tube: f64,
    #[arg(long, default_value_t = 400)]
    pub atom_cap: usize,
    /// Ray saturation tolerance in cell widths.
    #[arg(long, default_value_t = 0.1)]
    pub ray_tol: f64,
    /// Write the per-needle densities to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(format!("expected {n} comma-separated finite numbers, got `{s}`")),
    }
}

fn parse_interval(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_floats(s, 2)?;
    if v[1] > v[0] {
        Ok((v[0], v[1]))
    } else {
        Err(format!("`{s}` is not an interval a,b with a < b"))
    }
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_floats(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_point(s: &str) -> std::result::Result<H1Point, String> {
    let v = parse_floats(s, 3)?;
    Ok(H1Point::new(v[0], v[1], v[2]))
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    if w == 0 || h == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((w, h))
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn error(code: i32, msg: impl std::fmt::Display) -> Self {
        Self {
            code,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_non_convergence() {
        3
    } else {
        2
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Outcome::error(2, format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
        Err(_) => None,
    };
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => return Outcome::error(2, e),
        },
        None => execute(&cli),
    };
    match result {
        Ok(text) => match &cli.output {
            Some(path) => match std::fs::write(path, &text) {
                Ok(()) => Outcome {
                    code: 0,
                    stdout: String::new(),
                    stderr: String::new(),
                },
                Err(e) => Outcome::error(2, format!("{}: {e}", path.display())),
            },
            None => Outcome {
                code: 0,
                stdout: text,
                stderr: String::new(),
            },
        },
        Err(e) => Outcome::error(exit_code(&e), e),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn report(command: &str, seed: u64, settings: Value, result: Value) -> String {
    let doc = json!({
        "meta": {
            "tool": "qcdlab",
            "version": VERSION,
            "command": command,
            "seed": seed,
            "settings": settings,
        },
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
    s.push('\n');
    s
}

fn no_csv(cli: &Cli, command: &str) -> Result<()> {
    if cli.format == Format::Csv {
        return Err(Error::Unsupported(format!("`{command}` has no CSV output")));
    }
    Ok(())
}

fn fmt_ext(v: ExtReal) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{}", v.value())
    }
}

fn condition(kind: ConditionArg, k: f64, n: f64, q: Option<f64>, topological: Option<f64>) -> Result<ConditionSpec> {
    match kind {
        ConditionArg::Cd => ConditionSpec::cd(k, n),
        ConditionArg::Mcp => ConditionSpec::mcp(k, n),
        ConditionArg::Qcd => {
            let q = q.ok_or_else(|| Error::param("Q", "required for qcd"))?;
            ConditionSpec::qcd(q, k, n)
        }
        ConditionArg::Cgtd => {
            let n0 = topological.ok_or_else(|| Error::param("n", "required for cgtd"))?;
            ConditionSpec::cgtd(k, n, n0)
        }
    }
}

fn density_csv(columns: &[(&str, &[f64])], x: &[f64]) -> String {
    let mut out = String::from("x");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, xi) in x.iter().enumerate() {
        out.push_str(&xi.to_string());
        for (_, col) in columns {
            out.push(',');
            out.push_str(&col[i].to_string());
        }
        out.push('\n');
    }
    out
}

fn grid_nodes(h: &GridDensity) -> Vec<f64> {
    (0..h.len()).map(|i| h.x(i)).collect()
}

fn spectral_summary(r: &SpectralResult) -> Value {
    json!({
        "lambda": r.lambda,
        "residual": r.residual,
        "balance": r.balance,
        "method": to_value(&r.method),
        "grid_points": r.grid.len(),
    })
}

fn refine(h: GridDensity, min_points: usize) -> Result<GridDensity> {
    if h.len() < min_points {
        h.resample(min_points)
    } else {
        Ok(h)
    }
}

fn problem(h: GridDensity, omega: &[(f64, f64)]) -> Result<SpectralProblem> {
    let p = SpectralProblem::new(h);
    if omega.is_empty() {
        Ok(p)
    } else {
        p.with_omega(omega)
    }
}

fn execute(cli: &Cli) -> Result<String> {
    let seed = cli.seed;
    match &cli.command {
        Command::Coeff(a) => {
            no_csv(cli, "coeff")?;
            let params = CurvatureParams::new(a.k, a.n)?;
            let value = match a.kind {
                CoeffKind::Dmax => max_diameter(params),
                CoeffKind::Sigma | CoeffKind::Tau => {
                    let t = a.t.ok_or_else(|| Error::param("t", "required for sigma and tau"))?;
                    let theta = a.theta.ok_or_else(|| Error::param("theta", "required for sigma and tau"))?;
                    if a.kind == CoeffKind::Sigma {
                        sigma(t, theta, params)?
                    } else {
                        tau(t, theta, params)?
                    }
                }
            };
            Ok(format!("{}\n", fmt_ext(value)))
        }
        Command::Classify(a) => {
            no_csv(cli, "classify")?;
            let h = io::read_density(&a.density)?;
            let spec = condition(a.kind, a.k, a.n, a.q, a.topological)?;
            let opts = ClassifyOptions {
                seed,
                tol: a.tol,
                ..ClassifyOptions::default()
            };
            let r = classify(&h, &spec, &opts)?;
            let settings = json!({
                "grid_points": h.len(),
                "support": h.support(),
                "condition": to_value(&spec),
                "t_grid": opts.t_grid,
                "random_t_per_pair": opts.random_t_per_pair,
                "tol": opts.tol,
            });
            Ok(report("classify", seed, settings, to_value(&r)))
        }
        Command::Envelope(a) => {
            let mut h = io::read_density(&a.density)?;
            if let Some(m) = a.grid {
                h = h.resample(m)?;
            }
            let params = CurvatureParams::new(a.k, a.n)?;
            let r = cd_upper_envelope(&h, params)?;
            if cli.format == Format::Csv {
                let x = grid_nodes(&h);
                return Ok(density_csv(&[("h", h.values()), ("envelope", r.envelope.values())], &x));
            }
            let settings = json!({
                "grid_points": h.len(),
                "support": h.support(),
                "K": a.k,
                "N": a.n,
                "ratio_floor": crate::envelope::RATIO_FLOOR,
            });
            let result = json!({
                "envelope": to_value(&r.envelope),
                "q_order": r.q_order,
                "sandwich_margin": r.sandwich_margin,
            });
            Ok(report("envelope", seed, settings, result))
        }
        Command::Interp(a) => {
            let reference = io::read_density(&a.reference)?;
            let mu0 = io::read_measure(&a.mu0, reference.clone())?;
            let mu1 = io::read_measure(&a.mu1, reference.clone())?;
            let path = displacement_interpolation(&mu0, &mu1, a.t)?;
            if cli.format == Format::Csv {
                let x = grid_nodes(&reference);
                return Ok(density_csv(
                    &[
                        ("rho_t", path.rho_t.values()),
                        ("map", &path.map_samples),
                        ("jacobian", &path.jacobian_samples),
                    ],
                    &x,
                ));
            }
            let verify_opts = VerifyOptions {
                tol: a.tol,
                ..VerifyOptions::default()
            };
            let check = match a.check {
                None => Value::Null,
                Some(ConditionArg::Cgtd) => return Err(Error::Unsupported("--check accepts cd, qcd or mcp".into())),
                Some(kind) => {
                    let spec = condition(kind, a.k, a.n, Some(a.q), None)?;
                    let weights = InterpolationWeights::from_condition(&spec)?;
                    to_value(&verify_interpolation(&mu0, &mu1, &weights, &verify_opts)?)
                }
            };
            let settings = json!({
                "grid_points": reference.len(),
                "support": reference.support(),
                "t": a.t,
                "quantile_levels": crate::transport::QUANTILE_LEVELS,
                "check_t_grid": verify_opts.t_grid,
                "tol": verify_opts.tol,
                "K": a.k,
                "N": a.n,
                "Q": a.q,
            });
            let result = json!({
                "rho_t": to_value(&path.rho_t),
                "mass_t": path.measure.mass(),
                "check": check,
            });
            Ok(report("interp", seed, settings, result))
        }
        Command::Lambda(a) => {
            let h = refine(io::read_density(&a.density)?, a.grid)?;
            let prob = problem(h.clone(), &a.omega)?;
            let r = solve_lambda_p(&prob, a.p)?;
            if cli.format == Format::Csv {
                return Ok(density_csv(&[("f", &r.eigenfunction)], &r.grid));
            }
            let (lo, hi) = prob.hull();
            let settings = json!({
                "grid_points": h.len(),
                "support": h.support(),
                "omega": prob.omega(),
                "p": a.p,
            });
            let mut result = spectral_summary(&r);
            result["uniform_closed_form"] = json!(lambda_p_closed_form(a.p, hi - lo)?);
            result["diameter"] = json!(hi - lo);
            Ok(report("lambda", seed, settings, result))
        }
        Command::Ls(a) => {
            let h = refine(io::read_density(&a.density)?, a.grid)?;
            let prob = problem(h.clone(), &a.omega)?;
            let opts = LsOptions {
                random_starts: a.starts,
                seed,
                max_iterations: a.max_iterations,
            };
            let r = estimate_lambda_ls(&prob, &opts)?;
            if cli.format == Format::Csv {
                return Ok(density_csv(&[("f", &r.eigenfunction)], &r.grid));
            }
            let settings = json!({
                "grid_points": h.len(),
                "support": h.support(),
                "omega": prob.omega(),
                "random_starts": opts.random_starts,
                "max_iterations": opts.max_iterations,
            });
            Ok(report("ls", seed, settings, spectral_summary(&r)))
        }
        Command::Constants(a) => {
            no_csv(cli, "constants")?;
            let spaces: Vec<Space> = match a.space {
                Some(s) => vec![s],
                None => Space::ALL.to_vec(),
            };
            let rows: Result<Vec<SpaceConstants>> = spaces.into_iter().map(|s| space_constants(s, a.diameter, a.p)).collect();
            let rows = rows?;
            let result = if a.space.is_some() { to_value(&rows[0]) } else { to_value(&rows) };
            let settings = json!({ "D": a.diameter, "p": a.p });
            Ok(report("constants", seed, settings, result))
        }
        Command::H1(h1) => {
            no_csv(cli, "h1")?;
            execute_h1(h1, seed)
        }
        Command::Localize(a) => execute_localize(cli, a, seed),
    }
}

fn execute_h1(cmd: &H1Command, seed: u64) -> Result<String> {
    match cmd {
        H1Command::Dist(a) => {
            let cfg = ShootingConfig::default();
            let g = shoot_geodesic(a.from, a.target, &cfg)?;
            let oracle = log_identity(crate::heisenberg::group_mul(a.from.inverse(), a.target));
            let settings = json!({
                "starts": cfg.starts,
                "rk_steps": cfg.rk_steps,
                "max_iterations": cfg.max_iterations,
                "tol": cfg.tol,
                "accept": cfg.accept,
            });
            let result = json!({
                "from": to_value(&a.from),
                "target": to_value(&a.target),
                "distance": g.length,
                "geodesic": to_value(&g),
                "closed_form_distance": oracle.length,
            });
            Ok(report("h1 dist", seed, settings, result))
        }
        H1Command::Bm(a) => {
            let opts = BmOptions {
                samples: a.samples,
                seed,
                voxel: a.voxel,
                geometry: a.geometry.into(),
                q_order: a.q,
                ..BmOptions::default()
            };
            let ball_a = Ball {
                center: a.center_a,
                radius: a.radius_a,
            };
            let ball_b = Ball {
                center: a.center_b,
                radius: a.radius_b,
            };
            let r = quasi_bm_estimate(&ball_a, &ball_b, a.t, &opts)?;
            let settings = json!({
                "samples": opts.samples,
                "voxel": r.voxel,
                "voxel_budget": opts.voxel_budget,
                "geometry": to_value(&opts.geometry),
                "A": to_value(&ball_a),
                "B": to_value(&ball_b),
            });
            Ok(report("h1 bm", seed, settings, to_value(&r)))
        }
        H1Command::Shrink(a) => {
            let opts = BmOptions {
                samples: a.samples,
                seed,
                ..BmOptions::default()
            };
            let construction = match a.construction {
                ConstructionArg::Matched => ShrinkConstruction::Matched,
                ConstructionArg::VerticalBalls => ShrinkConstruction::VerticalBalls,
            };
            let r = juillet_shrinkage(a.radius, a.height, a.t, construction, &opts)?;
            let settings = json!({
                "samples": opts.samples,
                "voxel": r.voxel,
                "voxel_budget": opts.voxel_budget,
            });
            Ok(report("h1 shrink", seed, settings, to_value(&r)))
        }
        H1Command::Beta(a) => {
            let geometry: Geometry = a.geometry.into();
            let r = distortion_beta_estimate(geometry, a.x, a.y, a.t, a.r, a.samples, seed)?;
            let (n, _) = geometry.dimensions();
            let settings = json!({
                "samples": a.samples,
                "r": a.r,
                "geometry": to_value(&geometry),
            });
            let result = json!({
                "x": to_value(&a.x),
                "y": to_value(&a.y),
                "t": a.t,
                "estimate": r.estimate,
                "stderr": r.stderr,
                "lower_bound": a.t.powf(n + 2.0),
            });
            Ok(report("h1 beta", seed, settings, result))
        }
    }
}

fn execute_localize(cli: &Cli, a: &LocalizeArgs, seed: u64) -> Result<String> {
    let (nx, ny) = a.grid;
    let (w, h) = a.size;
    let instance: PlanarInstance = match (&a.g, a.demo) {
        (Some(path), _) => io::read_grid_csv(path, nx, ny, w, h)?,
        (None, Some(DemoInstance::HalfSquare)) => {
            if nx != ny || (w, h) != (1.0, 1.0) {
                return Err(Error::param("grid", "the half-square demo needs a square grid on the unit square"));
            }
            half_square(nx)?
        }
        (None, None) => return Err(Error::param("g", "either --g or --demo is required")),
    };
    let opts = LocalizeOptions {
        atom_cap: a.atom_cap,
        ray_tol: a.ray_tol,
        tube_cells: a.tube,
        ..LocalizeOptions::default()
    };
    let loc = localize(&instance, &opts)?;
    let csv = needle_csv(&loc.decomposition);
    if let Some(path) = &a.csv {
        std::fs::write(path, &csv).map_err(|e| Error::Input {
            source_name: path.display().to_string(),
            field: "<file>".into(),
            reason: e.to_string(),
        })?;
    }
    if cli.format == Format::Csv {
        return Ok(csv);
    }
    let dec = &loc.decomposition;
    let plan = &loc.solution.plan;
    let settings = json!({
        "grid": [nx, ny],
        "size": [w, h],
        "atom_cap": opts.atom_cap,
        "ray_tol_cells": opts.ray_tol,
        "tube_cells": opts.tube_cells,
        "ambient_n": opts.ambient_n,
        "balance_tol": opts.tolerances.balance,
        "leak_tol": opts.tolerances.leak,
        "concavity_cells_tol": opts.tolerances.concavity_cells,
    });
    let u = &loc.solution.cell_potential;
    let result = json!({
        "duality_gap": plan.duality_gap,
        "dual_infeasibility": plan.dual_infeasibility,
        "primal_cost": plan.primal_cost,
        "pivots": plan.pivots,
        "coarsening": dec.coarsening,
        "rays": loc.rays.rays.len(),
        "branching_atoms": dec.branching_atoms,
        "tube_width": dec.tube_width,
        "covered_mass": dec.covered_mass,
        "uncovered_mass": dec.uncovered_mass,
        "off_ray_g_mass": dec.off_ray_g_mass,
        "ambiguous_fraction": dec.ambiguous_fraction,
        "lipschitz_excess": loc.lipschitz_excess,
        "potential_range": [u.iter().cloned().fold(f64::INFINITY, f64::min), u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)],
        "needles": dec.needles.iter().map(|n| json!({
            "start": n.ray.start,
            "end": n.ray.end,
            "mass": n.mass,
            "bins": n.density.len(),
            "balance_residual": n.balance_residual,
        })).collect::<Vec<_>>(),
        "report": to_value(&loc.report),
    });
    Ok(report("localize", seed, settings, result))
}
