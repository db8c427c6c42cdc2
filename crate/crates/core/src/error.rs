use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Verdicts (an inequality being violated) are never errors; they are reported
/// through the report types. Errors mean the input was invalid or a solver
/// could not produce an answer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("support diameter {diameter} exceeds the maximal diameter {max_diameter}")]
    DiameterExceeded { diameter: f64, max_diameter: f64 },

    #[error("model density crosses zero inside its support at x = {x}")]
    ModelSignChange { x: f64 },

    #[error("no finite sandwich constant: envelope is positive where the density vanishes (x = {x})")]
    UnboundedOrder { x: f64 },

    #[error("bisection did not converge after {iterations} iterations; bracket [{lo}, {hi}]")]
    BisectionFailed { iterations: usize, lo: f64, hi: f64 },

    #[error("shooting did not converge; best endpoint residual {residual:e}")]
    ShootingFailed { residual: f64 },

    #[error("Monte-Carlo sampling starved: {accepted} accepted out of {attempted} proposals")]
    SampleStarvation { accepted: usize, attempted: usize },

    #[error("voxel budget exceeded: {voxels} voxels > {budget}")]
    VoxelBudget { voxels: usize, budget: usize },

    #[error("log-Sobolev estimate inconclusive: every start collapsed to a constant")]
    Inconclusive,

    #[error("transport problem is unbalanced: positive mass {positive}, negative mass {negative}")]
    Unbalanced { positive: f64, negative: f64 },

    #[error("too many atoms: {atoms} > cap {cap} even at coarsening factor {factor}")]
    AtomCap { atoms: usize, cap: usize, factor: usize },

    #[error("transport simplex made no progress after {iterations} pivots")]
    SolverStalled { iterations: usize },

    #[error("classification mismatch: {0}")]
    ClassificationMismatch(String),

    #[error("{0}")]
    Unsupported(String),

    /// Malformed input file; `field` is a dotted path such as `model.K`.
    #[error("{source_name}: field `{field}`: {reason}")]
    Input {
        source_name: String,
        field: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of an iterative solver (as opposed to bad input).
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            Error::BisectionFailed { .. }
                | Error::ShootingFailed { .. }
                | Error::SampleStarvation { .. }
                | Error::SolverStalled { .. }
                | Error::Inconclusive
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
