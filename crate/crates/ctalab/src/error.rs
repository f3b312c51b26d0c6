//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    // manifold
    #[error("geodesic did not exit the chart within arc length {cap}")]
    TrappedGeodesic { cap: f64 },
    #[error("initial direction is not unit speed (|v|_g = {norm})")]
    NonUnitSpeed { norm: f64 },
    #[error("frame basis is degenerate or not orthogonal to the geodesic")]
    DegenerateBasis,
    #[error("point lies outside the Fermi tube of radius {radius}")]
    OutsideTube { radius: f64 },

    // jacobi
    #[error("anchor matrix Y0 is degenerate")]
    SingularAnchor,
    #[error("det Y vanishes near t = {t}")]
    ConjugatePointHit { t: f64 },

    // raytransform
    #[error("|det Y| dips below the branch threshold near t = {t}")]
    BranchAmbiguity { t: f64 },
    #[error("extrapolation did not converge: spread {spread:.3e} exceeds {tol:.3e}")]
    NoConvergence { spread: f64, tol: f64 },
    #[error("input function has imaginary part {max_imag:.3e}")]
    NonRealInput { max_imag: f64 },
    #[error("moment system condition number {cond:.3e} exceeds cap {cap:.3e}")]
    IllConditioned { cond: f64, cap: f64 },
    #[error("Z/X is not strictly decreasing near t = {t}")]
    NonMonotone { t: f64 },

    // cylinder
    #[error("S_a requested with a = 0")]
    ZeroSymbol,
    #[error("lambda^2 is within {gap:.3e} of the eigenvalue mu = {mu}")]
    ResonantLambda { mu: f64, gap: f64 },
    #[error("Neumann correction for V1 failed to contract (ratio {ratio:.3})")]
    NeumannDivergence { ratio: f64 },

    // cgo
    #[error("phase order {0} is not supported (max 4)")]
    UnsupportedOrder(usize),

    // pde
    #[error("operator is numerically singular (pivot ratio {ratio:.3e})")]
    DirichletEigenvalue { ratio: f64 },
    #[error("boundary datum norm {norm:.3e} exceeds the small-data radius {r0:.3e}")]
    SmallDataViolated { norm: f64, r0: f64 },
    #[error("Picard iteration failed to contract after {iterations} iterations")]
    ContractionFailure { iterations: usize },
    #[error("Krylov solve stalled at relative residual {residual:.3e} after {iterations} iterations")]
    SolverStalled { residual: f64, iterations: usize },
    #[error("no boundary datum gives a nonvanishing solution at the target point")]
    SearchFailed,

    // recon
    #[error("requested lambda {lambda} exceeds the grid budget {budget}")]
    ModeMismatch { lambda: f64, budget: f64 },
    #[error("|W_p(p)|^(m-3) = {value:.3e} is too small")]
    WpTooSmall { value: f64 },

    // cli
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
}
