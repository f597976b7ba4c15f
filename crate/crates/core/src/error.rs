use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown dispersion family `{0}`")]
    UnknownFamily(String),

    #[error("velocity {v} outside admissible range ({lo}, {hi}) with boundary margin {margin}")]
    VelocityOutsideRange { v: f64, lo: f64, hi: f64, margin: f64 },

    #[error("group-velocity inversion did not converge for v = {0}")]
    NoConvergence(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dense cubic path is limited to N <= {limit}, got N = {n}; use a constant or separable symbol")]
    DenseLimit { n: usize, limit: usize },

    #[error("plane wave at xi = {xi} not reproduced by the cubic form (relative defect {defect:e}); aliasing suspected")]
    NotProportional { xi: f64, defect: f64 },

    #[error("confinement violated at t = {t}: boundary mass fraction {fraction:e} exceeds {tol:e}")]
    Confinement { t: f64, fraction: f64, tol: f64 },

    #[error("non-finite values at t = {t}; halve the time step")]
    Instability { t: f64 },

    #[error("backward evolution grew the L2 norm by a factor {factor:.3}; start later or use smaller data")]
    BackwardGrowth { factor: f64 },

    #[error("profile drift {drift:e} exceeds tolerance {tol:e}")]
    Drift { drift: f64, tol: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
