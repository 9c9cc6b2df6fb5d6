use thiserror::Error;

/// Errors raised by the model, simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid simplex vector: {0}")]
    Simplex(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("control precondition violated: thinning {phi} < 0 on cell ({i},{j}) in bin {bin}")]
    NegativeThinning { i: usize, j: usize, bin: usize, phi: f64 },

    #[error("non-finite particle position at step {step} (seed {seed}, replica {replica}, particle {particle})")]
    NonFinite {
        step: usize,
        seed: u64,
        replica: u64,
        particle: usize,
    },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("boundary mass {mass:.3e} exceeds 1e-10 at t = {time:.4}; widen the spatial grid")]
    BoundaryMass { mass: f64, time: f64 },

    #[error("CFL violated: dt = {dt:.3e} exceeds stable step {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("quadrature did not converge: last relative change {change:.3e}")]
    Quadrature { change: f64 },

    #[error("missing measure: {0}")]
    MissingMeasure(String),

    #[error("insufficient replicas: {got} < {required} ({reason})")]
    InsufficientReplicas { got: usize, required: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
