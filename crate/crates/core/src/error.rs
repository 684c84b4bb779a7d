use thiserror::Error;

/// Errors raised by the discretization, assembly, and flow layers.
#[derive(Debug, Error)]
pub enum LdgError {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("mesh file line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("metric not SPD at ({x:.6}, {y:.6}): eigenvalue bound {bound:.3e}")]
    MetricNotSpd { x: f64, y: f64, bound: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-positive pivot {value:.3e} at index {index}")]
    NonPositivePivot { index: usize, value: f64 },
    #[error("singular saddle system: pivot {value:.3e} at index {index}")]
    SingularKkt { index: usize, value: f64 },
    #[error("iterative solve did not converge after {iterations} iterations (residuals: {history:?})")]
    NotConverged { iterations: usize, history: Vec<f64> },
    #[error("energy increased by {increase:.3e} at step {step}")]
    EnergyIncrease { step: usize, increase: f64 },
    #[error("step rejected {halvings} times at step {step}")]
    StepRejected { step: usize, halvings: usize },
    #[error("immersion not admissible: max |grad y^T grad y - g| = {violation:.3e}")]
    NotAdmissible { violation: f64 },
}

pub type Result<T> = std::result::Result<T, LdgError>;
