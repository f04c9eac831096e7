use thiserror::Error;

pub type Result<T> = std::result::Result<T, RedsError>;

#[derive(Debug, Error)]
pub enum RedsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A feature map produced a non-finite or wrongly sized output.
    #[error("evaluation of `{map}` failed{}: {reason}", perturbation_suffix(.perturbation))]
    Evaluation {
        map: String,
        /// Signed 1-based coordinate index of the finite-difference probe, if any
        /// (`+j` for `z + eps e_j`, `-j` for `z - eps e_j`).
        perturbation: Option<i64>,
        reason: String,
    },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("empty subspace: {0}")]
    EmptySubspace(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate attribute: {0}")]
    DegenerateAttribute(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn perturbation_suffix(p: &Option<i64>) -> String {
    match p {
        Some(j) if *j > 0 => format!(" at z + eps*e_{}", j - 1),
        Some(j) => format!(" at z - eps*e_{}", -j - 1),
        None => String::new(),
    }
}
