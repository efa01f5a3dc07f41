use thiserror::Error;

use crate::spec::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Grid coordinates of a public state where the stage fixed point failed.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedPoint {
    pub stage: usize,
    pub belief: Vec<f64>,
    pub mean_field: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game specification:\n{0}")]
    Validation(ValidationReport),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simplex grid with dim {dim} and resolution {resolution} has {points} points, cap is {cap}")]
    GridTooLarge {
        dim: usize,
        resolution: usize,
        points: u128,
        cap: usize,
    },

    #[error("point {point:?} is not on the probability simplex (sum {sum})")]
    OffSimplex { point: Vec<f64>, sum: f64 },

    #[error("leader action {action} has zero probability under the current prescription and belief")]
    ZeroProbabilityAction { action: usize },

    #[error("no stage equilibrium at {} grid point(s), first at stage {} belief {:?} mean field {:?}",
        .0.len(), .0[0].stage, .0[0].belief, .0[0].mean_field)]
    NoEquilibrium(Vec<FailedPoint>),

    #[error("value iteration did not converge after {} iterations (last delta {:e})",
        .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { history: Vec<f64> },

    #[error("oracle enumeration needs {needed} profile evaluations, cap is {cap}")]
    EnumerationTooLarge { needed: u128, cap: u128 },

    #[error("oracle requires grid-closed dynamics: {0}")]
    NotGridClosed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml serialization error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}
