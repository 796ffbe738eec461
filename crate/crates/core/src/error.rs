use std::path::PathBuf;

/// Errors raised across the racing workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("track ingestion failed: {0}")]
    Ingestion(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("localization input error: pose ({x:.3}, {y:.3}) lies in an occupied cell")]
    OccupiedPose { x: f64, y: f64 },

    #[error("optimization diverged at iteration {iteration}: {reason}")]
    Optimization { iteration: usize, reason: String },

    #[error("simulation fault: {0}")]
    Simulation(String),

    #[error("reset failed: spawn ({x:.3}, {y:.3}) is not free space")]
    Reset { x: f64, y: f64 },

    #[error("training fault: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
