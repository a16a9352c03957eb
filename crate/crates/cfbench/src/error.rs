use std::path::PathBuf;

use cfbench_core::calibration::CalibrationError;
use cfbench_core::dataio::DataError;
use cfbench_core::learners::LearnerError;
use cfbench_core::metrics::MetricError;
use cfbench_core::scoring::ScoreError;
use cfbench_core::simulation::RolloutError;
use cfbench_core::smoothing::FilterError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: missing column `{column}`", path.display())]
    Schema { path: PathBuf, column: String },
    #[error("{}: no data rows", .0.display())]
    EmptyInput(PathBuf),
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("{0}")]
    Failed(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Score(ScoreError::TooFewModels(_)) => 2,
            Error::EmptyInput(_) => 3,
            Error::Schema { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
