use std::path::PathBuf;

use spotvol_core::Error as CoreError;

pub type AppResult<T> = std::result::Result<T, AppError>;

/// Process exit status per failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config,
    Data,
    Model,
    Provider,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 2,
            ExitKind::Data => 3,
            ExitKind::Model => 4,
            ExitKind::Provider => 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("stage `{stage}` failed: {source} (last good artifact: {})", .last_good.as_deref().unwrap_or("none"))]
    Stage {
        stage: &'static str,
        last_good: Option<String>,
        source: Box<AppError>,
    },
}

impl AppError {
    pub fn kind(&self) -> ExitKind {
        match self {
            AppError::Config(_) => ExitKind::Config,
            AppError::Data(_) | AppError::Io { .. } => ExitKind::Data,
            AppError::Model(_) => ExitKind::Model,
            AppError::Provider(_) => ExitKind::Provider,
            AppError::Stage { source, .. } => source.kind(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    /// Core errors raised while fitting or forecasting.
    pub fn model(e: CoreError) -> Self {
        match e {
            e @ (CoreError::UnparseableRating(_) | CoreError::RatingOutOfRange(_) | CoreError::Provider(_)) => e.into(),
            e => AppError::Model(e.to_string()),
        }
    }
}

/// Core errors default to the data class; rating failures map to the
/// provider class.
impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnparseableRating(_) | CoreError::RatingOutOfRange(_) | CoreError::Provider(_) => {
                AppError::Provider(e.to_string())
            }
            CoreError::RankDeficient { .. }
            | CoreError::NoConvergence { .. }
            | CoreError::NonFiniteLoss { .. }
            | CoreError::SchemaMismatch { .. } => AppError::Model(e.to_string()),
            e => AppError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Data(e.to_string())
    }
}
