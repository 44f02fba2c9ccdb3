use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    /// A conformal group has fewer samples than the window.
    #[error("group n={group} has {size} samples, fewer than window {window}")]
    GroupTooSmall { group: u32, size: usize, window: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unknown modality {0:?} (expected n, B or d)")]
    UnknownModality(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
