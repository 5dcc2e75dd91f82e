use std::path::PathBuf;

use crate::ontology::SourceCode;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// data problems exit with 2, numeric failures with 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("unmapped code {}:{}", .0.vocabulary, .0.code)]
    UnmappedCode(SourceCode),
    #[error("{} unmapped code(s): {}", .0.len(), format_codes(.0))]
    UnmappedCodes(Vec<SourceCode>),
    #[error("admission {0} has no section matching the context whitelist")]
    EmptyContext(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("no statement template for relation `{0}`")]
    MissingTemplate(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("no eligible preference pairs for stage {0}")]
    StageEmpty(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for numeric failures (non-finite losses and the like).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

fn format_codes(codes: &[SourceCode]) -> String {
    codes
        .iter()
        .map(|c| format!("{}:{}", c.vocabulary, c.code))
        .collect::<Vec<_>>()
        .join(", ")
}
