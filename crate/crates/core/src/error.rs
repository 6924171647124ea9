use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A row-level problem found while ingesting a CSV or JSON document.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RowIssue {
    /// 1-based line number in the source document (header is line 1).
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// The field itself is malformed or too small for the requested operation.
    #[error("structural error at `{path}`: {message}")]
    Structural { path: String, message: String },

    /// A pair-exclusion constraint does not describe a valid cross-dimension pair.
    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("no band `{label}` in scale `{scale}`")]
    Mapping { scale: String, label: String },

    #[error("ingestion failed with {} problem(s): {}", .issues.len(), join_issues(.issues))]
    Ingestion { issues: Vec<RowIssue> },

    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("condition `{0}` has no assessed score")]
    Unassessed(String),

    #[error("unknown pair ({0}, {1})")]
    UnknownPair(String, String),

    #[error("scenario assembly failed: dimension `{dimension}` has no condition with cluster affinities")]
    Assembly { dimension: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {message}")]
    Json {
        context: String,
        /// JSON path of the offending value, empty when unknown.
        path: String,
        message: String,
    },
}

fn join_issues(issues: &[RowIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn structural(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Structural {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parameter(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input documents or parameters, as opposed
    /// to failures while computing a stage.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Structural { .. }
                | Error::Constraint(_)
                | Error::Mapping { .. }
                | Error::Ingestion { .. }
                | Error::Parameter { .. }
                | Error::Shape(_)
                | Error::Json { .. }
                | Error::Csv { .. }
        )
    }

    /// Where in the input the problem is, when known: a document path, a
    /// parameter name, or the first offending row.
    pub fn path(&self) -> Option<String> {
        match self {
            Error::Structural { path, .. } => Some(path.clone()),
            Error::Json { path, .. } if !path.is_empty() => Some(path.clone()),
            Error::Parameter { name, .. } => Some(name.clone()),
            Error::Mapping { scale, .. } => Some(scale.clone()),
            Error::Ingestion { issues } => issues.first().map(|i| format!("line {}", i.line)),
            Error::Unassessed(c) => Some(c.clone()),
            Error::Assembly { dimension } => Some(dimension.clone()),
            _ => None,
        }
    }
}
