use serde::Serialize;
use thiserror::Error;

/// One offending scenario key. Malformed lines use `line <n>` as the key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaIssue {
    pub key: String,
    pub problem: String,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario violates the schema ({} issue(s))", .0.len())]
    Schema(Vec<SchemaIssue>),

    #[error("scenario is inconsistent: {0}")]
    Scenario(String),

    #[error("{0}")]
    Core(#[from] fracwave::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Schema(_) => "schema",
            Self::Scenario(_) => "scenario",
            Self::Core(fracwave::Error::Pipeline { .. }) => "pipeline",
            Self::Core(fracwave::Error::Io(_)) | Self::Io { .. } => "io",
            Self::Core(_) => "numerical",
            Self::Json(_) => "json",
            Self::VerifyFailed(_) => "verify",
        }
    }

    /// Process exit code: 2 for bad input, 3 for failed verification, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) | Self::Scenario(_) => 2,
            Self::VerifyFailed(_) => 3,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut out = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        match self {
            Self::Schema(issues) => out["issues"] = serde_json::to_value(issues).unwrap_or_default(),
            Self::Core(fracwave::Error::Pipeline { stage, reason }) => {
                out["stage"] = stage.clone().into();
                out["reason"] = reason.clone().into();
            }
            _ => {}
        }
        out
    }
}
