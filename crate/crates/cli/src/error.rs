use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}{}: {message}", line.map(|n| format!(" at line {n}")).unwrap_or_default(), key.as_ref().map(|k| format!(" (key '{k}')")).unwrap_or_default())]
    Config { line: Option<usize>, key: Option<String>, message: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] cvmdi_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Core(_) => "numerical",
        }
    }

    /// Process exit code: 2 for bad input, 1 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }

    /// Single-line JSON error record.
    pub fn record(&self) -> Value {
        let mut rec = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        if let CliError::Config { line, key, .. } = self {
            rec["error"]["line"] = json!(line);
            rec["error"]["key"] = json!(key);
        }
        rec
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
