use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at '{key_path}': {message}")]
    Config { key_path: String, message: String },

    #[error("io error on '{path}': {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Compute(#[from] chaotrans::Error),
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_string(), message: e.to_string() }
    }

    pub fn config(key_path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key_path: key_path.into(), message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config_error",
            CliError::Io { .. } => "io_error",
            CliError::Compute(_) => "compute_error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Compute(_) => 4,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Config { key_path, .. } => v["key_path"] = json!(key_path),
            CliError::Io { path, .. } => v["path"] = json!(path),
            CliError::Compute(_) => {}
        }
        v
    }
}
