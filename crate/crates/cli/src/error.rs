use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spatialprobe::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Check(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("png: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Check(_) => "check_failed",
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Image(_) => "image",
            CliError::Json(_) => "json",
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One JSON object on stderr; the exit code is 2 for usage errors and 1
/// otherwise.
pub fn report(e: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": e.kind(), "message": e.to_string().trim_end() });
    eprintln!("{body}");
    ExitCode::from(if matches!(e, CliError::Usage(_)) { 2 } else { 1 })
}

pub fn read_string(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
