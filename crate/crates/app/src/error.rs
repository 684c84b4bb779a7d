use thiserror::Error;

/// Problems with the configuration itself; these map to exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("expression '{text}', column {column}: {msg}")]
    Syntax { text: String, column: usize, msg: String },
    #[error("expression '{text}' is undefined at ({x}, {y})")]
    Domain { text: String, x: f64, y: f64 },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
    #[error("[{section}] unknown key '{key}'")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    pub(crate) fn value(section: &str, key: &str, msg: impl Into<String>) -> Self {
        ConfigError::Value { section: section.into(), key: key.into(), msg: msg.into() }
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ldg_core::LdgError),
    #[error("writing {path}: {msg}")]
    Output { path: String, msg: String },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            // parameter errors from the library are configuration mistakes too
            AppError::Core(ldg_core::LdgError::Parameter(_)) | AppError::Core(ldg_core::LdgError::MeshParse { .. }) => 2,
            AppError::Core(ldg_core::LdgError::MetricNotSpd { .. }) => 2,
            _ => 1,
        }
    }
}

pub type AppResult<T> = std::result::Result<T, AppError>;
