use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) const SCENE: &str = "scene-model";
pub(crate) const DISCRIMINATORS: &str = "discriminators";
pub(crate) const ENSEMBLE: &str = "ensemble";
pub(crate) const VTEG: &str = "vteg";

/// Errors raised by the engine. Every message carries the name of the
/// module that produced it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] invalid configuration: {msg}")]
    Config { module: &'static str, msg: String },

    #[error("[{module}] {msg}")]
    Data { module: &'static str, msg: String },

    #[error("[{module}] shape mismatch: {msg}")]
    Shape { module: &'static str, msg: String },

    #[error("[{module}] class {class_id} is not present in the map of provider {provider_id}")]
    ClassAbsent {
        module: &'static str,
        provider_id: usize,
        class_id: u8,
    },

    #[error("[{module}] not trained: {msg}")]
    Untrained { module: &'static str, msg: String },

    #[error("[{module}] numeric failure: {msg}")]
    Numeric { module: &'static str, msg: String },

    #[error("[io] {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("[io] {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Config { module, msg: msg.into() }
    }

    pub fn data(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Data { module, msg: msg.into() }
    }

    pub fn shape(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape { module, msg: msg.into() }
    }

    pub fn untrained(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Untrained { module, msg: msg.into() }
    }

    pub fn numeric(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric { module, msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Process exit code for the command-line front end:
    /// 2 configuration, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Numeric { .. } => 4,
            _ => 3,
        }
    }
}
