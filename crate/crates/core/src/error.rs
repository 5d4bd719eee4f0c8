use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error at layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error{}: {msg}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Numeric { epoch: Option<usize>, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn shape(layer: usize, msg: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            msg: msg.into(),
        }
    }
}
