//! Error type shared across the crate.

use std::fmt;

/// Errors produced by configuration validation, shape checks, and I/O.
#[derive(Debug)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    InvalidConfig(String),
    /// An argument is outside the operation's domain.
    InvalidArgument(String),
    /// Array dimensions do not line up.
    ShapeMismatch { expected: String, got: String },
    /// Could not place all requested actions without same-class overlap.
    PackingFailed { video: String, attempts: usize },
    /// A detection references a video id absent from the annotations.
    UnknownVideo(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::PackingFailed { video, attempts } => {
                write!(f, "could not pack actions for {video} after {attempts} attempts")
            }
            Error::UnknownVideo(id) => write!(f, "unknown video id: {id}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
