//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("catalog schema error: {0}")]
    CatalogSchema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("task error: {0}")]
    Task(String),

    #[error("goal parse error: {0}")]
    GoalParse(String),

    #[error("memory error: {0}")]
    Memory(String),

    #[error("planner reply malformed: {0}")]
    PlannerAbort(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
