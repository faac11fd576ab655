use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `field` is the dotted path of the key.
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("degenerate look-at: {0}")]
    DegenerateLookAt(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("object id {0} present in id buffer but has no label")]
    UnlabeledObject(u32),

    #[error("malformed JSON in {path} at line {line}, column {column}: {message}")]
    MalformedJson {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// The document parsed but does not satisfy its schema. `record` is the
    /// zero-based index of the offending record, when one applies.
    #[error("schema violation in {path}{}: {message}", record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    Schema {
        path: PathBuf,
        record: Option<usize>,
        message: String,
    },

    #[error("{} prediction(s) reference unknown frame ids: {}", .0.len(), .0.join(", "))]
    UnknownFrames(Vec<String>),

    #[error("failed to read {path}: {source}")]
    ReadInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed for {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("no defined cells in AP grid")]
    EmptyGrid,
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::ReadInput {
            path: path.into(),
            source,
        }
    }

    /// Splits a `serde_json` failure into malformed-document vs schema errors.
    pub(crate) fn from_json(path: impl Into<PathBuf>, err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let path = path.into();
        match err.classify() {
            Category::Syntax | Category::Eof | Category::Io => Error::MalformedJson {
                path,
                line: err.line(),
                column: err.column(),
                message: err.to_string(),
            },
            Category::Data => Error::Schema {
                path,
                record: None,
                message: err.to_string(),
            },
        }
    }
}
