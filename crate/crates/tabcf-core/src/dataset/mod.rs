//! Tabular data handling: schema declaration, CSV ingestion, min-max +
//! one-hot preprocessing, the inverse transforms, and train/test splitting.
//!
//! The encoded layout is fixed across the whole pipeline: all numerical
//! features first (schema declaration order, each min-max scaled to
//! `[0, 1]`), then one one-hot block per categorical feature (category
//! order taken from the schema, never from the data).

mod encoded;
mod preprocess;
mod schema;
mod table;

pub use encoded::{EncodedDataset, SplitAssignment, TestSelection};
pub use preprocess::Preprocessor;
pub use schema::{ColumnKind, SchemaLayout, TableSchema};
pub use table::{load_csv, write_csv, RawRow, RawTable};

use std::fmt;

/// Errors from schema parsing, CSV ingestion, and the encode/decode pair.
#[derive(Debug)]
pub enum DatasetError {
    /// The schema file failed structural validation.
    InvalidSchema(String),
    /// Underlying I/O failure, with the path involved.
    Io { path: String, source: std::io::Error },
    /// The schema file is not valid structured text.
    SchemaParse(String),
    /// CSV header does not contain exactly the schema columns + target.
    HeaderMismatch { expected: Vec<String>, found: Vec<String> },
    /// A categorical cell holds a value outside the declared domain.
    UnknownCategory { column: String, value: String },
    /// A numerical cell failed to parse.
    BadNumeric { column: String, row: usize, value: String },
    /// An empty cell; missing values are rejected, not imputed.
    MissingValue { column: String, row: usize },
    /// Preprocessor fitting needs at least two rows.
    TooFewRows { found: usize },
    /// A categorical block handed to decode is not exactly one-hot.
    NotOneHot { column: String },
    /// An encoded row has the wrong width for the schema.
    WidthMismatch { expected: usize, found: usize },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::InvalidSchema(msg) => write!(f, "invalid schema: {msg}"),
            DatasetError::Io { path, source } => write!(f, "io error on {path}: {source}"),
            DatasetError::SchemaParse(msg) => write!(f, "schema parse error: {msg}"),
            DatasetError::HeaderMismatch { expected, found } => write!(
                f,
                "csv header mismatch: expected columns {expected:?}, found {found:?}"
            ),
            DatasetError::UnknownCategory { column, value } => {
                write!(f, "column '{column}': category '{value}' is not in the declared domain")
            }
            DatasetError::BadNumeric { column, row, value } => {
                write!(f, "column '{column}', row {row}: cannot parse '{value}' as a number")
            }
            DatasetError::MissingValue { column, row } => {
                write!(f, "column '{column}', row {row}: missing value")
            }
            DatasetError::TooFewRows { found } => {
                write!(f, "need at least 2 rows to fit the preprocessor, got {found}")
            }
            DatasetError::NotOneHot { column } => {
                write!(f, "column '{column}': block is not exactly one-hot")
            }
            DatasetError::WidthMismatch { expected, found } => {
                write!(f, "encoded row width {found} does not match schema width {expected}")
            }
        }
    }
}

impl std::error::Error for DatasetError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            DatasetError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
