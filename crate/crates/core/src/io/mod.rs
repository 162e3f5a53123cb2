//! File formats: line-delimited JSON for annotations and predictions, a
//! binary sidecar for embedding vectors.
//!
//! Text files start with a header line `{"header": {...}}` declaring the
//! format and its coordinate spaces; one record per following line. Unknown
//! fields are carried through untouched so foreign exporters can extend the
//! formats. Ingestion converts everything to the internal canonical spaces:
//! normalized corner boxes and pixel keypoints.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod annotations;
pub mod embeddings;
pub mod predictions;

pub use annotations::{load_annotations, save_annotations, AnnotationFile, AnnotationRecord};
pub use embeddings::{EmbeddingKey, EmbeddingRole, EmbeddingStore};
pub use predictions::{
    attach_embeddings, load_final, load_predictions, save_final, save_predictions, FinalFile,
    FinalPrediction, ModelPredictions, PredictionRecord, PredictionSet,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: parse error: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: invalid {field}: {message}", path.display())]
    Validation {
        path: PathBuf,
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("{}: missing header line (expected {{\"header\": ...}})", path.display())]
    MissingHeader { path: PathBuf },
    #[error("{}: file declares format `{found}`, expected `{expected}`", path.display())]
    WrongFormat {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{}: embedding dimension {found} does not match declared {expected}", path.display())]
    EmbeddingDimensionMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{}: corrupt file: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
}

impl FormatError {
    /// True for operating-system level failures, as opposed to content
    /// problems in a file that was read successfully.
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

/// Coordinate space declared by a file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordSpace {
    Pixel,
    Normalized,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine<H> {
    header: H,
}

/// Lines of a text format file: the mandatory header, then the non-empty
/// record lines with their 1-based line numbers.
struct FileLines<H> {
    header: H,
    records: Vec<(usize, String)>,
}

fn read_lines<H: DeserializeOwned>(
    path: &Path,
    expected_format: &'static str,
    format_of: impl Fn(&H) -> &str,
) -> Result<FileLines<H>, FormatError> {
    let content = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header_line) = lines.next().ok_or_else(|| FormatError::MissingHeader {
        path: path.to_path_buf(),
    })?;
    let header: HeaderLine<H> =
        serde_json::from_str(header_line).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: header_no,
            message: format!("header: {e}"),
        })?;
    let found = format_of(&header.header);
    if found != expected_format {
        return Err(FormatError::WrongFormat {
            path: path.to_path_buf(),
            expected: expected_format,
            found: found.to_string(),
        });
    }

    Ok(FileLines {
        header: header.header,
        records: lines.map(|(n, l)| (n, l.to_string())).collect(),
    })
}

fn parse_record<R: DeserializeOwned>(
    path: &Path,
    line_no: usize,
    line: &str,
) -> Result<R, FormatError> {
    serde_json::from_str(line).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message: e.to_string(),
    })
}

fn write_jsonl<H: Serialize>(
    path: &Path,
    header: &H,
    records: impl Iterator<Item = String>,
) -> Result<(), FormatError> {
    let io_err = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let header_line =
        serde_json::to_string(&HeaderLine { header }).expect("header serialization cannot fail");
    let mut out = header_line;
    out.push('\n');
    for record in records {
        out.push_str(&record);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err)
}

fn validation(
    path: &Path,
    line: usize,
    field: &'static str,
    message: impl Into<String>,
) -> FormatError {
    FormatError::Validation {
        path: path.to_path_buf(),
        line,
        field,
        message: message.into(),
    }
}
