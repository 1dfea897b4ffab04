//! Dataset ingestion, splitting and model serialization.

mod idx;
mod model_file;
mod split;
mod tabular;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::matrix::Matrix;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use model_file::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC};
pub use split::{kfold_split, Fold};
pub use tabular::{load_csv, parse_csv, LabelColumn};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}{}: {detail}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Csv {
        path: String,
        line: Option<u64>,
        detail: String,
    },

    #[error("model checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("unsupported model file version {found:?}")]
    UnknownVersion { found: String },

    #[error("not a model file (magic {found:?})")]
    NotModelFile { found: Vec<u8> },

    #[error("model layers do not chain: {0}")]
    ShapeChain(String),

    #[error("model file is truncated: {0}")]
    ModelTruncated(String),

    #[error("model file is malformed: {0}")]
    ModelMalformed(String),
}

impl DataError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Samples as columns: `x` is `d × N` and `labels[j]` belongs to column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub name: String,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            name: self.name.clone(),
            metadata: self.metadata.clone(),
        }
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}
