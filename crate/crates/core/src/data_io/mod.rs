//! File formats: CIFAR-10 batches, model manifest + blob, tensor files and
//! pre-extracted feature datasets. Every binary is little-endian.

mod cifar;
mod features;
mod model;
mod tensor_file;

use std::path::Path;

use thiserror::Error;

pub use cifar::{load_cifar10_batch, parse_cifar10, record_to_tensor, record_values, write_cifar10_batch, Cifar10Record, RECORD_BYTES};
pub use features::{load_dataset, load_features, write_features, Dataset};
pub use model::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use tensor_file::{read_tensor, sidecar_path, write_tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("TruncatedFile: {len} bytes is not a multiple of {record} bytes")]
    TruncatedFile { len: usize, record: usize },
    #[error("BadLabel: record {index} has label {label}")]
    BadLabel { index: usize, label: u8 },
    #[error("ManifestError: {0}")]
    ManifestError(String),
    #[error("BlobBounds: {tensor} needs bytes {start}..{end} but the blob has {blob_len}")]
    BlobBounds {
        tensor: String,
        start: usize,
        end: usize,
        blob_len: usize,
    },
    #[error("ValidationError: {0}")]
    ValidationError(String),
    #[error("bad tensor file: {0}")]
    TensorFile(String),
    #[error("bad dataset: {0}")]
    Dataset(String),
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| io_error(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Splits `bytes` into 4-byte little-endian words.
pub(crate) fn words(bytes: &[u8]) -> impl Iterator<Item = [u8; 4]> + '_ {
    bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]])
}
