//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! the red, green and blue planes, each 32×32 row-major.

use std::path::Path;

use super::{read_file, write_file, DataError};
use crate::exec::TensorValue;
use crate::graph::{Layout, TensorSpec};

pub const RECORD_BYTES: usize = 3073;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cifar10Record {
    pub label: u8,
    /// 3072 bytes: R plane, G plane, B plane.
    pub pixels: Vec<u8>,
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<Cifar10Record>, DataError> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(DataError::TruncatedFile {
            len: bytes.len(),
            record: RECORD_BYTES,
        });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(index, rec)| {
            let label = rec[0];
            if label >= 10 {
                return Err(DataError::BadLabel { index, label });
            }
            Ok(Cifar10Record {
                label,
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

pub fn load_cifar10_batch(path: &Path) -> Result<Vec<Cifar10Record>, DataError> {
    parse_cifar10(&read_file(path)?)
}

pub fn write_cifar10_batch(path: &Path, records: &[Cifar10Record]) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        assert_eq!(r.pixels.len(), 3 * PLANE, "a record holds 3072 pixel bytes");
        bytes.push(r.label);
        bytes.extend_from_slice(&r.pixels);
    }
    write_file(path, &bytes)
}

/// Pixel values `/255` in NHWC order: `value(h, w, c) = plane_c[h*32 + w] / 255`.
pub fn record_values(rec: &Cifar10Record) -> Vec<f32> {
    let mut out = Vec::with_capacity(3 * PLANE);
    for p in 0..PLANE {
        for c in 0..3 {
            out.push(rec.pixels[c * PLANE + p] as f32 / 255.0);
        }
    }
    out
}

/// The record as a `(1, 32, 32, 3)` NHWC image named `image`.
pub fn record_to_tensor(rec: &Cifar10Record) -> TensorValue {
    let spec = TensorSpec::float("image", vec![1, SIDE, SIDE, 3], Layout::NHWC);
    TensorValue::real(spec, record_values(rec).into_iter().map(f64::from).collect())
}
