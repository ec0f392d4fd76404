//! Tensor files: raw little-endian values plus a `<file>.json` sidecar
//! holding the spec. Float tensors are f32, fixed tensors i32 codes,
//! accumulator tensors i64 codes.

use std::path::{Path, PathBuf};

use super::{read_file, write_file, DataError};
use crate::exec::{Data, TensorValue};
use crate::graph::{DType, TensorSpec};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn element_bytes(dtype: DType) -> usize {
    match dtype {
        DType::Acc { .. } => 8,
        _ => 4,
    }
}

pub fn write_tensor(path: &Path, value: &TensorValue) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(value.len() * element_bytes(value.spec.dtype));
    match (&value.data, value.spec.dtype) {
        (Data::Real(v), _) => v.iter().for_each(|&x| bytes.extend_from_slice(&(x as f32).to_le_bytes())),
        (Data::Codes(v), DType::Acc { .. }) => v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes())),
        (Data::Codes(v), _) => {
            for &c in v {
                let c = i32::try_from(c).map_err(|_| DataError::TensorFile(format!("code {c} does not fit i32")))?;
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    let mut sidecar = serde_json::to_string_pretty(&value.spec).expect("spec serializes");
    sidecar.push('\n');
    write_file(path, &bytes)?;
    write_file(&sidecar_path(path), sidecar.as_bytes())
}

pub fn read_tensor(path: &Path) -> Result<TensorValue, DataError> {
    let sidecar = read_file(&sidecar_path(path))?;
    let spec: TensorSpec = serde_json::from_slice(&sidecar).map_err(|e| DataError::TensorFile(e.to_string()))?;
    if let Some(problem) = spec.check() {
        return Err(DataError::TensorFile(problem));
    }
    let bytes = read_file(path)?;
    let width = element_bytes(spec.dtype);
    let expected = spec.shape.iter().try_fold(width, |acc, &d| acc.checked_mul(d));
    if expected != Some(bytes.len()) {
        return Err(DataError::TensorFile(format!(
            "{} holds {} bytes, spec {:?} needs {}",
            path.display(),
            bytes.len(),
            spec.shape,
            expected.map_or("more".into(), |n| n.to_string())
        )));
    }
    let data = match spec.dtype {
        DType::Float32 => Data::Real(super::words(&bytes).map(|w| f32::from_le_bytes(w) as f64).collect()),
        DType::Fixed(fmt) => {
            let codes: Vec<i64> = super::words(&bytes).map(|w| i32::from_le_bytes(w) as i64).collect();
            if let Some(c) = codes.iter().find(|&&c| !fmt.contains_code(c)) {
                return Err(DataError::TensorFile(format!("code {c} outside {fmt}")));
            }
            Data::Codes(codes)
        }
        DType::Acc { .. } => Data::Codes(
            bytes
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ),
    };
    Ok(TensorValue { spec, data })
}
