//! Labeled item pools for few-shot evaluation.
//!
//! A dataset directory holds either `features.bin` (f32 rows) with
//! `labels.bin` (u32 per row), or CIFAR-10 batches. For CIFAR, `test_batch.bin`
//! is used when present, otherwise every `*.bin` file in name order.

use std::path::Path;

use super::{io_error, load_cifar10_batch, read_file, record_values, words, write_file, DataError};

/// Flat items with one label each. Items are fed to a backbone after
/// reshaping to its input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<Vec<f32>>,
    pub labels: Vec<u32>,
}

pub fn load_features(features: &Path, labels: &Path) -> Result<Dataset, DataError> {
    let fbytes = read_file(features)?;
    let lbytes = read_file(labels)?;
    if fbytes.len() % 4 != 0 || lbytes.len() % 4 != 0 {
        return Err(DataError::Dataset("feature and label files must hold 4-byte words".into()));
    }
    let labels: Vec<u32> = words(&lbytes).map(u32::from_le_bytes).collect();
    let values: Vec<f32> = words(&fbytes).map(f32::from_le_bytes).collect();
    if labels.is_empty() {
        return Ok(Dataset {
            items: Vec::new(),
            labels,
        });
    }
    if values.is_empty() || values.len() % labels.len() != 0 {
        return Err(DataError::Dataset(format!(
            "{} feature values do not split into {} rows",
            values.len(),
            labels.len()
        )));
    }
    let dim = values.len() / labels.len();
    Ok(Dataset {
        items: values.chunks(dim).map(<[f32]>::to_vec).collect(),
        labels,
    })
}

/// Writes `features.bin` and `labels.bin`, creating `dir` if needed.
pub fn write_features(dir: &Path, data: &Dataset) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut fbytes = Vec::new();
    for item in &data.items {
        item.iter().for_each(|v| fbytes.extend_from_slice(&v.to_le_bytes()));
    }
    let lbytes: Vec<u8> = data.labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    write_file(&dir.join("features.bin"), &fbytes)?;
    write_file(&dir.join("labels.bin"), &lbytes)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let features = dir.join("features.bin");
    if features.exists() {
        return load_features(&features, &dir.join("labels.bin"));
    }
    let test = dir.join("test_batch.bin");
    let batches = if test.exists() {
        vec![test]
    } else {
        let mut found: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| io_error(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        found.sort();
        found
    };
    if batches.is_empty() {
        return Err(DataError::Dataset(format!("{} has no features.bin or CIFAR batches", dir.display())));
    }
    let mut data = Dataset {
        items: Vec::new(),
        labels: Vec::new(),
    };
    for path in batches {
        for rec in load_cifar10_batch(&path)? {
            data.items.push(record_values(&rec));
            data.labels.push(rec.label as u32);
        }
    }
    Ok(data)
}
