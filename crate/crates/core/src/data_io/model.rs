//! Model artifacts: a JSON manifest plus a binary blob of initializer data.
//!
//! The manifest is pretty-printed with sorted keys. Initializers are stored in
//! name order at consecutive offsets: float tensors as f32, fixed tensors as
//! i32 codes. Saving a loaded model reproduces both files byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, words, write_file, DataError};
use crate::graph::{infer_shapes, validate, Graph, Initializer, Node, Payload, TensorSpec};

const FORMAT: &str = "qdfc-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    name: String,
    inputs: Vec<TensorSpec>,
    outputs: Vec<TensorSpec>,
    nodes: Vec<Node>,
    initializers: Vec<BlobEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobEntry {
    spec: TensorSpec,
    /// Byte offset into the blob.
    offset: usize,
    /// Element count; each element takes four bytes.
    length: usize,
}

/// Canonical manifest text and blob bytes for `g`.
pub fn model_to_bytes(g: &Graph) -> (String, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(g.initializers.len());
    for init in g.initializers.values() {
        let offset = blob.len();
        match &init.data {
            Payload::F32(v) => v.iter().for_each(|x| blob.extend_from_slice(&x.to_le_bytes())),
            Payload::Codes(v) => v.iter().for_each(|x| blob.extend_from_slice(&x.to_le_bytes())),
        }
        entries.push(BlobEntry {
            spec: init.spec.clone(),
            offset,
            length: init.data.len(),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        name: g.name.clone(),
        inputs: g.inputs.clone(),
        outputs: g.outputs.clone(),
        nodes: g.nodes.clone(),
        initializers: entries,
    };
    // a Value round trip sorts object keys
    let value = serde_json::to_value(&manifest).expect("manifest serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    (text, blob)
}

/// Parses a manifest and blob, then validates and shape-infers the graph.
pub fn model_from_bytes(manifest: &str, blob: &[u8]) -> Result<Graph, DataError> {
    let m: Manifest = serde_json::from_str(manifest).map_err(|e| DataError::ManifestError(e.to_string()))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(DataError::ManifestError(format!(
            "expected {FORMAT} version {VERSION}, got {} version {}",
            m.format, m.version
        )));
    }
    let mut g = Graph::new(m.name);
    g.inputs = m.inputs;
    g.outputs = m.outputs;
    g.nodes = m.nodes;
    for entry in m.initializers {
        let name = entry.spec.name.clone();
        let numel = entry
            .spec
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| DataError::ManifestError(format!("{name}: shape overflows")))?;
        if numel != entry.length {
            return Err(DataError::ManifestError(format!(
                "{name}: length {} does not match shape {:?}",
                entry.length, entry.spec.shape
            )));
        }
        let end = entry.length.checked_mul(4).and_then(|n| n.checked_add(entry.offset));
        let bytes = match end {
            Some(end) if end <= blob.len() => &blob[entry.offset..end],
            _ => {
                return Err(DataError::BlobBounds {
                    tensor: name,
                    start: entry.offset,
                    end: end.unwrap_or(usize::MAX),
                    blob_len: blob.len(),
                })
            }
        };
        let data = if entry.spec.dtype.is_float() {
            Payload::F32(words(bytes).map(f32::from_le_bytes).collect())
        } else {
            Payload::Codes(words(bytes).map(i32::from_le_bytes).collect())
        };
        if g.initializers.contains_key(&name) {
            return Err(DataError::ManifestError(format!("initializer {name} listed twice")));
        }
        g.add_initializer(Initializer { spec: entry.spec, data });
    }
    let diags = validate(&g);
    if !diags.is_empty() {
        let text: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(DataError::ValidationError(text.join("; ")));
    }
    infer_shapes(&g).map_err(|e| DataError::ValidationError(e.to_string()))
}

pub fn save_model(g: &Graph, manifest_path: &Path, blob_path: &Path) -> Result<(), DataError> {
    let (text, blob) = model_to_bytes(g);
    write_file(manifest_path, text.as_bytes())?;
    write_file(blob_path, &blob)
}

pub fn load_model(manifest_path: &Path, blob_path: &Path) -> Result<Graph, DataError> {
    let text = read_file(manifest_path)?;
    let text = String::from_utf8(text).map_err(|e| DataError::ManifestError(e.to_string()))?;
    model_from_bytes(&text, &read_file(blob_path)?)
}
