//! Writes the reference backbones and a separable synthetic dataset so the
//! `qdfc` binary has something to work on:
//!
//! ```text
//! cargo run --example emit_reference_model -- out/
//! ```

use std::path::PathBuf;

use qdfc::data_io::{save_model, write_features, write_tensor, Dataset};
use qdfc::exec::TensorValue;
use qdfc::reference::{resnet9_like, separable_backbone, separable_items};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args_os().nth(1).unwrap_or_else(|| "reference".into()));
    std::fs::create_dir_all(&out)?;

    let backbone = resnet9_like(7);
    save_model(&backbone, &out.join("resnet9.json"), &out.join("resnet9.bin"))?;

    let (classes, side) = (8, 4);
    save_model(&separable_backbone(classes, side), &out.join("separable.json"), &out.join("separable.bin"))?;
    let (items, labels) = separable_items(classes, 30, side, 0.3, 11);
    write_features(&out.join("separable_data"), &Dataset { items, labels })?;

    let spec = backbone.inputs[0].clone();
    let pixels = (0..spec.numel()).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
    write_tensor(&out.join("image.bin"), &TensorValue::real(spec, pixels))?;

    println!("wrote resnet9.{{json,bin}}, separable.{{json,bin}}, separable_data/ and image.bin to {}", out.display());
    Ok(())
}
