//! Reads a CIFAR-10 binary batch given on the command line, or writes and
//! re-reads a small synthetic one when no path is given.

use std::path::PathBuf;

use qdfc::data_io::{load_cifar10_batch, record_to_tensor, write_cifar10_batch, Cifar10Record};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args_os().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let records: Vec<Cifar10Record> = (0..10u8)
                .map(|label| Cifar10Record {
                    label,
                    pixels: (0..3072).map(|i| (i as u8).wrapping_mul(label + 1)).collect(),
                })
                .collect();
            let path = dir.path().join("synthetic_batch.bin");
            write_cifar10_batch(&path, &records)?;
            path
        }
    };

    let records = load_cifar10_batch(&path)?;
    let mut counts = [0usize; 10];
    for r in &records {
        counts[r.label as usize] += 1;
    }
    println!("{}: {} records, per-class counts {counts:?}", path.display(), records.len());
    let t = record_to_tensor(&records[records.len() - 1]);
    println!("last record as {} {:?} {:?}, second pixel {:?}", t.spec.name, t.spec.shape, t.spec.layout, &t.to_reals()[3..6]);
    Ok(())
}
