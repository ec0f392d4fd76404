//! Quantizes the reference backbone, runs the default pipeline, and checks the
//! compiled graph against the uncompiled one on random inputs.

use qdfc::exec::{compare_runs, error_bound, Plan};
use qdfc::reference::resnet9_like;
use qdfc::transforms::{quantize_graph, run_pipeline, QuantConfig, DEFAULT_PIPELINE};

fn main() -> anyhow::Result<()> {
    let float = resnet9_like(7);
    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2".parse()?;
    let quantized = quantize_graph(&float, &cfg)?;
    let (compiled, log) = run_pipeline(&quantized, DEFAULT_PIPELINE)?;

    for rec in &log {
        println!("{:<28} changes {:>3}  nodes {:>3}", rec.pass, rec.changes, rec.nodes);
    }
    println!("before: {:?}", quantized.op_histogram());
    println!("after:  {:?}", compiled.op_histogram());

    let (before, after) = (Plan::new(&quantized)?, Plan::new(&compiled)?);
    let report = compare_runs(&before, &after, 8, 42)?;
    println!(
        "fixed mismatches {}/{}, float max rel {:.2e}",
        report.fixed.map_or(0, |f| f.mismatched),
        report.fixed.map_or(0, |f| f.compared),
        report.float.max_rel
    );

    let bound = error_bound(&after)?;
    println!("fixed-vs-float bound on features: {:.4}", bound.max_output());
    Ok(())
}
