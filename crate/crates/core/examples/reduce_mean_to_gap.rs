//! Replaces a spatial ReduceMean with an exact GlobalAccPool sum followed by
//! a constant Mul, in float and in fixed point.

use qdfc::exec::{compare_runs, Plan};
use qdfc::graph::{Graph, Layout, Node, Op, TensorSpec};
use qdfc::transforms::{convert_reduce_mean_to_gap, quantize_graph, QuantConfig};

fn main() -> anyhow::Result<()> {
    let mut g = Graph::new("mean");
    g.inputs.push(TensorSpec::float("x", vec![2, 8, 5, 5], Layout::NCHW));
    g.add_node(Node::new("mean", Op::ReduceMean { axes: vec![2, 3], out_fmt: None }, &["x"], &["y"]));
    g.outputs.push(TensorSpec::float("y", vec![2, 8], Layout::NC));

    let (gap, _) = convert_reduce_mean_to_gap(&g)?;
    println!("float graph: {:?}", gap.op_histogram());
    let report = compare_runs(&Plan::new(&g)?, &Plan::new(&gap)?, 100, 3)?;
    println!("float: max relative deviation {:.2e}", report.float.max_rel);

    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2".parse()?;
    let q = quantize_graph(&g, &cfg)?;
    let (qgap, _) = convert_reduce_mean_to_gap(&q)?;
    let report = compare_runs(&Plan::new(&q)?, &Plan::new(&qgap)?, 100, 3)?;
    let fixed = report.fixed.expect("both graphs quantized");
    println!("fixed: {} of {} output codes differ", fixed.mismatched, fixed.compared);
    Ok(())
}
