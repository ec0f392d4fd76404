//! Absorbs a layout Transpose into the MultiThreshold that follows it and
//! checks that outputs are unchanged bit for bit.

use qdfc::exec::{compare_runs, Plan};
use qdfc::graph::{Graph, Layout, Node, Op, TensorSpec};
use qdfc::transforms::{absorb_transpose_into_multithreshold, quantize_graph, QuantConfig};

fn main() -> anyhow::Result<()> {
    let mut g = Graph::new("transpose_relu");
    g.inputs.push(TensorSpec::float("x", vec![1, 4, 4, 3], Layout::NHWC));
    g.add_node(Node::new("to_nchw", Op::Transpose { perm: vec![0, 3, 1, 2] }, &["x"], &["t"]));
    g.add_node(Node::new("relu", Op::Relu {}, &["t"], &["y"]));
    g.outputs.push(TensorSpec::float("y", vec![1, 3, 4, 4], Layout::NCHW));

    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2,input=s:2.4".parse()?;
    let before = quantize_graph(&g, &cfg)?;
    let (after, changes) = absorb_transpose_into_multithreshold(&before)?;
    let order = |g: &Graph| g.nodes.iter().map(|n| format!("{}({})", n.name, n.op.kind())).collect::<Vec<_>>().join(" -> ");
    println!("before: {}", order(&before));
    println!("after:  {} ({changes} rewrite)", order(&after));

    let report = compare_runs(&Plan::new(&before)?, &Plan::new(&after)?, 64, 1)?;
    println!("bit-exact over {} random inputs: {}", report.trials, report.bit_exact());
    Ok(())
}
