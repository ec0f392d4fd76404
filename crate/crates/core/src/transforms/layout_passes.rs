//! Rewrites that make layout changes explicit and then move or remove them.

use super::edit::{fresh_tensor, insert_node, rewire, spec, transpose_producer};
use super::TransformError;
use crate::graph::{compose, is_identity, perm_between, Graph, Layout, Op};

type Step = Result<Option<Graph>, TransformError>;

fn layout_tag(l: Layout) -> String {
    l.letters().to_lowercase()
}

/// Makes every implicit reorder explicit as a Transpose in front of the
/// consumer.
pub(super) fn insert_layout_transposes(g: &Graph) -> Step {
    for (idx, node) in g.nodes.iter().enumerate() {
        let x = spec(g, &node.inputs[0]);
        let mut wanted = Vec::new();
        if let Some(req) = node.op.required_layout(x.rank()) {
            wanted.push((0, x.layout, req));
        }
        if matches!(node.op, Op::Add { .. } | Op::Mul { .. }) {
            let b = spec(g, &node.inputs[1]);
            if b.numel() > 1 && b.numel() == x.numel() && b.rank() == x.rank() {
                wanted.push((1, b.layout, x.layout));
            }
        }
        for (slot, from, to) in wanted {
            if from == to {
                continue;
            }
            let perm = perm_between(from, to).ok_or_else(|| TransformError::UnsupportedLayoutPair {
                node: node.name.clone(),
                from,
                to,
            })?;
            let mut out = g.clone();
            let src = node.inputs[slot].clone();
            let t = fresh_tensor(g, &format!("{src}_{}", layout_tag(to)));
            insert_node(&mut out, idx, &format!("{}_relayout", node.name), Op::Transpose { perm }, &[&src], &t);
            out.nodes[idx + 1].inputs[slot] = t;
            return Ok(Some(out));
        }
    }
    Ok(None)
}

/// Replaces node `idx` by `op` reading `inputs` in `in_layout`, followed by a
/// transpose back to the node's original output layout when they differ.
fn rebuild_with_transpose(g: &Graph, idx: usize, op: Op, inputs: &[&str], in_layout: Layout) -> Graph {
    let node = &g.nodes[idx];
    let out_name = node.output().to_string();
    let out_layout = spec(g, &out_name).layout;
    let mut out = g.clone();
    let base = node.name.clone();
    if in_layout == out_layout {
        out.nodes[idx].op = op;
        out.nodes[idx].inputs = inputs.iter().map(|s| s.to_string()).collect();
        return out;
    }
    let perm = perm_between(in_layout, out_layout).expect("same-rank layouts");
    let mid = fresh_tensor(g, &format!("{out_name}_{}", layout_tag(in_layout)));
    out.nodes.remove(idx);
    insert_node(&mut out, idx, &base, op, inputs, &mid);
    insert_node(&mut out, idx + 1, &format!("{base}_transpose"), Op::Transpose { perm }, &[&mid], &out_name);
    out
}

/// Transpose → MultiThreshold becomes MultiThreshold′ → Transpose, with the
/// threshold reading the pre-transpose tensor in its own layout.
pub(super) fn absorb_transpose(g: &Graph) -> Step {
    for (idx, node) in g.nodes.iter().enumerate() {
        let Op::MultiThreshold { scale, bias, out_fmt, .. } = node.op else {
            continue;
        };
        let Some((t, _)) = transpose_producer(g, &node.inputs[0]) else {
            continue;
        };
        let src = &t.inputs[0];
        let lin = spec(g, src).layout;
        let op = Op::MultiThreshold {
            data_layout: lin,
            scale,
            bias,
            out_fmt,
        };
        return Ok(Some(rebuild_with_transpose(g, idx, op, &[src, &node.inputs[1]], lin)));
    }
    Ok(None)
}

fn is_broadcast_constant(g: &Graph, tensor: &str, channels: usize) -> bool {
    g.initializers.get(tensor).is_some_and(|init| {
        let s = &init.spec;
        s.numel() == 1 || (s.rank() == 1 && s.shape[0] == channels)
    })
}

/// Moves transposes below layout-agnostic consumers so that chains of them
/// meet and cancel, and folds them into reductions.
pub(super) fn sink_transposes(g: &Graph) -> Step {
    for (idx, node) in g.nodes.iter().enumerate() {
        let Some((t, perm)) = transpose_producer(g, &node.inputs[0]) else {
            continue;
        };
        let src = t.inputs[0].as_str();
        let lin = spec(g, src).layout;
        match &node.op {
            Op::MultiThreshold { .. } => {
                // handled identically by absorb_transpose
                let mut op = node.op.clone();
                if let Op::MultiThreshold { data_layout, .. } = &mut op {
                    *data_layout = lin;
                }
                return Ok(Some(rebuild_with_transpose(g, idx, op, &[src, &node.inputs[1]], lin)));
            }
            Op::MaxPool { kernel, stride, .. } => {
                let op = Op::MaxPool {
                    kernel: *kernel,
                    stride: *stride,
                    data_layout: lin,
                };
                return Ok(Some(rebuild_with_transpose(g, idx, op, &[src], lin)));
            }
            Op::Relu {} => return Ok(Some(rebuild_with_transpose(g, idx, node.op.clone(), &[src], lin))),
            Op::Add { .. } | Op::Mul { .. } => {
                let b = node.inputs[1].as_str();
                let x = spec(g, &node.inputs[0]);
                let channels = x.shape[x.layout.channel_axis()];
                let b_src = if is_broadcast_constant(g, b, channels) {
                    Some(b)
                } else if let Some((t2, p2)) = transpose_producer(g, b) {
                    (p2 == perm && spec(g, &t2.inputs[0]).layout == lin).then_some(t2.inputs[0].as_str())
                } else {
                    let bs = spec(g, b);
                    (bs.layout == lin && bs.numel() == x.numel()).then_some(b)
                };
                if let Some(b_src) = b_src {
                    return Ok(Some(rebuild_with_transpose(g, idx, node.op.clone(), &[src, b_src], lin)));
                }
            }
            Op::ReduceMean { axes, out_fmt } => {
                let rank = perm.len();
                let kept: Vec<usize> = (0..rank).filter(|a| !axes.contains(a)).map(|a| perm[a]).collect();
                if kept.windows(2).all(|w| w[0] < w[1]) {
                    let mut new_axes: Vec<usize> = axes.iter().map(|&a| perm[a]).collect();
                    new_axes.sort_unstable();
                    let op = Op::ReduceMean {
                        axes: new_axes,
                        out_fmt: *out_fmt,
                    };
                    let mut out = g.clone();
                    out.nodes[idx].op = op;
                    out.nodes[idx].inputs[0] = src.to_string();
                    return Ok(Some(out));
                }
            }
            Op::GlobalAccPool { .. } => {
                let mut out = g.clone();
                out.nodes[idx].op = Op::GlobalAccPool { data_layout: lin };
                out.nodes[idx].inputs[0] = src.to_string();
                return Ok(Some(out));
            }
            _ => {}
        }
    }
    Ok(None)
}

/// Removes a transpose whose input is produced by a transpose with the
/// inverse permutation.
pub(super) fn cancel_inverse_transposes(g: &Graph) -> Step {
    for node in &g.nodes {
        let Op::Transpose { perm: second } = &node.op else {
            continue;
        };
        let Some((first, first_perm)) = transpose_producer(g, &node.inputs[0]) else {
            continue;
        };
        if !is_identity(&compose(first_perm, second)) || g.is_output(node.output()) {
            continue;
        }
        let mut out = g.clone();
        rewire(&mut out, node.output(), &first.inputs[0]);
        return Ok(Some(out));
    }
    Ok(None)
}
