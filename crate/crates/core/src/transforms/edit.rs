//! Small graph-surgery helpers shared by the passes.

use crate::graph::{Graph, Node, Op, TensorSpec};

/// Spec of a tensor in a shape-inferred graph.
pub(super) fn spec<'g>(g: &'g Graph, tensor: &str) -> &'g TensorSpec {
    g.spec(tensor).expect("passes run on shape-inferred graphs")
}

/// The node producing `tensor`, with its index.
pub(super) fn producer<'g>(g: &'g Graph, tensor: &str) -> Option<(usize, &'g Node)> {
    g.producer(tensor).map(|i| (i, &g.nodes[i]))
}

/// The transpose producing `tensor`, with its permutation.
pub(super) fn transpose_producer<'g>(g: &'g Graph, tensor: &str) -> Option<(&'g Node, &'g [usize])> {
    match producer(g, tensor) {
        Some((_, n @ Node { op: Op::Transpose { perm }, .. })) => Some((n, perm.as_slice())),
        _ => None,
    }
}

/// Inserts a node before position `idx`, naming it from `base`.
pub(super) fn insert_node(g: &mut Graph, idx: usize, base: &str, op: Op, inputs: &[&str], output: &str) {
    let name = g.fresh_node_name(base);
    g.nodes.insert(idx, Node::new(name, op, inputs, &[output]));
}

/// A fresh tensor name derived from `base`.
pub(super) fn fresh_tensor(g: &Graph, base: &str) -> String {
    g.fresh_tensor_name(base)
}

/// Drops nodes and initializers that no longer reach a graph output.
pub(super) fn remove_dead(mut g: Graph) -> Graph {
    loop {
        let before = g.nodes.len();
        let dead: Vec<usize> = (0..g.nodes.len())
            .filter(|&i| g.nodes[i].outputs.iter().all(|o| g.use_count(o) == 0))
            .collect();
        for &i in dead.iter().rev() {
            g.nodes.remove(i);
        }
        if g.nodes.len() == before {
            break;
        }
    }
    let unused: Vec<String> = g
        .initializers
        .keys()
        .filter(|k| g.use_count(k) == 0)
        .cloned()
        .collect();
    for k in unused {
        g.initializers.remove(&k);
    }
    g
}

/// Points every node that reads `from` at `to` instead.
pub(super) fn rewire(g: &mut Graph, from: &str, to: &str) {
    for node in &mut g.nodes {
        for input in &mut node.inputs {
            if input == from {
                *input = to.to_string();
            }
        }
    }
}
