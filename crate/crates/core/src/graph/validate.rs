use std::collections::HashSet;
use std::fmt;

use super::{is_permutation, topo_order, Graph, GraphError, Op};

/// One structural problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node: Option<String>,
    pub tensor: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn node(node: &str, message: String) -> Self {
        Self {
            node: Some(node.to_string()),
            tensor: None,
            message,
        }
    }

    fn tensor(tensor: &str, message: String) -> Self {
        Self {
            node: None,
            tensor: Some(tensor.to_string()),
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.node, &self.tensor) {
            (Some(n), Some(t)) => write!(f, "node {n}, tensor {t}: {}", self.message),
            (Some(n), None) => write!(f, "node {n}: {}", self.message),
            (None, Some(t)) => write!(f, "tensor {t}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

/// Checks every structural invariant; an empty result means the graph is valid.
pub fn validate(graph: &Graph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    for spec in graph.inputs.iter().chain(&graph.outputs) {
        if let Some(problem) = spec.check() {
            diags.push(Diagnostic::tensor(&spec.name, problem));
        }
    }

    let mut defined: HashSet<&str> = HashSet::new();
    for spec in &graph.inputs {
        if !defined.insert(&spec.name) {
            diags.push(Diagnostic::tensor(&spec.name, "graph input declared twice".into()));
        }
    }
    for (name, init) in &graph.initializers {
        if *name != init.spec.name {
            diags.push(Diagnostic::tensor(name, format!("initializer keyed as {name} but named {}", init.spec.name)));
        }
        if let Some(problem) = init.spec.check() {
            diags.push(Diagnostic::tensor(name, problem));
        } else if init.data.len() != init.spec.numel() {
            diags.push(Diagnostic::tensor(
                name,
                format!("payload has {} values, shape needs {}", init.data.len(), init.spec.numel()),
            ));
        }
        if init.is_fixed() == init.spec.dtype.is_float() {
            diags.push(Diagnostic::tensor(name, "payload kind does not match dtype".into()));
        }
        if !defined.insert(name) {
            diags.push(Diagnostic::tensor(name, "tensor defined more than once".into()));
        }
    }

    let mut node_names = HashSet::new();
    for node in &graph.nodes {
        if !node_names.insert(node.name.as_str()) {
            diags.push(Diagnostic::node(&node.name, "duplicate node name".into()));
        }
        for out in &node.outputs {
            if !defined.insert(out) {
                diags.push(Diagnostic {
                    node: Some(node.name.clone()),
                    tensor: Some(out.clone()),
                    message: "tensor defined more than once".into(),
                });
            }
        }
        check_node_shape(graph, node, &mut diags);
    }

    for node in &graph.nodes {
        for input in &node.inputs {
            if !defined.contains(input.as_str()) {
                diags.push(Diagnostic {
                    node: Some(node.name.clone()),
                    tensor: Some(input.clone()),
                    message: format!("input {input} is never defined"),
                });
            }
        }
    }
    for spec in &graph.outputs {
        if !defined.contains(spec.name.as_str()) {
            diags.push(Diagnostic::tensor(&spec.name, "graph output is never defined".into()));
        }
    }

    if let Err(GraphError::Cycle(nodes)) = topo_order(graph) {
        diags.push(Diagnostic {
            node: nodes.first().cloned(),
            tensor: None,
            message: format!("cycle detected: {}", nodes.join(", ")),
        });
    }
    diags
}

fn check_node_shape(graph: &Graph, node: &super::Node, diags: &mut Vec<Diagnostic>) {
    let name = &node.name;
    if node.inputs.len() != node.op.input_count() {
        diags.push(Diagnostic::node(
            name,
            format!("{} takes {} inputs, got {}", node.op.kind(), node.op.input_count(), node.inputs.len()),
        ));
        return;
    }
    if node.outputs.len() != 1 {
        diags.push(Diagnostic::node(name, format!("expected 1 output, got {}", node.outputs.len())));
    }
    for &idx in node.op.constant_inputs() {
        let tensor = &node.inputs[idx];
        if !graph.initializers.contains_key(tensor) {
            diags.push(Diagnostic {
                node: Some(name.clone()),
                tensor: Some(tensor.clone()),
                message: format!("input {idx} of {} must be an initializer", node.op.kind()),
            });
        }
    }
    match &node.op {
        Op::Conv { kernel, stride, .. } | Op::MaxPool { kernel, stride, .. } => {
            if *kernel == 0 || *stride == 0 {
                diags.push(Diagnostic::node(name, "kernel and stride must be positive".into()));
            }
        }
        Op::MatMul { im2col: Some(ic) } | Op::Mvau { im2col: Some(ic), .. } => {
            if ic.kernel == 0 || ic.stride == 0 {
                diags.push(Diagnostic::node(name, "im2col kernel and stride must be positive".into()));
            }
        }
        Op::Transpose { perm } => {
            if !is_permutation(perm) {
                diags.push(Diagnostic::node(name, format!("perm {perm:?} is not a bijection")));
            }
        }
        Op::ReduceMean { axes, .. } => {
            let unique: HashSet<_> = axes.iter().collect();
            if axes.is_empty() || unique.len() != axes.len() {
                diags.push(Diagnostic::node(name, format!("axes {axes:?} must be non-empty and distinct")));
            }
        }
        Op::MultiThreshold { scale, bias, .. } | Op::Mvau { scale, bias, .. } => {
            if !scale.is_finite() || !bias.is_finite() {
                diags.push(Diagnostic::node(name, "scale and bias must be finite".into()));
            }
        }
        _ => {}
    }
}
