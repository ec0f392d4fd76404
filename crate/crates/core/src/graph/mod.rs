//! Dataflow graph representation.
//!
//! A [`Graph`] is a single-assignment DAG: every tensor name is produced
//! exactly once, by a graph input, an initializer or a node output. Layouts
//! travel on [`TensorSpec`]s so layout mismatches are visible to passes.
//! Nodes that need a particular layout say so through a `data_layout`
//! attribute; when a tensor of another layout reaches them the interpreter
//! reorders it, and [`crate::transforms`] can make that reorder explicit.

mod layout;
mod shape;
mod topo;
mod validate;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::QFormat;

pub use layout::{compose, inverse, is_identity, is_permutation, perm_between, permute_dims, Layout};
pub use shape::infer_shapes;
pub(crate) use shape::mac_dtype;
pub use topo::topo_order;
pub use validate::{validate, Diagnostic};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph failed validation: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("cycle detected among nodes {}", .0.join(", "))]
    Cycle(Vec<String>),
    #[error("shape mismatch at node {node}: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("unsupported layout at node {node}: {detail}")]
    UnsupportedLayout { node: String, detail: String },
    #[error("unknown tensor {tensor} used by {user}")]
    UnknownTensor { tensor: String, user: String },
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Float32,
    /// Codes in a bounded format, saturated at requantize points.
    Fixed(QFormat),
    /// Exact wide accumulator codes with the given fractional bits.
    Acc { frac_bits: u8 },
}

impl DType {
    pub fn is_float(self) -> bool {
        matches!(self, DType::Float32)
    }

    /// Fractional bits of fixed and accumulator types.
    pub fn frac_bits(self) -> Option<u32> {
        match self {
            DType::Float32 => None,
            DType::Fixed(fmt) => Some(fmt.frac_bits() as u32),
            DType::Acc { frac_bits } => Some(frac_bits as u32),
        }
    }

    pub fn format(self) -> Option<QFormat> {
        match self {
            DType::Fixed(fmt) => Some(fmt),
            _ => None,
        }
    }
}

/// Name, shape, layout and element type of a tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecRecord", into = "SpecRecord")]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub layout: Layout,
    pub dtype: DType,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, layout: Layout, dtype: DType) -> Self {
        Self {
            name: name.into(),
            shape,
            layout,
            dtype,
        }
    }

    pub fn float(name: impl Into<String>, shape: Vec<usize>, layout: Layout) -> Self {
        Self::new(name, shape, layout, DType::Float32)
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Problems with this spec's own invariants.
    pub fn check(&self) -> Option<String> {
        if self.shape.is_empty() {
            return Some(format!("tensor {} has an empty shape", self.name));
        }
        if self.shape.contains(&0) {
            return Some(format!("tensor {} has a zero extent {:?}", self.name, self.shape));
        }
        if self.layout.rank() != self.shape.len() {
            return Some(format!(
                "tensor {} has layout {} but rank {}",
                self.name,
                self.layout,
                self.shape.len()
            ));
        }
        None
    }

    pub fn with_name(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..self.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpecRecord {
    name: String,
    shape: Vec<usize>,
    layout: Layout,
    dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qformat: Option<QFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acc_frac: Option<u8>,
}

impl From<TensorSpec> for SpecRecord {
    fn from(spec: TensorSpec) -> Self {
        let (dtype, qformat, acc_frac) = match spec.dtype {
            DType::Float32 => ("float32", None, None),
            DType::Fixed(fmt) => ("fixed", Some(fmt), None),
            DType::Acc { frac_bits } => ("acc", None, Some(frac_bits)),
        };
        SpecRecord {
            name: spec.name,
            shape: spec.shape,
            layout: spec.layout,
            dtype: dtype.to_string(),
            qformat,
            acc_frac,
        }
    }
}

impl TryFrom<SpecRecord> for TensorSpec {
    type Error = String;

    fn try_from(r: SpecRecord) -> Result<Self, String> {
        let dtype = match (r.dtype.as_str(), r.qformat, r.acc_frac) {
            ("float32", None, None) => DType::Float32,
            ("fixed", Some(fmt), None) => DType::Fixed(fmt),
            ("acc", None, Some(frac_bits)) => DType::Acc { frac_bits },
            (other, ..) => return Err(format!("tensor {}: bad dtype `{other}` or format fields", r.name)),
        };
        Ok(TensorSpec {
            name: r.name,
            shape: r.shape,
            layout: r.layout,
            dtype,
        })
    }
}

/// Patch gather applied in front of a matrix multiply (convolution lowering).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Im2Col {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Operator and its attributes.
///
/// Serialized as `{"kind": .., "attrs": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "attrs")]
pub enum Op {
    /// Inputs: data, weights `(C_out, C_in, K, K)`.
    Conv {
        kernel: usize,
        stride: usize,
        pad: usize,
        data_layout: Layout,
    },
    /// Inputs: data, weights `(K, N)`. Contracts the channel axis.
    MatMul {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        im2col: Option<Im2Col>,
    },
    /// Inputs: data, thresholds `(1 | C, T)`.
    MultiThreshold {
        data_layout: Layout,
        scale: f64,
        bias: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_fmt: Option<QFormat>,
    },
    Transpose {
        perm: Vec<usize>,
    },
    ReduceMean {
        axes: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_fmt: Option<QFormat>,
    },
    /// Exact per-channel sum over height and width.
    GlobalAccPool {
        data_layout: Layout,
    },
    /// Inputs: data, constant (scalar, per-channel or full shape).
    Mul {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_fmt: Option<QFormat>,
    },
    /// Inputs: two tensors, or data and a constant.
    Add {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_fmt: Option<QFormat>,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        data_layout: Layout,
    },
    Relu {},
    Flatten {},
    /// Matrix multiply fused with a threshold activation.
    /// Inputs: data, weights `(K, N)`, thresholds `(1 | N, T)`.
    #[serde(rename = "MVAU")]
    Mvau {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        im2col: Option<Im2Col>,
        scale: f64,
        bias: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_fmt: Option<QFormat>,
    },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Conv { .. } => "Conv",
            Op::MatMul { .. } => "MatMul",
            Op::MultiThreshold { .. } => "MultiThreshold",
            Op::Transpose { .. } => "Transpose",
            Op::ReduceMean { .. } => "ReduceMean",
            Op::GlobalAccPool { .. } => "GlobalAccPool",
            Op::Mul { .. } => "Mul",
            Op::Add { .. } => "Add",
            Op::MaxPool { .. } => "MaxPool",
            Op::Relu {} => "Relu",
            Op::Flatten {} => "Flatten",
            Op::Mvau { .. } => "MVAU",
        }
    }

    pub fn input_count(&self) -> usize {
        match self {
            Op::Conv { .. } | Op::MatMul { .. } | Op::MultiThreshold { .. } => 2,
            Op::Mul { .. } | Op::Add { .. } => 2,
            Op::Mvau { .. } => 3,
            _ => 1,
        }
    }

    /// Input positions that must be bound to initializers.
    pub fn constant_inputs(&self) -> &'static [usize] {
        match self {
            Op::Conv { .. } | Op::MatMul { .. } | Op::MultiThreshold { .. } => &[1],
            Op::Mvau { .. } => &[1, 2],
            _ => &[],
        }
    }

    /// Layout this node expects on its first input, if it cares.
    pub fn required_layout(&self, input_rank: usize) -> Option<Layout> {
        match self {
            Op::Conv { data_layout, .. }
            | Op::MaxPool { data_layout, .. }
            | Op::GlobalAccPool { data_layout }
            | Op::MultiThreshold { data_layout, .. } => Some(*data_layout),
            Op::MatMul { .. } | Op::Mvau { .. } => Layout::channel_last(input_rank),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    #[serde(flatten)]
    pub op: Op,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Node {
    pub fn new(name: impl Into<String>, op: Op, inputs: &[&str], outputs: &[&str]) -> Self {
        Self {
            name: name.into(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The single output tensor (every supported op has exactly one).
    pub fn output(&self) -> &str {
        &self.outputs[0]
    }
}

/// Raw initializer values: reals for float tensors, codes for fixed ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    Codes(Vec<i32>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::Codes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A constant tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Initializer {
    pub spec: TensorSpec,
    pub data: Payload,
}

impl Initializer {
    pub fn float(name: &str, shape: Vec<usize>, values: Vec<f32>) -> Self {
        let layout = Layout::for_rank(shape.len()).expect("initializer rank must be 1, 2 or 4");
        Self {
            spec: TensorSpec::float(name, shape, layout),
            data: Payload::F32(values),
        }
    }

    pub fn fixed(name: &str, shape: Vec<usize>, fmt: QFormat, codes: Vec<i32>) -> Self {
        let layout = Layout::for_rank(shape.len()).expect("initializer rank must be 1, 2 or 4");
        Self {
            spec: TensorSpec::new(name, shape, layout, DType::Fixed(fmt)),
            data: Payload::Codes(codes),
        }
    }

    /// Real values of the payload (codes are scaled by their format step).
    pub fn reals(&self) -> Vec<f64> {
        match (&self.data, self.spec.dtype) {
            (Payload::F32(v), _) => v.iter().map(|&x| x as f64).collect(),
            (Payload::Codes(c), DType::Fixed(fmt)) => c.iter().map(|&c| fmt.to_real(c as i64)).collect(),
            (Payload::Codes(c), dtype) => {
                let step = crate::fixed::pow2(-(dtype.frac_bits().unwrap_or(0) as i32));
                c.iter().map(|&c| c as f64 * step).collect()
            }
        }
    }

    pub fn codes(&self) -> Option<&[i32]> {
        match &self.data {
            Payload::Codes(c) => Some(c),
            Payload::F32(_) => None,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.data, Payload::Codes(_))
    }
}

/// A dataflow graph.
///
/// `value_info` holds derived specs for intermediate tensors; it is filled by
/// [`infer_shapes`] and is not part of the on-disk format.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Graph {
    pub name: String,
    pub inputs: Vec<TensorSpec>,
    pub outputs: Vec<TensorSpec>,
    pub nodes: Vec<Node>,
    pub initializers: BTreeMap<String, Initializer>,
    pub value_info: BTreeMap<String, TensorSpec>,
}

impl Graph {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_initializer(&mut self, init: Initializer) {
        self.initializers.insert(init.spec.name.clone(), init);
    }

    pub fn add_node(&mut self, node: Node) {
        self.nodes.push(node);
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Spec of any tensor: graph input, initializer, or inferred value.
    pub fn spec(&self, tensor: &str) -> Option<&TensorSpec> {
        self.inputs
            .iter()
            .find(|s| s.name == tensor)
            .or_else(|| self.initializers.get(tensor).map(|i| &i.spec))
            .or_else(|| self.value_info.get(tensor))
    }

    pub fn is_input(&self, tensor: &str) -> bool {
        self.inputs.iter().any(|s| s.name == tensor)
    }

    pub fn is_output(&self, tensor: &str) -> bool {
        self.outputs.iter().any(|s| s.name == tensor)
    }

    /// Index of the node producing `tensor`.
    pub fn producer(&self, tensor: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.outputs.iter().any(|o| o == tensor))
    }

    /// Indices of nodes reading `tensor`, in node order.
    pub fn consumers(&self, tensor: &str) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.inputs.iter().any(|i| i == tensor))
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of uses of `tensor`, counting graph outputs.
    pub fn use_count(&self, tensor: &str) -> usize {
        let node_uses: usize = self
            .nodes
            .iter()
            .map(|n| n.inputs.iter().filter(|i| *i == tensor).count())
            .sum();
        node_uses + usize::from(self.is_output(tensor))
    }

    /// All tensor names currently defined or referenced.
    pub fn tensor_names(&self) -> HashSet<&str> {
        let mut names: HashSet<&str> = HashSet::new();
        names.extend(self.inputs.iter().map(|s| s.name.as_str()));
        names.extend(self.outputs.iter().map(|s| s.name.as_str()));
        names.extend(self.initializers.keys().map(|s| s.as_str()));
        for n in &self.nodes {
            names.extend(n.inputs.iter().map(|s| s.as_str()));
            names.extend(n.outputs.iter().map(|s| s.as_str()));
        }
        names
    }

    /// A tensor name starting with `base` that is not yet used.
    pub fn fresh_tensor_name(&self, base: &str) -> String {
        let taken = self.tensor_names();
        fresh(base, |c| taken.contains(c))
    }

    pub fn fresh_node_name(&self, base: &str) -> String {
        let taken: HashSet<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        fresh(base, |c| taken.contains(c))
    }

    /// Counts nodes by operator kind.
    pub fn op_histogram(&self) -> BTreeMap<&'static str, usize> {
        let mut hist = BTreeMap::new();
        for n in &self.nodes {
            *hist.entry(n.op.kind()).or_insert(0) += 1;
        }
        hist
    }

    /// Map from tensor name to producing node index.
    pub fn producer_map(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for o in &n.outputs {
                map.insert(o.as_str(), i);
            }
        }
        map
    }
}

fn fresh(base: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|c| !taken(c))
        .expect("unbounded search")
}
