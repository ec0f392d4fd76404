//! Reference interpreter.
//!
//! Graphs run in two modes. In float mode every tensor holds reals (fixed
//! initializers are dequantized) and only MultiThreshold quantizes. In fixed
//! mode every tensor holds integer codes: multiply-accumulates are exact,
//! accumulators widen instead of saturating, and rounding happens only where a
//! node declares an `out_fmt`.

mod bounds;
mod compare;
pub mod kernels;

use std::collections::HashMap;

use thiserror::Error;

use crate::fixed::{pow2, requantize, QFormat};
use crate::graph::{infer_shapes, topo_order, DType, Graph, GraphError, Layout, Node, Op, Payload, TensorSpec};
use kernels::{Broadcast, Window};

pub use bounds::{error_bound, ErrorBound};
pub use compare::{compare_runs, random_inputs, EquivalenceReport, FixedMismatch, FloatDeviation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("input mismatch: {0}")]
    InputMismatch(String),
    #[error("UnquantizedNode: {0} has no fixed-point format")]
    UnquantizedNode(String),
    #[error("UnsortedThresholds: thresholds of {0} are not strictly ascending")]
    UnsortedThresholds(String),
    #[error("accumulator overflow in node {0}")]
    Overflow(String),
    #[error("graphs do not share input/output specs: {0}")]
    SpecMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Float,
    Fixed,
}

/// Flat row-major values.
#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Real(Vec<f64>),
    Codes(Vec<i64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::Real(v) => v.len(),
            Data::Codes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A tensor together with its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    pub spec: TensorSpec,
    pub data: Data,
}

impl TensorValue {
    pub fn real(spec: TensorSpec, values: Vec<f64>) -> Self {
        assert_eq!(spec.numel(), values.len(), "value count must match shape");
        Self {
            spec: TensorSpec {
                dtype: DType::Float32,
                ..spec
            },
            data: Data::Real(values),
        }
    }

    /// Codes interpreted with the fractional bits of `spec.dtype`.
    pub fn codes(spec: TensorSpec, codes: Vec<i64>) -> Self {
        assert_eq!(spec.numel(), codes.len(), "code count must match shape");
        assert!(!spec.dtype.is_float(), "codes need a fixed dtype");
        Self {
            spec,
            data: Data::Codes(codes),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Real values, scaling codes by their format step.
    pub fn to_reals(&self) -> Vec<f64> {
        match &self.data {
            Data::Real(v) => v.clone(),
            Data::Codes(c) => {
                let step = pow2(-(self.spec.dtype.frac_bits().unwrap_or(0) as i32));
                c.iter().map(|&c| c as f64 * step).collect()
            }
        }
    }

    /// Quantizes real values (or rescales codes) into `fmt`.
    pub fn quantize_to(&self, fmt: QFormat) -> TensorValue {
        let codes = match &self.data {
            Data::Real(v) => v.iter().map(|&x| fmt.quantize_code(x)).collect(),
            Data::Codes(c) => {
                let frac = self.spec.dtype.frac_bits().unwrap_or(0);
                c.iter().map(|&c| requantize(c as i128, frac, fmt)).collect()
            }
        };
        TensorValue {
            spec: TensorSpec {
                dtype: DType::Fixed(fmt),
                ..self.spec.clone()
            },
            data: Data::Codes(codes),
        }
    }

    /// Reorders the data into `layout` (no-op when already there).
    pub fn to_layout(&self, layout: Layout) -> Option<TensorValue> {
        if self.spec.layout == layout {
            return Some(self.clone());
        }
        let (data, shape) = match &self.data {
            Data::Real(v) => {
                let (d, s) = kernels::relayout(v, &self.spec.shape, self.spec.layout, layout)?;
                (Data::Real(d), s)
            }
            Data::Codes(v) => {
                let (d, s) = kernels::relayout(v, &self.spec.shape, self.spec.layout, layout)?;
                (Data::Codes(d), s)
            }
        };
        Some(TensorValue {
            spec: TensorSpec {
                shape,
                layout,
                ..self.spec.clone()
            },
            data,
        })
    }

    fn checksum(&self) -> u64 {
        match &self.data {
            Data::Real(v) => kernels::checksum(v.iter().map(|x| x.to_bits())),
            Data::Codes(v) => kernels::checksum(v.iter().map(|&x| x as u64)),
        }
    }
}

/// One executed node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub node: String,
    pub elements: usize,
    pub checksum: u64,
}

/// Per-node record of an execution, in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecTrace {
    pub mode: Mode,
    pub entries: Vec<TraceEntry>,
}

/// `bias + scale * |{k : x >= T_k}|` for strictly ascending thresholds.
pub fn eval_multithreshold(x: f64, thresholds: &[f64], scale: f64, bias: f64) -> Result<f64, ExecError> {
    if !strictly_ascending(thresholds) {
        return Err(ExecError::UnsortedThresholds("eval_multithreshold".into()));
    }
    Ok(bias + scale * kernels::threshold_count(thresholds, &x) as f64)
}

fn strictly_ascending(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

/// A graph prepared for repeated execution.
#[derive(Debug, Clone)]
pub struct Plan {
    graph: Graph,
    order: Vec<usize>,
    consts_real: HashMap<String, TensorValue>,
    consts_fixed: HashMap<String, TensorValue>,
}

impl Plan {
    pub fn new(graph: &Graph) -> Result<Self, ExecError> {
        let graph = infer_shapes(graph)?;
        let order = topo_order(&graph)?;
        let mut consts_real = HashMap::new();
        let mut consts_fixed = HashMap::new();
        for (name, init) in &graph.initializers {
            let real = TensorValue::real(init.spec.clone(), init.reals());
            let fixed = match &init.data {
                Payload::Codes(c) => TensorValue::codes(init.spec.clone(), c.iter().map(|&c| c as i64).collect()),
                Payload::F32(_) => real.clone(),
            };
            consts_real.insert(name.clone(), real);
            consts_fixed.insert(name.clone(), fixed);
        }
        for node in &graph.nodes {
            let t_idx = match node.op {
                Op::MultiThreshold { .. } => 1,
                Op::Mvau { .. } => 2,
                _ => continue,
            };
            let t = &graph.initializers[&node.inputs[t_idx]];
            let per_row = t.spec.shape[1];
            if !t.reals().chunks(per_row).all(strictly_ascending) {
                return Err(ExecError::UnsortedThresholds(node.name.clone()));
            }
        }
        Ok(Self {
            graph,
            order,
            consts_real,
            consts_fixed,
        })
    }

    /// The shape-inferred graph this plan executes.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// First element that keeps the graph from running in fixed mode.
    pub fn unquantized(&self) -> Option<String> {
        let g = &self.graph;
        if let Some(input) = g.inputs.iter().find(|s| s.dtype.is_float()) {
            return Some(format!("input {}", input.name));
        }
        for node in &g.nodes {
            let threshold_input = match node.op {
                Op::MultiThreshold { .. } => Some(1),
                Op::Mvau { .. } => Some(2),
                _ => None,
            };
            let float_operand = node.inputs.iter().enumerate().any(|(i, t)| {
                Some(i) != threshold_input && g.spec(t).is_some_and(|s| s.dtype.is_float())
            });
            if float_operand || g.value_info[node.output()].dtype.is_float() {
                return Some(node.name.clone());
            }
        }
        None
    }

    pub fn is_quantized(&self) -> bool {
        self.unquantized().is_none()
    }

    pub fn run(&self, inputs: &[TensorValue], mode: Mode) -> Result<Vec<TensorValue>, ExecError> {
        self.run_traced(inputs, mode).map(|(out, _)| out)
    }

    pub fn run_traced(&self, inputs: &[TensorValue], mode: Mode) -> Result<(Vec<TensorValue>, ExecTrace), ExecError> {
        if mode == Mode::Fixed {
            if let Some(what) = self.unquantized() {
                return Err(ExecError::UnquantizedNode(what));
            }
        }
        let mut env: HashMap<&str, TensorValue> = HashMap::new();
        for spec in &self.graph.inputs {
            let value = inputs
                .iter()
                .find(|v| v.spec.name == spec.name)
                .ok_or_else(|| ExecError::InputMismatch(format!("missing input {}", spec.name)))?;
            env.insert(&spec.name, self.admit_input(spec, value, mode)?);
        }

        let mut trace = ExecTrace {
            mode,
            entries: Vec::with_capacity(self.order.len()),
        };
        for &idx in &self.order {
            let node = &self.graph.nodes[idx];
            let args: Vec<&TensorValue> = node
                .inputs
                .iter()
                .map(|t| env.get(t.as_str()).or_else(|| self.constant(t, mode)).expect("validated input"))
                .collect();
            let out_spec = &self.graph.value_info[node.output()];
            let value = eval_node(node, &args, out_spec, mode)?;
            trace.entries.push(TraceEntry {
                node: node.name.clone(),
                elements: value.len(),
                checksum: value.checksum(),
            });
            env.insert(node.output(), value);
        }

        let outputs = self
            .graph
            .outputs
            .iter()
            .map(|spec| {
                env.get(spec.name.as_str())
                    .cloned()
                    .or_else(|| self.constant(&spec.name, mode).cloned())
                    .expect("validated output")
            })
            .collect();
        Ok((outputs, trace))
    }

    fn constant(&self, name: &str, mode: Mode) -> Option<&TensorValue> {
        match mode {
            Mode::Float => self.consts_real.get(name),
            Mode::Fixed => self.consts_fixed.get(name),
        }
    }

    fn admit_input(&self, spec: &TensorSpec, value: &TensorValue, mode: Mode) -> Result<TensorValue, ExecError> {
        if value.spec.shape != spec.shape || value.spec.layout != spec.layout {
            return Err(ExecError::InputMismatch(format!(
                "{}: expected {:?} {}, got {:?} {}",
                spec.name, spec.shape, spec.layout, value.spec.shape, value.spec.layout
            )));
        }
        match (mode, &value.data) {
            (Mode::Float, Data::Real(_)) => Ok(value.clone()),
            (Mode::Float, Data::Codes(_)) => Ok(TensorValue::real(value.spec.clone(), value.to_reals())),
            (Mode::Fixed, Data::Codes(codes)) => {
                let fmt = spec.dtype.format();
                if value.spec.dtype != spec.dtype || fmt.is_some_and(|f| !codes.iter().all(|&c| f.contains_code(c))) {
                    return Err(ExecError::InputMismatch(format!(
                        "{}: codes must be {:?} and in range",
                        spec.name, spec.dtype
                    )));
                }
                Ok(value.clone())
            }
            (Mode::Fixed, Data::Real(_)) => Err(ExecError::InputMismatch(format!(
                "{}: fixed mode needs integer codes",
                spec.name
            ))),
        }
    }
}

/// Runs `graph` with real arithmetic.
pub fn run_float(graph: &Graph, inputs: &[TensorValue]) -> Result<Vec<TensorValue>, ExecError> {
    Plan::new(graph)?.run(inputs, Mode::Float)
}

/// Runs a fully quantized `graph` with exact integer arithmetic.
pub fn run_fixed(graph: &Graph, inputs: &[TensorValue]) -> Result<Vec<TensorValue>, ExecError> {
    Plan::new(graph)?.run(inputs, Mode::Fixed)
}

fn frac_of(v: &TensorValue) -> u32 {
    v.spec.dtype.frac_bits().unwrap_or(0)
}

fn reals(v: &TensorValue) -> &[f64] {
    match &v.data {
        Data::Real(r) => r,
        Data::Codes(_) => unreachable!("float kernel given codes"),
    }
}

fn codes(v: &TensorValue) -> &[i64] {
    match &v.data {
        Data::Codes(c) => c,
        Data::Real(_) => unreachable!("fixed kernel given reals"),
    }
}

fn narrow(node: &Node, wide: Vec<i128>) -> Result<Vec<i64>, ExecError> {
    wide.into_iter()
        .map(|v| i64::try_from(v).map_err(|_| ExecError::Overflow(node.name.clone())))
        .collect()
}

fn in_layout(node: &Node, v: &TensorValue, layout: Layout) -> Result<TensorValue, ExecError> {
    v.to_layout(layout).ok_or_else(|| {
        GraphError::UnsupportedLayout {
            node: node.name.clone(),
            detail: format!("cannot read {} as {layout}", v.spec.layout),
        }
        .into()
    })
}

fn window(x: &TensorValue, kernel: usize, stride: usize, pad: usize) -> Window {
    let s = &x.spec.shape;
    Window {
        n: s[0],
        h: s[1],
        w: s[2],
        c: s[3],
        kernel,
        stride,
        pad,
    }
}

fn finish(out_spec: &TensorSpec, mode: Mode, data: Data) -> TensorValue {
    let dtype = match mode {
        Mode::Float => DType::Float32,
        Mode::Fixed => out_spec.dtype,
    };
    TensorValue {
        spec: TensorSpec {
            dtype,
            ..out_spec.clone()
        },
        data,
    }
}

/// Multiply-accumulate of activations against a `(k, n)` weight matrix,
/// optionally through an im2col gather. Returns data in NHWC / NC order.
fn eval_matmul(node: &Node, x: &TensorValue, w: &TensorValue, im2col: Option<crate::graph::Im2Col>) -> Result<Data, ExecError> {
    let (k, n) = (w.spec.shape[0], w.spec.shape[1]);
    let x = if x.spec.rank() == 4 { in_layout(node, x, Layout::NHWC)? } else { x.clone() };
    let gathered;
    let (rows_data, rows) = match (im2col, &x.data) {
        (Some(ic), data) => {
            let win = window(&x, ic.kernel, ic.stride, ic.pad);
            let rows = win.n * win.out_h() * win.out_w();
            gathered = match data {
                Data::Real(v) => Data::Real(kernels::im2col(v, &win, 0.0)),
                Data::Codes(v) => Data::Codes(kernels::im2col(v, &win, 0)),
            };
            (&gathered, rows)
        }
        (None, data) => (data, x.len() / k),
    };
    Ok(match rows_data {
        Data::Real(v) => Data::Real(kernels::matmul(v, reals(w), rows, k, n, 0.0, |a, x, w| a + x * w)),
        Data::Codes(v) => {
            let wide = kernels::matmul(v, codes(w), rows, k, n, 0i128, |a, x, w| a + x as i128 * w as i128);
            Data::Codes(narrow(node, wide)?)
        }
    })
}

/// Applies per-channel thresholds to `x` laid out in `layout`.
fn eval_thresholds(x: &TensorValue, thresholds: &TensorValue, layout: Layout, scale: f64, bias: f64, out_fmt: Option<QFormat>) -> Data {
    let per_row = thresholds.spec.shape[1];
    let rows = thresholds.spec.shape[0];
    let t = reals(thresholds);
    let shape = &x.spec.shape;
    let axis = layout.channel_axis();
    let chan = Broadcast::new(shape, axis, shape[axis]);
    let row_of = |i: usize| if rows == 1 { 0 } else { chan.index(i) };
    let level = |count: usize| bias + scale * count as f64;
    match &x.data {
        Data::Real(v) => Data::Real(
            v.iter()
                .enumerate()
                .map(|(i, x)| {
                    let r = row_of(i);
                    level(kernels::threshold_count(&t[r * per_row..(r + 1) * per_row], x))
                })
                .collect(),
        ),
        Data::Codes(v) => {
            // x >= T  <=>  code >= ceil(T * 2^frac) for codes on the 2^-frac grid
            let scale_up = pow2(frac_of(x) as i32);
            let int_t: Vec<i128> = t.iter().map(|&t| (t * scale_up).ceil() as i128).collect();
            let fmt = out_fmt.expect("fixed thresholds carry an output format");
            Data::Codes(
                v.iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let r = row_of(i);
                        let count = kernels::threshold_count(&int_t[r * per_row..(r + 1) * per_row], &(c as i128));
                        fmt.quantize_code(level(count))
                    })
                    .collect(),
            )
        }
    }
}

/// Operand `b` lined up with `x`: same layout when it is a full tensor.
fn broadcast_operand(node: &Node, x: &TensorValue, b: &TensorValue) -> Result<(TensorValue, Broadcast), ExecError> {
    let b = if b.len() == x.len() && b.spec.rank() == x.spec.rank() && b.spec.layout != x.spec.layout {
        in_layout(node, b, x.spec.layout)?
    } else {
        b.clone()
    };
    let bc = Broadcast::new(&x.spec.shape, x.spec.layout.channel_axis(), b.len());
    Ok((b, bc))
}

fn eval_node(node: &Node, args: &[&TensorValue], out_spec: &TensorSpec, mode: Mode) -> Result<TensorValue, ExecError> {
    let x = args[0];
    let data = match &node.op {
        Op::Conv {
            kernel,
            stride,
            pad,
            data_layout,
        } => {
            let xh = in_layout(node, x, Layout::NHWC)?;
            let w = args[1];
            let win = window(&xh, *kernel, *stride, *pad);
            let filters = w.spec.shape[0];
            let nhwc_spec = TensorSpec::new("conv", vec![win.n, win.out_h(), win.out_w(), filters], Layout::NHWC, out_spec.dtype);
            let data = match &xh.data {
                Data::Real(v) => Data::Real(kernels::conv_direct(v, reals(w), &win, filters, 0.0, |a, x, w| a + x * w)),
                Data::Codes(v) => {
                    let wide = kernels::conv_direct(v, codes(w), &win, filters, 0i128, |a, x, w| a + x as i128 * w as i128);
                    Data::Codes(narrow(node, wide)?)
                }
            };
            let out = TensorValue { spec: nhwc_spec, data };
            in_layout(node, &out, *data_layout)?.data
        }
        Op::MatMul { im2col } => eval_matmul(node, x, args[1], *im2col)?,
        Op::Mvau {
            im2col,
            scale,
            bias,
            out_fmt,
        } => {
            let acc_dtype = crate::graph::mac_dtype(x.spec.dtype, args[1].spec.dtype);
            let acc = TensorValue {
                spec: TensorSpec {
                    dtype: acc_dtype,
                    ..out_spec.clone()
                },
                data: eval_matmul(node, x, args[1], *im2col)?,
            };
            eval_thresholds(&acc, args[2], out_spec.layout, *scale, *bias, *out_fmt)
        }
        Op::MultiThreshold {
            data_layout,
            scale,
            bias,
            out_fmt,
        } => {
            let x = in_layout(node, x, *data_layout)?;
            eval_thresholds(&x, args[1], *data_layout, *scale, *bias, *out_fmt)
        }
        Op::Transpose { perm } => match &x.data {
            Data::Real(v) => Data::Real(kernels::transpose(v, &x.spec.shape, perm)),
            Data::Codes(v) => Data::Codes(kernels::transpose(v, &x.spec.shape, perm)),
        },
        Op::ReduceMean { axes, out_fmt } => {
            let groups = kernels::reduction_groups(&x.spec.shape, axes);
            match &x.data {
                Data::Real(v) => Data::Real(
                    groups
                        .iter()
                        .map(|g| g.iter().fold(0.0, |acc, &i| acc + v[i]) / g.len() as f64)
                        .collect(),
                ),
                Data::Codes(v) => {
                    let fmt = out_fmt.expect("fixed ReduceMean carries an output format");
                    Data::Codes(
                        groups
                            .iter()
                            .map(|g| {
                                let sum: i128 = g.iter().map(|&i| v[i] as i128).sum();
                                mean_code(sum, g.len(), frac_of(x), fmt)
                            })
                            .collect(),
                    )
                }
            }
        }
        Op::GlobalAccPool { data_layout } => {
            let xh = in_layout(node, &in_layout(node, x, *data_layout)?, Layout::NHWC)?;
            let s = &xh.spec.shape;
            let (n, hw, c) = (s[0], s[1] * s[2], s[3]);
            match &xh.data {
                Data::Real(v) => Data::Real(kernels::spatial_sum(v, n, hw, c, 0.0, |a, x| a + x)),
                Data::Codes(v) => {
                    let wide = kernels::spatial_sum(v, n, hw, c, 0i128, |a, x| a + x as i128);
                    Data::Codes(narrow(node, wide)?)
                }
            }
        }
        Op::Mul { out_fmt } | Op::Add { out_fmt } => {
            let is_mul = matches!(node.op, Op::Mul { .. });
            let (b, bc) = broadcast_operand(node, x, args[1])?;
            match (&x.data, &b.data) {
                (Data::Real(a), Data::Real(bv)) => Data::Real(
                    a.iter()
                        .enumerate()
                        .map(|(i, &a)| if is_mul { a * bv[bc.index(i)] } else { a + bv[bc.index(i)] })
                        .collect(),
                ),
                (Data::Codes(a), Data::Codes(bv)) => {
                    let (fa, fb) = (frac_of(x), frac_of(&b));
                    let (frac, wide): (u32, Vec<i128>) = if is_mul {
                        (fa + fb, a.iter().enumerate().map(|(i, &a)| a as i128 * bv[bc.index(i)] as i128).collect())
                    } else {
                        let f = fa.max(fb);
                        let sum = |a: i64, b: i64| ((a as i128) << (f - fa)) + ((b as i128) << (f - fb));
                        (f, a.iter().enumerate().map(|(i, &a)| sum(a, bv[bc.index(i)])).collect())
                    };
                    match out_fmt {
                        Some(fmt) => Data::Codes(wide.into_iter().map(|v| requantize(v, frac, *fmt)).collect()),
                        None => Data::Codes(narrow(node, wide)?),
                    }
                }
                _ => return Err(ExecError::UnquantizedNode(node.name.clone())),
            }
        }
        Op::MaxPool {
            kernel,
            stride,
            data_layout,
        } => {
            let xh = in_layout(node, x, Layout::NHWC)?;
            let win = window(&xh, *kernel, *stride, 0);
            let spec = TensorSpec::new("pool", vec![win.n, win.out_h(), win.out_w(), win.c], Layout::NHWC, xh.spec.dtype);
            let data = match &xh.data {
                Data::Real(v) => Data::Real(kernels::max_pool(v, &win)),
                Data::Codes(v) => Data::Codes(kernels::max_pool(v, &win)),
            };
            in_layout(node, &TensorValue { spec, data }, *data_layout)?.data
        }
        Op::Relu {} => match &x.data {
            Data::Real(v) => Data::Real(v.iter().map(|&v| v.max(0.0)).collect()),
            Data::Codes(v) => Data::Codes(v.iter().map(|&v| v.max(0)).collect()),
        },
        Op::Flatten {} => x.data.clone(),
    };
    debug_assert_eq!(data.len(), out_spec.numel(), "node {} produced wrong size", node.name);
    Ok(finish(out_spec, mode, data))
}

/// `sum / count` of codes at `frac`, rounded half-up into `fmt`.
pub(crate) fn mean_code(sum: i128, count: usize, frac: u32, fmt: QFormat) -> i64 {
    let out_frac = fmt.frac_bits() as u32;
    let (num, den) = if out_frac >= frac {
        (sum << (out_frac - frac), count as i128)
    } else {
        (sum, (count as i128) << (frac - out_frac))
    };
    let code = (2 * num + den).div_euclid(2 * den);
    code.clamp(fmt.min_code() as i128, fmt.max_code() as i128) as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Initializer, Node};

    fn q(s: &str) -> QFormat {
        s.parse().unwrap()
    }

    #[test]
    fn identity_graph() {
        let mut g = Graph::new("id");
        let spec = TensorSpec::float("x", vec![1, 3], Layout::NC);
        g.inputs.push(spec.clone());
        g.outputs.push(spec.clone());
        let x = TensorValue::real(spec, vec![1.0, -2.0, 3.5]);
        assert_eq!(run_float(&g, &[x.clone()]).unwrap(), vec![x]);
    }

    #[test]
    fn relu_float() {
        let mut g = Graph::new("relu");
        let spec = TensorSpec::float("x", vec![3], Layout::N);
        g.inputs.push(spec.clone());
        g.add_node(Node::new("r", Op::Relu {}, &["x"], &["y"]));
        g.outputs.push(spec.with_name("y"));
        let out = run_float(&g, &[TensorValue::real(spec, vec![-1.0, 0.0, 2.0])]).unwrap();
        assert_eq!(out[0].to_reals(), [0.0, 0.0, 2.0]);
    }

    fn relu_thresholds(fmt: QFormat) -> Vec<f32> {
        (1..=fmt.max_code()).map(|k| ((k as f64 - 0.5) * fmt.step()) as f32).collect()
    }

    fn threshold_graph(fmt: QFormat, in_fmt: QFormat) -> Graph {
        let mut g = Graph::new("mt");
        let t = relu_thresholds(fmt);
        g.inputs.push(TensorSpec::new("x", vec![1, 4], Layout::NC, DType::Fixed(in_fmt)));
        g.add_initializer(Initializer::float("t", vec![1, t.len()], t));
        g.add_node(Node::new(
            "mt",
            Op::MultiThreshold {
                data_layout: Layout::NC,
                scale: fmt.step(),
                bias: 0.0,
                out_fmt: Some(fmt),
            },
            &["x", "t"],
            &["y"],
        ));
        g.outputs.push(TensorSpec::float("y", vec![1], Layout::N));
        g
    }

    #[test]
    fn multithreshold_fixed_extremes() {
        let u22 = q("u:2.2");
        let in_fmt = q("s:4.4");
        let g = threshold_graph(u22, in_fmt);
        let spec = TensorSpec::new("x", vec![1, 4], Layout::NC, DType::Fixed(in_fmt));
        let x = TensorValue::real(spec, vec![-3.0, 0.0, 0.1875, 7.0]).quantize_to(in_fmt);
        let out = run_fixed(&g, &[x]).unwrap();
        assert_eq!(out[0].data, Data::Codes(vec![0, 0, 1, 15]));
        assert_eq!(out[0].to_reals()[3], 3.75);
    }

    #[test]
    fn eval_multithreshold_examples() {
        let t: Vec<f64> = relu_thresholds(q("u:2.2")).into_iter().map(f64::from).collect();
        assert_eq!(t.first(), Some(&0.125));
        assert_eq!(t.last(), Some(&3.625));
        assert_eq!(eval_multithreshold(0.2, &t, 0.25, 0.0).unwrap(), 0.25);
        assert_eq!(eval_multithreshold(-5.0, &t, 0.25, 0.5).unwrap(), 0.5);
        assert!(matches!(
            eval_multithreshold(0.0, &[0.5, 0.25], 1.0, 0.0),
            Err(ExecError::UnsortedThresholds(_))
        ));
    }

    #[test]
    fn gap_mul_fixed_example() {
        let u22 = q("u:2.2");
        let c_fmt = q("u:1.30");
        let mut g = Graph::new("gap");
        g.inputs.push(TensorSpec::new("x", vec![1, 1, 2, 2], Layout::NCHW, DType::Fixed(u22)));
        g.add_initializer(Initializer::fixed("c", vec![1], c_fmt, vec![c_fmt.quantize_code(0.25) as i32]));
        g.add_node(Node::new("gap", Op::GlobalAccPool { data_layout: Layout::NCHW }, &["x"], &["s"]));
        g.add_node(Node::new("mul", Op::Mul { out_fmt: Some(u22) }, &["s", "c"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![1], Layout::N));
        g.outputs.push(TensorSpec::float("s", vec![1], Layout::N));
        let x = TensorValue::codes(g.inputs[0].clone(), vec![1, 2, 3, 6]);
        let out = run_fixed(&g, &[x]).unwrap();
        assert_eq!(out[1].data, Data::Codes(vec![12]));
        assert_eq!(out[0].data, Data::Codes(vec![3]));
        assert_eq!(out[0].to_reals(), [0.75]);
    }

    #[test]
    fn fixed_on_float_graph_fails() {
        let mut g = Graph::new("relu");
        let spec = TensorSpec::float("x", vec![2], Layout::N);
        g.inputs.push(spec.clone());
        g.add_node(Node::new("r", Op::Relu {}, &["x"], &["y"]));
        g.outputs.push(spec.with_name("y"));
        let x = TensorValue::real(spec, vec![1.0, 2.0]);
        assert!(matches!(run_fixed(&g, &[x]), Err(ExecError::UnquantizedNode(_))));
    }

    #[test]
    fn input_mismatch() {
        let mut g = Graph::new("id");
        let spec = TensorSpec::float("x", vec![1, 3], Layout::NC);
        g.inputs.push(spec.clone());
        g.outputs.push(spec);
        let wrong = TensorValue::real(TensorSpec::float("x", vec![3], Layout::N), vec![0.0; 3]);
        assert!(matches!(run_float(&g, &[wrong]), Err(ExecError::InputMismatch(_))));
        assert!(matches!(run_float(&g, &[]), Err(ExecError::InputMismatch(_))));
    }

    #[test]
    fn mean_code_half_up() {
        let u22 = q("u:2.2");
        assert_eq!(mean_code(12, 4, 2, u22), 3);
        assert_eq!(mean_code(10, 4, 2, u22), 3); // 2.5 LSB rounds up
        assert_eq!(mean_code(9, 4, 2, u22), 2);
        assert_eq!(mean_code(-10, 4, 2, q("s:3.2")), -2);
        assert_eq!(mean_code(1000, 1, 2, u22), 15);
    }

    #[test]
    fn conv_matches_nested_loop() {
        // 3x3 conv, pad 0, on a 4x4 single-channel image
        let img: Vec<f64> = (0..16).map(|v| v as f64 * 0.5 - 3.0).collect();
        let w: Vec<f32> = (0..9).map(|v| (v as f32 - 4.0) * 0.25).collect();
        let mut g = Graph::new("conv");
        let spec = TensorSpec::float("x", vec![1, 1, 4, 4], Layout::NCHW);
        g.inputs.push(spec.clone());
        g.add_initializer(Initializer::float("w", vec![1, 1, 3, 3], w.clone()));
        g.add_node(Node::new(
            "conv",
            Op::Conv {
                kernel: 3,
                stride: 1,
                pad: 0,
                data_layout: Layout::NCHW,
            },
            &["x", "w"],
            &["y"],
        ));
        g.outputs.push(TensorSpec::float("y", vec![1], Layout::N));
        let out = run_float(&g, &[TensorValue::real(spec, img.clone())]).unwrap();
        let mut expect = Vec::new();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut s = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        s += img[(oy + ky) * 4 + ox + kx] * w[ky * 3 + kx] as f64;
                    }
                }
                expect.push(s);
            }
        }
        for (a, b) in out[0].to_reals().iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
