use std::collections::BTreeMap;

use super::{is_permutation, perm_between, permute_dims, topo_order, validate, DType, Graph, GraphError, Im2Col, Layout, Node, Op, TensorSpec};

/// Resolves the spec of every node output and refreshes the graph outputs.
pub fn infer_shapes(graph: &Graph) -> Result<Graph, GraphError> {
    let diags = validate(graph);
    if !diags.is_empty() {
        return Err(GraphError::Invalid(diags));
    }
    let mut out = graph.clone();
    out.value_info = BTreeMap::new();
    for idx in topo_order(graph)? {
        let node = &graph.nodes[idx];
        let spec = infer_node(&out, node)?;
        out.value_info.insert(spec.name.clone(), spec);
    }
    for spec in out.outputs.iter_mut() {
        if let Some(resolved) = out.value_info.get(&spec.name) {
            *spec = resolved.clone();
        } else if let Some(input) = graph.inputs.iter().find(|s| s.name == spec.name) {
            *spec = input.clone();
        } else if let Some(init) = graph.initializers.get(&spec.name) {
            *spec = init.spec.clone();
        }
    }
    Ok(out)
}

fn mismatch(node: &Node, detail: impl Into<String>) -> GraphError {
    GraphError::ShapeMismatch {
        node: node.name.clone(),
        detail: detail.into(),
    }
}

fn bad_layout(node: &Node, detail: impl Into<String>) -> GraphError {
    GraphError::UnsupportedLayout {
        node: node.name.clone(),
        detail: detail.into(),
    }
}

/// Extents of `spec` when read in `layout` order.
pub(crate) fn dims_in(spec: &TensorSpec, layout: Layout) -> Option<Vec<usize>> {
    if spec.layout == layout {
        return Some(spec.shape.clone());
    }
    let perm = perm_between(spec.layout, layout)?;
    Some(permute_dims(&spec.shape, &perm))
}

/// Output dtype of a multiply-accumulate over `x` and `w`.
pub(crate) fn mac_dtype(x: DType, w: DType) -> DType {
    match (x.frac_bits(), w.frac_bits()) {
        (Some(a), Some(b)) => DType::Acc {
            frac_bits: (a + b) as u8,
        },
        _ => DType::Float32,
    }
}

/// Output dtype of a requantizing node: fixed inputs with a declared format
/// produce that format, anything else is float (unquantized).
fn requant_dtype(inputs_fixed: bool, out_fmt: Option<crate::fixed::QFormat>, exact: Option<DType>) -> DType {
    match (inputs_fixed, out_fmt, exact) {
        (true, Some(fmt), _) => DType::Fixed(fmt),
        (true, None, Some(exact)) => exact,
        _ => DType::Float32,
    }
}

pub(crate) fn conv_out(extent: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

fn lookup<'g>(graph: &'g Graph, node: &Node, idx: usize) -> Result<&'g TensorSpec, GraphError> {
    let tensor = &node.inputs[idx];
    graph.spec(tensor).ok_or_else(|| GraphError::UnknownTensor {
        tensor: tensor.clone(),
        user: node.name.clone(),
    })
}

fn matmul_dims(node: &Node, x: &TensorSpec, w: &TensorSpec, im2col: Option<Im2Col>) -> Result<(Vec<usize>, Layout), GraphError> {
    if w.rank() != 2 {
        return Err(mismatch(node, format!("weights must be rank 2, got {:?}", w.shape)));
    }
    let (k, n) = (w.shape[0], w.shape[1]);
    match (x.rank(), im2col) {
        (4, ic) => {
            let d = dims_in(x, Layout::NHWC).ok_or_else(|| bad_layout(node, format!("input layout {}", x.layout)))?;
            let (h, wd, c) = (d[1], d[2], d[3]);
            let (kk, oh, ow) = match ic {
                Some(ic) => {
                    let oh = conv_out(h, ic.kernel, ic.stride, ic.pad);
                    let ow = conv_out(wd, ic.kernel, ic.stride, ic.pad);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => (ic.kernel * ic.kernel * c, oh, ow),
                        _ => return Err(mismatch(node, "kernel larger than padded input")),
                    }
                }
                None => (c, h, wd),
            };
            if kk != k {
                return Err(mismatch(node, format!("inner dimension {kk} vs weight rows {k}")));
            }
            Ok((vec![d[0], oh, ow, n], Layout::NHWC))
        }
        (2, None) => {
            if x.shape[1] != k {
                return Err(mismatch(node, format!("inner dimension {} vs weight rows {k}", x.shape[1])));
            }
            Ok((vec![x.shape[0], n], Layout::NC))
        }
        (r, _) => Err(mismatch(node, format!("unsupported input rank {r}"))),
    }
}

fn check_thresholds(node: &Node, t: &TensorSpec, channels: usize) -> Result<(), GraphError> {
    if t.rank() != 2 || (t.shape[0] != 1 && t.shape[0] != channels) {
        return Err(mismatch(
            node,
            format!("thresholds {:?} must be (1 | {channels}, T)", t.shape),
        ));
    }
    Ok(())
}

/// Shape check for the second operand of Add/Mul against `x`.
fn check_broadcast(node: &Node, x: &TensorSpec, b: &TensorSpec) -> Result<(), GraphError> {
    let channels = x.shape[x.layout.channel_axis()];
    let ok = b.numel() == 1
        || (b.rank() == 1 && b.shape[0] == channels)
        || dims_in(b, x.layout).is_some_and(|d| d == x.shape);
    if ok {
        Ok(())
    } else {
        Err(mismatch(node, format!("cannot broadcast {:?} onto {:?}", b.shape, x.shape)))
    }
}

fn infer_node(graph: &Graph, node: &Node) -> Result<TensorSpec, GraphError> {
    let x = lookup(graph, node, 0)?;
    let name = node.output().to_string();
    let fixed_in = !x.dtype.is_float();
    let spec = match &node.op {
        Op::Conv {
            kernel,
            stride,
            pad,
            data_layout,
        } => {
            let w = lookup(graph, node, 1)?;
            let d = dims_in(x, *data_layout).ok_or_else(|| bad_layout(node, format!("{} input for {data_layout} conv", x.layout)))?;
            let (n, c, h, wd) = match data_layout {
                Layout::NCHW => (d[0], d[1], d[2], d[3]),
                Layout::NHWC => (d[0], d[3], d[1], d[2]),
                other => return Err(bad_layout(node, format!("conv layout {other}"))),
            };
            if w.rank() != 4 || w.shape[1] != c || w.shape[2] != *kernel || w.shape[3] != *kernel {
                return Err(mismatch(node, format!("weights {:?} for {c} input channels, kernel {kernel}", w.shape)));
            }
            let f = w.shape[0];
            let (oh, ow) = match (conv_out(h, *kernel, *stride, *pad), conv_out(wd, *kernel, *stride, *pad)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(mismatch(node, "kernel larger than padded input")),
            };
            let shape = match data_layout {
                Layout::NCHW => vec![n, f, oh, ow],
                _ => vec![n, oh, ow, f],
            };
            TensorSpec::new(name, shape, *data_layout, mac_dtype(x.dtype, w.dtype))
        }
        Op::MatMul { im2col } => {
            let w = lookup(graph, node, 1)?;
            let (shape, layout) = matmul_dims(node, x, w, *im2col)?;
            TensorSpec::new(name, shape, layout, mac_dtype(x.dtype, w.dtype))
        }
        Op::Mvau { im2col, out_fmt, .. } => {
            let w = lookup(graph, node, 1)?;
            let t = lookup(graph, node, 2)?;
            let (shape, layout) = matmul_dims(node, x, w, *im2col)?;
            check_thresholds(node, t, *shape.last().unwrap())?;
            let fixed = fixed_in && !w.dtype.is_float();
            TensorSpec::new(name, shape, layout, requant_dtype(fixed, *out_fmt, None))
        }
        Op::MultiThreshold { data_layout, out_fmt, .. } => {
            let t = lookup(graph, node, 1)?;
            let d = dims_in(x, *data_layout).ok_or_else(|| bad_layout(node, format!("{} input, {data_layout} expected", x.layout)))?;
            check_thresholds(node, t, d[data_layout.channel_axis()])?;
            TensorSpec::new(name, d, *data_layout, requant_dtype(fixed_in, *out_fmt, None))
        }
        Op::Transpose { perm } => {
            if perm.len() != x.rank() || !is_permutation(perm) {
                return Err(mismatch(node, format!("perm {perm:?} for rank {}", x.rank())));
            }
            let layout = x
                .layout
                .permuted(perm)
                .ok_or_else(|| bad_layout(node, format!("{} permuted by {perm:?}", x.layout)))?;
            TensorSpec::new(name, permute_dims(&x.shape, perm), layout, x.dtype)
        }
        Op::ReduceMean { axes, out_fmt } => {
            if axes.iter().any(|&a| a >= x.rank()) {
                return Err(mismatch(node, format!("axes {axes:?} out of range for rank {}", x.rank())));
            }
            let shape: Vec<usize> = (0..x.rank()).filter(|a| !axes.contains(a)).map(|a| x.shape[a]).collect();
            let layout = match shape.len() {
                2 => Layout::NC,
                1 => Layout::N,
                r => return Err(bad_layout(node, format!("reduction leaves rank {r}"))),
            };
            TensorSpec::new(name, shape, layout, requant_dtype(fixed_in, *out_fmt, None))
        }
        Op::GlobalAccPool { data_layout } => {
            let d = dims_in(x, *data_layout).ok_or_else(|| bad_layout(node, format!("{} input, {data_layout} expected", x.layout)))?;
            if data_layout.spatial_axes().is_empty() {
                return Err(bad_layout(node, format!("pooling needs a spatial layout, got {data_layout}")));
            }
            let dtype = match x.dtype.frac_bits() {
                Some(f) => DType::Acc { frac_bits: f as u8 },
                None => DType::Float32,
            };
            TensorSpec::new(name, vec![d[0], d[data_layout.channel_axis()]], Layout::NC, dtype)
        }
        Op::Mul { out_fmt } | Op::Add { out_fmt } => {
            let b = lookup(graph, node, 1)?;
            check_broadcast(node, x, b)?;
            let fixed = fixed_in && !b.dtype.is_float();
            let exact = match (&node.op, x.dtype.frac_bits(), b.dtype.frac_bits()) {
                (Op::Mul { .. }, Some(fa), Some(fb)) => Some(DType::Acc { frac_bits: (fa + fb) as u8 }),
                (_, Some(fa), Some(fb)) => Some(DType::Acc { frac_bits: fa.max(fb) as u8 }),
                _ => None,
            };
            let dtype = requant_dtype(fixed, *out_fmt, exact);
            TensorSpec::new(name, x.shape.clone(), x.layout, dtype)
        }
        Op::MaxPool {
            kernel,
            stride,
            data_layout,
        } => {
            let d = dims_in(x, *data_layout).ok_or_else(|| bad_layout(node, format!("{} input, {data_layout} expected", x.layout)))?;
            let [ha, wa] = match data_layout.spatial_axes() {
                [a, b] => [*a, *b],
                _ => return Err(bad_layout(node, format!("pooling needs a spatial layout, got {data_layout}"))),
            };
            let mut shape = d.clone();
            for axis in [ha, wa] {
                shape[axis] = conv_out(d[axis], *kernel, *stride, 0).ok_or_else(|| mismatch(node, "pool window larger than input"))?;
            }
            TensorSpec::new(name, shape, *data_layout, x.dtype)
        }
        Op::Relu {} => x.with_name(name),
        Op::Flatten {} => {
            let rest: usize = x.shape[1..].iter().product();
            let shape = if x.rank() == 1 { vec![x.shape[0], 1] } else { vec![x.shape[0], rest] };
            TensorSpec::new(name, shape, Layout::NC, x.dtype)
        }
    };
    Ok(spec)
}
