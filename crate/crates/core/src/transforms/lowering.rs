//! Rewrites that map layers onto hardware-style primitives.

use super::edit::{fresh_tensor, insert_node, producer, spec};
use super::TransformError;
use crate::fixed::QFormat;
use crate::graph::{perm_between, Graph, Im2Col, Initializer, Layout, Op, Payload, TensorSpec};

type Step = Result<Option<Graph>, TransformError>;

/// Format of the `1/(H·W)` constant in fixed graphs.
pub const INV_AREA_FORMAT: &str = "u:1.30";

/// Reorders OIHW weights into a `(K·K·C, F)` matrix with rows in (ky, kx, c)
/// order, matching the im2col column order.
fn weight_matrix<T: Copy>(w: &[T], f: usize, c: usize, k: usize) -> Vec<T> {
    let rows = k * k * c;
    let mut out = Vec::with_capacity(rows * f);
    for ky in 0..k {
        for kx in 0..k {
            for ci in 0..c {
                for fi in 0..f {
                    out.push(w[((fi * c + ci) * k + ky) * k + kx]);
                }
            }
        }
    }
    out
}

/// Conv becomes an im2col MatMul on NHWC data, wrapped in transposes when the
/// conv was NCHW.
pub(super) fn lower_conv(g: &Graph) -> Step {
    let Some(idx) = g.nodes.iter().position(|n| matches!(n.op, Op::Conv { .. })) else {
        return Ok(None);
    };
    let node = g.nodes[idx].clone();
    let Op::Conv {
        kernel,
        stride,
        pad,
        data_layout,
    } = node.op
    else {
        unreachable!()
    };
    let w = &g.initializers[&node.inputs[1]];
    let [f, c, k, _] = w.spec.shape[..] else {
        unreachable!("shape inference checked conv weights")
    };
    let data = match &w.data {
        Payload::F32(v) => Payload::F32(weight_matrix(v, f, c, k)),
        Payload::Codes(v) => Payload::Codes(weight_matrix(v, f, c, k)),
    };
    let mut out = g.clone();
    let w_name = fresh_tensor(g, &format!("{}_mat", w.spec.name));
    out.add_initializer(Initializer {
        spec: TensorSpec::new(w_name.as_str(), vec![k * k * c, f], Layout::NC, w.spec.dtype),
        data,
    });
    out.nodes.remove(idx);

    let mut at = idx;
    let mut x = node.inputs[0].clone();
    let x_layout = spec(g, &x).layout;
    if x_layout != Layout::NHWC {
        let perm = perm_between(x_layout, Layout::NHWC).expect("rank-4 input");
        let t = fresh_tensor(&out, &format!("{x}_nhwc"));
        insert_node(&mut out, at, &format!("{}_in", node.name), Op::Transpose { perm }, &[&x], &t);
        at += 1;
        x = t;
    }
    let im2col = (kernel != 1 || stride != 1 || pad != 0).then_some(Im2Col { kernel, stride, pad });
    let y = node.output().to_string();
    let mm_out = if data_layout == Layout::NHWC {
        y.clone()
    } else {
        fresh_tensor(&out, &format!("{y}_nhwc"))
    };
    insert_node(&mut out, at, &node.name, Op::MatMul { im2col }, &[&x, &w_name], &mm_out);
    if data_layout != Layout::NHWC {
        let perm = perm_between(Layout::NHWC, data_layout).expect("rank-4 layout");
        insert_node(&mut out, at + 1, &format!("{}_out", node.name), Op::Transpose { perm }, &[&mm_out], &y);
    }
    Ok(Some(out))
}

const INV_AREA_FRAC: u32 = 30;

/// ReduceMean over the spatial axes becomes an exact spatial sum followed by
/// a scalar multiply by `1/(H·W)`.
///
/// In fixed graphs the constant is `ceil(2^30 / area)` in `u:1.30` and the Mul
/// requantizes half-up. The result equals the half-up mean when the area is a
/// power of two, or when every sum is non-negative and
/// `area · max|sum| · 2^max(0, out_frac - in_frac) < 2^29`. Otherwise a
/// negative sum whose mean lies exactly on a tie lands one code lower.
pub(super) fn convert_reduce_mean_to_gap(g: &Graph) -> Step {
    for (idx, node) in g.nodes.iter().enumerate() {
        let Op::ReduceMean { axes, out_fmt } = &node.op else {
            continue;
        };
        let x = spec(g, &node.inputs[0]);
        let mut sorted = axes.clone();
        sorted.sort_unstable();
        if x.rank() != 4 || sorted != x.layout.spatial_axes() {
            return Err(TransformError::UnsupportedReduction(node.name.clone()));
        }
        let area: usize = x.layout.spatial_axes().iter().map(|&a| x.shape[a]).product();
        let c_name = fresh_tensor(g, &format!("{}_inv_area", node.name));
        let constant = match out_fmt {
            Some(_) if !x.dtype.is_float() => {
                let cfmt: QFormat = INV_AREA_FORMAT.parse().expect("valid format");
                let code = (1u64 << INV_AREA_FRAC).div_ceil(area as u64);
                Initializer::fixed(&c_name, vec![1], cfmt, vec![code as i32])
            }
            _ => Initializer::float(&c_name, vec![1], vec![(1.0 / area as f64) as f32]),
        };

        let mut out = g.clone();
        out.add_initializer(constant);
        out.nodes.remove(idx);
        let sum = fresh_tensor(&out, &format!("{}_sum", node.output()));
        insert_node(
            &mut out,
            idx,
            &format!("{}_gap", node.name),
            Op::GlobalAccPool { data_layout: x.layout },
            &[&node.inputs[0]],
            &sum,
        );
        insert_node(&mut out, idx + 1, &node.name, Op::Mul { out_fmt: *out_fmt }, &[&sum, &c_name], node.output());
        return Ok(Some(out));
    }
    Ok(None)
}

/// MatMul with constant weights feeding a channel-last MultiThreshold becomes
/// one MVAU.
pub(super) fn fuse_mvau(g: &Graph) -> Step {
    for (idx, node) in g.nodes.iter().enumerate() {
        let Op::MultiThreshold {
            data_layout,
            scale,
            bias,
            out_fmt,
        } = node.op
        else {
            continue;
        };
        let Some((_, mm)) = producer(g, &node.inputs[0]) else {
            continue;
        };
        let Op::MatMul { im2col } = mm.op else {
            continue;
        };
        if g.use_count(mm.output()) != 1 || spec(g, mm.output()).layout != data_layout {
            continue;
        }
        let mut out = g.clone();
        let fused = &mut out.nodes[idx];
        fused.op = Op::Mvau {
            im2col,
            scale,
            bias,
            out_fmt,
        };
        fused.inputs = vec![mm.inputs[0].clone(), mm.inputs[1].clone(), node.inputs[1].clone()];
        return Ok(Some(out));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DType, Node};
    use crate::transforms::pass_by_name;

    #[test]
    fn weight_matrix_order() {
        // f=2, c=1, k=2: w[f][0][ky][kx] = 10f + 2ky + kx
        let w = [0, 1, 2, 3, 10, 11, 12, 13];
        assert_eq!(weight_matrix(&w, 2, 1, 2), [0, 10, 1, 11, 2, 12, 3, 13]);
    }

    fn conv_graph(kernel: usize, stride: usize, pad: usize) -> Graph {
        let mut g = Graph::new("g");
        g.inputs.push(TensorSpec::float("x", vec![1, 4, 4, 3], Layout::NHWC));
        g.add_initializer(Initializer::float("w", vec![5, 3, kernel, kernel], vec![0.5; 15 * kernel * kernel]));
        g.add_node(Node::new(
            "conv",
            Op::Conv {
                kernel,
                stride,
                pad,
                data_layout: Layout::NHWC,
            },
            &["x", "w"],
            &["y"],
        ));
        g.outputs.push(TensorSpec::float("y", vec![1], Layout::N));
        g
    }

    #[test]
    fn one_by_one_conv_is_plain_matmul() {
        let (out, n) = pass_by_name("lower_conv").unwrap().apply(&conv_graph(1, 1, 0)).unwrap();
        assert_eq!(n, 1);
        assert_eq!(out.nodes.len(), 1);
        assert_eq!(out.nodes[0].op, Op::MatMul { im2col: None });
        assert_eq!(out.initializers["w_mat"].spec.shape, [3, 5]);
        assert!(!out.initializers.contains_key("w"));
    }

    #[test]
    fn strided_padded_shape() {
        let (out, _) = pass_by_name("lower_conv").unwrap().apply(&conv_graph(3, 2, 1)).unwrap();
        assert_eq!(out.outputs[0].shape, [1, 2, 2, 5]);
    }

    #[test]
    fn reduce_mean_over_channels_rejected() {
        let mut g = Graph::new("g");
        g.inputs.push(TensorSpec::float("x", vec![1, 2, 2, 2], Layout::NCHW));
        g.add_node(Node::new("m", Op::ReduceMean { axes: vec![1, 2], out_fmt: None }, &["x"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![1, 2], Layout::NC));
        assert_eq!(
            pass_by_name("convert_reduce_mean_to_gap").unwrap().apply(&g).unwrap_err(),
            TransformError::UnsupportedReduction("m".into())
        );
    }

    #[test]
    fn gap_constant_is_quarter() {
        let mut g = Graph::new("g");
        g.inputs.push(TensorSpec::float("x", vec![1, 3, 2, 2], Layout::NCHW));
        g.add_node(Node::new("m", Op::ReduceMean { axes: vec![3, 2], out_fmt: None }, &["x"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![1, 3], Layout::NC));
        let (out, n) = pass_by_name("convert_reduce_mean_to_gap").unwrap().apply(&g).unwrap();
        assert_eq!(n, 1);
        let kinds: Vec<_> = out.nodes.iter().map(|n| n.op.kind()).collect();
        assert_eq!(kinds, ["GlobalAccPool", "Mul"]);
        assert_eq!(out.initializers["m_inv_area"].reals(), [0.25]);
    }

    fn fixed_mean(shape: Vec<usize>, input: &str, out: &str) -> Graph {
        let mut g = Graph::new("g");
        g.inputs.push(TensorSpec::new("x", shape, Layout::NCHW, DType::Fixed(input.parse().unwrap())));
        let op = Op::ReduceMean {
            axes: vec![2, 3],
            out_fmt: Some(out.parse().unwrap()),
        };
        g.add_node(Node::new("m", op, &["x"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![1, 1], Layout::NC));
        g
    }

    #[test]
    fn gap_rounds_ties_like_the_mean() {
        use crate::exec::{run_fixed, TensorValue};
        // area 10: round(2^30/10) lies below 1/10 and would turn the 0.5 tie into 0
        let g = fixed_mean(vec![1, 1, 2, 5], "u:2.2", "u:2.2");
        let (gap, n) = pass_by_name("convert_reduce_mean_to_gap").unwrap().apply(&g).unwrap();
        assert_eq!(n, 1);
        assert_eq!(gap.initializers["m_inv_area"].codes(), Some(&[107_374_183][..]));
        for codes in [vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0], vec![15; 10], vec![3, 0, 0, 0, 0, 0, 0, 0, 0, 2]] {
            let x = TensorValue::codes(g.inputs[0].clone(), codes);
            assert_eq!(run_fixed(&g, &[x.clone()]).unwrap(), run_fixed(&gap, &[x]).unwrap());
        }
    }

    #[test]
    fn negative_tie_follows_the_mul_rule() {
        use crate::exec::{run_fixed, TensorValue};
        let g = fixed_mean(vec![1, 1, 2, 5], "s:3.2", "s:3.2");
        let (gap, _) = pass_by_name("convert_reduce_mean_to_gap").unwrap().apply(&g).unwrap();
        // sum -5 over 10 pixels: the mean -0.5 rounds half-up to 0, the product to -1
        let x = TensorValue::codes(g.inputs[0].clone(), vec![-1, -1, -1, -1, -1, 0, 0, 0, 0, 0]);
        assert_eq!(run_fixed(&g, &[x.clone()]).unwrap()[0].data, crate::exec::Data::Codes(vec![0]));
        assert_eq!(run_fixed(&gap, &[x]).unwrap()[0].data, crate::exec::Data::Codes(vec![-1]));
    }
}
