//! Seeded random graphs, one family per rewrite pass, and the equivalence
//! check shared by the integration and acceptance suites.

#![allow(dead_code)]

use qdfc::exec::{compare_runs, Plan};
use qdfc::graph::{Graph, Initializer, Layout, Node, Op, TensorSpec};
use qdfc::transforms::{pass_by_name, quantize_graph, QuantConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every rewrite in the default pipeline apart from shape inference.
pub const PASSES: [&str; 8] = [
    "lower_conv",
    "insert_layout_transposes",
    "absorb_affine",
    "absorb_transpose",
    "sink_transposes",
    "cancel_inverse_transposes",
    "convert_reduce_mean_to_gap",
    "fuse_mvau",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Signed inputs so that thresholds and pools see negative values too.
pub fn quant_config() -> QuantConfig {
    "conv=s:1.5,act=u:2.2,input=s:2.4".parse().unwrap()
}

fn layout4(r: &mut ChaCha8Rng) -> Layout {
    *[Layout::NCHW, Layout::NHWC].choose(r).unwrap()
}

fn other(l: Layout) -> Layout {
    if l == Layout::NCHW {
        Layout::NHWC
    } else {
        Layout::NCHW
    }
}

fn perm(from: Layout, to: Layout) -> Vec<usize> {
    qdfc::graph::perm_between(from, to).unwrap()
}

/// Logical dims `(n, c, h, w)` arranged for `layout`.
fn shape4(layout: Layout, n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    match layout {
        Layout::NHWC => vec![n, h, w, c],
        _ => vec![n, c, h, w],
    }
}

/// Multiple of 1/32 in [-1, 1); representable in the conv format.
fn weight(r: &mut ChaCha8Rng) -> f32 {
    r.gen_range(-32..32) as f32 / 32.0
}

fn weights(r: &mut ChaCha8Rng, name: &str, shape: Vec<usize>) -> Initializer {
    let n = shape.iter().product();
    Initializer::float(name, shape, (0..n).map(|_| weight(r)).collect())
}

/// Strictly ascending rows of multiples of 1/16 in [-2, 2].
fn thresholds(r: &mut ChaCha8Rng, name: &str, rows: usize) -> Initializer {
    let per_row = r.gen_range(1..=15);
    let mut data = Vec::with_capacity(rows * per_row);
    for _ in 0..rows {
        let mut grid: Vec<i32> = (-32..=32).collect();
        grid.shuffle(r);
        let mut row: Vec<i32> = grid[..per_row].to_vec();
        row.sort_unstable();
        data.extend(row.into_iter().map(|k| k as f32 / 16.0));
    }
    Initializer::float(name, vec![rows, per_row], data)
}

fn multithreshold(data_layout: Layout) -> Op {
    Op::MultiThreshold {
        data_layout,
        scale: 0.25,
        bias: 0.0,
        out_fmt: None,
    }
}

fn input(g: &mut Graph, name: &str, shape: Vec<usize>, layout: Layout) {
    g.inputs.push(TensorSpec::float(name, shape, layout));
}

/// Output specs are placeholders; shape inference fills them in.
fn output(g: &mut Graph, name: &str) {
    g.outputs.push(TensorSpec::float(name, vec![1], Layout::N));
}

fn lower_conv_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("conv");
    let l = layout4(r);
    let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(3..=7), r.gen_range(3..=7));
    let (kernel, stride) = (r.gen_range(1..=3), r.gen_range(1..=2));
    let pad = r.gen_range(0..kernel);
    let f = r.gen_range(1..=4);
    input(&mut g, "x", shape4(l, n, c, h, w), l);
    g.add_initializer(weights(r, "w", vec![f, c, kernel, kernel]));
    let op = Op::Conv {
        kernel,
        stride,
        pad,
        data_layout: layout4(r),
    };
    g.add_node(Node::new("conv", op, &["x", "w"], &["y"]));
    output(&mut g, "y");
    g
}

fn insert_layout_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("relayout");
    let l = layout4(r);
    let want = other(l);
    let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(2..=6), r.gen_range(2..=6));
    input(&mut g, "x", shape4(l, n, c, h, w), l);
    match r.gen_range(0..6) {
        0 => {
            let op = Op::MaxPool {
                kernel: 2,
                stride: r.gen_range(1..=2),
                data_layout: want,
            };
            g.add_node(Node::new("pool", op, &["x"], &["y"]));
        }
        1 => {
            let rows = if r.gen_bool(0.5) { 1 } else { c };
            g.add_initializer(thresholds(r, "t", rows));
            g.add_node(Node::new("mt", multithreshold(want), &["x", "t"], &["y"]));
        }
        2 => g.add_node(Node::new("gap", Op::GlobalAccPool { data_layout: want }, &["x"], &["y"])),
        3 => {
            let f = r.gen_range(1..=3);
            g.add_initializer(weights(r, "w", vec![f, c, 1, 1]));
            let op = Op::Conv {
                kernel: 1,
                stride: 1,
                pad: 0,
                data_layout: want,
            };
            g.add_node(Node::new("conv", op, &["x", "w"], &["y"]));
        }
        4 => {
            // matmul contracts channels last
            let x = if l == Layout::NHWC {
                g.add_node(Node::new("to_nchw", Op::Transpose { perm: perm(l, Layout::NCHW) }, &["x"], &["xc"]));
                "xc"
            } else {
                "x"
            };
            let f = r.gen_range(1..=3);
            g.add_initializer(weights(r, "w", vec![c, f]));
            g.add_node(Node::new("mm", Op::MatMul { im2col: None }, &[x, "w"], &["y"]));
        }
        _ => {
            input(&mut g, "z", shape4(want, n, c, h, w), want);
            g.add_node(Node::new("add", Op::Add { out_fmt: None }, &["x", "z"], &["y"]));
        }
    }
    output(&mut g, "y");
    g
}

fn affine_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("affine");
    let rank4 = r.gen_bool(0.5);
    let c = r.gen_range(1..=4);
    let l = if rank4 { layout4(r) } else { Layout::NC };
    let shape = if rank4 {
        shape4(l, 1, c, r.gen_range(1..=3), r.gen_range(1..=3))
    } else {
        vec![r.gen_range(1..=3), c]
    };
    input(&mut g, "x", shape, l);
    let mut x = "x".to_string();
    let steps = r.gen_range(1..=2);
    for s in 0..steps {
        let len = if r.gen_bool(0.5) { 1 } else { c };
        let is_mul = r.gen_bool(0.5);
        let values: Vec<f32> = (0..len)
            .map(|_| {
                if is_mul {
                    *[0.125f32, 0.25, 0.5].choose(r).unwrap()
                } else {
                    weight(r)
                }
            })
            .collect();
        let (k, y) = (format!("k{s}"), format!("a{s}"));
        g.add_initializer(Initializer::float(&k, vec![len], values));
        let op = if is_mul { Op::Mul { out_fmt: None } } else { Op::Add { out_fmt: None } };
        g.add_node(Node::new(format!("affine{s}"), op, &[&x, &k], &[&y]));
        x = y;
    }
    let rows = if r.gen_bool(0.5) { 1 } else { c };
    g.add_initializer(thresholds(r, "t", rows));
    g.add_node(Node::new("mt", multithreshold(l), &[&x, "t"], &["y"]));
    output(&mut g, "y");
    g
}

fn absorb_transpose_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("absorb");
    let l = layout4(r);
    let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=4), r.gen_range(1..=4));
    input(&mut g, "x", shape4(l, n, c, h, w), l);
    let to = other(l);
    g.add_node(Node::new("tr", Op::Transpose { perm: perm(l, to) }, &["x"], &["xt"]));
    let rows = if r.gen_bool(0.5) { 1 } else { c };
    g.add_initializer(thresholds(r, "t", rows));
    g.add_node(Node::new("mt", multithreshold(to), &["xt", "t"], &["y"]));
    output(&mut g, "y");
    g
}

fn sink_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("sink");
    let l = layout4(r);
    let to = other(l);
    let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(2..=5), r.gen_range(2..=5));
    input(&mut g, "x", shape4(l, n, c, h, w), l);
    g.add_node(Node::new("tr", Op::Transpose { perm: perm(l, to) }, &["x"], &["xt"]));
    match r.gen_range(0..8) {
        0 => {
            let rows = if r.gen_bool(0.5) { 1 } else { c };
            g.add_initializer(thresholds(r, "t", rows));
            g.add_node(Node::new("mt", multithreshold(to), &["xt", "t"], &["y"]));
        }
        1 => {
            let op = Op::MaxPool {
                kernel: 2,
                stride: r.gen_range(1..=2),
                data_layout: to,
            };
            g.add_node(Node::new("pool", op, &["xt"], &["y"]));
        }
        2 => g.add_node(Node::new("relu", Op::Relu {}, &["xt"], &["y"])),
        3 | 4 => {
            let len = if r.gen_bool(0.5) { 1 } else { c };
            g.add_initializer(Initializer::float("k", vec![len], (0..len).map(|_| weight(r)).collect()));
            let op = if r.gen_bool(0.5) { Op::Add { out_fmt: None } } else { Op::Mul { out_fmt: None } };
            g.add_node(Node::new("affine", op, &["xt", "k"], &["y"]));
        }
        5 => {
            input(&mut g, "z", shape4(l, n, c, h, w), l);
            g.add_node(Node::new("trz", Op::Transpose { perm: perm(l, to) }, &["z"], &["zt"]));
            g.add_node(Node::new("add", Op::Add { out_fmt: None }, &["xt", "zt"], &["y"]));
        }
        6 => {
            let axes = to.spatial_axes().to_vec();
            g.add_node(Node::new("mean", Op::ReduceMean { axes, out_fmt: None }, &["xt"], &["y"]));
        }
        _ => g.add_node(Node::new("gap", Op::GlobalAccPool { data_layout: to }, &["xt"], &["y"])),
    }
    output(&mut g, "y");
    g
}

fn cancel_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("cancel");
    let l = layout4(r);
    let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=4), r.gen_range(1..=4));
    input(&mut g, "x", shape4(l, n, c, h, w), l);
    let mut x = "x".to_string();
    for i in 0..r.gen_range(1..=3) {
        let (a, b) = (format!("f{i}"), format!("b{i}"));
        g.add_node(Node::new(format!("fwd{i}"), Op::Transpose { perm: perm(l, other(l)) }, &[&x], &[&a]));
        g.add_node(Node::new(format!("back{i}"), Op::Transpose { perm: perm(other(l), l) }, &[&a], &[&b]));
        x = b;
    }
    g.add_node(Node::new("relu", Op::Relu {}, &[&x], &["y"]));
    output(&mut g, "y");
    g
}

fn gap_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("gap");
    let l = layout4(r);
    let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=8), r.gen_range(1..=8));
    input(&mut g, "x", shape4(l, n, c, h, w), l);
    let x = if r.gen_bool(0.5) {
        g.add_node(Node::new("relu", Op::Relu {}, &["x"], &["a"]));
        "a"
    } else {
        "x"
    };
    let mut axes = l.spatial_axes().to_vec();
    if r.gen_bool(0.5) {
        axes.reverse();
    }
    g.add_node(Node::new("mean", Op::ReduceMean { axes, out_fmt: None }, &[x], &["y"]));
    output(&mut g, "y");
    g
}

fn mvau_case(r: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new("mvau");
    let c = r.gen_range(1..=4);
    let f = r.gen_range(1..=4);
    let (l, im2col, k) = if r.gen_bool(0.5) {
        input(&mut g, "x", vec![r.gen_range(1..=3), c], Layout::NC);
        (Layout::NC, None, c)
    } else {
        let (h, w) = (r.gen_range(3..=5), r.gen_range(3..=5));
        input(&mut g, "x", vec![1, h, w, c], Layout::NHWC);
        let kernel = r.gen_range(1..=3);
        let ic = qdfc::graph::Im2Col {
            kernel,
            stride: r.gen_range(1..=2),
            pad: r.gen_range(0..kernel),
        };
        (Layout::NHWC, Some(ic), kernel * kernel * c)
    };
    g.add_initializer(weights(r, "w", vec![k, f]));
    g.add_node(Node::new("mm", Op::MatMul { im2col }, &["x", "w"], &["acc"]));
    let rows = if r.gen_bool(0.5) { 1 } else { f };
    g.add_initializer(thresholds(r, "t", rows));
    g.add_node(Node::new("mt", multithreshold(l), &["acc", "t"], &["y"]));
    output(&mut g, "y");
    g
}

/// A float graph containing the target pattern of `pass`.
pub fn case(pass: &str, seed: u64) -> Graph {
    let r = &mut rng(seed);
    match pass {
        "lower_conv" => lower_conv_case(r),
        "insert_layout_transposes" => insert_layout_case(r),
        "absorb_affine" => affine_case(r),
        "absorb_transpose" => absorb_transpose_case(r),
        "sink_transposes" => sink_case(r),
        "cancel_inverse_transposes" => cancel_case(r),
        "convert_reduce_mean_to_gap" => gap_case(r),
        "fuse_mvau" => mvau_case(r),
        other => panic!("no generator for {other}"),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome {
    pub float_changes: usize,
    pub fixed_changes: usize,
    pub max_rel: f64,
    pub compared: usize,
    pub mismatched: usize,
}

/// Applies `pass` to the float case and to its quantized twin and compares
/// each against its source on `trials` random inputs.
pub fn check(pass: &str, seed: u64, trials: usize) -> Outcome {
    let p = pass_by_name(pass).unwrap();
    let float = case(pass, seed);
    let (float_after, float_changes) = p.apply(&float).unwrap_or_else(|e| panic!("{pass} seed {seed}: {e}"));
    let fr = compare_runs(&Plan::new(&float).unwrap(), &Plan::new(&float_after).unwrap(), trials, seed).unwrap();

    let fixed = quantize_graph(&float, &quant_config()).unwrap();
    let (fixed_after, fixed_changes) = p.apply(&fixed).unwrap_or_else(|e| panic!("{pass} seed {seed}: {e}"));
    let xr = compare_runs(&Plan::new(&fixed).unwrap(), &Plan::new(&fixed_after).unwrap(), trials, seed).unwrap();
    let fx = xr.fixed.expect("quantized graphs compare in fixed mode");
    Outcome {
        float_changes,
        fixed_changes,
        max_rel: fr.float.max_rel,
        compared: fx.compared,
        mismatched: fx.mismatched,
    }
}
