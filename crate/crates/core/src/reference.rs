//! Built-in float graphs used by the examples, tests and benchmarks.
//!
//! Weights are drawn from a seeded ChaCha8 stream, so a seed fully determines
//! the graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Initializer, Layout, Node, Op, TensorSpec};

struct Builder {
    g: Graph,
    rng: ChaCha8Rng,
    last: String,
    channels: usize,
    side: usize,
    count: usize,
}

impl Builder {
    fn fresh(&mut self, kind: &str) -> String {
        self.count += 1;
        format!("{kind}{}", self.count)
    }

    fn push(&mut self, kind: &str, op: Op, extra: &[&str]) -> String {
        let name = self.fresh(kind);
        let mut inputs = vec![self.last.as_str()];
        inputs.extend_from_slice(extra);
        self.g.add_node(Node::new(name.as_str(), op, &inputs, &[name.as_str()]));
        self.last = name.clone();
        name
    }

    fn conv(&mut self, out: usize, bias: bool) -> String {
        let fan_in = self.channels * 9;
        let bound = (2.0 / (fan_in as f32).sqrt()).min(0.9);
        let w_name = self.fresh("w");
        let values = (0..out * fan_in).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.g.add_initializer(Initializer::float(&w_name, vec![out, self.channels, 3, 3], values));
        let conv = Op::Conv {
            kernel: 3,
            stride: 1,
            pad: 1,
            data_layout: Layout::NCHW,
        };
        self.push("conv", conv, &[&w_name]);
        self.channels = out;
        if bias {
            let b_name = self.fresh("b");
            let values = (0..out).map(|_| self.rng.gen_range(-0.25f32..0.25)).collect();
            self.g.add_initializer(Initializer::float(&b_name, vec![out], values));
            self.push("bias", Op::Add { out_fmt: None }, &[&b_name]);
        }
        self.last.clone()
    }

    fn relu(&mut self) -> String {
        self.push("relu", Op::Relu {}, &[])
    }

    fn pool(&mut self) {
        let op = Op::MaxPool {
            kernel: 2,
            stride: 2,
            data_layout: Layout::NCHW,
        };
        self.push("pool", op, &[]);
        self.side /= 2;
    }

    /// conv-relu, conv, add skip, relu.
    fn residual(&mut self) {
        let skip = self.last.clone();
        let c = self.channels;
        self.conv(c, true);
        self.relu();
        self.conv(c, false);
        self.push("add", Op::Add { out_fmt: None }, &[&skip]);
        self.relu();
    }
}

/// A ResNet-9-style backbone on a `(1, 32, 32, 3)` NHWC image.
///
/// The image is transposed once to NCHW; convolutions are 3×3 with padding 1;
/// the head is a spatial ReduceMean producing a `(1, 32)` feature vector.
pub fn resnet9_like(seed: u64) -> Graph {
    let mut b = Builder {
        g: Graph::new("resnet9_like"),
        rng: ChaCha8Rng::seed_from_u64(seed),
        last: "image".into(),
        channels: 3,
        side: 32,
        count: 0,
    };
    b.g.inputs.push(TensorSpec::float("image", vec![1, 32, 32, 3], Layout::NHWC));
    b.push("to_nchw", Op::Transpose { perm: vec![0, 3, 1, 2] }, &[]);

    b.conv(8, true);
    b.relu();
    b.conv(16, true);
    b.relu();
    b.pool();
    b.residual();
    b.conv(32, true);
    b.relu();
    b.pool();
    b.conv(32, true);
    b.relu();
    b.pool();
    b.residual();
    debug_assert_eq!(b.side, 4);

    let features = b.push("mean", Op::ReduceMean { axes: vec![2, 3], out_fmt: None }, &[]);
    b.g.outputs.push(TensorSpec::float(features, vec![1, b.channels], Layout::NC));
    b.g
}

/// Minimal backbone for separable synthetic data: 1×1 conv with weights
/// `0.5·I`, Relu, spatial mean. Input is `(1, side, side, classes)` NHWC.
pub fn separable_backbone(classes: usize, side: usize) -> Graph {
    let mut g = Graph::new("separable");
    g.inputs.push(TensorSpec::float("image", vec![1, side, side, classes], Layout::NHWC));
    let mut w = vec![0.0f32; classes * classes];
    for c in 0..classes {
        w[c * classes + c] = 0.5;
    }
    g.add_initializer(Initializer::float("w", vec![classes, classes, 1, 1], w));
    g.add_node(Node::new("to_nchw", Op::Transpose { perm: vec![0, 3, 1, 2] }, &["image"], &["x"]));
    let conv = Op::Conv {
        kernel: 1,
        stride: 1,
        pad: 0,
        data_layout: Layout::NCHW,
    };
    g.add_node(Node::new("conv", conv, &["x", "w"], &["h"]));
    g.add_node(Node::new("relu", Op::Relu {}, &["h"], &["a"]));
    g.add_node(Node::new("mean", Op::ReduceMean { axes: vec![2, 3], out_fmt: None }, &["a"], &["features"]));
    g.outputs.push(TensorSpec::float("features", vec![1, classes], Layout::NC));
    g
}

/// Items for [`separable_backbone`]: class `c` has channel `c` at 2.0 and
/// every value perturbed by noise in `[0, noise)`. Flattened NHWC, with labels.
pub fn separable_items(classes: usize, per_class: usize, side: usize, noise: f32, seed: u64) -> (Vec<Vec<f32>>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            let item = (0..side * side * classes)
                .map(|i| {
                    let base = if i % classes == c { 2.0 } else { 0.0 };
                    base + if noise > 0.0 { rng.gen_range(0.0..noise) } else { 0.0 }
                })
                .collect();
            items.push(item);
            labels.push(c as u32);
        }
    }
    (items, labels)
}
