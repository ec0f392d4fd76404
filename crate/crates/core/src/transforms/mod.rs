//! Semantics-preserving graph rewrites and the pass pipeline.
//!
//! Every pass is a function from a valid graph to a valid graph that computes
//! the same outputs. A pass applies single rewrites until none matches, so
//! applying it to its own output reports zero changes.

mod affine;
mod edit;
mod layout_passes;
mod lowering;
mod quantize;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{infer_shapes, Graph, GraphError, Layout};

pub use quantize::{quantize_graph, relu_thresholds, QuantConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("UnknownPass: no pass named `{0}`")]
    UnknownPass(String),
    #[error("UnsupportedLayoutPair at node {node}: cannot transpose {from} into {to}")]
    UnsupportedLayoutPair { node: String, from: Layout, to: Layout },
    #[error("NonPositiveScale at node {node}: scale {scale} would reverse threshold order")]
    NonPositiveScale { node: String, scale: f64 },
    #[error("UnsupportedReduction at node {0}: axes are not exactly the spatial axes")]
    UnsupportedReduction(String),
    #[error("ConfigError: {0}")]
    ConfigError(String),
}

type Rewrite = fn(&Graph) -> Result<Option<Graph>, TransformError>;

/// A named graph rewrite.
pub trait TransformPass: Send + Sync {
    fn name(&self) -> &'static str;

    /// Performs one rewrite on a shape-inferred graph, or `None` when no
    /// pattern matches.
    fn rewrite_once(&self, g: &Graph) -> Result<Option<Graph>, TransformError>;

    /// Rewrites to a fixed point; returns the result and the change count.
    fn apply(&self, g: &Graph) -> Result<(Graph, usize), TransformError> {
        let mut g = infer_shapes(g)?;
        let mut changes = 0;
        while let Some(next) = self.rewrite_once(&g)? {
            g = infer_shapes(&edit::remove_dead(next))?;
            changes += 1;
        }
        Ok((g, changes))
    }
}

struct FnPass {
    name: &'static str,
    rewrite: Rewrite,
}

impl TransformPass for FnPass {
    fn name(&self) -> &'static str {
        self.name
    }

    fn rewrite_once(&self, g: &Graph) -> Result<Option<Graph>, TransformError> {
        (self.rewrite)(g)
    }
}

fn no_rewrite(_: &Graph) -> Result<Option<Graph>, TransformError> {
    Ok(None)
}

static PASSES: &[FnPass] = &[
    FnPass {
        name: "infer_shapes",
        rewrite: no_rewrite,
    },
    FnPass {
        name: "lower_conv",
        rewrite: lowering::lower_conv,
    },
    FnPass {
        name: "insert_layout_transposes",
        rewrite: layout_passes::insert_layout_transposes,
    },
    FnPass {
        name: "absorb_affine",
        rewrite: affine::absorb_affine,
    },
    FnPass {
        name: "absorb_transpose",
        rewrite: layout_passes::absorb_transpose,
    },
    FnPass {
        name: "sink_transposes",
        rewrite: layout_passes::sink_transposes,
    },
    FnPass {
        name: "cancel_inverse_transposes",
        rewrite: layout_passes::cancel_inverse_transposes,
    },
    FnPass {
        name: "convert_reduce_mean_to_gap",
        rewrite: lowering::convert_reduce_mean_to_gap,
    },
    FnPass {
        name: "fuse_mvau",
        rewrite: lowering::fuse_mvau,
    },
];

/// The default streamlining pipeline, in order.
pub const DEFAULT_PIPELINE: &[&str] = &[
    "infer_shapes",
    "lower_conv",
    "insert_layout_transposes",
    "absorb_affine",
    "absorb_transpose",
    "sink_transposes",
    "cancel_inverse_transposes",
    "convert_reduce_mean_to_gap",
    "fuse_mvau",
];

/// Names of every registered pass.
pub fn pass_names() -> impl Iterator<Item = &'static str> {
    PASSES.iter().map(|p| p.name)
}

pub fn pass_by_name(name: &str) -> Option<&'static dyn TransformPass> {
    PASSES.iter().find(|p| p.name == name).map(|p| p as &dyn TransformPass)
}

fn run_named(name: &str, g: &Graph) -> Result<(Graph, usize), TransformError> {
    pass_by_name(name).expect("registered pass").apply(g)
}

pub fn lower_conv_to_matmul(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("lower_conv", g)
}

pub fn insert_layout_transposes(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("insert_layout_transposes", g)
}

pub fn absorb_affine_into_thresholds(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("absorb_affine", g)
}

pub fn absorb_transpose_into_multithreshold(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("absorb_transpose", g)
}

pub fn sink_transposes(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("sink_transposes", g)
}

pub fn cancel_inverse_transposes(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("cancel_inverse_transposes", g)
}

pub fn convert_reduce_mean_to_gap(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("convert_reduce_mean_to_gap", g)
}

pub fn fuse_mvau(g: &Graph) -> Result<(Graph, usize), TransformError> {
    run_named("fuse_mvau", g)
}

/// One pipeline stage as recorded in the pass log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PassRecord {
    pub pass: String,
    pub changes: usize,
    pub nodes: usize,
}

pub type PassLog = Vec<PassRecord>;

/// Applies `passes` in order, each to its fixed point.
///
/// Every name is checked before any pass runs.
pub fn run_pipeline<S: AsRef<str>>(g: &Graph, passes: &[S]) -> Result<(Graph, PassLog), TransformError> {
    let resolved = passes
        .iter()
        .map(|name| pass_by_name(name.as_ref()).ok_or_else(|| TransformError::UnknownPass(name.as_ref().to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut g = g.clone();
    let mut log = Vec::with_capacity(resolved.len());
    for pass in resolved {
        let (next, changes) = pass.apply(&g)?;
        debug_assert!(crate::graph::validate(&next).is_empty(), "{} broke the graph", pass.name());
        log.push(PassRecord {
            pass: pass.name().to_string(),
            changes,
            nodes: next.nodes.len(),
        });
        g = next;
    }
    Ok((g, log))
}
