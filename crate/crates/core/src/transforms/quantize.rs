//! Post-training quantization of a float graph to fixed-point formats.

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::fixed::QFormat;
use crate::graph::{infer_shapes, DType, Graph, Initializer, Op, Payload};

/// Formats applied by [`quantize_graph`].
///
/// JSON form: `{"conv": "s:1.5", "act": "u:2.2"}` with optional `input` and
/// `output` keys, both defaulting to `act`. Accumulators are always exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    pub conv: QFormat,
    pub act: QFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<QFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<QFormat>,
}

impl QuantConfig {
    pub fn new(conv: QFormat, act: QFormat) -> Self {
        Self {
            conv,
            act,
            input: None,
            output: None,
        }
    }

    pub fn input_fmt(&self) -> QFormat {
        self.input.unwrap_or(self.act)
    }

    pub fn output_fmt(&self) -> QFormat {
        self.output.unwrap_or(self.act)
    }

    pub fn from_json(text: &str) -> Result<Self, TransformError> {
        serde_json::from_str(text).map_err(|e| TransformError::ConfigError(e.to_string()))
    }

    /// Parses `conv=s:1.5,act=u:2.2[,input=..][,output=..]`.
    pub fn from_pairs(text: &str) -> Result<Self, TransformError> {
        let err = |m: String| TransformError::ConfigError(m);
        let (mut conv, mut act, mut input, mut output) = (None, None, None, None);
        for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').ok_or_else(|| err(format!("expected key=format, got `{pair}`")))?;
            let fmt: QFormat = value.trim().parse().map_err(|e| err(format!("{key}: {e}")))?;
            let slot = match key.trim() {
                "conv" => &mut conv,
                "act" => &mut act,
                "input" => &mut input,
                "output" => &mut output,
                other => return Err(err(format!("unknown key `{other}`"))),
            };
            *slot = Some(fmt);
        }
        Ok(Self {
            conv: conv.ok_or_else(|| err("missing `conv` format".into()))?,
            act: act.ok_or_else(|| err("missing `act` format".into()))?,
            input,
            output,
        })
    }
}

impl FromStr for QuantConfig {
    type Err = TransformError;

    /// Accepts either the JSON object or the `key=format` list.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim_start().starts_with('{') {
            Self::from_json(s)
        } else {
            Self::from_pairs(s)
        }
    }
}

/// Thresholds `(k - 0.5)·step` for `k = 1..=max_code`, so that counting the
/// thresholds met equals `quantize(max(x, 0))` with round-half-up.
pub fn relu_thresholds(fmt: QFormat) -> Vec<f32> {
    (1..=fmt.max_code()).map(|k| ((k as f64 - 0.5) * fmt.step()) as f32).collect()
}

fn threshold_tensors(g: &Graph) -> HashSet<String> {
    g.nodes
        .iter()
        .filter_map(|n| match n.op {
            Op::MultiThreshold { .. } => Some(n.inputs[1].clone()),
            Op::Mvau { .. } => Some(n.inputs[2].clone()),
            _ => None,
        })
        .collect()
}

/// Quantizes weights and constants to `cfg.conv`, replaces each Relu by a
/// MultiThreshold producing `cfg.act`, and codes the graph inputs.
pub fn quantize_graph(g: &Graph, cfg: &QuantConfig) -> Result<Graph, TransformError> {
    let mut out = infer_shapes(g)?;
    for spec in &mut out.inputs {
        if spec.dtype.is_float() {
            spec.dtype = DType::Fixed(cfg.input_fmt());
        }
    }

    let thresholds = threshold_tensors(&out);
    for (name, init) in out.initializers.iter_mut() {
        if thresholds.contains(name) {
            continue;
        }
        if let Payload::F32(values) = &init.data {
            let codes = values.iter().map(|&v| cfg.conv.quantize_code(v as f64) as i32).collect();
            init.data = Payload::Codes(codes);
            init.spec.dtype = DType::Fixed(cfg.conv);
        }
    }

    let act_t = relu_thresholds(cfg.act);
    for idx in 0..out.nodes.len() {
        let node = &out.nodes[idx];
        match &node.op {
            Op::Relu {} => {
                if act_t.is_empty() {
                    return Err(TransformError::ConfigError(format!("activation format {} has no positive value for Relu", cfg.act)));
                }
                let layout = out.spec(&node.inputs[0]).expect("inferred").layout;
                let t_name = out.fresh_tensor_name(&format!("{}_thresholds", node.name));
                out.add_initializer(Initializer::float(&t_name, vec![1, act_t.len()], act_t.clone()));
                let node = &mut out.nodes[idx];
                node.op = Op::MultiThreshold {
                    data_layout: layout,
                    scale: cfg.act.step(),
                    bias: 0.0,
                    out_fmt: Some(cfg.act),
                };
                node.inputs.push(t_name);
            }
            Op::ReduceMean { axes, out_fmt: None } => {
                let axes = axes.clone();
                out.nodes[idx].op = Op::ReduceMean {
                    axes,
                    out_fmt: Some(cfg.output_fmt()),
                };
            }
            Op::MultiThreshold { out_fmt: None, .. } | Op::Mvau { out_fmt: None, .. } => {
                if let Op::MultiThreshold { out_fmt, .. } | Op::Mvau { out_fmt, .. } = &mut out.nodes[idx].op {
                    *out_fmt = Some(cfg.act);
                }
            }
            _ => {}
        }
    }
    Ok(infer_shapes(&out)?)
}
