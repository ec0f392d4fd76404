//! First-order cost model for streaming and systolic execution.
//!
//! Only weight layers (Conv, MatMul, MVAU) are costed. Per layer:
//! `mac_count = output elements × fan-in` and
//! `weight_bits = weight elements × weight width`.
//!
//! Streaming gives every layer `parallelism` lanes and keeps weights on chip:
//! `cycles = ceil(mac_count / lanes)`. Layers overlap, so the initiation
//! interval is the slowest layer and the latency adds each layer's fill time,
//! the cycles it needs for one output row:
//! `latency = (max cycles + Σ ceil(cycles / output rows)) / clock`.
//!
//! Systolic runs layers one at a time on a `d × d` array with weights in DRAM:
//! `cycles = ceil(N/d) · ceil(K/d) · (P + 2d)` for `N` output channels, fan-in
//! `K` and `P` output pixels, and
//! `latency = Σ cycles / clock + Σ (weight_bits / 8) / dram_bandwidth`.
//! Throughput is one frame per latency.
//!
//! A multiplier counts as DSP-like when both operands are at least
//! `dsp_width_threshold` bits wide, LUT-like otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{infer_shapes, DType, Graph, GraphError, Op};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("UnquantizedGraph: {0} has float weights")]
    UnquantizedGraph(String),
    #[error("invalid architecture parameters: {0}")]
    InvalidArch(String),
    #[error("profile {path}: {message}")]
    Profile { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Streaming,
    Systolic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub style: Style,
    pub clock_hz: f64,
    /// Lanes per layer (streaming) or array side (systolic).
    pub parallelism: u64,
    /// Required for systolic, absent for streaming.
    pub dram_bandwidth_bytes_per_s: Option<f64>,
    pub onchip_weight_bits_capacity: u64,
    pub dsp_width_threshold: u32,
}

impl ArchParams {
    pub fn check(&self) -> Result<(), CostError> {
        let bad = |m: &str| Err(CostError::InvalidArch(m.into()));
        if !(self.clock_hz > 0.0) || self.parallelism == 0 || self.dsp_width_threshold == 0 {
            return bad("clock, parallelism and DSP width threshold must be positive");
        }
        match (self.style, self.dram_bandwidth_bytes_per_s) {
            (Style::Systolic, Some(b)) if b > 0.0 => Ok(()),
            (Style::Systolic, _) => bad("systolic execution needs a positive DRAM bandwidth"),
            (Style::Streaming, None) => Ok(()),
            (Style::Streaming, Some(_)) => bad("streaming execution keeps weights on chip; drop the DRAM bandwidth"),
        }
    }
}

/// Device constants from which either style's parameters are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub clock_hz: f64,
    pub onchip_weight_bits_capacity: u64,
    pub dram_bandwidth_bytes_per_s: f64,
    pub streaming_lanes: u64,
    pub systolic_array_side: u64,
    pub dsp_width_threshold: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self, CostError> {
        let err = |message: String| CostError::Profile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn arch(&self, style: Style) -> ArchParams {
        let (parallelism, dram) = match style {
            Style::Streaming => (self.streaming_lanes, None),
            Style::Systolic => (self.systolic_array_side, Some(self.dram_bandwidth_bytes_per_s)),
        };
        ArchParams {
            style,
            clock_hz: self.clock_hz,
            parallelism,
            dram_bandwidth_bytes_per_s: dram,
            onchip_weight_bits_capacity: self.onchip_weight_bits_capacity,
            dsp_width_threshold: self.dsp_width_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub node: String,
    pub kind: &'static str,
    pub mac_count: u64,
    pub weight_bits: u64,
    pub weight_width: u32,
    pub activation_width: u32,
    pub cycles: u64,
    pub dsp_like: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTotals {
    pub latency_s: f64,
    pub throughput_fps: f64,
    pub weight_bits: u64,
    pub max_layer_cycles: u64,
    pub estimated_dsp_like_units: u64,
    pub estimated_lut_like_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub style: Style,
    pub layers: Vec<LayerCost>,
    pub totals: CostTotals,
}

/// Geometry of one weight layer.
struct Shape {
    outputs: u64,
    channels: u64,
    fan_in: u64,
    rows: u64,
    weights: u64,
}

fn width(dtype: DType) -> Option<u32> {
    match dtype {
        DType::Float32 => None,
        DType::Fixed(fmt) => Some(fmt.total_bits()),
        // wide accumulators are costed as full 32-bit operands
        DType::Acc { .. } => Some(32),
    }
}

pub fn estimate(g: &Graph, arch: &ArchParams) -> Result<CostReport, CostError> {
    arch.check()?;
    let g = infer_shapes(g)?;
    let mut layers = Vec::new();
    let mut geometry = Vec::new();
    for node in &g.nodes {
        if !matches!(node.op, Op::Conv { .. } | Op::MatMul { .. } | Op::Mvau { .. }) {
            continue;
        }
        let x = g.spec(&node.inputs[0]).expect("inferred");
        let w = &g.initializers[&node.inputs[1]];
        let out = &g.value_info[node.output()];
        let ww = width(w.spec.dtype).ok_or_else(|| CostError::UnquantizedGraph(node.name.clone()))?;
        let aw = width(x.dtype).ok_or_else(|| CostError::UnquantizedGraph(node.name.clone()))?;
        let (channels, fan_in) = match node.op {
            Op::Conv { .. } => (w.spec.shape[0], w.spec.numel() / w.spec.shape[0]),
            _ => (w.spec.shape[1], w.spec.shape[0]),
        };
        let rows = match out.layout.spatial_axes() {
            [h, _] => out.shape[*h],
            _ => 1,
        };
        let s = Shape {
            outputs: out.numel() as u64,
            channels: channels as u64,
            fan_in: fan_in as u64,
            rows: rows as u64,
            weights: w.spec.numel() as u64,
        };
        let cycles = match arch.style {
            Style::Streaming => (s.outputs * s.fan_in).div_ceil(arch.parallelism),
            Style::Systolic => {
                let d = arch.parallelism;
                let pixels = s.outputs / s.channels;
                s.channels.div_ceil(d) * s.fan_in.div_ceil(d) * (pixels + 2 * d)
            }
        };
        layers.push(LayerCost {
            node: node.name.clone(),
            kind: node.op.kind(),
            mac_count: s.outputs * s.fan_in,
            weight_bits: s.weights * ww as u64,
            weight_width: ww,
            activation_width: aw,
            cycles,
            dsp_like: ww >= arch.dsp_width_threshold && aw >= arch.dsp_width_threshold,
        });
        geometry.push(s);
    }

    let weight_bits: u64 = layers.iter().map(|l| l.weight_bits).sum();
    let max_cycles = layers.iter().map(|l| l.cycles).max().unwrap_or(0);
    let (latency_s, throughput_fps, dsp, lut) = match arch.style {
        Style::Streaming => {
            let fill: u64 = layers.iter().zip(&geometry).map(|(l, s)| l.cycles.div_ceil(s.rows)).sum();
            let latency = (max_cycles + fill) as f64 / arch.clock_hz;
            let fps = if max_cycles == 0 { 0.0 } else { arch.clock_hz / max_cycles as f64 };
            let dsp = layers.iter().filter(|l| l.dsp_like).count() as u64 * arch.parallelism;
            let lut = layers.len() as u64 * arch.parallelism - dsp;
            (latency, fps, dsp, lut)
        }
        Style::Systolic => {
            let bandwidth = arch.dram_bandwidth_bytes_per_s.expect("checked");
            let compute: u64 = layers.iter().map(|l| l.cycles).sum();
            let fetch = weight_bits as f64 / 8.0 / bandwidth;
            let latency = compute as f64 / arch.clock_hz + fetch;
            let fps = if latency > 0.0 { 1.0 / latency } else { 0.0 };
            let units = if layers.is_empty() { 0 } else { arch.parallelism * arch.parallelism };
            let dsp = if layers.iter().any(|l| l.dsp_like) { units } else { 0 };
            (latency, fps, dsp, units - dsp)
        }
    };
    Ok(CostReport {
        style: arch.style,
        layers,
        totals: CostTotals {
            latency_s,
            throughput_fps,
            weight_bits,
            max_layer_cycles: max_cycles,
            estimated_dsp_like_units: dsp,
            estimated_lut_like_units: lut,
        },
    })
}

/// Whether all weights fit on chip, and the spare capacity in bits (negative
/// when they do not fit).
pub fn fits_onchip(report: &CostReport, arch: &ArchParams) -> (bool, i128) {
    let margin = arch.onchip_weight_bits_capacity as i128 - report.totals.weight_bits as i128;
    (margin >= 0, margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Initializer, Layout, Node, TensorSpec};

    fn arch(style: Style) -> ArchParams {
        ArchParams {
            style,
            clock_hz: 100.0,
            parallelism: 2,
            dram_bandwidth_bytes_per_s: (style == Style::Systolic).then_some(8.0),
            onchip_weight_bits_capacity: 64,
            dsp_width_threshold: 8,
        }
    }

    fn dense(fmt: &str) -> Graph {
        let fmt = fmt.parse().unwrap();
        let mut g = Graph::new("dense");
        g.inputs.push(TensorSpec::new("x", vec![1, 4], Layout::NC, DType::Fixed(fmt)));
        g.add_initializer(Initializer::fixed("w", vec![4, 3], fmt, vec![1; 12]));
        g.add_node(Node::new("mm", Op::MatMul { im2col: None }, &["x", "w"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![1, 3], Layout::NC));
        g
    }

    #[test]
    fn empty_graph_costs_nothing() {
        let r = estimate(&Graph::new("e"), &arch(Style::Streaming)).unwrap();
        assert_eq!(r.totals.weight_bits, 0);
        assert_eq!(r.totals.latency_s, 0.0);
        assert_eq!(fits_onchip(&r, &arch(Style::Streaming)), (true, 64));
    }

    #[test]
    fn dense_layer_formulas() {
        let r = estimate(&dense("s:1.5"), &arch(Style::Streaming)).unwrap();
        let l = &r.layers[0];
        assert_eq!((l.mac_count, l.weight_bits, l.cycles), (12, 72, 6));
        // one output row: fill = 6, latency = (6 + 6) / 100
        assert_eq!(r.totals.latency_s, 0.12);
        assert_eq!(fits_onchip(&r, &arch(Style::Streaming)), (false, -8));

        let s = estimate(&dense("s:1.5"), &arch(Style::Systolic)).unwrap();
        // ceil(3/2) * ceil(4/2) * (1 + 4) = 20 cycles, 9 bytes at 8 B/s
        assert_eq!(s.layers[0].cycles, 20);
        assert!((s.totals.latency_s - (0.2 + 9.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn float_weights_rejected() {
        let mut g = dense("s:1.5");
        g.add_initializer(Initializer::float("w", vec![4, 3], vec![0.5; 12]));
        assert!(matches!(estimate(&g, &arch(Style::Streaming)), Err(CostError::UnquantizedGraph(_))));
    }

    #[test]
    fn arch_invariants() {
        let mut a = arch(Style::Systolic);
        a.dram_bandwidth_bytes_per_s = None;
        assert!(a.check().is_err());
        let mut b = arch(Style::Streaming);
        b.dram_bandwidth_bytes_per_s = Some(1.0);
        assert!(b.check().is_err());
    }
}
