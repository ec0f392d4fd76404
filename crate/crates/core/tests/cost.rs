use std::path::Path;

use proptest::prelude::*;
use qdfc::cost::{estimate, fits_onchip, CostError, Profile, Style};
use qdfc::graph::Graph;
use qdfc::reference::resnet9_like;
use qdfc::transforms::{quantize_graph, run_pipeline, QuantConfig, DEFAULT_PIPELINE};

fn profile() -> Profile {
    Profile::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/pynq_z1.json")).unwrap()
}

fn backbone(quant: &str) -> Graph {
    let cfg: QuantConfig = quant.parse().unwrap();
    run_pipeline(&quantize_graph(&resnet9_like(7), &cfg).unwrap(), DEFAULT_PIPELINE).unwrap().0
}

#[test]
fn totals_follow_layers() {
    let g = backbone("conv=s:1.5,act=u:2.2");
    for style in [Style::Streaming, Style::Systolic] {
        let arch = profile().arch(style);
        let r = estimate(&g, &arch).unwrap();
        assert_eq!(r.layers.len(), 8);
        assert_eq!(r.totals.weight_bits, r.layers.iter().map(|l| l.weight_bits).sum::<u64>());
        assert_eq!(r.totals.max_layer_cycles, r.layers.iter().map(|l| l.cycles).max().unwrap());
        for l in &r.layers {
            assert_eq!(l.weight_bits % 6, 0);
        }
        if style == Style::Streaming {
            assert_eq!(r.totals.throughput_fps, arch.clock_hz / r.totals.max_layer_cycles as f64);
        } else {
            assert!((r.totals.throughput_fps * r.totals.latency_s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_and_lowered_graphs_cost_the_same() {
    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2".parse().unwrap();
    let raw = quantize_graph(&resnet9_like(7), &cfg).unwrap();
    let arch = profile().arch(Style::Systolic);
    let (a, b) = (estimate(&raw, &arch).unwrap(), estimate(&backbone("conv=s:1.5,act=u:2.2"), &arch).unwrap());
    assert_eq!(a.totals, b.totals);
}

#[test]
fn bandwidth_only_moves_systolic_latency() {
    let g = backbone("conv=s:1.5,act=u:2.2");
    let mut p = profile();
    let base = (estimate(&g, &p.arch(Style::Streaming)).unwrap(), estimate(&g, &p.arch(Style::Systolic)).unwrap());
    p.dram_bandwidth_bytes_per_s *= 2.0;
    let fast = (estimate(&g, &p.arch(Style::Streaming)).unwrap(), estimate(&g, &p.arch(Style::Systolic)).unwrap());
    assert_eq!(base.0, fast.0);
    assert!(fast.1.totals.latency_s < base.1.totals.latency_s);
}

#[test]
fn onchip_capacity_motivates_narrow_weights() {
    let (g6, g16) = (backbone("conv=s:1.5,act=u:2.2"), backbone("conv=s:1.15,act=u:2.2"));
    let mut arch = profile().arch(Style::Streaming);
    arch.onchip_weight_bits_capacity = 400_000;
    let (r6, r16) = (estimate(&g6, &arch).unwrap(), estimate(&g16, &arch).unwrap());
    assert!(fits_onchip(&r6, &arch).0);
    assert!(!fits_onchip(&r16, &arch).0);
    arch.onchip_weight_bits_capacity = r6.totals.weight_bits;
    assert_eq!(fits_onchip(&r6, &arch), (true, 0));
}

#[test]
fn float_graph_rejected() {
    let err = estimate(&resnet9_like(7), &profile().arch(Style::Streaming)).unwrap_err();
    assert!(matches!(err, CostError::UnquantizedGraph(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn narrower_weights_never_cost_more(wide in 2u8..16, drop in 1u8..8) {
        let narrow = wide.saturating_sub(drop).max(1);
        let g = |bits: u8| backbone(&format!("conv=s:1.{},act=u:2.2", bits - 1));
        let arch = profile().arch(Style::Systolic);
        let (w, n) = (estimate(&g(wide), &arch).unwrap(), estimate(&g(narrow), &arch).unwrap());
        prop_assert!(n.totals.weight_bits <= w.totals.weight_bits);
        prop_assert!(n.totals.latency_s <= w.totals.latency_s);
    }
}
