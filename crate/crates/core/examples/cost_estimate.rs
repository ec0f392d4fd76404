//! Estimates streaming and systolic cost of the compiled backbone at two
//! weight precisions on the bundled PYNQ-Z1 profile.

use std::path::Path;

use qdfc::cost::{estimate, fits_onchip, Profile, Style};
use qdfc::reference::resnet9_like;
use qdfc::transforms::{quantize_graph, run_pipeline, QuantConfig, DEFAULT_PIPELINE};

fn main() -> anyhow::Result<()> {
    let profile = Profile::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/pynq_z1.json"))?;
    for quant in ["conv=s:1.5,act=u:2.2", "conv=s:1.15,act=u:8.8"] {
        let cfg: QuantConfig = quant.parse()?;
        let (g, _) = run_pipeline(&quantize_graph(&resnet9_like(7), &cfg)?, DEFAULT_PIPELINE)?;
        println!("{quant}");
        for style in [Style::Streaming, Style::Systolic] {
            let arch = profile.arch(style);
            let r = estimate(&g, &arch)?;
            let (fits, margin) = fits_onchip(&r, &arch);
            println!(
                "  {:<9?} latency {:>9.2} us  {:>8.0} fps  weights {:>7} bits  dsp {:>4}  lut {:>4}  on-chip {fits} ({margin:+})",
                style,
                r.totals.latency_s * 1e6,
                r.totals.throughput_fps,
                r.totals.weight_bits,
                r.totals.estimated_dsp_like_units,
                r.totals.estimated_lut_like_units,
            );
        }
    }
    Ok(())
}
