//! 5-way 5-shot nearest-class-mean evaluation on separable synthetic items,
//! with features extracted by a compiled fixed-point backbone and by the
//! float original.

use qdfc::data_io::Dataset;
use qdfc::exec::{Mode, Plan};
use qdfc::few_shot::{evaluate, sample_episode, EvalConfig};
use qdfc::reference::{separable_backbone, separable_items};
use qdfc::transforms::{quantize_graph, run_pipeline, QuantConfig, DEFAULT_PIPELINE};

fn main() -> anyhow::Result<()> {
    let (classes, side) = (8, 4);
    let (items, labels) = separable_items(classes, 30, side, 0.3, 11);
    let data = Dataset { items, labels };

    let float = separable_backbone(classes, side);
    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2".parse()?;
    let (compiled, _) = run_pipeline(&quantize_graph(&float, &cfg)?, DEFAULT_PIPELINE)?;

    let ep = sample_episode(&data.labels, 5, 5, 15, 0)?;
    println!("episode 0 classes {:?}, {} support, {} query", ep.classes, ep.support.len(), ep.query.len());

    let eval = EvalConfig { way: 5, shot: 5, queries_per_class: 15, episodes: 100, seed: 0 };
    let fixed = evaluate(&Plan::new(&compiled)?, Mode::Fixed, &data, &eval)?;
    let float = evaluate(&Plan::new(&float)?, Mode::Float, &data, &eval)?;
    println!("fixed {:.4} ± {:.4}", fixed.mean_accuracy, fixed.ci95);
    println!("float {:.4} ± {:.4}", float.mean_accuracy, float.ci95);
    println!("{}", serde_json::to_string_pretty(&fixed)?);
    Ok(())
}
