//! Command-line front end: `compile`, `run`, `fsl-eval` and `estimate`.
//!
//! Every command reads files and writes files; reports are JSON. Exit code is
//! 0 on success and 1 on any error, including usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cost::{estimate, fits_onchip, Profile, Style};
use crate::data_io::{load_dataset, load_model, model_to_bytes, read_tensor, write_tensor};
use crate::exec::{compare_runs, Mode, Plan, TensorValue};
use crate::few_shot::{evaluate, EvalConfig, DEFAULT_QUERIES_PER_CLASS};
use crate::graph::{DType, Graph};
use crate::transforms::{quantize_graph, run_pipeline, QuantConfig, DEFAULT_PIPELINE};

/// Environment variable capping worker threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "QDFC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qdfc", version, about = "Quantized dataflow compiler and bit-exact emulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize and rewrite a model, writing model.json, model.bin and passes.json.
    Compile(CompileArgs),
    /// Execute a model on one input tensor.
    Run(RunArgs),
    /// Few-shot nearest-class-mean evaluation over seeded episodes.
    FslEval(FslEvalArgs),
    /// Analytic latency and memory estimate.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model manifest (JSON).
    #[arg(long)]
    pub graph: PathBuf,
    /// Weight blob; defaults to the manifest path with a `.bin` extension.
    #[arg(long)]
    pub blob: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Graph> {
        let blob = self.blob.clone().unwrap_or_else(|| self.graph.with_extension("bin"));
        load_model(&self.graph, &blob).with_context(|| format!("loading {}", self.graph.display()))
    }
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated pass names; empty for none. Defaults to the standard pipeline.
    #[arg(long)]
    pub passes: Option<String>,
    /// Quantization formats as `conv=s:1.5,act=u:2.2` or JSON. Omit to keep the model as is.
    #[arg(long)]
    pub quant: Option<String>,
    /// Build configuration file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random-input trials comparing the compiled model with the uncompiled one.
    #[arg(long)]
    pub check: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Float,
    Fixed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Float => Mode::Float,
            ModeArg::Fixed => Mode::Fixed,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Input tensor file (with its `.json` sidecar).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Output tensor file; the sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FslEvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub way: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub shot: u64,
    #[arg(long, default_value_t = DEFAULT_QUERIES_PER_CLASS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub queries: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Fixed)]
    pub mode: ModeArg,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Streaming,
    Systolic,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Device profile (JSON).
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    #[serde(default)]
    pub passes: Option<Vec<String>>,
    #[serde(default)]
    pub quant: Option<QuantConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().with_context(|| format!("{THREADS_ENV}={raw} is not a thread count"))?;
    if n > 0 {
        // a pool installed earlier in the process stays in effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Compile(a) => compile(&a),
        Command::Run(a) => run(&a),
        Command::FslEval(a) => fsl_eval(&a),
        Command::Estimate(a) => estimate_cmd(&a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn compile(a: &CompileArgs) -> Result<()> {
    let file_cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<BuildConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => BuildConfig::default(),
    };
    let passes: Vec<String> = match (&a.passes, file_cfg.passes) {
        (Some(list), _) => list.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect(),
        (None, Some(list)) => list,
        (None, None) => DEFAULT_PIPELINE.iter().map(|p| p.to_string()).collect(),
    };
    let quant = match &a.quant {
        Some(text) => Some(text.parse::<QuantConfig>()?),
        None => file_cfg.quant,
    };
    let seed = a.seed.or(file_cfg.seed).unwrap_or(0);

    let loaded = a.model.load()?;
    let source = match &quant {
        Some(cfg) => quantize_graph(&loaded, cfg)?,
        None => loaded,
    };
    let (compiled, log) = run_pipeline(&source, &passes)?;
    for rec in &log {
        println!("{}: {} changes, {} nodes", rec.pass, rec.changes, rec.nodes);
    }

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (manifest, blob) = model_to_bytes(&compiled);
    std::fs::write(a.out.join("model.json"), manifest).context("writing model.json")?;
    std::fs::write(a.out.join("model.bin"), blob).context("writing model.bin")?;
    write_json(&a.out.join("passes.json"), &log)?;

    if let Some(trials) = a.check {
        let report = compare_runs(&Plan::new(&source)?, &Plan::new(&compiled)?, trials, seed)?;
        println!(
            "check: {} trials, float max abs {:.3e}, fixed mismatches {}",
            report.trials,
            report.float.max_abs,
            report.fixed.map_or(0, |f| f.mismatched)
        );
        write_json(&a.out.join("check.json"), &report)?;
        if report.fixed.is_some_and(|f| f.mismatched > 0) {
            bail!("compiled model differs from its source in fixed mode");
        }
    }
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let plan = Plan::new(&a.model.load()?)?;
    let mode = Mode::from(a.mode);
    let [spec] = plan.graph().inputs.as_slice() else {
        bail!("run expects a model with exactly one input, found {}", plan.graph().inputs.len());
    };
    let mut value = read_tensor(&a.input)?;
    value.spec.name = spec.name.clone();
    let value: TensorValue = match (mode, value.spec.dtype, spec.dtype) {
        (Mode::Fixed, DType::Float32, DType::Fixed(fmt)) => value.quantize_to(fmt),
        _ => value,
    };
    let outputs = plan.run(&[value], mode)?;
    let [out] = outputs.as_slice() else {
        bail!("run expects a model with exactly one output, found {}", outputs.len());
    };
    write_tensor(&a.out, out)?;
    Ok(())
}

fn fsl_eval(a: &FslEvalArgs) -> Result<()> {
    let plan = Plan::new(&a.model.load()?)?;
    let data = load_dataset(&a.dataset)?;
    let cfg = EvalConfig {
        way: a.way as usize,
        shot: a.shot as usize,
        queries_per_class: a.queries as usize,
        episodes: a.episodes as usize,
        seed: a.seed,
    };
    let report = evaluate(&plan, a.mode.into(), &data, &cfg)?;
    println!("mean accuracy {:.4} ± {:.4} over {} episodes", report.mean_accuracy, report.ci95, report.episodes);
    write_json(&a.out, &report)
}

#[derive(Serialize)]
struct EstimateOutput {
    profile: String,
    #[serde(flatten)]
    report: crate::cost::CostReport,
    fits_onchip: bool,
    onchip_margin_bits: i128,
}

fn estimate_cmd(a: &EstimateArgs) -> Result<()> {
    let profile = Profile::load(&a.profile)?;
    let g = a.model.load()?;
    let arch = profile.arch(match a.arch {
        ArchArg::Streaming => Style::Streaming,
        ArchArg::Systolic => Style::Systolic,
    });
    let report = estimate(&g, &arch)?;
    let (fits, margin) = fits_onchip(&report, &arch);
    println!(
        "{:?}: latency {:.3} ms, {:.1} fps, {} weight bits",
        arch.style,
        report.totals.latency_s * 1e3,
        report.totals.throughput_fps,
        report.totals.weight_bits
    );
    write_json(
        &a.out,
        &EstimateOutput {
            profile: profile.name,
            report,
            fits_onchip: fits,
            onchip_margin_bits: margin,
        },
    )
}
