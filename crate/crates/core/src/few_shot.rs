//! Few-shot evaluation: episode sampling, feature extraction through a
//! backbone, and nearest-class-mean classification.
//!
//! Sampling uses ChaCha8 seeded with `seed`, one stream per episode index.
//! Uniform draws take raw 64-bit words with rejection so the sequence does
//! not depend on any library's range-sampling algorithm.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data_io::Dataset;
use crate::exec::{ExecError, Mode, Plan, TensorValue};
use crate::graph::TensorSpec;

/// Common convention when the query count is not given.
pub const DEFAULT_QUERIES_PER_CLASS: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FewShotError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("EmptyClass: class {0} has no support items")]
    EmptyClass(usize),
    #[error("DimMismatch: expected dimension {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Item indices into the pool, each with its episode class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub queries_per_class: usize,
    /// Pool label of each episode class.
    pub classes: Vec<u32>,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub way: usize,
    pub shot: usize,
    pub queries_per_class: usize,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub way: usize,
    pub shot: usize,
    pub episodes: usize,
    pub seed: u64,
    pub queries_per_class: usize,
    pub mode: &'static str,
    pub mean_accuracy: f64,
    pub ci95: f64,
}

/// Uniform integer in `0..n` by rejection over 64-bit words.
fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Moves a uniform random `k`-subset to the front of `items`, in draw order.
fn partial_shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T], k: usize) {
    for i in 0..k {
        let j = i + below(rng, items.len() - i);
        items.swap(i, j);
    }
}

fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_config(way: usize, shot: usize, queries: usize) -> Result<(), FewShotError> {
    if way == 0 || shot == 0 || queries == 0 {
        return Err(FewShotError::InvalidConfig(format!(
            "way, shot and queries must be positive (got {way}, {shot}, {queries})"
        )));
    }
    Ok(())
}

fn sample_with(rng: &mut ChaCha8Rng, labels: &[u32], way: usize, shot: usize, queries: usize) -> Result<Episode, FewShotError> {
    check_config(way, shot, queries)?;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let need = shot + queries;
    let mut eligible: Vec<u32> = by_class.iter().filter(|(_, v)| v.len() >= need).map(|(&c, _)| c).collect();
    if eligible.len() < way {
        return Err(FewShotError::InsufficientData(format!(
            "{} classes have {need} items, {way} needed",
            eligible.len()
        )));
    }
    partial_shuffle(rng, &mut eligible, way);
    let classes = eligible[..way].to_vec();
    let mut support = Vec::with_capacity(way * shot);
    let mut query = Vec::with_capacity(way * queries);
    for (ci, class) in classes.iter().enumerate() {
        let mut pool = by_class[class].clone();
        partial_shuffle(rng, &mut pool, need);
        support.extend(pool[..shot].iter().map(|&i| (i, ci)));
        query.extend(pool[shot..need].iter().map(|&i| (i, ci)));
    }
    Ok(Episode {
        way,
        shot,
        queries_per_class: queries,
        classes,
        support,
        query,
    })
}

/// Samples classes and items without replacement; support and query are
/// disjoint.
pub fn sample_episode(labels: &[u32], way: usize, shot: usize, queries_per_class: usize, seed: u64) -> Result<Episode, FewShotError> {
    sample_with(&mut episode_rng(seed, 0), labels, way, shot, queries_per_class)
}

/// Scales `v` to unit L2 norm; zero vectors stay zero.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Runs each item through the backbone and L2-normalizes the output.
///
/// Items are reshaped to the graph's single input; in fixed mode they are
/// quantized to its format first.
pub fn extract_features(plan: &Plan, mode: Mode, items: &[&[f32]]) -> Result<Vec<Vec<f64>>, FewShotError> {
    let g = plan.graph();
    let [input] = g.inputs.as_slice() else {
        return Err(FewShotError::ShapeMismatch("backbone must have exactly one input".into()));
    };
    let [output] = g.outputs.as_slice() else {
        return Err(FewShotError::ShapeMismatch("backbone must have exactly one output".into()));
    };
    if output.rank() != 2 || output.shape[0] != 1 {
        return Err(FewShotError::ShapeMismatch(format!("output {:?} is not (1, C)", output.shape)));
    }
    if let Some(bad) = items.iter().find(|it| it.len() != input.numel()) {
        return Err(FewShotError::ShapeMismatch(format!(
            "item has {} values, input {:?} needs {}",
            bad.len(),
            input.shape,
            input.numel()
        )));
    }
    let float_spec = TensorSpec {
        dtype: crate::graph::DType::Float32,
        ..input.clone()
    };
    items
        .par_iter()
        .map(|item| {
            let mut x = TensorValue::real(float_spec.clone(), item.iter().map(|&v| v as f64).collect());
            if mode == Mode::Fixed {
                if let Some(fmt) = input.dtype.format() {
                    x = x.quantize_to(fmt);
                }
            }
            let out = plan.run(&[x], mode)?;
            let mut f = out[0].to_reals();
            l2_normalize(&mut f);
            Ok(f)
        })
        .collect()
}

/// Class means of the support features.
pub fn build_prototypes(features: &[Vec<f64>], labels: &[usize], way: usize) -> Result<Vec<Vec<f64>>, FewShotError> {
    let dim = features.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; way];
    let mut counts = vec![0usize; way];
    for (f, &l) in features.iter().zip(labels) {
        if f.len() != dim {
            return Err(FewShotError::DimMismatch { expected: dim, got: f.len() });
        }
        counts[l] += 1;
        sums[l].iter_mut().zip(f).for_each(|(s, v)| *s += v);
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(FewShotError::EmptyClass(c));
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

/// Nearest prototype by squared Euclidean distance; ties go to the lowest
/// class index. Returns the class and its distance.
pub fn classify_ncm(query: &[f64], prototypes: &[Vec<f64>]) -> Result<(usize, f64), FewShotError> {
    let mut best: Option<(usize, f64)> = None;
    for (c, p) in prototypes.iter().enumerate() {
        if p.len() != query.len() {
            return Err(FewShotError::DimMismatch {
                expected: p.len(),
                got: query.len(),
            });
        }
        let d: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    best.ok_or_else(|| FewShotError::InvalidConfig("no prototypes".into()))
}

/// Classifies an episode's queries given features for every pool item it uses.
pub fn run_episode(ep: &Episode, feature: impl Fn(usize) -> Vec<f64>) -> Result<EpisodeResult, FewShotError> {
    let feats: Vec<Vec<f64>> = ep.support.iter().map(|&(i, _)| feature(i)).collect();
    let labels: Vec<usize> = ep.support.iter().map(|&(_, c)| c).collect();
    let protos = build_prototypes(&feats, &labels, ep.way)?;
    let mut correct = 0;
    for &(i, c) in &ep.query {
        if classify_ncm(&feature(i), &protos)?.0 == c {
            correct += 1;
        }
    }
    let total = ep.query.len();
    Ok(EpisodeResult {
        correct,
        total,
        accuracy: correct as f64 / total as f64,
    })
}

/// Mean accuracy and `1.96·σ/√n` over episode accuracies (population σ).
pub fn summarize(accuracies: &[f64]) -> (f64, f64) {
    if accuracies.is_empty() {
        return (0.0, 0.0);
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Samples `cfg.episodes` episodes, extracts features for the items they use,
/// and aggregates NCM accuracy in episode order.
pub fn evaluate(plan: &Plan, mode: Mode, data: &Dataset, cfg: &EvalConfig) -> Result<EvalReport, FewShotError> {
    if cfg.episodes == 0 {
        return Err(FewShotError::InvalidConfig("episodes must be positive".into()));
    }
    let episodes = (0..cfg.episodes as u64)
        .map(|i| sample_with(&mut episode_rng(cfg.seed, i), &data.labels, cfg.way, cfg.shot, cfg.queries_per_class))
        .collect::<Result<Vec<_>, _>>()?;

    let mut used: Vec<usize> = episodes.iter().flat_map(|e| e.support.iter().chain(&e.query).map(|&(i, _)| i)).collect();
    used.sort_unstable();
    used.dedup();
    let items: Vec<&[f32]> = used.iter().map(|&i| data.items[i].as_slice()).collect();
    let feats = extract_features(plan, mode, &items)?;
    let lookup: BTreeMap<usize, &Vec<f64>> = used.iter().copied().zip(&feats).collect();

    let accuracies = episodes
        .par_iter()
        .map(|ep| run_episode(ep, |i| lookup[&i].clone()).map(|r| r.accuracy))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean_accuracy, ci95) = summarize(&accuracies);
    Ok(EvalReport {
        way: cfg.way,
        shot: cfg.shot,
        episodes: cfg.episodes,
        seed: cfg.seed,
        queries_per_class: cfg.queries_per_class,
        mode: match mode {
            Mode::Float => "float",
            Mode::Fixed => "fixed",
        },
        mean_accuracy,
        ci95,
    })
}
