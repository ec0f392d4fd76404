//! Randomized equivalence checking between two graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{ExecError, Mode, Plan, TensorValue};
use crate::graph::TensorSpec;

/// Largest float-mode difference over all compared output elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FloatDeviation {
    pub max_abs: f64,
    /// `|a - b| / max(|a|, |b|)`, zero where both are zero.
    pub max_rel: f64,
}

/// Fixed-mode comparison: outputs must agree exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FixedMismatch {
    pub compared: usize,
    pub mismatched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub float: FloatDeviation,
    /// Present when both graphs are fully quantized.
    pub fixed: Option<FixedMismatch>,
}

impl EquivalenceReport {
    pub fn bit_exact(&self) -> bool {
        self.fixed.is_some_and(|f| f.mismatched == 0)
    }
}

fn same_geometry(a: &TensorSpec, b: &TensorSpec) -> bool {
    a.name == b.name && a.shape == b.shape && a.layout == b.layout
}

fn check_specs(a: &[TensorSpec], b: &[TensorSpec], what: &str) -> Result<(), ExecError> {
    if a.len() != b.len() || !a.iter().zip(b).all(|(x, y)| same_geometry(x, y)) {
        return Err(ExecError::SpecMismatch(format!("{what} differ")));
    }
    Ok(())
}

/// Random inputs for `specs`: uniform codes over each fixed format, uniform
/// reals in `[-1, 1)` for float inputs. Trial `t` of seed `s` is reproducible.
pub fn random_inputs(specs: &[TensorSpec], seed: u64, trial: u64) -> Vec<TensorValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    specs
        .iter()
        .map(|spec| match spec.dtype.format() {
            Some(fmt) => {
                let codes = (0..spec.numel()).map(|_| rng.gen_range(fmt.min_code()..=fmt.max_code())).collect();
                TensorValue::codes(spec.clone(), codes)
            }
            None => {
                let vals = (0..spec.numel()).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect();
                TensorValue::real(spec.clone(), vals)
            }
        })
        .collect()
}

fn deviation(a: &[TensorValue], b: &[TensorValue]) -> FloatDeviation {
    let mut d = FloatDeviation::default();
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.to_reals().into_iter().zip(y.to_reals()) {
            let abs = (p - q).abs();
            let scale = p.abs().max(q.abs());
            d.max_abs = d.max_abs.max(abs);
            if scale > 0.0 {
                d.max_rel = d.max_rel.max(abs / scale);
            }
        }
    }
    d
}

fn mismatches(a: &[TensorValue], b: &[TensorValue]) -> FixedMismatch {
    let mut m = FixedMismatch::default();
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.to_reals().into_iter().zip(y.to_reals()) {
            m.compared += 1;
            m.mismatched += usize::from(p != q);
        }
    }
    m
}

/// Runs both graphs on `trials` shared random inputs and reports how far
/// their outputs drift apart.
///
/// Inputs use the fixed format of `a` when it has one, otherwise that of `b`.
pub fn compare_runs(a: &Plan, b: &Plan, trials: usize, seed: u64) -> Result<EquivalenceReport, ExecError> {
    let (ga, gb) = (a.graph(), b.graph());
    check_specs(&ga.inputs, &gb.inputs, "inputs")?;
    check_specs(&ga.outputs, &gb.outputs, "outputs")?;
    let specs: Vec<TensorSpec> = ga
        .inputs
        .iter()
        .zip(&gb.inputs)
        .map(|(x, y)| if x.dtype.is_float() { y.clone() } else { x.clone() })
        .collect();
    let fixed = a.is_quantized() && b.is_quantized();
    if fixed && ga.inputs.iter().zip(&gb.inputs).any(|(x, y)| x.dtype != y.dtype) {
        return Err(ExecError::SpecMismatch("input formats differ".into()));
    }

    let per_trial: Vec<(FloatDeviation, Option<FixedMismatch>)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let inputs = random_inputs(&specs, seed, t);
            let fa = a.run(&inputs, Mode::Float)?;
            let fb = b.run(&inputs, Mode::Float)?;
            let fx = if fixed {
                Some(mismatches(&a.run(&inputs, Mode::Fixed)?, &b.run(&inputs, Mode::Fixed)?))
            } else {
                None
            };
            Ok((deviation(&fa, &fb), fx))
        })
        .collect::<Result<_, ExecError>>()?;

    let mut report = EquivalenceReport {
        trials,
        float: FloatDeviation::default(),
        fixed: fixed.then(FixedMismatch::default),
    };
    for (d, fx) in per_trial {
        report.float.max_abs = report.float.max_abs.max(d.max_abs);
        report.float.max_rel = report.float.max_rel.max(d.max_rel);
        if let (Some(total), Some(m)) = (report.fixed.as_mut(), fx) {
            total.compared += m.compared;
            total.mismatched += m.mismatched;
        }
    }
    Ok(report)
}
