//! Static bound on how far a quantized graph's fixed-mode outputs can drift
//! from its own float-mode outputs on the same inputs.
//!
//! Each tensor carries a value range covering both modes and `err`, a bound
//! on `|fixed - float|`. MACs are exact in both modes while their
//! codes fit in an f64 mantissa; otherwise a rounding slack is added.

use std::collections::{BTreeMap, HashMap};

use super::{ExecError, Plan};
use crate::fixed::{pow2, QFormat};
use crate::graph::{Graph, Op, TensorSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBound {
    /// Bound per graph output, in output order.
    pub outputs: Vec<f64>,
    /// Bound for every tensor in the graph.
    pub tensors: BTreeMap<String, f64>,
}

impl ErrorBound {
    pub fn max_output(&self) -> f64 {
        self.outputs.iter().copied().fold(0.0, f64::max)
    }
}

/// Bounds covering a tensor's values in both modes, plus the mode gap.
#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
    err: f64,
}

impl Interval {
    fn exact(lo: f64, hi: f64) -> Self {
        Self { lo, hi, err: 0.0 }
    }

    fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

const MANTISSA: f64 = 9_007_199_254_740_992.0; // 2^53

fn frac(spec: &TensorSpec) -> i32 {
    spec.dtype.frac_bits().unwrap_or(0) as i32
}

/// Requantizes a value range into `fmt`: the added error and the range after
/// saturation (hull of raw and saturated values).
fn requant(fmt: QFormat, x: Interval) -> Interval {
    let excess = (x.hi - fmt.max_value()).max(fmt.min_value() - x.lo).max(0.0);
    let clamp = |v: f64| v.clamp(fmt.min_value(), fmt.max_value());
    Interval {
        lo: x.lo.min(clamp(x.lo)),
        hi: x.hi.max(clamp(x.hi)),
        err: x.err + excess.max(fmt.step() / 2.0),
    }
}

/// Float slack for a sum whose codes (at `frac_bits`) may exceed 2^53.
fn slack(mag: f64, frac_bits: i32, terms: usize) -> f64 {
    if mag * pow2(frac_bits) < MANTISSA {
        0.0
    } else {
        mag * terms as f64 * f64::EPSILON
    }
}

/// Range of `sum_i w_i x_i` over `x_i in [lo, hi]`, for one weight vector.
fn dot_range(w: impl Iterator<Item = f64>, lo: f64, hi: f64) -> (f64, f64) {
    w.fold((0.0, 0.0), |(a, b), w| {
        let (p, q) = (w * lo, w * hi);
        (a + p.min(q), b + p.max(q))
    })
}

/// MAC output interval given weight vectors (one per output channel).
fn mac(x: Interval, columns: impl Iterator<Item = Vec<f64>>, frac_bits: i32) -> Interval {
    let (mut lo, mut hi, mut l1_max, mut terms) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for col in columns {
        let (a, b) = dot_range(col.iter().copied(), x.lo, x.hi);
        lo = lo.min(a);
        hi = hi.max(b);
        l1_max = l1_max.max(col.iter().map(|w| w.abs()).sum());
        terms = terms.max(col.len());
    }
    let mag = lo.abs().max(hi.abs());
    Interval {
        lo,
        hi,
        err: l1_max * x.err + slack(mag, frac_bits, terms),
    }
}

/// Most thresholds any half-open window of width `e` can contain.
fn crossings(t: &[f64], per_row: usize, e: f64) -> usize {
    if e <= 0.0 {
        return 0;
    }
    t.chunks(per_row)
        .map(|row| (0..row.len()).map(|i| row[i..].iter().take_while(|&&tj| tj - row[i] < e).count()).max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

fn threshold_stage(input: Interval, t: &[f64], per_row: usize, scale: f64, bias: f64, fmt: Option<QFormat>) -> Interval {
    let (mut lo, mut hi, mut qerr) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for c in 0..=per_row {
        let level = bias + scale * c as f64;
        let q = fmt.map_or(level, |f| f.to_real(f.quantize_code(level)));
        lo = lo.min(level).min(q);
        hi = hi.max(level).max(q);
        qerr = qerr.max((q - level).abs());
    }
    Interval {
        lo,
        hi,
        err: qerr + scale.abs() * crossings(t, per_row, input.err) as f64,
    }
}

fn mul_range(a: Interval, b: Interval) -> (f64, f64) {
    let p = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
    (p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Bounds `|run_fixed - run_float|` for every tensor of a quantized plan.
pub fn error_bound(plan: &Plan) -> Result<ErrorBound, ExecError> {
    if let Some(what) = plan.unquantized() {
        return Err(ExecError::UnquantizedNode(what));
    }
    let g: &Graph = plan.graph();
    let mut env: HashMap<String, Interval> = HashMap::new();
    for spec in &g.inputs {
        let fmt = spec.dtype.format().expect("quantized input");
        env.insert(spec.name.clone(), Interval::exact(fmt.min_value(), fmt.max_value()));
    }
    for (name, init) in &g.initializers {
        let v = init.reals();
        let lo = v.iter().copied().fold(0.0f64, f64::min);
        let hi = v.iter().copied().fold(0.0f64, f64::max);
        env.insert(name.clone(), Interval::exact(lo, hi));
    }

    for &idx in &plan.order {
        let node = &g.nodes[idx];
        let out_spec = &g.value_info[node.output()];
        let x = env[&node.inputs[0]];
        let spec_of = |i: usize| g.spec(&node.inputs[i]).expect("inferred");
        let out = match &node.op {
            Op::Conv { .. } | Op::MatMul { .. } | Op::Mvau { .. } => {
                let w = &g.initializers[&node.inputs[1]];
                let wv = w.reals();
                let frac_bits = frac(spec_of(0)) + frac(&w.spec);
                let acc = if matches!(node.op, Op::Conv { .. }) {
                    let per = wv.len() / w.spec.shape[0];
                    mac(x, wv.chunks(per).map(<[f64]>::to_vec), frac_bits)
                } else {
                    let (k, n) = (w.spec.shape[0], w.spec.shape[1]);
                    mac(x, (0..n).map(|j| (0..k).map(|i| wv[i * n + j]).collect()), frac_bits)
                };
                match &node.op {
                    Op::Mvau { scale, bias, out_fmt, .. } => {
                        let t = &g.initializers[&node.inputs[2]];
                        threshold_stage(acc, &t.reals(), t.spec.shape[1], *scale, *bias, *out_fmt)
                    }
                    _ => acc,
                }
            }
            Op::MultiThreshold { scale, bias, out_fmt, .. } => {
                let t = &g.initializers[&node.inputs[1]];
                threshold_stage(x, &t.reals(), t.spec.shape[1], *scale, *bias, *out_fmt)
            }
            Op::ReduceMean { out_fmt, axes } => {
                let fmt = out_fmt.expect("quantized ReduceMean");
                let count: usize = axes.iter().map(|&a| spec_of(0).shape[a]).product();
                let rounding = x.mag() * count as f64 * f64::EPSILON;
                requant(fmt, Interval { err: x.err + rounding, ..x })
            }
            Op::GlobalAccPool { .. } => {
                let s = spec_of(0);
                let hw = s.layout.spatial_axes().iter().map(|&a| s.shape[a]).product::<usize>() as f64;
                let (lo, hi) = (x.lo * hw, x.hi * hw);
                Interval {
                    lo,
                    hi,
                    err: x.err * hw + slack(lo.abs().max(hi.abs()), frac(s), hw as usize),
                }
            }
            Op::Mul { out_fmt } | Op::Add { out_fmt } => {
                let b = env[&node.inputs[1]];
                let exact = if matches!(node.op, Op::Mul { .. }) {
                    let (lo, hi) = mul_range(x, b);
                    let err = x.mag() * b.err + b.mag() * x.err + x.err * b.err;
                    Interval {
                        lo,
                        hi,
                        err: err + slack(lo.abs().max(hi.abs()), frac(spec_of(0)) + frac(spec_of(1)), 1),
                    }
                } else {
                    let (lo, hi) = (x.lo + b.lo, x.hi + b.hi);
                    Interval {
                        lo,
                        hi,
                        err: x.err + b.err + slack(lo.abs().max(hi.abs()), frac(spec_of(0)).max(frac(spec_of(1))), 1),
                    }
                };
                match out_fmt {
                    Some(fmt) => requant(*fmt, exact),
                    None => exact,
                }
            }
            Op::Relu {} => Interval {
                lo: x.lo.max(0.0),
                hi: x.hi.max(0.0),
                err: x.err,
            },
            Op::Transpose { .. } | Op::MaxPool { .. } | Op::Flatten {} => x,
        };
        debug_assert!(out.err.is_finite(), "bound for {} diverged", out_spec.name);
        env.insert(out_spec.name.clone(), out);
    }

    let outputs = g.outputs.iter().map(|s| env[&s.name].err).collect();
    let tensors = env.into_iter().map(|(k, v)| (k, v.err)).collect();
    Ok(ErrorBound { outputs, tensors })
}
