//! Folds constant Mul/Add nodes into the thresholds that follow them.
//!
//! `a·x + b >= T` holds exactly when `x >= (T - b) / a` for `a > 0`.

use super::edit::{fresh_tensor, producer, spec};
use super::TransformError;
use crate::graph::{Graph, Initializer, Op};

type Step = Result<Option<Graph>, TransformError>;

pub(super) fn absorb_affine(g: &Graph) -> Step {
    for (idx, node) in g.nodes.iter().enumerate() {
        if !matches!(node.op, Op::MultiThreshold { .. }) {
            continue;
        }
        let Some((_, affine)) = producer(g, &node.inputs[0]) else {
            continue;
        };
        let is_mul = match affine.op {
            Op::Mul { out_fmt: None } => true,
            Op::Add { out_fmt: None } => false,
            _ => continue,
        };
        let Some(constant) = g.initializers.get(&affine.inputs[1]) else {
            continue;
        };
        if g.use_count(affine.output()) != 1 {
            continue;
        }
        let x = spec(g, &affine.inputs[0]);
        let channels = x.shape[x.layout.channel_axis()];
        let c = constant.reals();
        let per_channel = c.len() > 1;
        if per_channel && !(constant.spec.rank() == 1 && c.len() == channels) {
            continue;
        }
        if is_mul {
            if let Some(&a) = c.iter().find(|&&a| a <= 0.0) {
                return Err(TransformError::NonPositiveScale {
                    node: affine.name.clone(),
                    scale: a,
                });
            }
        }

        let t_init = &g.initializers[&node.inputs[1]];
        let (rows, per_row) = (t_init.spec.shape[0], t_init.spec.shape[1]);
        let t = t_init.reals();
        let new_rows = if per_channel { channels } else { rows };
        let mut shifted = Vec::with_capacity(new_rows * per_row);
        for ch in 0..new_rows {
            let row = if rows == 1 { 0 } else { ch };
            let cv = c[if per_channel { ch } else { 0 }];
            for &tk in &t[row * per_row..(row + 1) * per_row] {
                let v = if is_mul { tk / cv } else { tk - cv };
                shifted.push(v as f32);
            }
        }
        if !shifted.chunks(per_row).all(|r| r.windows(2).all(|w| w[0] < w[1])) {
            continue;
        }

        let mut out = g.clone();
        let t_name = fresh_tensor(g, &format!("{}_{}", t_init.spec.name, affine.name));
        out.add_initializer(Initializer::float(&t_name, vec![new_rows, per_row], shifted));
        out.nodes[idx].inputs = vec![affine.inputs[0].clone(), t_name];
        return Ok(Some(out));
    }
    Ok(None)
}
