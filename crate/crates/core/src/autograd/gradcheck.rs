//! Central finite-difference checks of tape gradients, in `f64`.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::Result;

/// Smallest gradient scale used as a denominator. Inputs whose true gradient
/// vanishes are judged against this instead of their rounding noise.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(max |analytic|, max |numeric|, GRAD_FLOOR)`,
    /// taken per input and maximized over inputs.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Builds `f` on fresh graphs: once recorded for the analytic gradient, then
/// `2 * n` times unrecorded for the central differences. `f` must return a
/// scalar node.
pub fn check_gradients<G>(inputs: &[Tensor<f64>], h: f64, f: G) -> Result<GradCheckReport>
where
    G: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&mut g, &ids)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| {
            g.grad(id)
                .map(|gt| gt.data().to_vec())
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::without_grad();
        let ids: Vec<NodeId> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        Ok(g.value(out).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = input.data()[j];
            work[k].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let scale = analytic[k]
            .iter()
            .chain(&numeric)
            .fold(GRAD_FLOOR, |m, v| m.max(v.abs()));
        let abs = analytic[k]
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(abs / scale);
        report.checked += input.len();
    }
    Ok(report)
}
