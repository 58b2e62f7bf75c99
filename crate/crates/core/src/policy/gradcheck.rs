//! Finite-difference checks for the linear policy objective.

use alloc::vec::Vec;

use super::linear::{loss_and_gradient, objective, Dataset, LinearChunkPolicy};

/// Symmetric difference quotient `(f(x+ε) − f(x−ε)) / 2ε`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Relative disagreement of two derivative estimates.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(parameter index, analytic, numeric)`; biases follow the weights.
    pub worst: Option<(usize, f64, f64)>,
}

/// Compares the analytic gradient of the ridge objective against central
/// differences for every `stride`-th parameter.
pub fn policy_gradient_check(
    policy: &LinearChunkPolicy,
    data: &Dataset,
    ridge: f64,
    eps: f64,
    stride: usize,
) -> GradCheckReport {
    let (_, gw, gb) = loss_and_gradient(policy, data, ridge);
    let analytic: Vec<f64> = gw.into_iter().chain(gb).collect();
    let n_weights = policy.weights().len();
    let mut probe = policy.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for idx in (0..analytic.len()).step_by(stride.max(1)) {
        let x0 = *param(&mut probe, idx, n_weights);
        *param(&mut probe, idx, n_weights) = x0 + eps;
        let up = objective(&probe, data, ridge);
        *param(&mut probe, idx, n_weights) = x0 - eps;
        let down = objective(&probe, data, ridge);
        *param(&mut probe, idx, n_weights) = x0;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[idx], numeric);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some((idx, analytic[idx], numeric));
        }
    }
    report
}

fn param(p: &mut LinearChunkPolicy, idx: usize, n_weights: usize) -> &mut f64 {
    if idx < n_weights {
        &mut p.weights_mut()[idx]
    } else {
        &mut p.bias_mut()[idx - n_weights]
    }
}
