//! Linear chunk predictor trained by full-batch gradient descent on a ridge
//! objective.
//!
//! The objective over a dataset of `N` samples with `O = k·61` outputs is
//!
//! ```text
//! J(W, b) = (1 / N·O) Σₙ ‖W xₙ + b − yₙ‖² + λ ‖W‖²
//! ```
//!
//! The trainer standardizes features first (the penalty applies to the
//! weights in standardized space), descends on the Gram-matrix form of the
//! same gradient, and folds the standardization back into `W` and `b`.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::action::{ActionChunk, ActionFrame, ACTION_DIM};

/// A supervised chunk dataset stored as dense row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_dim: usize,
    output_dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("dataset is empty")]
    Empty,
    #[error("sample {index}: expected {expected} values, got {got}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("sample {0} has a non-finite feature or target")]
    NonFinite(usize),
    #[error("output dimension {0} is not a whole number of action frames")]
    BadOutputDim(usize),
    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("training increased the loss from {initial} to {last}")]
    LossIncreased { initial: f64, last: f64 },
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("ridge penalty must be non-negative and finite, got {0}")]
    BadRidge(f64),
}

impl Dataset {
    pub fn new(feature_dim: usize, output_dim: usize) -> Self {
        Self {
            feature_dim,
            output_dim,
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    /// Builds a dataset from `(features, flattened target chunk)` pairs.
    pub fn from_samples<'s>(samples: impl IntoIterator<Item = (&'s [f64], &'s [f64])>) -> Result<Self, TrainError> {
        let mut it = samples.into_iter().peekable();
        let (f, o) = match it.peek() {
            Some((x, y)) => (x.len(), y.len()),
            None => return Err(TrainError::Empty),
        };
        let mut d = Self::new(f, o);
        for (x, y) in it {
            d.push(x, y)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, features: &[f64], target: &[f64]) -> Result<(), TrainError> {
        let index = self.len();
        if features.len() != self.feature_dim {
            return Err(TrainError::DimensionMismatch {
                index,
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        if target.len() != self.output_dim {
            return Err(TrainError::DimensionMismatch {
                index,
                expected: self.output_dim,
                got: target.len(),
            });
        }
        if !features.iter().chain(target).all(|v| v.is_finite()) {
            return Err(TrainError::NonFinite(index));
        }
        self.features.extend_from_slice(features);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len().checked_div(self.output_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn features(&self, n: usize) -> &[f64] {
        &self.features[n * self.feature_dim..(n + 1) * self.feature_dim]
    }

    pub fn target(&self, n: usize) -> &[f64] {
        &self.targets[n * self.output_dim..(n + 1) * self.output_dim]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub ridge: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Objective before training followed by the objective after each epoch.
    pub loss_history: Vec<f64>,
}

/// `predict(x) = clamp(W x + b)` reshaped to `k × 61`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChunkPolicy {
    k: usize,
    feature_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    meta: TrainingMeta,
}

impl LinearChunkPolicy {
    pub fn zeros(k: usize, feature_dim: usize) -> Self {
        let outputs = k * ACTION_DIM;
        Self {
            k,
            feature_dim,
            weights: vec![0.0; outputs * feature_dim],
            bias: vec![0.0; outputs],
            meta: TrainingMeta::default(),
        }
    }

    pub fn from_parts(
        k: usize,
        feature_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, super::PolicyError> {
        let outputs = k * ACTION_DIM;
        if k == 0 {
            return Err(super::PolicyError::Malformed("chunk length is zero"));
        }
        if weights.len() != outputs * feature_dim || bias.len() != outputs {
            return Err(super::PolicyError::Malformed("parameter shapes do not match k and F"));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(super::PolicyError::Malformed("non-finite parameter"));
        }
        Ok(Self {
            k,
            feature_dim,
            weights,
            bias,
            meta: TrainingMeta::default(),
        })
    }

    pub fn chunk_length(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn output_dim(&self) -> usize {
        self.k * ACTION_DIM
    }

    /// Row-major `(k·61) × F` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn weight_norm(&self) -> f64 {
        libm::sqrt(self.weights.iter().map(|w| w * w).sum())
    }

    /// Unclamped `W x + b`.
    pub fn predict_raw(&self, x: &[f64]) -> Vec<f64> {
        let f = self.feature_dim;
        self.bias
            .iter()
            .enumerate()
            .map(|(o, b)| b + dot(&self.weights[o * f..(o + 1) * f], x))
            .collect()
    }

    pub fn predict(&self, x: &[f64], origin_tick: i64) -> Result<ActionChunk, super::PolicyError> {
        if x.len() != self.feature_dim {
            return Err(super::PolicyError::FeatureDim {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        let raw = self.predict_raw(x);
        Ok(ActionChunk {
            origin_tick,
            actions: raw
                .chunks_exact(ACTION_DIM)
                .map(ActionFrame::clamped_from_f64)
                .collect(),
            padded: false,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective value and its gradient with respect to `W` and `b`, evaluated
/// directly over the samples.
pub fn loss_and_gradient(policy: &LinearChunkPolicy, data: &Dataset, ridge: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let (f, o, n) = (policy.feature_dim, policy.output_dim(), data.len());
    let scale = 1.0 / (n as f64 * o as f64);
    let mut loss = 0.0;
    let mut gw = vec![0.0; o * f];
    let mut gb = vec![0.0; o];
    for s in 0..n {
        let x = data.features(s);
        let pred = policy.predict_raw(x);
        for (j, (p, y)) in pred.iter().zip(data.target(s)).enumerate() {
            let r = p - y;
            loss += scale * r * r;
            let g = 2.0 * scale * r;
            gb[j] += g;
            for (gwi, xi) in gw[j * f..(j + 1) * f].iter_mut().zip(x) {
                *gwi += g * xi;
            }
        }
    }
    for (g, w) in gw.iter_mut().zip(&policy.weights) {
        *g += 2.0 * ridge * w;
    }
    loss += ridge * policy.weights.iter().map(|w| w * w).sum::<f64>();
    (loss, gw, gb)
}

/// Objective only, evaluated directly.
pub fn objective(policy: &LinearChunkPolicy, data: &Dataset, ridge: f64) -> f64 {
    let (o, n) = (policy.output_dim(), data.len());
    let mut sse = 0.0;
    for s in 0..n {
        sse += policy
            .predict_raw(data.features(s))
            .iter()
            .zip(data.target(s))
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>();
    }
    sse / (n as f64 * o as f64) + ridge * policy.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Mean squared error of the clamped chunk predictions.
pub fn chunk_mse(policy: &LinearChunkPolicy, data: &Dataset) -> f64 {
    let mut sse = 0.0;
    for s in 0..data.len() {
        let raw = policy.predict_raw(data.features(s));
        for (frame, target) in raw
            .chunks_exact(ACTION_DIM)
            .zip(data.target(s).chunks_exact(ACTION_DIM))
        {
            let clamped = ActionFrame::clamped_from_f64(frame);
            sse += clamped
                .values()
                .iter()
                .zip(target)
                .map(|(&p, y)| (p as f64 - y) * (p as f64 - y))
                .sum::<f64>();
        }
    }
    sse / (data.len() * data.output_dim()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub ridge: f64,
    /// Step size; `None` uses `1 / L` where `L` bounds the gradient's Lipschitz constant.
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    /// Scale each step by the inverse of the objective's curvature,
    /// `(G + λO·I + δI)⁻¹`. The objective is unchanged; with step size 1
    /// (the default in this mode) each epoch removes all but a `δ`-sized
    /// fraction of the remaining error, which matters on the heavily
    /// correlated pooled observation features.
    pub precondition: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-4,
            learning_rate: None,
            epochs: 300,
            precondition: false,
        }
    }
}

/// Trains a [`LinearChunkPolicy`] with chunk length `output_dim / 61`.
pub fn train_linear_policy(data: &Dataset, config: &TrainConfig) -> Result<LinearChunkPolicy, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    if data.output_dim() == 0 || !data.output_dim().is_multiple_of(ACTION_DIM) {
        return Err(TrainError::BadOutputDim(data.output_dim()));
    }
    if !(config.ridge.is_finite() && config.ridge >= 0.0) {
        return Err(TrainError::BadRidge(config.ridge));
    }
    let (n, f, o) = (data.len(), data.feature_dim(), data.output_dim());
    let k = o / ACTION_DIM;
    let lambda = config.ridge;

    // Standardize; constant features get unit scale and contribute nothing.
    let mut mean = vec![0.0; f];
    for s in 0..n {
        for (m, x) in mean.iter_mut().zip(data.features(s)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; f];
    for s in 0..n {
        for ((v, x), m) in scale.iter_mut().zip(data.features(s)).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    for v in scale.iter_mut() {
        let sd = libm::sqrt(*v / n as f64);
        *v = if sd > 1e-12 { sd } else { 1.0 };
    }

    // Sufficient statistics: G = ZᵀZ/N, C = ZᵀY/N (stored O×F), ȳ, mean ‖y‖².
    let mut gram = vec![0.0; f * f];
    let mut cross = vec![0.0; o * f];
    let mut y_mean = vec![0.0; o];
    let mut y_sq = 0.0;
    let mut z = vec![0.0; f];
    for s in 0..n {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = (data.features(s)[j] - mean[j]) / scale[j];
        }
        for i in 0..f {
            let zi = z[i];
            if zi == 0.0 {
                continue;
            }
            let row = &mut gram[i * f..(i + 1) * f];
            for (g, zj) in row.iter_mut().zip(&z) {
                *g += zi * zj;
            }
        }
        let y = data.target(s);
        for (q, &yq) in y.iter().enumerate() {
            y_mean[q] += yq;
            y_sq += yq * yq;
            if yq == 0.0 {
                continue;
            }
            for (c, zj) in cross[q * f..(q + 1) * f].iter_mut().zip(&z) {
                *c += yq * zj;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    gram.iter_mut().for_each(|g| *g *= inv_n);
    cross.iter_mut().for_each(|c| *c *= inv_n);
    y_mean.iter_mut().for_each(|y| *y *= inv_n);
    y_sq *= inv_n;

    let inv_o = 1.0 / o as f64;
    let lr = match config.learning_rate {
        Some(lr) if lr.is_finite() && lr > 0.0 => lr,
        Some(lr) => return Err(TrainError::BadLearningRate(lr)),
        None if config.precondition => 1.0,
        None => {
            let lip_w = 2.0 * (largest_eigenvalue(&gram, f) * inv_o + lambda);
            let lip_b = 2.0 * inv_o;
            1.0 / lip_w.max(lip_b)
        }
    };

    let mut w = vec![0.0; o * f];
    let mut b = vec![0.0; o];
    let mut wg = vec![0.0; o * f];
    let mut history = Vec::with_capacity(config.epochs + 1);

    // Returns the objective at (w, b) and leaves W·G in `wg`.
    let evaluate = |w: &[f64], b: &[f64], wg: &mut [f64]| -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut penalty = 0.0;
        for q in 0..o {
            let wrow = &w[q * f..(q + 1) * f];
            let out = &mut wg[q * f..(q + 1) * f];
            out.iter_mut().for_each(|v| *v = 0.0);
            for (i, &wi) in wrow.iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                for (v, g) in out.iter_mut().zip(&gram[i * f..(i + 1) * f]) {
                    *v += wi * g;
                }
            }
            quad += dot(out, wrow);
            lin += dot(wrow, &cross[q * f..(q + 1) * f]);
            penalty += dot(wrow, wrow);
        }
        let bias_term: f64 = b.iter().zip(&y_mean).map(|(bq, yq)| bq * bq - 2.0 * bq * yq).sum();
        // Clamp the tiny negative values cancellation can produce at the optimum.
        ((quad - 2.0 * lin + bias_term + y_sq) * inv_o).max(0.0) + lambda * penalty
    };

    let initial = evaluate(&w, &b, &mut wg);
    history.push(initial);
    let chol = if config.precondition {
        let mean_diag = (0..f).map(|i| gram[i * f + i]).sum::<f64>() / f.max(1) as f64;
        let shift = lambda * o as f64 + PRECONDITION_DAMPING * mean_diag.max(1.0);
        let mut a = gram.clone();
        for i in 0..f {
            a[i * f + i] += shift;
        }
        Some(cholesky(a, f).ok_or(TrainError::Diverged { epoch: 0 })?)
    } else {
        None
    };
    let mut step = vec![0.0; f];

    for epoch in 1..=config.epochs {
        if let Some(l) = &chol {
            for q in 0..o {
                let wrow = &mut w[q * f..(q + 1) * f];
                // Half the gradient times O: W(G + λO) − C.
                for (((s, g), c), wi) in step
                    .iter_mut()
                    .zip(&wg[q * f..(q + 1) * f])
                    .zip(&cross[q * f..(q + 1) * f])
                    .zip(wrow.iter())
                {
                    *s = g - c + lambda * o as f64 * wi;
                }
                cholesky_solve(l, f, &mut step);
                for (wi, s) in wrow.iter_mut().zip(&step) {
                    *wi -= lr * s;
                }
                b[q] -= lr * (b[q] - y_mean[q]);
            }
            let loss = evaluate(&w, &b, &mut wg);
            if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::Diverged { epoch });
            }
            history.push(loss);
            continue;
        }
        for q in 0..o {
            let crow = &cross[q * f..(q + 1) * f];
            let grow = &wg[q * f..(q + 1) * f];
            for ((wi, g), c) in w[q * f..(q + 1) * f].iter_mut().zip(grow).zip(crow) {
                let grad = 2.0 * inv_o * (g - c) + 2.0 * lambda * *wi;
                *wi -= lr * grad;
            }
            b[q] -= lr * 2.0 * inv_o * (b[q] - y_mean[q]);
        }
        let loss = evaluate(&w, &b, &mut wg);
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { epoch });
        }
        history.push(loss);
    }
    let last = *history.last().unwrap();
    if last > initial * (1.0 + 1e-12) {
        return Err(TrainError::LossIncreased { initial, last });
    }

    // Fold standardization into raw-feature parameters.
    for q in 0..o {
        let row = &mut w[q * f..(q + 1) * f];
        let mut shift = 0.0;
        for ((wi, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *wi /= s;
            shift += *wi * m;
        }
        b[q] -= shift;
    }

    Ok(LinearChunkPolicy {
        k,
        feature_dim: f,
        weights: w,
        bias: b,
        meta: TrainingMeta {
            epochs: config.epochs,
            learning_rate: lr,
            ridge: lambda,
            initial_loss: initial,
            final_loss: last,
            loss_history: history,
        },
    })
}

const PRECONDITION_DAMPING: f64 = 1e-6;

/// Lower Cholesky factor of a symmetric positive definite `n × n` matrix,
/// row-major, or `None` when a pivot is not positive.
fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= 0.0 {
            return None;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    Some(a)
}

/// Solves `L Lᵀ x = rhs` in place.
fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &x[..i]);
        x[i] = (x[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Largest eigenvalue of a symmetric positive semi-definite `n × n` matrix by
/// power iteration. Slight overestimates are harmless for step-size bounds.
fn largest_eigenvalue(m: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / libm::sqrt(n as f64); n];
    let mut next = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..100 {
        for (i, out) in next.iter_mut().enumerate() {
            *out = dot(&m[i * n..(i + 1) * n], &v);
        }
        let norm = libm::sqrt(dot(&next, &next));
        if norm == 0.0 {
            return 0.0;
        }
        let previous = estimate;
        estimate = norm;
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / norm;
        }
        if (estimate - previous).abs() <= 1e-9 * estimate {
            break;
        }
    }
    // Power iteration approaches from below; pad so 1/L stays a safe step.
    estimate * 1.01
}
