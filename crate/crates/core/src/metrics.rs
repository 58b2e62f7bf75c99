//! Trajectory similarity, timing and smoothness measures.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::action::{ActionFrame, ACTION_DIM};
use crate::executor::ExecutionTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("sequence is empty")]
    EmptySequence,
    #[error("dimension {0} is out of range")]
    BadDim(usize),
    #[error("threshold fractions must satisfy 0 < lo < hi < 1, got lo = {lo}, hi = {hi}")]
    BadFractions { lo: f64, hi: f64 },
    #[error("amplitude must be positive and finite, got {0}")]
    BadAmplitude(f64),
    #[error("onset tick {onset} lies past the end of a {len}-tick trace")]
    OnsetBeyondEnd { onset: usize, len: usize },
    #[error("trace needs at least 2 ticks, has {0}")]
    TooShort(usize),
}

/// Per-pair frame distance for [`dtw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Cost {
    /// L1 over all 61 dimensions.
    L1All,
    /// Absolute difference in one dimension.
    L1Dim(usize),
}

impl Cost {
    fn check(self) -> Result<(), MetricError> {
        match self {
            Cost::L1Dim(d) if d >= ACTION_DIM => Err(MetricError::BadDim(d)),
            _ => Ok(()),
        }
    }

    pub fn eval(self, a: &ActionFrame, b: &ActionFrame) -> f64 {
        match self {
            Cost::L1All => a
                .values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| libm::fabs(x as f64 - y as f64))
                .sum(),
            Cost::L1Dim(d) => libm::fabs(a.get(d) as f64 - b.get(d) as f64),
        }
    }
}

/// Dynamic time warping with an arbitrary pair cost.
///
/// Steps `(i−1, j)`, `(i, j−1)`, `(i−1, j−1)`, no window, sum of costs.
pub fn dtw_by<T>(a: &[T], b: &[T], cost: impl Fn(&T, &T) -> f64) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut row = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for x in a {
        row[0] = f64::INFINITY;
        for (j, y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(row[j]);
            row[j + 1] = cost(x, y) + best;
        }
        core::mem::swap(&mut prev, &mut row);
    }
    Ok(prev[m])
}

pub fn dtw(a: &[ActionFrame], b: &[ActionFrame], cost: Cost) -> Result<f64, MetricError> {
    cost.check()?;
    dtw_by(a, b, |x, y| cost.eval(x, y))
}

pub fn dtw_scalar(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    dtw_by(a, b, |x, y| libm::fabs(x - y))
}

// Thresholds are compared with a small slack so f32 storage of a value that
// sits exactly on a threshold still counts as reaching it.
fn reaches(deviation: f64, threshold: f64) -> bool {
    deviation >= threshold - 1e-6 * threshold.abs().max(1.0)
}

/// Where and how large the stimulus is, for the timing measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub onset: usize,
    pub dim: usize,
    pub amplitude: f64,
}

impl Stimulus {
    fn check(&self, len: usize) -> Result<(), MetricError> {
        if self.dim >= ACTION_DIM {
            return Err(MetricError::BadDim(self.dim));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(MetricError::BadAmplitude(self.amplitude));
        }
        if len == 0 {
            return Err(MetricError::EmptySequence);
        }
        if self.onset >= len {
            return Err(MetricError::OnsetBeyondEnd { onset: self.onset, len });
        }
        Ok(())
    }
}

/// Mean of the samples before `onset`; the first sample when there are none.
pub fn baseline(series: &[f64], onset: usize) -> f64 {
    if onset == 0 || series.is_empty() {
        return series.first().copied().unwrap_or(0.0);
    }
    let pre = &series[..onset.min(series.len())];
    pre.iter().sum::<f64>() / pre.len() as f64
}

/// Ticks from onset until the deviation from baseline first reaches
/// `fraction × amplitude`.
pub fn response_latency_ticks(series: &[f64], onset: usize, amplitude: f64, fraction: f64) -> Option<usize> {
    let base = baseline(series, onset);
    let thr = fraction * amplitude;
    series[onset..].iter().position(|&v| reaches(libm::fabs(v - base), thr))
}

fn check_fraction(f: f64) -> Result<(), MetricError> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(MetricError::BadFractions { lo: f, hi: f })
    }
}

/// Seconds until the response; `None` when it never comes.
pub fn response_latency(trace: &ExecutionTrace, stim: &Stimulus, fraction: f64) -> Result<Option<f64>, MetricError> {
    stim.check(trace.len())?;
    check_fraction(fraction)?;
    let series = trace.dim(stim.dim);
    Ok(response_latency_ticks(&series, stim.onset, stim.amplitude, fraction).map(|t| t as f64 / trace.rate_hz as f64))
}

/// Ticks between the first `lo` crossing after onset and the first later
/// `hi` crossing.
pub fn completion_ticks(series: &[f64], onset: usize, amplitude: f64, lo: f64, hi: f64) -> Option<usize> {
    let base = baseline(series, onset);
    let dev = |v: f64| libm::fabs(v - base);
    let start = onset + series[onset..].iter().position(|&v| reaches(dev(v), lo * amplitude))?;
    let end = start + series[start..].iter().position(|&v| reaches(dev(v), hi * amplitude))?;
    Some(end - start)
}

pub fn completion_time(trace: &ExecutionTrace, stim: &Stimulus, lo: f64, hi: f64) -> Result<Option<f64>, MetricError> {
    stim.check(trace.len())?;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(MetricError::BadFractions { lo, hi });
    }
    let series = trace.dim(stim.dim);
    Ok(completion_ticks(&series, stim.onset, stim.amplitude, lo, hi).map(|t| t as f64 / trace.rate_hz as f64))
}

fn linf_jump(a: &ActionFrame, b: &ActionFrame) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| libm::fabs(x as f64 - y as f64))
        .fold(0.0, f64::max)
}

/// `(max jump entering a boundary tick, max jump entering any other tick)`,
/// L∞ over dimensions. Tick 0 has no predecessor and is never counted; an
/// empty set reports 0.
pub fn boundary_discontinuity(trace: &ExecutionTrace) -> Result<(f64, f64), MetricError> {
    if trace.len() < 2 {
        return Err(MetricError::TooShort(trace.len()));
    }
    let mut boundary = 0.0f64;
    let mut within = 0.0f64;
    for t in 1..trace.len() {
        let j = linf_jump(&trace.commanded[t - 1], &trace.commanded[t]);
        if trace.is_boundary(t as u64) {
            boundary = boundary.max(j);
        } else {
            within = within.max(j);
        }
    }
    Ok((boundary, within))
}

/// Sum of squared second differences.
pub fn smoothness(series: &[f64]) -> f64 {
    series
        .windows(3)
        .map(|w| {
            let d = w[2] - 2.0 * w[1] + w[0];
            d * d
        })
        .sum()
}

/// [`smoothness`] summed over all dimensions of a frame sequence.
pub fn smoothness_frames(frames: &[ActionFrame]) -> f64 {
    (0..ACTION_DIM)
        .map(|d| smoothness(&frames.iter().map(|f| f.get(d) as f64).collect::<Vec<_>>()))
        .sum()
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub stimulus: Stimulus,
    pub cost: Cost,
    pub response_fraction: f64,
    pub lo_fraction: f64,
    pub hi_fraction: f64,
    pub per_dim: bool,
}

impl EvalSpec {
    pub fn new(stimulus: Stimulus) -> Self {
        Self {
            stimulus,
            cost: Cost::L1Dim(stimulus.dim),
            response_fraction: 0.1,
            lo_fraction: 0.1,
            hi_fraction: 0.9,
            per_dim: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub dtw: f64,
    /// `None` when no response was detected.
    pub response_latency_s: Option<f64>,
    pub completion_time_s: Option<f64>,
    pub max_boundary_jump: f64,
    pub max_within_jump: f64,
    /// Driven dimension.
    pub smoothness: f64,
    /// DTW per dimension when requested.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub per_dim_dtw: Option<Vec<f64>>,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 6] = [
        "dtw",
        "response_latency_s",
        "completion_time_s",
        "max_boundary_jump",
        "max_within_jump",
        "smoothness",
    ];
}

/// Scores a trace against the reference demonstration it was meant to follow.
pub fn evaluate(
    trace: &ExecutionTrace,
    reference: &[ActionFrame],
    spec: &EvalSpec,
) -> Result<MetricReport, MetricError> {
    let dtw_value = dtw(&trace.commanded, reference, spec.cost)?;
    let (max_boundary_jump, max_within_jump) = if trace.len() >= 2 {
        boundary_discontinuity(trace)?
    } else {
        (0.0, 0.0)
    };
    let per_dim_dtw = if spec.per_dim {
        Some(
            (0..ACTION_DIM)
                .map(|d| dtw(&trace.commanded, reference, Cost::L1Dim(d)))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    Ok(MetricReport {
        dtw: dtw_value,
        response_latency_s: response_latency(trace, &spec.stimulus, spec.response_fraction)?,
        completion_time_s: completion_time(trace, &spec.stimulus, spec.lo_fraction, spec.hi_fraction)?,
        max_boundary_jump,
        max_within_jump,
        smoothness: smoothness(&trace.dim(spec.stimulus.dim)),
        per_dim_dtw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_scalar(&[0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dtw_scalar(&[0.0; 3], &[1.0; 3]).unwrap(), 3.0);
        assert_eq!(dtw_scalar(&[], &[1.0]), Err(MetricError::EmptySequence));
    }

    #[test]
    fn smoothness_of_lines_is_zero() {
        assert_eq!(smoothness(&[2.0; 5]), 0.0);
        assert_eq!(smoothness(&[0.0, 1.0, 2.0, 3.0]), 0.0);
        assert_eq!(smoothness(&[0.0, 1.0, 0.0]), 4.0);
    }

    #[test]
    fn latency_on_ramp() {
        let series: Vec<f64> = (0..40).map(|t| ((t as f64 - 10.0) / 30.0).clamp(0.0, 1.0)).collect();
        assert_eq!(response_latency_ticks(&series, 10, 1.0, 0.1), Some(3));
        assert_eq!(completion_ticks(&series, 10, 1.0, 0.1, 0.9), Some(24));
        assert_eq!(response_latency_ticks(&[0.0; 10], 2, 1.0, 0.1), None);
    }
}
