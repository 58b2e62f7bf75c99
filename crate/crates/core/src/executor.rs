//! Simulated fixed-rate control loop with three chunk execution strategies.
//!
//! Timing model, with `p` the perception delay and `D` the inference plus
//! communication delay:
//!
//! * a query issued at tick `q` sees the observation of tick `q − p`;
//! * its chunk may be commanded from tick `q + D` (its arrival) onwards;
//! * index `i` of a chunk that arrived at `a` is aligned with tick `a + i`.
//!
//! The pipeline is primed: queries issued before tick 0 (observing the
//! initial frame) supply the chunks that cover the first `D` ticks, so the
//! loop commands exactly one frame per tick from tick 0. Those priming
//! queries are not reported in [`ExecutionTrace::query_ticks`].

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use thiserror::Error;

use crate::action::{ActionChunk, ActionFrame, ACTION_DIM};
use crate::episode::{Episode, LatencyModel};
use crate::policy::{Policy, PolicyError, PolicyInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StrategyKind {
    NoTE,
    TE,
    PDLC,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::NoTE, StrategyKind::TE, StrategyKind::PDLC];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::NoTE => "NoTE",
            StrategyKind::TE => "TE",
            StrategyKind::PDLC => "PDLC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl core::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_TE_DECAY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub k: usize,
    /// TE decay `m`.
    pub te_decay: f64,
    /// PDLC action offset `n`.
    pub pdlc_offset: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("chunk length k must be at least 1")]
    ZeroChunk,
    #[error("PDLC offset n = {n} must be smaller than chunk length k = {k}")]
    OffsetTooLarge { n: usize, k: usize },
    #[error("TE decay must be finite and non-negative, got {0}")]
    BadDecay(f64),
}

impl StrategyConfig {
    pub fn no_te(k: usize) -> Self {
        Self {
            kind: StrategyKind::NoTE,
            k,
            te_decay: DEFAULT_TE_DECAY,
            pdlc_offset: 0,
        }
    }

    pub fn te(k: usize, m: f64) -> Self {
        Self {
            kind: StrategyKind::TE,
            te_decay: m,
            ..Self::no_te(k)
        }
    }

    pub fn pdlc(k: usize, n: usize) -> Self {
        Self {
            kind: StrategyKind::PDLC,
            pdlc_offset: n,
            ..Self::no_te(k)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::ZeroChunk);
        }
        if !(self.te_decay.is_finite() && self.te_decay >= 0.0) {
            return Err(ConfigError::BadDecay(self.te_decay));
        }
        if self.kind == StrategyKind::PDLC && self.pdlc_offset >= self.k {
            return Err(ConfigError::OffsetTooLarge {
                n: self.pdlc_offset,
                k: self.k,
            });
        }
        Ok(())
    }
}

/// Which delay sources the PDLC offset compensates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Compensation {
    pub perception: bool,
    pub inference: bool,
    pub communication: bool,
}

impl Default for Compensation {
    fn default() -> Self {
        Self {
            perception: true,
            inference: true,
            communication: true,
        }
    }
}

/// PDLC offset for a tick-denominated latency model: its total delay.
pub fn compute_offset(latency: &LatencyModel, rate_hz: f64) -> u32 {
    debug_assert!(rate_hz > 0.0);
    latency.total()
}

/// Offset compensating only the selected delay sources.
pub fn compute_offset_masked(latency: &LatencyModel, mask: Compensation) -> u32 {
    let pick = |on: bool, v: u32| if on { v } else { 0 };
    pick(mask.perception, latency.perception_delay)
        + pick(mask.inference, latency.inference_delay)
        + pick(mask.communication, latency.communication_delay)
}

/// Converts a delay in seconds to ticks, rounding halves up.
pub fn seconds_to_ticks(seconds: f64, rate_hz: f64) -> u32 {
    debug_assert!(rate_hz > 0.0);
    let ticks = libm::floor(seconds * rate_hz + 0.5);
    if ticks.is_nan() || ticks <= 0.0 {
        0
    } else if ticks >= u32::MAX as f64 {
        u32::MAX
    } else {
        ticks as u32
    }
}

/// Delays measured in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LatencySeconds {
    pub perception: f64,
    pub inference: f64,
    pub communication: f64,
}

impl LatencySeconds {
    pub fn total(&self) -> f64 {
        self.perception + self.inference + self.communication
    }

    /// Per-source tick conversion used by the simulated pipeline.
    pub fn to_ticks(&self, rate_hz: f64) -> LatencyModel {
        LatencyModel::new(
            seconds_to_ticks(self.perception, rate_hz),
            seconds_to_ticks(self.inference, rate_hz),
            seconds_to_ticks(self.communication, rate_hz),
        )
    }

    /// PDLC offset from the summed delay of the compensated sources.
    pub fn offset(&self, rate_hz: f64, mask: Compensation) -> u32 {
        let pick = |on: bool, v: f64| if on { v } else { 0.0 };
        let total = pick(mask.perception, self.perception)
            + pick(mask.inference, self.inference)
            + pick(mask.communication, self.communication);
        seconds_to_ticks(total, rate_hz)
    }
}

/// Per-tick bounds of the predictions a TE step combined.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Envelope {
    pub lower: Vec<ActionFrame>,
    pub upper: Vec<ActionFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub strategy: StrategyKind,
    pub rate_hz: f32,
    pub commanded: Vec<ActionFrame>,
    pub query_ticks: Vec<u64>,
    pub chunk_boundaries: Vec<u64>,
    /// Present for TE traces.
    pub envelope: Option<Envelope>,
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.commanded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commanded.is_empty()
    }

    pub fn dim(&self, dim: usize) -> Vec<f64> {
        self.commanded.iter().map(|f| f.get(dim) as f64).collect()
    }

    pub fn is_query(&self, tick: u64) -> bool {
        self.query_ticks.binary_search(&tick).is_ok()
    }

    pub fn is_boundary(&self, tick: u64) -> bool {
        self.chunk_boundaries.binary_search(&tick).is_ok()
    }

    /// Commanded frames as an episode at the trace's rate.
    pub fn to_episode(&self) -> Episode {
        Episode::from_actions(self.rate_hz, self.commanded.iter().copied())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario has no ticks")]
    EmptyScenario,
    #[error("policy chunk length {policy} differs from configured k = {k}")]
    ChunkLengthMismatch { policy: usize, k: usize },
    #[error("policy failed at tick {tick}: {source}")]
    Policy { tick: i64, source: PolicyError },
    #[error("policy returned {got} frames at tick {tick}, expected {expected}")]
    ShortChunk { tick: i64, got: usize, expected: usize },
}

/// Normalized TE weights for `count` predictions ordered oldest first.
pub fn ensemble_weights(count: usize, m: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..count).map(|j| libm::exp(-m * j as f64)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Weighted TE combination of predictions ordered oldest first.
pub fn ensemble(predictions: &[f64], m: f64) -> f64 {
    ensemble_weights(predictions.len(), m)
        .iter()
        .zip(predictions)
        .map(|(w, p)| w * p)
        .sum()
}

struct Pipeline<'p, P: ?Sized> {
    policy: &'p P,
    k: usize,
    perception: i64,
    dispatch: i64,
}

impl<P: Policy + ?Sized> Pipeline<'_, P> {
    /// Issues a query at tick `q` and returns the chunk with its arrival tick.
    fn query(&self, q: i64, previous: &ActionFrame) -> Result<(i64, ActionChunk), ExecError> {
        let input = PolicyInput {
            query_tick: q,
            observed_tick: q - self.perception,
            previous,
        };
        let chunk = self
            .policy
            .predict(&input)
            .map_err(|source| ExecError::Policy { tick: q, source })?;
        if chunk.len() < self.k {
            return Err(ExecError::ShortChunk {
                tick: q,
                got: chunk.len(),
                expected: self.k,
            });
        }
        Ok((q + self.dispatch, chunk))
    }
}

fn prepare<'p, P: Policy + ?Sized>(
    policy: &'p P,
    scenario: &Episode,
    latency: &LatencyModel,
    config: &StrategyConfig,
) -> Result<Pipeline<'p, P>, ExecError> {
    config.validate()?;
    if scenario.is_empty() {
        return Err(ExecError::EmptyScenario);
    }
    if policy.chunk_length() != config.k {
        return Err(ExecError::ChunkLengthMismatch {
            policy: policy.chunk_length(),
            k: config.k,
        });
    }
    Ok(Pipeline {
        policy,
        k: config.k,
        perception: latency.perception_delay as i64,
        dispatch: latency.dispatch_delay() as i64,
    })
}

fn new_trace(kind: StrategyKind, scenario: &Episode) -> ExecutionTrace {
    ExecutionTrace {
        strategy: kind,
        rate_hz: scenario.rate_hz,
        commanded: Vec::with_capacity(scenario.len()),
        query_ticks: Vec::new(),
        chunk_boundaries: alloc::vec![0],
        envelope: None,
    }
}

/// Plain chunking: query every `k` ticks and play each chunk out in order.
pub fn run_no_te<P: Policy + ?Sized>(
    policy: &P,
    scenario: &Episode,
    latency: &LatencyModel,
    k: usize,
) -> Result<ExecutionTrace, ExecError> {
    let pipe = prepare(policy, scenario, latency, &StrategyConfig::no_te(k))?;
    let t_len = scenario.len() as i64;
    let k = k as i64;
    let initial = *scenario.action(0);
    let mut trace = new_trace(StrategyKind::NoTE, scenario);

    // Priming queries: the multiples of k in [k·floor(−D/k), 0).
    let mut pending: VecDeque<(i64, ActionChunk)> = VecDeque::new();
    let mut q = k * (-pipe.dispatch).div_euclid(k);
    while q < 0 {
        pending.push_back(pipe.query(q, &initial)?);
        q += k;
    }
    let mut active: Option<(i64, ActionChunk)> = None;
    for t in 0..t_len {
        let previous = trace.commanded.last().copied().unwrap_or(initial);
        if t % k == 0 {
            pending.push_back(pipe.query(t, &previous)?);
            trace.query_ticks.push(t as u64);
        }
        while pending.front().is_some_and(|(a, _)| *a <= t) {
            let next = pending.pop_front().unwrap();
            if t > 0 && next.0 == t {
                trace.chunk_boundaries.push(t as u64);
            }
            active = Some(next);
        }
        let (arrival, chunk) = active.as_ref().expect("primed pipeline covers every tick");
        trace.commanded.push(chunk.actions[(t - arrival) as usize]);
    }
    Ok(trace)
}

/// Temporal ensemble: query every tick and blend the overlapping chunks.
pub fn run_te<P: Policy + ?Sized>(
    policy: &P,
    scenario: &Episode,
    latency: &LatencyModel,
    k: usize,
    m: f64,
) -> Result<ExecutionTrace, ExecError> {
    let pipe = prepare(policy, scenario, latency, &StrategyConfig::te(k, m))?;
    let t_len = scenario.len() as i64;
    let ki = k as i64;
    let initial = *scenario.action(0);
    let weights = ensemble_weights(k, m);
    let mut trace = new_trace(StrategyKind::TE, scenario);
    let mut envelope = Envelope::default();

    // Chunks ordered by arrival; the front is the oldest.
    let mut window: VecDeque<(i64, ActionChunk)> = VecDeque::with_capacity(k + pipe.dispatch as usize + 1);
    for q in (-ki + 1 - pipe.dispatch)..0 {
        window.push_back(pipe.query(q, &initial)?);
    }
    for t in 0..t_len {
        let previous = trace.commanded.last().copied().unwrap_or(initial);
        window.push_back(pipe.query(t, &previous)?);
        trace.query_ticks.push(t as u64);
        while window.front().is_some_and(|(a, _)| *a < t - ki + 1) {
            window.pop_front();
        }
        let live: Vec<&(i64, ActionChunk)> = window.iter().filter(|(a, _)| *a <= t).collect();
        debug_assert_eq!(live.len(), k);
        let mut blended = [0.0f64; ACTION_DIM];
        let mut lo = [f32::INFINITY; ACTION_DIM];
        let mut hi = [f32::NEG_INFINITY; ACTION_DIM];
        for (j, (a, chunk)) in live.iter().enumerate() {
            let frame = chunk.actions[(t - a) as usize];
            for (d, &v) in frame.values().iter().enumerate() {
                blended[d] += weights[j] * v as f64;
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let mut out = ActionFrame::zero();
        for (d, v) in out.values_mut().iter_mut().enumerate() {
            // Rounding can step just past the envelope; keep it inside.
            *v = (blended[d] as f32).clamp(lo[d], hi[d]);
        }
        trace.commanded.push(out);
        envelope.lower.push(ActionFrame::from_array(lo));
        envelope.upper.push(ActionFrame::from_array(hi));
    }
    trace.envelope = Some(envelope);
    Ok(trace)
}

/// PDLC: query every tick and command action `n` of the newest chunk.
pub fn run_pdlc<P: Policy + ?Sized>(
    policy: &P,
    scenario: &Episode,
    latency: &LatencyModel,
    k: usize,
    n: usize,
) -> Result<ExecutionTrace, ExecError> {
    let pipe = prepare(policy, scenario, latency, &StrategyConfig::pdlc(k, n))?;
    let t_len = scenario.len() as i64;
    let initial = *scenario.action(0);
    let mut trace = new_trace(StrategyKind::PDLC, scenario);

    let mut in_flight: VecDeque<(i64, ActionChunk)> = VecDeque::new();
    for q in -pipe.dispatch..0 {
        in_flight.push_back(pipe.query(q, &initial)?);
    }
    for t in 0..t_len {
        let previous = trace.commanded.last().copied().unwrap_or(initial);
        in_flight.push_back(pipe.query(t, &previous)?);
        trace.query_ticks.push(t as u64);
        let (arrival, chunk) = in_flight.pop_front().expect("primed pipeline covers every tick");
        debug_assert_eq!(arrival, t);
        trace.commanded.push(chunk.actions[n]);
    }
    Ok(trace)
}

/// Runs the strategy named by `config`.
pub fn execute<P: Policy + ?Sized>(
    policy: &P,
    scenario: &Episode,
    latency: &LatencyModel,
    config: &StrategyConfig,
) -> Result<ExecutionTrace, ExecError> {
    config.validate()?;
    match config.kind {
        StrategyKind::NoTE => run_no_te(policy, scenario, latency, config.k),
        StrategyKind::TE => run_te(policy, scenario, latency, config.k, config.te_decay),
        StrategyKind::PDLC => run_pdlc(policy, scenario, latency, config.k, config.pdlc_offset),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::JAW_OPEN;
    use crate::policy::{OraclePolicy, OracleSpec};

    fn ramp(len: usize) -> Episode {
        Episode::from_actions(
            30.0,
            (0..len).map(|t| {
                let mut f = ActionFrame::zero();
                f.set(JAW_OPEN, t as f32 / len as f32);
                f
            }),
        )
    }

    #[test]
    fn weights_follow_oldest_first_orientation() {
        let v = ensemble(&[0.0, 1.0], core::f64::consts::LN_2);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(ensemble(&[0.0, 1.0], 0.0), 0.5);
        let w = ensemble_weights(4, 0.3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn offset_rounding() {
        assert_eq!(compute_offset(&LatencyModel::zero(), 30.0), 0);
        assert_eq!(compute_offset(&LatencyModel::new(1, 1, 1), 30.0), 3);
        assert_eq!(seconds_to_ticks(0.100, 30.0), 3);
        assert_eq!(seconds_to_ticks(0.049, 30.0), 1);
        assert_eq!(seconds_to_ticks(0.05, 30.0), 2);
        assert_eq!(seconds_to_ticks(-1.0, 30.0), 0);
        let mask = Compensation {
            perception: false,
            ..Compensation::default()
        };
        assert_eq!(compute_offset_masked(&LatencyModel::new(2, 1, 1), mask), 2);
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            StrategyConfig::pdlc(3, 3).validate(),
            Err(ConfigError::OffsetTooLarge { n: 3, k: 3 })
        );
        assert!(StrategyConfig::pdlc(4, 3).validate().is_ok());
        assert_eq!(StrategyConfig::no_te(0).validate(), Err(ConfigError::ZeroChunk));
        assert!(StrategyConfig::te(5, f64::NAN).validate().is_err());
    }

    #[test]
    fn pdlc_compensates_total_delay() {
        let d = ramp(40);
        let oracle = OraclePolicy::new(OracleSpec::exact(&d), 8);
        let lat = LatencyModel::new(1, 1, 1);
        let trace = run_pdlc(&oracle, &d, &lat, 8, 3).unwrap();
        assert_eq!(trace.commanded, d.actions().copied().collect::<Vec<_>>());
        let shifted = run_pdlc(&oracle, &d, &lat, 8, 0).unwrap();
        for t in 0..40 {
            assert_eq!(shifted.commanded[t], *d.action_clamped(t as i64 - 3));
        }
    }

    #[test]
    fn cadence_and_boundaries() {
        let d = ramp(23);
        let oracle = OraclePolicy::new(OracleSpec::exact(&d), 5);
        let lat = LatencyModel::new(0, 2, 0);
        let n = run_no_te(&oracle, &d, &lat, 5).unwrap();
        assert_eq!(n.query_ticks, [0, 5, 10, 15, 20]);
        assert_eq!(n.chunk_boundaries, [0, 2, 7, 12, 17, 22]);
        let t = run_te(&oracle, &d, &lat, 5, 0.1).unwrap();
        assert_eq!(t.query_ticks.len(), 23);
        assert_eq!(t.chunk_boundaries, [0]);
        let p = run_pdlc(&oracle, &d, &lat, 5, 2).unwrap();
        assert_eq!(p.chunk_boundaries, [0]);
    }

    #[test]
    fn chunk_length_must_match() {
        let d = ramp(10);
        let oracle = OraclePolicy::new(OracleSpec::exact(&d), 4);
        assert!(matches!(
            run_no_te(&oracle, &d, &LatencyModel::zero(), 5),
            Err(ExecError::ChunkLengthMismatch { .. })
        ));
        let empty = Episode::new(30.0);
        assert_eq!(
            run_pdlc(&oracle, &empty, &LatencyModel::zero(), 4, 0),
            Err(ExecError::EmptyScenario)
        );
    }
}
