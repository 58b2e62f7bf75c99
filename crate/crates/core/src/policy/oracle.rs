//! Ground-truth oracle policy.

use alloc::vec::Vec;

use crate::action::{ActionChunk, ActionFrame, ACTION_DIM};
use crate::episode::{Episode, EpisodeError};
use crate::policy::{Policy, PolicyError, PolicyInput};
use crate::rng;

const NOISE_DOMAIN: u64 = 0x0AC1_E000;

/// Configuration of the oracle.
///
/// `foresight` bounds how far past its observation the oracle knows the
/// source: frames up to `observed + foresight` are exact, later frames hold
/// the last foreseen one. `None` means unlimited foresight, which makes a
/// zero-noise oracle reproduce [`slice_chunk`](crate::episode::slice_chunk)
/// exactly. `Some(0)` is a stale-observation oracle that can only hold the
/// pose it saw.
#[derive(Debug, Clone, Copy)]
pub struct OracleSpec<'a> {
    pub source: &'a Episode,
    pub noise_sigma: f64,
    pub seed: u64,
    pub foresight: Option<usize>,
}

impl<'a> OracleSpec<'a> {
    pub fn exact(source: &'a Episode) -> Self {
        Self {
            source,
            noise_sigma: 0.0,
            seed: 0,
            foresight: None,
        }
    }

    pub fn with_noise(mut self, noise_sigma: f64, seed: u64) -> Self {
        self.noise_sigma = noise_sigma;
        self.seed = seed;
        self
    }

    pub fn with_foresight(mut self, foresight: Option<usize>) -> Self {
        self.foresight = foresight;
        self
    }

    /// Chunk for an observation at `observed_tick`; ticks before the episode
    /// read as its first frame, ticks past the end as its last.
    pub fn chunk_at(&self, observed_tick: i64, k: usize) -> ActionChunk {
        let horizon = self.foresight.unwrap_or(usize::MAX);
        let len = self.source.len() as i64;
        let mut actions: Vec<ActionFrame> = (0..k)
            .map(|i| *self.source.action_clamped(observed_tick + i.min(horizon) as i64))
            .collect();
        if self.noise_sigma > 0.0 {
            let mut r = rng::stream(rng::mix(self.seed, NOISE_DOMAIN), rng::tick_key(observed_tick));
            let mut raw = [0.0f64; ACTION_DIM];
            for frame in &mut actions {
                for (dst, &v) in raw.iter_mut().zip(frame.values()) {
                    *dst = v as f64 + self.noise_sigma * rng::normal(&mut r);
                }
                *frame = ActionFrame::clamped_from_f64(&raw);
            }
        }
        ActionChunk {
            origin_tick: observed_tick,
            actions,
            padded: observed_tick + k as i64 > len,
        }
    }
}

/// Oracle prediction at an in-episode tick.
pub fn oracle_predict(spec: &OracleSpec<'_>, t: usize, k: usize) -> Result<ActionChunk, EpisodeError> {
    if k == 0 {
        return Err(EpisodeError::ZeroChunkLength);
    }
    if t >= spec.source.len() {
        return Err(EpisodeError::TickBeyondEnd {
            t,
            len: spec.source.len(),
        });
    }
    Ok(spec.chunk_at(t as i64, k))
}

/// The oracle as an executor-facing policy with chunk length `k`.
#[derive(Debug, Clone, Copy)]
pub struct OraclePolicy<'a> {
    pub spec: OracleSpec<'a>,
    pub k: usize,
}

impl<'a> OraclePolicy<'a> {
    pub fn new(spec: OracleSpec<'a>, k: usize) -> Self {
        Self { spec, k }
    }
}

impl Policy for OraclePolicy<'_> {
    fn chunk_length(&self) -> usize {
        self.k
    }

    fn predict(&self, input: &PolicyInput<'_>) -> Result<ActionChunk, PolicyError> {
        if self.k == 0 {
            return Err(EpisodeError::ZeroChunkLength.into());
        }
        if input.observed_tick >= self.spec.source.len() as i64 {
            return Err(EpisodeError::TickBeyondEnd {
                t: input.observed_tick as usize,
                len: self.spec.source.len(),
            }
            .into());
        }
        Ok(self.spec.chunk_at(input.observed_tick, self.k))
    }
}
