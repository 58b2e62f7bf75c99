//! A learned policy over depth-augmented observation features.
//!
//! The feature vector for a query is the spatially pooled fused feature
//! tensor of the observed frame followed by the previously commanded frame.

use alloc::vec::Vec;

use crate::action::{ActionChunk, ActionFrame, ACTION_DIM};
use crate::depth::{FeaturePipeline, FUSED_CHANNELS};
use crate::episode::{slice_chunk, Episode, EpisodeError};
use crate::policy::linear::{Dataset, LinearChunkPolicy, TrainError};
use crate::policy::{Policy, PolicyError, PolicyInput};

pub const OBSERVATION_FEATURES: usize = FUSED_CHANNELS + ACTION_DIM;

/// Pooled fused features for every frame of an episode with observations.
pub fn episode_features(pipeline: &FeaturePipeline, episode: &Episode) -> Result<Vec<Vec<f64>>, PolicyError> {
    episode
        .frames
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let obs = frame
                .observation
                .as_ref()
                .ok_or(PolicyError::MissingFeatures(t as i64))?;
            Ok(pipeline.pooled(obs)?)
        })
        .collect()
}

pub fn query_features(pooled: &[f64], previous: &ActionFrame) -> Vec<f64> {
    let mut x = Vec::with_capacity(pooled.len() + ACTION_DIM);
    x.extend_from_slice(pooled);
    x.extend(previous.values().iter().map(|&v| v as f64));
    x
}

/// One sample per tick: features observed at `t` with the recorded frame
/// `t − 1` as the previous command, target the next `k` recorded frames.
pub fn chunk_dataset(pooled: &[Vec<f64>], episode: &Episode, k: usize) -> Result<Dataset, TrainError> {
    if pooled.is_empty() || episode.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut data = Dataset::new(pooled[0].len() + ACTION_DIM, k * ACTION_DIM);
    for (t, p) in pooled.iter().enumerate().take(episode.len()) {
        let previous = episode.action_clamped(t as i64 - 1);
        let target = slice_chunk(episode, t, k)
            .map_err(|_: EpisodeError| TrainError::BadOutputDim(k * ACTION_DIM))?
            .flatten();
        data.push(&query_features(p, previous), &target)?;
    }
    Ok(data)
}

/// A trained linear model bound to the precomputed features of the episode
/// it is executed on.
#[derive(Debug, Clone)]
pub struct ObservationPolicy<'a> {
    model: &'a LinearChunkPolicy,
    pooled: &'a [Vec<f64>],
}

impl<'a> ObservationPolicy<'a> {
    pub fn new(model: &'a LinearChunkPolicy, pooled: &'a [Vec<f64>]) -> Result<Self, PolicyError> {
        if pooled.is_empty() {
            return Err(PolicyError::MissingFeatures(0));
        }
        let expected = model.feature_dim();
        let got = pooled[0].len() + ACTION_DIM;
        if expected != got {
            return Err(PolicyError::FeatureDim { expected, got });
        }
        Ok(Self { model, pooled })
    }
}

impl Policy for ObservationPolicy<'_> {
    fn chunk_length(&self) -> usize {
        self.model.chunk_length()
    }

    fn predict(&self, input: &PolicyInput<'_>) -> Result<ActionChunk, PolicyError> {
        let last = self.pooled.len() as i64 - 1;
        if input.observed_tick > last {
            return Err(PolicyError::MissingFeatures(input.observed_tick));
        }
        let idx = input.observed_tick.clamp(0, last) as usize;
        let x = query_features(&self.pooled[idx], input.previous);
        self.model.predict(&x, input.observed_tick)
    }
}
