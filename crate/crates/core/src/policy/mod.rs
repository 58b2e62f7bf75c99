//! The chunk policy contract and its implementations.
//!
//! A policy maps what it can observe at a query tick to a chunk of `k`
//! future frames. Every emitted frame is clamped into the valid action
//! ranges before it leaves the policy.

use thiserror::Error;

use crate::action::{ActionChunk, ActionFrame};
use crate::depth::DepthError;
use crate::episode::EpisodeError;

pub mod gradcheck;
pub mod learned;
pub mod linear;
pub mod oracle;

pub use learned::ObservationPolicy;
pub use linear::{train_linear_policy, Dataset, LinearChunkPolicy, TrainConfig};
pub use oracle::{oracle_predict, OraclePolicy, OracleSpec};

/// What the executor hands a policy at a query.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    /// Tick at which the query is issued. Negative for queries issued
    /// before the simulated window (pipeline priming).
    pub query_tick: i64,
    /// Tick of the observation the query sees (query tick minus perception delay).
    pub observed_tick: i64,
    /// The most recently commanded frame.
    pub previous: &'a ActionFrame,
}

pub trait Policy {
    fn chunk_length(&self) -> usize;

    fn predict(&self, input: &PolicyInput<'_>) -> Result<ActionChunk, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn chunk_length(&self) -> usize {
        (**self).chunk_length()
    }

    fn predict(&self, input: &PolicyInput<'_>) -> Result<ActionChunk, PolicyError> {
        (**self).predict(input)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error("feature vector has {got} entries, policy expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("no features available for tick {0}")]
    MissingFeatures(i64),
    #[error("policy parameters are malformed: {0}")]
    Malformed(&'static str),
}
