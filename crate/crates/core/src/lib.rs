//! Allocation-only core of the fabg simulator.
//!
//! Everything here is a pure function of its inputs: the action and episode
//! data model, the binary episode container codec, the RGB-D preprocessing
//! and fusion pipeline, the chunk policies, the three chunk execution
//! strategies, the synthetic scenario generators, and the trajectory
//! metrics. File IO, configuration, and the CLI live in the `fabg` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod action;
pub mod depth;
pub mod episode;
pub mod executor;
pub mod format;
pub mod metrics;
pub mod policy;
pub mod pwm;
pub mod rng;
pub mod scenario;

pub use action::{ActionChunk, ActionFrame, FrameViolation, ACTION_DIM, BLENDSHAPE_COUNT};
pub use episode::{Episode, EpisodeError, EpisodeFrame, LatencyModel, Observation};
pub use executor::{ExecutionTrace, StrategyConfig, StrategyKind};
