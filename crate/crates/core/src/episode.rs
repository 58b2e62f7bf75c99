//! Observations, demonstration episodes, and the pipeline latency model.

use alloc::vec::Vec;
use thiserror::Error;

use crate::action::{validate_frame, ActionChunk, ActionFrame, FrameViolation};

/// Depth value marking an invalid pixel.
pub const INVALID_DEPTH: f32 = f32::INFINITY;

/// Reference capture shape.
pub const REFERENCE_HEIGHT: usize = 480;
pub const REFERENCE_WIDTH: usize = 640;

/// A single-channel row-major image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: alloc::vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// An H×W×3 interleaved RGB image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self { height, width, data }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// One stereo RGB-D capture. Depth is in meters; invalid pixels hold [`INVALID_DEPTH`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub tick: u64,
    pub rgb_left: RgbImage,
    pub rgb_right: RgbImage,
    pub depth: Plane<f32>,
}

impl Observation {
    pub fn height(&self) -> usize {
        self.depth.height
    }

    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        let (h, w) = (self.depth.height, self.depth.width);
        let shapes_ok = self.depth.data.len() == h * w
            && [&self.rgb_left, &self.rgb_right]
                .iter()
                .all(|img| img.height == h && img.width == w && img.data.len() == h * w * 3);
        if !shapes_ok {
            return Err(EpisodeError::ObservationShape { tick: self.tick });
        }
        let rgb_ok = self
            .rgb_left
            .data
            .iter()
            .chain(&self.rgb_right.data)
            .all(|&v| (0.0..=1.0).contains(&v));
        let depth_ok = self
            .depth
            .data
            .iter()
            .all(|&d| d == INVALID_DEPTH || (d.is_finite() && d >= 0.0));
        if !rgb_ok || !depth_ok {
            return Err(EpisodeError::ObservationValue { tick: self.tick });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFrame {
    pub action: ActionFrame,
    pub observation: Option<Observation>,
}

/// A time-ordered demonstration. Frame `i` is tick `i`; ticks have no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub rate_hz: f32,
    pub frames: Vec<EpisodeFrame>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("rate_hz must be positive and finite, got {0}")]
    BadRate(f32),
    #[error("frame {tick}: {violation}")]
    InvalidFrame { tick: usize, violation: FrameViolation },
    #[error("observation at tick {tick} has inconsistent shapes")]
    ObservationShape { tick: u64 },
    #[error("observation at tick {tick} has out-of-range values")]
    ObservationValue { tick: u64 },
    #[error("observation stored at frame {index} claims tick {tick}")]
    ObservationTick { index: usize, tick: u64 },
    #[error("t beyond episode end (t = {t}, episode has {len} frames)")]
    TickBeyondEnd { t: usize, len: usize },
    #[error("chunk length must be at least 1")]
    ZeroChunkLength,
}

impl Episode {
    pub fn new(rate_hz: f32) -> Self {
        Self {
            rate_hz,
            frames: Vec::new(),
        }
    }

    pub fn from_actions(rate_hz: f32, actions: impl IntoIterator<Item = ActionFrame>) -> Self {
        Self {
            rate_hz,
            frames: actions
                .into_iter()
                .map(|action| EpisodeFrame {
                    action,
                    observation: None,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn action(&self, tick: usize) -> &ActionFrame {
        &self.frames[tick].action
    }

    pub fn actions(&self) -> impl ExactSizeIterator<Item = &ActionFrame> + '_ {
        self.frames.iter().map(|f| &f.action)
    }

    pub fn has_observations(&self) -> bool {
        self.frames.iter().any(|f| f.observation.is_some())
    }

    /// Action at `tick`, treating ticks before the start as the first frame and
    /// ticks past the end as the last frame.
    pub fn action_clamped(&self, tick: i64) -> &ActionFrame {
        let last = self.frames.len() as i64 - 1;
        &self.frames[tick.clamp(0, last.max(0)) as usize].action
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(EpisodeError::BadRate(self.rate_hz));
        }
        for (tick, frame) in self.frames.iter().enumerate() {
            if let Err(mut v) = validate_frame(&frame.action) {
                return Err(EpisodeError::InvalidFrame {
                    tick,
                    violation: v.swap_remove(0),
                });
            }
            if let Some(obs) = &frame.observation {
                if obs.tick != tick as u64 {
                    return Err(EpisodeError::ObservationTick {
                        index: tick,
                        tick: obs.tick,
                    });
                }
                obs.validate()?;
            }
        }
        Ok(())
    }
}

/// Ground-truth chunk extraction: frames `t..t+k`, padding past the end by
/// repeating the final frame.
pub fn slice_chunk(episode: &Episode, t: usize, k: usize) -> Result<ActionChunk, EpisodeError> {
    if k == 0 {
        return Err(EpisodeError::ZeroChunkLength);
    }
    if t >= episode.len() {
        return Err(EpisodeError::TickBeyondEnd { t, len: episode.len() });
    }
    let last = episode.len() - 1;
    let actions = (t..t + k).map(|i| *episode.action(i.min(last))).collect();
    Ok(ActionChunk {
        origin_tick: t as i64,
        actions,
        padded: t + k > episode.len(),
    })
}

/// Pipeline delays, in control ticks.
///
/// Perception delay ages the observation a query sees; inference and
/// communication delays postpone when the resulting chunk can be commanded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyModel {
    pub perception_delay: u32,
    pub inference_delay: u32,
    pub communication_delay: u32,
}

impl LatencyModel {
    pub const fn new(perception_delay: u32, inference_delay: u32, communication_delay: u32) -> Self {
        Self {
            perception_delay,
            inference_delay,
            communication_delay,
        }
    }

    pub const fn zero() -> Self {
        Self::new(0, 0, 0)
    }

    pub fn total(&self) -> u32 {
        self.perception_delay + self.inference_delay + self.communication_delay
    }

    /// Ticks between issuing a query and its chunk becoming commandable.
    pub fn dispatch_delay(&self) -> u32 {
        self.inference_delay + self.communication_delay
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn ramp(n: usize) -> Episode {
        Episode::from_actions(
            30.0,
            (0..n).map(|i| {
                let mut f = ActionFrame::zero();
                f.set(0, i as f32 / 10.0);
                f
            }),
        )
    }

    #[test]
    fn slice_inside_episode_is_not_padded() {
        let e = ramp(10);
        let c = slice_chunk(&e, 0, 5).unwrap();
        assert!(!c.padded);
        let got: Vec<f32> = c.actions.iter().map(|a| a.get(0)).collect();
        assert_eq!(got, [0.0, 0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn slice_past_end_repeats_last_frame() {
        let e = ramp(10);
        let c = slice_chunk(&e, 8, 5).unwrap();
        assert!(c.padded);
        let got: Vec<f32> = c.actions.iter().map(|a| a.get(0)).collect();
        assert_eq!(got, [0.8, 0.9, 0.9, 0.9, 0.9]);
    }

    #[test]
    fn slice_at_end_is_an_error() {
        let e = ramp(10);
        let err = slice_chunk(&e, 10, 5).unwrap_err();
        assert!(err.to_string().starts_with("t beyond episode end"));
        assert_eq!(slice_chunk(&e, 0, 0), Err(EpisodeError::ZeroChunkLength));
    }

    #[test]
    fn latency_total_sums_components() {
        let l = LatencyModel::new(1, 2, 3);
        assert_eq!(l.total(), 6);
        assert_eq!(l.dispatch_delay(), 5);
    }

    #[test]
    fn episode_validation_catches_bad_rate_and_frames() {
        let mut e = ramp(3);
        assert!(e.validate().is_ok());
        e.rate_hz = 0.0;
        assert_eq!(e.validate(), Err(EpisodeError::BadRate(0.0)));
        e.rate_hz = 30.0;
        e.frames[1].action.set(4, -0.5);
        assert!(matches!(e.validate(), Err(EpisodeError::InvalidFrame { tick: 1, .. })));
    }
}
