//! Synthetic demonstrations and stimulus scenarios.

use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use thiserror::Error;

use crate::action::{dim_range, ActionFrame, ACTION_DIM, BLENDSHAPE_COUNT, HEAD_PITCH, HEAD_YAW, JAW_OPEN};
use crate::episode::{Episode, EpisodeFrame, Observation, Plane, RgbImage, INVALID_DEPTH};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioKind {
    Step,
    SustainedOpen,
    RapidCycle,
    TrackingSine,
    GestureSwitch,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Step => "step",
            ScenarioKind::SustainedOpen => "sustained_open",
            ScenarioKind::RapidCycle => "rapid_cycle",
            ScenarioKind::TrackingSine => "tracking_sine",
            ScenarioKind::GestureSwitch => "gesture_switch",
        }
    }

    pub fn is_cyclic(self) -> bool {
        matches!(self, ScenarioKind::RapidCycle | ScenarioKind::TrackingSine)
    }

    fn uses_period(self) -> bool {
        self.is_cyclic() || self == ScenarioKind::GestureSwitch
    }

    pub fn default_target(self) -> usize {
        match self {
            ScenarioKind::TrackingSine => HEAD_YAW,
            _ => JAW_OPEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration_ticks: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_rate"))]
    pub rate_hz: f32,
    /// Driven dimension; defaults to jaw opening, or head yaw for `tracking_sine`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub target_dim: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default = "default_amplitude"))]
    pub amplitude: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub period_ticks: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

#[cfg(feature = "serde")]
fn default_rate() -> f32 {
    30.0
}

#[cfg(feature = "serde")]
fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("duration_ticks must be at least 1")]
    ZeroDuration,
    #[error("rate_hz must be positive and finite, got {0}")]
    BadRate(f32),
    #[error("amplitude must lie in [0, 1], got {0}")]
    BadAmplitude(f64),
    #[error("{kind} needs period_ticks >= 2, got {period:?}")]
    BadPeriod { kind: &'static str, period: Option<usize> },
    #[error("target_dim {0} is not an action dimension")]
    BadTarget(usize),
    #[error("corpus needs at least one scenario")]
    EmptyCorpus,
    #[error("observation shape {height}x{width} is empty")]
    BadObservationShape { height: usize, width: usize },
    #[error("jitter must be finite and non-negative, got {0}")]
    BadJitter(f64),
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, duration_ticks: usize) -> Self {
        Self {
            kind,
            duration_ticks,
            rate_hz: 30.0,
            target_dim: None,
            amplitude: 1.0,
            period_ticks: None,
            seed: 0,
        }
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period_ticks = Some(period);
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_target(mut self, dim: usize) -> Self {
        self.target_dim = Some(dim);
        self
    }

    pub fn target(&self) -> usize {
        self.target_dim.unwrap_or_else(|| self.kind.default_target())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_ticks == 0 {
            return Err(ScenarioError::ZeroDuration);
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(ScenarioError::BadRate(self.rate_hz));
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(ScenarioError::BadAmplitude(self.amplitude));
        }
        if self.target() >= ACTION_DIM {
            return Err(ScenarioError::BadTarget(self.target()));
        }
        if self.kind.uses_period() && !self.period_ticks.is_some_and(|p| p >= 2) {
            return Err(ScenarioError::BadPeriod {
                kind: self.kind.name(),
                period: self.period_ticks,
            });
        }
        Ok(())
    }

    /// Tick at which the stimulus starts.
    pub fn onset(&self) -> usize {
        match self.kind {
            ScenarioKind::Step | ScenarioKind::SustainedOpen => self.duration_ticks / 4,
            _ => 0,
        }
    }

    /// Dimensions the scenario moves.
    pub fn driven_dims(&self) -> Vec<usize> {
        let mut dims = alloc::vec![self.target()];
        if self.kind == ScenarioKind::GestureSwitch {
            for d in [HEAD_PITCH, HEAD_YAW] {
                if !dims.contains(&d) {
                    dims.push(d);
                }
            }
        }
        dims
    }
}

/// Ticks of the sustained-open ramp: half a second, at least one.
pub fn ramp_ticks(rate_hz: f32) -> usize {
    (libm::floor(0.5 * rate_hz as f64 + 0.5) as usize).max(1)
}

fn raised_cosine(x: f64) -> f64 {
    0.5 - 0.5 * libm::cos(PI * x.clamp(0.0, 1.0))
}

/// Value a blendshape-style target takes for a signed unit input; head
/// dimensions take the input as radians.
fn place(dim: usize, signed: f64) -> f64 {
    if dim < BLENDSHAPE_COUNT {
        0.5 + 0.5 * signed
    } else {
        signed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gesture {
    Up,
    Down,
    Left,
    Right,
    Fist,
}

const GESTURES: [Gesture; 5] = [Gesture::Up, Gesture::Down, Gesture::Left, Gesture::Right, Gesture::Fist];

fn gesture_sequence(spec: &ScenarioSpec, segments: usize) -> Vec<Gesture> {
    let mut r = rng::stream(rng::mix(spec.seed, 0x6E57), 0);
    let mut out: Vec<Gesture> = Vec::with_capacity(segments);
    for _ in 0..segments {
        let g = loop {
            let g = GESTURES[r.random_range(0..GESTURES.len())];
            if out.last() != Some(&g) {
                break g;
            }
        };
        out.push(g);
    }
    out
}

/// Noise-free scenario episode.
pub fn generate(spec: &ScenarioSpec) -> Result<Episode, ScenarioError> {
    spec.validate()?;
    let t_len = spec.duration_ticks;
    let dim = spec.target();
    let a = spec.amplitude;
    let period = spec.period_ticks.unwrap_or(1);
    let gestures = if spec.kind == ScenarioKind::GestureSwitch {
        gesture_sequence(spec, t_len.div_ceil(period))
    } else {
        Vec::new()
    };

    let mut frames = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut f = [0.0f64; ACTION_DIM];
        match spec.kind {
            ScenarioKind::Step => {
                if (t_len / 4..3 * t_len / 4).contains(&t) {
                    f[dim] = a;
                }
            }
            ScenarioKind::SustainedOpen => {
                let ramp = ramp_ticks(spec.rate_hz) as f64;
                let up = raised_cosine((t as f64 - (t_len / 4) as f64) / ramp);
                let down = raised_cosine((t as f64 - (3 * t_len / 4) as f64) / ramp);
                f[dim] = a * (up - down);
            }
            ScenarioKind::RapidCycle => {
                let phase = (t % period) as f64 / period as f64;
                let tri = 1.0 - libm::fabs(2.0 * phase - 1.0);
                f[dim] = if dim < BLENDSHAPE_COUNT {
                    a * tri
                } else {
                    a * (2.0 * tri - 1.0)
                };
            }
            ScenarioKind::TrackingSine => {
                let s = libm::sin(2.0 * PI * (t % period) as f64 / period as f64);
                f[dim] = if dim < BLENDSHAPE_COUNT {
                    a * place(dim, s)
                } else {
                    a * s
                };
            }
            ScenarioKind::GestureSwitch => {
                let half = 0.5 * a;
                match gestures[t / period] {
                    Gesture::Up => f[HEAD_PITCH] = half,
                    Gesture::Down => f[HEAD_PITCH] = -half,
                    Gesture::Left => f[HEAD_YAW] = half,
                    Gesture::Right => f[HEAD_YAW] = -half,
                    Gesture::Fist => f[dim] = a,
                }
            }
        }
        frames.push(ActionFrame::clamped_from_f64(&f));
    }
    Ok(Episode::from_actions(spec.rate_hz, frames))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CorpusOptions {
    pub observations: bool,
    pub obs_height: usize,
    pub obs_width: usize,
    /// Standard deviation of the Gaussian jitter added to driven dimensions.
    pub jitter: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            observations: false,
            obs_height: 36,
            obs_width: 48,
            jitter: 0.01,
        }
    }
}

/// Position of `v` inside the valid range of `dim`, in `[0, 1]`.
fn unit_value(dim: usize, v: f64) -> f64 {
    let (lo, hi) = dim_range(dim);
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Synthetic stereo RGB-D capture whose central region encodes `level` in
/// `[0, 1]`: the face patch moves toward the camera and brightens as the
/// level rises. A sparse lattice of pixels reads as invalid depth.
pub fn synthetic_observation(tick: u64, level: f64, height: usize, width: usize) -> Observation {
    let level = level.clamp(0.0, 1.0);
    let inside = |y: usize, x: usize| {
        let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
        let dy = (y as f64 + 0.5 - cy) / (0.35 * height as f64);
        let dx = (x as f64 + 0.5 - cx) / (0.3 * width as f64);
        dy * dy + dx * dx <= 1.0
    };
    let depth = Plane::from_fn(height, width, |y, x| {
        if y % 11 == 5 && x % 13 == 7 {
            INVALID_DEPTH
        } else if inside(y, x) {
            (1.2 - 0.6 * level) as f32
        } else {
            3.5
        }
    });
    let shade = |shift: usize| {
        let mut img = RgbImage::filled(height, width, [0.2, 0.2, 0.25]);
        for y in 0..height {
            for x in 0..width {
                if inside(y, x.saturating_sub(shift).min(width - 1)) {
                    let v = (0.3 + 0.6 * level) as f32;
                    img.set_pixel(y, x, [v, 0.8 * v, 0.7 * v]);
                }
            }
        }
        img
    };
    Observation {
        tick,
        rgb_left: shade(0),
        rgb_right: shade(width / 32),
        depth,
    }
}

/// One jittered episode per spec, optionally with synthetic observations.
pub fn build_corpus(specs: &[ScenarioSpec], options: &CorpusOptions) -> Result<Vec<Episode>, ScenarioError> {
    if specs.is_empty() {
        return Err(ScenarioError::EmptyCorpus);
    }
    if options.observations && (options.obs_height == 0 || options.obs_width == 0) {
        return Err(ScenarioError::BadObservationShape {
            height: options.obs_height,
            width: options.obs_width,
        });
    }
    if !(options.jitter.is_finite() && options.jitter >= 0.0) {
        return Err(ScenarioError::BadJitter(options.jitter));
    }
    specs
        .iter()
        .map(|spec| {
            let mut ep = generate(spec)?;
            let dims = spec.driven_dims();
            if options.jitter > 0.0 {
                let mut r = rng::stream(rng::mix(spec.seed, 0x7177), 0);
                for frame in &mut ep.frames {
                    let mut raw: Vec<f64> = frame.action.values().iter().map(|&v| v as f64).collect();
                    for &d in &dims {
                        raw[d] += options.jitter * rng::normal(&mut r);
                    }
                    frame.action = ActionFrame::clamped_from_f64(&raw);
                }
            }
            if options.observations {
                let target = spec.target();
                ep.frames = ep
                    .frames
                    .into_iter()
                    .enumerate()
                    .map(|(t, f)| {
                        let level = unit_value(target, f.action.get(target) as f64);
                        EpisodeFrame {
                            observation: Some(synthetic_observation(
                                t as u64,
                                level,
                                options.obs_height,
                                options.obs_width,
                            )),
                            action: f.action,
                        }
                    })
                    .collect();
            }
            Ok(ep)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_profile() {
        let ep = generate(&ScenarioSpec::new(ScenarioKind::Step, 120)).unwrap();
        assert_eq!(ep.action(29).get(JAW_OPEN), 0.0);
        assert_eq!(ep.action(30).get(JAW_OPEN), 1.0);
        assert_eq!(ep.action(89).get(JAW_OPEN), 1.0);
        assert_eq!(ep.action(90).get(JAW_OPEN), 0.0);
    }

    #[test]
    fn triangle_peak_and_trough() {
        let ep = generate(&ScenarioSpec::new(ScenarioKind::RapidCycle, 30).with_period(10)).unwrap();
        assert_eq!(ep.action(5).get(JAW_OPEN), 1.0);
        assert_eq!(ep.action(10).get(JAW_OPEN), 0.0);
    }

    #[test]
    fn sustained_open_ramps_in_half_a_second() {
        let ep = generate(&ScenarioSpec::new(ScenarioKind::SustainedOpen, 120)).unwrap();
        assert_eq!(ep.action(30).get(JAW_OPEN), 0.0);
        assert_eq!(ep.action(45).get(JAW_OPEN), 1.0);
        assert!(ep.action(37).get(JAW_OPEN) > 0.0 && ep.action(37).get(JAW_OPEN) < 1.0);
        assert_eq!(ep.action(80).get(JAW_OPEN), 1.0);
        assert_eq!(ep.action(105).get(JAW_OPEN), 0.0);
    }

    #[test]
    fn validation() {
        assert_eq!(
            generate(&ScenarioSpec::new(ScenarioKind::Step, 0)),
            Err(ScenarioError::ZeroDuration)
        );
        assert!(matches!(
            generate(&ScenarioSpec::new(ScenarioKind::RapidCycle, 10)),
            Err(ScenarioError::BadPeriod { .. })
        ));
        assert!(generate(&ScenarioSpec::new(ScenarioKind::Step, 10).with_amplitude(1.5)).is_err());
        assert!(generate(&ScenarioSpec::new(ScenarioKind::Step, 10).with_target(61)).is_err());
    }

    #[test]
    fn gesture_switch_changes_every_period() {
        let spec = ScenarioSpec::new(ScenarioKind::GestureSwitch, 60)
            .with_period(10)
            .with_seed(4);
        let ep = generate(&spec).unwrap();
        for seg in 0..6 {
            let first = ep.action(seg * 10);
            assert!((seg * 10..seg * 10 + 10).all(|t| ep.action(t) == first));
            if seg > 0 {
                assert_ne!(ep.action(seg * 10 - 1), first);
            }
        }
        assert_eq!(ep, generate(&spec).unwrap());
    }

    #[test]
    fn corpus_observations_encode_the_target() {
        let spec = ScenarioSpec::new(ScenarioKind::Step, 8);
        let opts = CorpusOptions {
            observations: true,
            obs_height: 12,
            obs_width: 16,
            jitter: 0.0,
        };
        let ep = build_corpus(&[spec], &opts).unwrap().remove(0);
        ep.validate().unwrap();
        let low = ep.frames[0].observation.as_ref().unwrap();
        let high = ep.frames[2].observation.as_ref().unwrap();
        assert!(high.depth.get(6, 8) < low.depth.get(6, 8));
    }
}
