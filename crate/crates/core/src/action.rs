//! Action frames and chunks.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

/// Number of facial blendshape coefficients in a frame.
pub const BLENDSHAPE_COUNT: usize = 58;
/// Blendshapes followed by head roll, pitch, yaw.
pub const ACTION_DIM: usize = BLENDSHAPE_COUNT + 3;

pub const HEAD_ROLL: usize = BLENDSHAPE_COUNT;
pub const HEAD_PITCH: usize = BLENDSHAPE_COUNT + 1;
pub const HEAD_YAW: usize = BLENDSHAPE_COUNT + 2;

/// Index of the jaw-open coefficient in [`BLENDSHAPE_NAMES`].
pub const JAW_OPEN: usize = 17;

/// Positional names of the blendshape coefficients. Storage is positional;
/// these are metadata only. The first 52 follow the ARKit listing order, the
/// remaining six slots are device extensions.
pub const BLENDSHAPE_NAMES: [&str; BLENDSHAPE_COUNT] = [
    "eyeBlinkLeft",
    "eyeLookDownLeft",
    "eyeLookInLeft",
    "eyeLookOutLeft",
    "eyeLookUpLeft",
    "eyeSquintLeft",
    "eyeWideLeft",
    "eyeBlinkRight",
    "eyeLookDownRight",
    "eyeLookInRight",
    "eyeLookOutRight",
    "eyeLookUpRight",
    "eyeSquintRight",
    "eyeWideRight",
    "jawForward",
    "jawLeft",
    "jawRight",
    "jawOpen",
    "mouthClose",
    "mouthFunnel",
    "mouthPucker",
    "mouthLeft",
    "mouthRight",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthDimpleLeft",
    "mouthDimpleRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
    "cheekPuff",
    "cheekSquintLeft",
    "cheekSquintRight",
    "noseSneerLeft",
    "noseSneerRight",
    "tongueOut",
    "ext52",
    "ext53",
    "ext54",
    "ext55",
    "ext56",
    "ext57",
];

/// One commanded (or predicted) robot action: 58 blendshape coefficients in
/// `[0, 1]` followed by head roll/pitch/yaw in radians within `[-π, π]`.
#[derive(Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActionFrame {
    #[cfg_attr(feature = "serde", serde(with = "frame_serde"))]
    values: [f32; ACTION_DIM],
}

impl fmt::Debug for ActionFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.values.iter()).finish()
    }
}

impl Default for ActionFrame {
    fn default() -> Self {
        Self::zero()
    }
}

impl ActionFrame {
    pub const fn zero() -> Self {
        Self {
            values: [0.0; ACTION_DIM],
        }
    }

    pub const fn from_array(values: [f32; ACTION_DIM]) -> Self {
        Self { values }
    }

    /// Builds a frame from a slice of exactly [`ACTION_DIM`] values.
    pub fn from_slice(values: &[f32]) -> Option<Self> {
        let values: [f32; ACTION_DIM] = values.try_into().ok()?;
        Some(Self { values })
    }

    /// Builds a frame from `f64` values, clamping every entry into its valid range.
    pub fn clamped_from_f64(values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), ACTION_DIM);
        let mut out = Self::zero();
        for (i, (dst, &v)) in out.values.iter_mut().zip(values).enumerate() {
            *dst = clamp_dim(i, v) as f32;
        }
        out
    }

    pub fn values(&self) -> &[f32; ACTION_DIM] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32; ACTION_DIM] {
        &mut self.values
    }

    pub fn blendshapes(&self) -> &[f32] {
        &self.values[..BLENDSHAPE_COUNT]
    }

    pub fn head_rpy(&self) -> &[f32] {
        &self.values[BLENDSHAPE_COUNT..]
    }

    pub fn get(&self, dim: usize) -> f32 {
        self.values[dim]
    }

    pub fn set(&mut self, dim: usize, value: f32) {
        self.values[dim] = value;
    }

    /// Clamps every entry into its valid range. NaN entries become the range minimum.
    pub fn clamp_to_valid(&mut self) {
        for (i, v) in self.values.iter_mut().enumerate() {
            *v = clamp_dim(i, *v as f64) as f32;
        }
    }

    pub fn is_valid(&self) -> bool {
        validate_frame(self).is_ok()
    }
}

/// Valid `[min, max]` range of action dimension `dim`.
pub fn dim_range(dim: usize) -> (f64, f64) {
    if dim < BLENDSHAPE_COUNT {
        (0.0, 1.0)
    } else {
        (-PI, PI)
    }
}

fn clamp_dim(dim: usize, v: f64) -> f64 {
    // Angles clamp to the largest f32 inside [-π, π] so the f32 cast stays valid.
    let (lo, hi) = if dim < BLENDSHAPE_COUNT {
        (0.0, 1.0)
    } else {
        (-PI_F32_IN, PI_F32_IN)
    };
    if v.is_nan() {
        lo
    } else {
        v.clamp(lo, hi)
    }
}

// Largest f32 not exceeding π, widened to f64.
const PI_F32_IN: f64 = 3.141_592_502_593_994;

/// A single invariant violation found by [`validate_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameViolation {
    pub dim: usize,
    pub value: f32,
}

impl FrameViolation {
    pub fn field(&self) -> String {
        if self.dim < BLENDSHAPE_COUNT {
            alloc::format!("blendshapes[{}]", self.dim)
        } else {
            alloc::format!("head_rpy[{}]", self.dim - BLENDSHAPE_COUNT)
        }
    }
}

impl fmt::Display for FrameViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim < BLENDSHAPE_COUNT {
            write!(f, "{} out of [0,1] (value {})", self.field(), self.value)
        } else {
            write!(f, "{} out of [-π, π] (value {})", self.field(), self.value)
        }
    }
}

/// Checks every frame invariant, returning all violations. Never panics.
pub fn validate_frame(frame: &ActionFrame) -> Result<(), Vec<FrameViolation>> {
    let violations: Vec<FrameViolation> = frame
        .values
        .iter()
        .enumerate()
        .filter(|&(dim, &v)| {
            let (lo, hi) = dim_range(dim);
            let v = v as f64;
            !(v >= lo && v <= hi)
        })
        .map(|(dim, &value)| FrameViolation { dim, value })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// `k` predicted frames; `actions[i]` is the prediction for tick `origin_tick + i`.
///
/// `origin_tick` is the tick of the observation the chunk was predicted from,
/// which may be negative for queries issued before the simulated window.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub origin_tick: i64,
    pub actions: Vec<ActionFrame>,
    /// Set when the tail was padded by repeating the last available frame.
    pub padded: bool,
}

impl ActionChunk {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Row-major `k × ACTION_DIM` values as `f64`.
    pub fn flatten(&self) -> Vec<f64> {
        self.actions
            .iter()
            .flat_map(|a| a.values.iter().map(|&v| v as f64))
            .collect()
    }
}

#[cfg(feature = "serde")]
mod frame_serde {
    use super::ACTION_DIM;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f32; ACTION_DIM], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f32; ACTION_DIM], D::Error> {
        let v = Vec::<f32>::deserialize(d)?;
        let len = v.len();
        v.try_into()
            .map_err(|_| serde::de::Error::invalid_length(len, &"61 action values"))
    }
}
