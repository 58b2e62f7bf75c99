//! Affine mapping from action frames to servo pulse widths.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::action::{ActionFrame, ACTION_DIM, BLENDSHAPE_COUNT, HEAD_PITCH, HEAD_ROLL, HEAD_YAW};

pub const PWM_CHANNELS: usize = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwmError {
    #[error("mapping matrix must be {PWM_CHANNELS}x{ACTION_DIM}, got {0} entries")]
    MatrixShape(usize),
    #[error("offsets must have {PWM_CHANNELS} entries, got {0}")]
    OffsetShape(usize),
    #[error("pulse range [{min}, {max}] is empty or non-finite")]
    BadRange { min: f64, max: f64 },
    #[error("mapping contains a non-finite coefficient")]
    NonFinite,
}

/// `clamp(M · frame + offsets, pwm_min, pwm_max)` in microseconds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PwmMapping {
    /// Row-major 25 × 61.
    matrix: Vec<f64>,
    offsets: Vec<f64>,
    pwm_min: f64,
    pwm_max: f64,
}

impl PwmMapping {
    pub fn new(matrix: Vec<f64>, offsets: Vec<f64>, pwm_min: f64, pwm_max: f64) -> Result<Self, PwmError> {
        if matrix.len() != PWM_CHANNELS * ACTION_DIM {
            return Err(PwmError::MatrixShape(matrix.len()));
        }
        if offsets.len() != PWM_CHANNELS {
            return Err(PwmError::OffsetShape(offsets.len()));
        }
        if !(pwm_min.is_finite() && pwm_max.is_finite() && pwm_min <= pwm_max) {
            return Err(PwmError::BadRange {
                min: pwm_min,
                max: pwm_max,
            });
        }
        if !matrix.iter().chain(&offsets).all(|v| v.is_finite()) {
            return Err(PwmError::NonFinite);
        }
        Ok(Self {
            matrix,
            offsets,
            pwm_min,
            pwm_max,
        })
    }

    /// Channel `i` reads action dimension `i` with the given gain.
    pub fn identity_block(gain: f64, offset: f64, pwm_min: f64, pwm_max: f64) -> Result<Self, PwmError> {
        let mut m = vec![0.0; PWM_CHANNELS * ACTION_DIM];
        for i in 0..PWM_CHANNELS {
            m[i * ACTION_DIM + i] = gain;
        }
        Self::new(m, vec![offset; PWM_CHANNELS], pwm_min, pwm_max)
    }

    /// Reference mapping for a 25-servo face.
    ///
    /// Channels 0..22 each average the blendshapes whose index is congruent
    /// to the channel modulo 22 and span 1000..2000 µs over [0, 1]. Channels
    /// 22, 23, 24 drive roll, pitch and yaw around 1500 µs at 500/π µs per radian.
    pub fn synthetic() -> Self {
        const FACE: usize = PWM_CHANNELS - 3;
        let mut m = vec![0.0; PWM_CHANNELS * ACTION_DIM];
        let mut offsets = vec![1000.0; PWM_CHANNELS];
        for c in 0..FACE {
            let members: Vec<usize> = (0..BLENDSHAPE_COUNT).filter(|j| j % FACE == c).collect();
            for &j in &members {
                m[c * ACTION_DIM + j] = 1000.0 / members.len() as f64;
            }
        }
        for (c, dim) in [(FACE, HEAD_ROLL), (FACE + 1, HEAD_PITCH), (FACE + 2, HEAD_YAW)] {
            m[c * ACTION_DIM + dim] = 500.0 / core::f64::consts::PI;
            offsets[c] = 1500.0;
        }
        Self::new(m, offsets, 1000.0, 2000.0).expect("reference mapping is well formed")
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn range(&self) -> (f64, f64) {
        (self.pwm_min, self.pwm_max)
    }

    /// The affine output before clamping.
    pub fn affine(&self, frame: &ActionFrame) -> [f64; PWM_CHANNELS] {
        let mut out = [0.0; PWM_CHANNELS];
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[c * ACTION_DIM..(c + 1) * ACTION_DIM];
            *o = self.offsets[c] + row.iter().zip(frame.values()).map(|(m, &v)| m * v as f64).sum::<f64>();
        }
        out
    }
}

pub fn map_to_pwm(frame: &ActionFrame, mapping: &PwmMapping) -> [f64; PWM_CHANNELS] {
    let mut out = mapping.affine(frame);
    for v in out.iter_mut() {
        *v = v.clamp(mapping.pwm_min, mapping.pwm_max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame_maps_to_offsets() {
        let m = PwmMapping::identity_block(1000.0, 1500.0, 1000.0, 2000.0).unwrap();
        assert_eq!(map_to_pwm(&ActionFrame::zero(), &m), [1500.0; PWM_CHANNELS]);
    }

    #[test]
    fn output_is_clamped() {
        let m = PwmMapping::identity_block(1000.0, 1500.0, 1000.0, 2000.0).unwrap();
        let mut f = ActionFrame::zero();
        f.set(3, 1.0);
        let out = map_to_pwm(&f, &m);
        assert_eq!(m.affine(&f)[3], 2500.0);
        assert_eq!(out[3], 2000.0);
        assert_eq!(out[4], 1500.0);
    }

    #[test]
    fn synthetic_mapping_stays_in_range() {
        let m = PwmMapping::synthetic();
        let mut f = ActionFrame::zero();
        f.values_mut().iter_mut().for_each(|v| *v = 1.0);
        f.set(HEAD_YAW, 3.0);
        assert!(map_to_pwm(&f, &m).iter().all(|v| (1000.0..=2000.0).contains(v)));
    }

    #[test]
    fn shape_errors() {
        assert_eq!(
            PwmMapping::new(vec![0.0; 3], vec![0.0; PWM_CHANNELS], 0.0, 1.0),
            Err(PwmError::MatrixShape(3))
        );
        assert!(PwmMapping::identity_block(1.0, 0.0, 2.0, 1.0).is_err());
    }
}
