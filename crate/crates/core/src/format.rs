//! Byte-exact codecs for the episode container and the learned-policy sidecar.
//!
//! Episode container, all little-endian:
//!
//! ```text
//! "FABG" | version u16 = 1 | flags u16 | rate_hz f32 | frame_count u32
//!        | action_dim u16 = 61 | reserved u16 = 0                 (20 bytes)
//! frame_count × 61 × f32 action values
//! if flags & 1:
//!     frame_count × (height u16, width u16, channels u16, offset u64)
//!     raw f32 tensor region
//! ```
//!
//! An observation tensor has 7 channels: left RGB (H·W·3, interleaved), right
//! RGB (H·W·3), then depth (H·W). Offsets are relative to the start of the
//! tensor region. Frames without an observation store shape `(0, 0, 0)`.
//!
//! Policy sidecar: `"FABP" | version u16 = 1 | k u16 | F u32`, then the
//! `(k·61) × F` weight matrix row-major and the `k·61` bias, as f32.

use alloc::vec::Vec;
use thiserror::Error;

use crate::action::{validate_frame, ActionFrame, ACTION_DIM};
use crate::episode::{Episode, EpisodeError, EpisodeFrame, Observation, Plane, RgbImage, INVALID_DEPTH};
use crate::policy::linear::LinearChunkPolicy;

pub const EPISODE_MAGIC: [u8; 4] = *b"FABG";
pub const POLICY_MAGIC: [u8; 4] = *b"FABP";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
pub const FLAG_OBSERVATIONS: u16 = 1;
pub const OBSERVATION_CHANNELS: u16 = 7;
const INDEX_ENTRY_LEN: usize = 14;
const POLICY_HEADER_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported action dimension {0}")]
    UnsupportedActionDim(u16),
    #[error("truncated payload: expected {expected} bytes, {available} available")]
    Truncated { expected: usize, available: usize },
    #[error("NaN action value at frame {frame}, dim {dim}")]
    NanAction { frame: usize, dim: usize },
    #[error("observation index entry {frame} is malformed")]
    BadObservationIndex { frame: usize },
    #[error("observation at frame {frame} does not fit the u16 shape fields")]
    ObservationTooLarge { frame: usize },
    #[error("episode has {0} frames, more than the u32 frame count allows")]
    TooManyFrames(usize),
    #[error("policy chunk length {0} does not fit the sidecar header")]
    PolicyTooLarge(usize),
    #[error("invariant violation: {0}")]
    Invalid(#[from] EpisodeError),
}

/// Options applied while decoding an episode.
#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Replacement for invalid (`+inf`) depth pixels.
    pub invalid_depth: f32,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            invalid_depth: INVALID_DEPTH,
        }
    }
}

/// Exact encoded size of an episode, without encoding it.
pub fn encoded_len(episode: &Episode) -> usize {
    let mut n = HEADER_LEN + episode.len() * ACTION_DIM * 4;
    if episode.has_observations() {
        n += episode.len() * INDEX_ENTRY_LEN;
        n += episode
            .frames
            .iter()
            .filter_map(|f| f.observation.as_ref())
            .map(|o| o.height() * o.width() * OBSERVATION_CHANNELS as usize * 4)
            .sum::<usize>();
    }
    n
}

pub fn encode_episode(episode: &Episode) -> Result<Vec<u8>, FormatError> {
    episode.validate()?;
    let frame_count = u32::try_from(episode.len()).map_err(|_| FormatError::TooManyFrames(episode.len()))?;
    let with_obs = episode.has_observations();
    let mut out = Vec::with_capacity(encoded_len(episode));
    out.extend_from_slice(&EPISODE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let flags = if with_obs { FLAG_OBSERVATIONS } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&episode.rate_hz.to_le_bytes());
    out.extend_from_slice(&frame_count.to_le_bytes());
    out.extend_from_slice(&(ACTION_DIM as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());

    for frame in &episode.frames {
        for v in frame.action.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if !with_obs {
        return Ok(out);
    }

    let mut offset = 0u64;
    for (i, frame) in episode.frames.iter().enumerate() {
        let (h, w, c) = match &frame.observation {
            Some(o) => {
                let h = u16::try_from(o.height()).map_err(|_| FormatError::ObservationTooLarge { frame: i })?;
                let w = u16::try_from(o.width()).map_err(|_| FormatError::ObservationTooLarge { frame: i })?;
                (h, w, OBSERVATION_CHANNELS)
            }
            None => (0, 0, 0),
        };
        for s in [h, w, c] {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += h as u64 * w as u64 * c as u64 * 4;
    }
    for obs in episode.frames.iter().filter_map(|f| f.observation.as_ref()) {
        for v in obs
            .rgb_left
            .data
            .iter()
            .chain(&obs.rgb_right.data)
            .chain(&obs.depth.data)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_episode(bytes: &[u8]) -> Result<Episode, FormatError> {
    decode_episode_with(bytes, &ReadOptions::default())
}

pub fn decode_episode_with(bytes: &[u8], options: &ReadOptions) -> Result<Episode, FormatError> {
    let mut r = Reader::new(bytes);
    r.need(HEADER_LEN)?;
    let magic = r.array4();
    if magic != EPISODE_MAGIC {
        return Err(FormatError::BadMagic {
            found: magic,
            expected: EPISODE_MAGIC,
        });
    }
    let version = r.u16();
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let flags = r.u16();
    let rate_hz = r.f32();
    let frame_count = r.u32() as usize;
    let action_dim = r.u16();
    let _reserved = r.u16();
    if action_dim as usize != ACTION_DIM {
        return Err(FormatError::UnsupportedActionDim(action_dim));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(EpisodeError::BadRate(rate_hz).into());
    }

    let actions_len = frame_count
        .checked_mul(ACTION_DIM * 4)
        .ok_or(FormatError::TooManyFrames(frame_count))?;
    r.need(actions_len)?;
    let mut frames = Vec::with_capacity(frame_count);
    for frame in 0..frame_count {
        let mut values = [0f32; ACTION_DIM];
        for (dim, v) in values.iter_mut().enumerate() {
            *v = r.f32();
            if v.is_nan() {
                return Err(FormatError::NanAction { frame, dim });
            }
        }
        let action = ActionFrame::from_array(values);
        if let Err(mut v) = validate_frame(&action) {
            return Err(EpisodeError::InvalidFrame {
                tick: frame,
                violation: v.swap_remove(0),
            }
            .into());
        }
        frames.push(EpisodeFrame {
            action,
            observation: None,
        });
    }

    if flags & FLAG_OBSERVATIONS != 0 {
        let index_len = frame_count * INDEX_ENTRY_LEN;
        r.need(index_len)?;
        let mut index = Vec::with_capacity(frame_count);
        for _ in 0..frame_count {
            let (h, w, c) = (r.u16() as usize, r.u16() as usize, r.u16());
            index.push((h, w, c, r.u64()));
        }
        let region_start = r.pos;
        let region = &bytes[region_start..];
        for (i, &(h, w, c, offset)) in index.iter().enumerate() {
            if c == 0 {
                if h != 0 || w != 0 {
                    return Err(FormatError::BadObservationIndex { frame: i });
                }
                continue;
            }
            if c != OBSERVATION_CHANNELS {
                return Err(FormatError::BadObservationIndex { frame: i });
            }
            let len = h * w * c as usize * 4;
            let start = usize::try_from(offset).map_err(|_| FormatError::BadObservationIndex { frame: i })?;
            let end = start
                .checked_add(len)
                .ok_or(FormatError::BadObservationIndex { frame: i })?;
            if end > region.len() {
                return Err(FormatError::Truncated {
                    expected: region_start + end,
                    available: bytes.len(),
                });
            }
            let mut t = Reader::new(&region[start..end]);
            let mut read_vec = |n: usize| (0..n).map(|_| t.f32()).collect::<Vec<f32>>();
            let left = read_vec(h * w * 3);
            let right = read_vec(h * w * 3);
            let depth = read_vec(h * w)
                .into_iter()
                .map(|d| if d == INVALID_DEPTH { options.invalid_depth } else { d })
                .collect();
            let obs = Observation {
                tick: i as u64,
                rgb_left: RgbImage {
                    height: h,
                    width: w,
                    data: left,
                },
                rgb_right: RgbImage {
                    height: h,
                    width: w,
                    data: right,
                },
                depth: Plane {
                    height: h,
                    width: w,
                    data: depth,
                },
            };
            frames[i].observation = Some(obs);
        }
    }

    let episode = Episode { rate_hz, frames };
    if options.invalid_depth == INVALID_DEPTH {
        episode.validate()?;
    }
    Ok(episode)
}

pub fn encode_policy(policy: &LinearChunkPolicy) -> Result<Vec<u8>, FormatError> {
    let k = u16::try_from(policy.chunk_length()).map_err(|_| FormatError::PolicyTooLarge(policy.chunk_length()))?;
    let f = u32::try_from(policy.feature_dim()).map_err(|_| FormatError::PolicyTooLarge(policy.chunk_length()))?;
    let mut out = Vec::with_capacity(POLICY_HEADER_LEN + (policy.weights().len() + policy.bias().len()) * 4);
    out.extend_from_slice(&POLICY_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&f.to_le_bytes());
    for &v in policy.weights().iter().chain(policy.bias()) {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_policy(bytes: &[u8]) -> Result<LinearChunkPolicy, FormatError> {
    let mut r = Reader::new(bytes);
    r.need(POLICY_HEADER_LEN)?;
    let magic = r.array4();
    if magic != POLICY_MAGIC {
        return Err(FormatError::BadMagic {
            found: magic,
            expected: POLICY_MAGIC,
        });
    }
    let version = r.u16();
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let k = r.u16() as usize;
    let f = r.u32() as usize;
    let outputs = k * ACTION_DIM;
    r.need((outputs * f + outputs) * 4)?;
    let weights = (0..outputs * f).map(|_| r.f32() as f64).collect();
    let bias = (0..outputs).map(|_| r.f32() as f64).collect();
    LinearChunkPolicy::from_parts(k, f, weights, bias).map_err(|_| FormatError::PolicyTooLarge(k))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn need(&self, n: usize) -> Result<(), FormatError> {
        let expected = self.pos + n;
        if expected > self.bytes.len() {
            Err(FormatError::Truncated {
                expected,
                available: self.bytes.len(),
            })
        } else {
            Ok(())
        }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    fn array4(&mut self) -> [u8; 4] {
        self.take::<4>()
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Plane;
    use alloc::string::ToString;

    fn one_frame() -> Episode {
        let mut f = ActionFrame::zero();
        f.set(17, 0.25);
        Episode::from_actions(30.0, [f])
    }

    #[test]
    fn empty_episode_is_header_only() {
        let bytes = encode_episode(&Episode::new(30.0)).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], b"FABG");
        assert_eq!(decode_episode(&bytes).unwrap(), Episode::new(30.0));
    }

    #[test]
    fn single_frame_without_observations() {
        let e = one_frame();
        let bytes = encode_episode(&e).unwrap();
        assert_eq!(bytes.len(), 20 + 61 * 4);
        assert_eq!(bytes.len(), encoded_len(&e));
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]) & FLAG_OBSERVATIONS, 0);
        assert_eq!(decode_episode(&bytes).unwrap(), e);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_episode(&one_frame()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_episode(&bytes),
            Err(FormatError::BadMagic { found, .. }) if &found == b"XXXX"
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode_episode(&one_frame()).unwrap();
        bytes[4] = 9;
        assert_eq!(decode_episode(&bytes), Err(FormatError::UnsupportedVersion(9)));
    }

    #[test]
    fn truncation_names_byte_counts() {
        let bytes = encode_episode(&one_frame()).unwrap();
        let cut = &bytes[..100];
        assert_eq!(
            decode_episode(cut),
            Err(FormatError::Truncated {
                expected: 264,
                available: 100
            })
        );
        assert!(decode_episode(cut)
            .unwrap_err()
            .to_string()
            .contains("expected 264 bytes, 100 available"));
    }

    #[test]
    fn nan_action_is_rejected() {
        let mut bytes = encode_episode(&one_frame()).unwrap();
        let at = HEADER_LEN + 5 * 4;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(decode_episode(&bytes), Err(FormatError::NanAction { frame: 0, dim: 5 }));
    }

    #[test]
    fn invalid_episode_is_not_written() {
        let mut e = one_frame();
        e.frames[0].action.set(3, 4.0);
        assert!(matches!(encode_episode(&e), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn observations_round_trip_with_sentinel() {
        let mut e = one_frame();
        let mut depth = Plane::filled(2, 3, 1.5f32);
        depth.set(1, 2, INVALID_DEPTH);
        e.frames[0].observation = Some(Observation {
            tick: 0,
            rgb_left: RgbImage::filled(2, 3, [0.1, 0.2, 0.3]),
            rgb_right: RgbImage::filled(2, 3, [0.4, 0.5, 0.6]),
            depth,
        });
        let bytes = encode_episode(&e).unwrap();
        assert_eq!(bytes.len(), 20 + 244 + 14 + 2 * 3 * 7 * 4);
        assert_eq!(decode_episode(&bytes).unwrap(), e);

        let marked = decode_episode_with(&bytes, &ReadOptions { invalid_depth: -1.0 }).unwrap();
        let d = &marked.frames[0].observation.as_ref().unwrap().depth;
        assert_eq!(d.get(1, 2), -1.0);
        assert_eq!(d.get(0, 0), 1.5);
    }

    #[test]
    fn policy_sidecar_round_trips_through_f32() {
        let weights: Vec<f64> = (0..2 * 61 * 3).map(|i| i as f64 * 0.5).collect();
        let bias: Vec<f64> = (0..2 * 61).map(|i| -(i as f64)).collect();
        let p = LinearChunkPolicy::from_parts(2, 3, weights, bias).unwrap();
        let bytes = encode_policy(&p).unwrap();
        assert_eq!(&bytes[..4], b"FABP");
        assert_eq!(bytes.len(), 12 + (2 * 61 * 3 + 2 * 61) * 4);
        let back = decode_policy(&bytes).unwrap();
        assert_eq!(back.weights(), p.weights());
        assert_eq!(back.bias(), p.bias());
        assert!(matches!(
            decode_policy(&bytes[..50]),
            Err(FormatError::Truncated { .. })
        ));
    }
}
