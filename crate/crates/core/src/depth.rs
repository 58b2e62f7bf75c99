//! Depth denoising and the dual-path RGB/depth feature extractor.
//!
//! The depth plane is smoothed with a normalized Gaussian kernel, the RGB
//! pair is summarized per patch on an 18×24 grid into 384 channels, the depth
//! plane runs through a small fixed-weight convolutional stack into 128
//! channels on the same grid, and the two are concatenated into 512 channels.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use thiserror::Error;

use crate::episode::{Observation, Plane, RgbImage};
use crate::rng;

pub const GRID_HEIGHT: usize = 18;
pub const GRID_WIDTH: usize = 24;
pub const RGB_CHANNELS: usize = 384;
pub const DEPTH_CHANNELS: usize = 128;
pub const FUSED_CHANNELS: usize = RGB_CHANNELS + DEPTH_CHANNELS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("kernel radius must be at least 1")]
    ZeroRadius,
    #[error("every depth pixel is invalid")]
    AllInvalid,
    #[error("depth plane has {count} unresolved invalid pixels")]
    UnresolvedSentinel { count: usize },
    #[error("left image is {left:?}, right image is {right:?}")]
    EyeShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("image {height}x{width} is smaller than the 18x24 patch grid")]
    TooSmall { height: usize, width: usize },
    #[error("spatial shape mismatch: {a:?} vs {b:?}")]
    SpatialMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
}

/// Normalized 2-D Gaussian smoothing kernel on a `(2r+1)²` support.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64, radius: usize) -> Result<Self, DepthError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(DepthError::BadSigma(sigma));
        }
        if radius == 0 {
            return Err(DepthError::ZeroRadius);
        }
        let r = radius as i64;
        let mut weights = Vec::with_capacity((2 * radius + 1).pow(2));
        for y in -r..=r {
            for x in -r..=r {
                weights.push(gaussian_density(sigma, x as f64, y as f64));
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { sigma, radius, weights })
    }

    /// Kernel with the default support `ceil(3σ)`.
    pub fn with_default_radius(sigma: f64) -> Result<Self, DepthError> {
        Self::new(sigma, default_radius(sigma))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Normalized weights, row-major over `y = -r..=r`, `x = -r..=r`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Normalized weight at offset `(x, y)`.
    pub fn weight(&self, x: i64, y: i64) -> f64 {
        let r = self.radius as i64;
        self.weights[((y + r) * (2 * r + 1) + (x + r)) as usize]
    }

    /// Density before normalization at offset `(x, y)`.
    pub fn unnormalized(&self, x: i64, y: i64) -> f64 {
        gaussian_density(self.sigma, x as f64, y as f64)
    }
}

/// `exp(-(x² + y²) / 2σ²) / 2πσ²`.
pub fn gaussian_density(sigma: f64, x: f64, y: f64) -> f64 {
    let s2 = sigma * sigma;
    libm::exp(-(x * x + y * y) / (2.0 * s2)) / (2.0 * PI * s2)
}

pub fn default_radius(sigma: f64) -> usize {
    (libm::ceil(3.0 * sigma) as usize).max(1)
}

pub fn is_invalid(d: f64) -> bool {
    !d.is_finite()
}

/// Result of [`filter_depth`]. `all_invalid` is set when no pixel was valid,
/// in which case the plane is returned unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredDepth {
    pub plane: Plane<f64>,
    pub all_invalid: bool,
}

/// Convolves a depth plane with `kernel` using edge replication. Invalid
/// (non-finite) pixels are left out of every weighted sum and the remaining
/// weights renormalized, so holes are filled from their valid neighbors.
pub fn filter_depth(depth: &Plane<f64>, kernel: &GaussianKernel) -> FilteredDepth {
    if depth.data.iter().all(|&d| is_invalid(d)) {
        return FilteredDepth {
            plane: depth.clone(),
            all_invalid: true,
        };
    }
    let (h, w) = (depth.height as i64, depth.width as i64);
    let r = kernel.radius as i64;
    let mut out = Plane::filled(depth.height, depth.width, f64::INFINITY);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h - 1);
                let row = &depth.data[(sy * w) as usize..((sy + 1) * w) as usize];
                for dx in -r..=r {
                    let v = row[(x + dx).clamp(0, w - 1) as usize];
                    if is_invalid(v) {
                        continue;
                    }
                    let k = kernel.weight(dx, dy);
                    acc += k * v;
                    mass += k;
                }
            }
            if mass > 0.0 {
                out.set(y as usize, x as usize, acc / mass);
            }
        }
    }
    FilteredDepth {
        plane: out,
        all_invalid: false,
    }
}

/// Replaces any remaining invalid pixels with `fill`.
pub fn resolve_invalid(plane: &Plane<f64>, fill: f64) -> Plane<f64> {
    plane.map(|d| if is_invalid(d) { fill } else { d })
}

/// A `channels × height × width` feature map, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    /// Channels `range` as a new tensor.
    pub fn slice_channels(&self, range: core::ops::Range<usize>) -> FeatureTensor {
        let n = self.height * self.width;
        FeatureTensor {
            channels: range.len(),
            height: self.height,
            width: self.width,
            values: self.values[range.start * n..range.end * n].to_vec(),
        }
    }

    /// Feature vector of one grid cell.
    pub fn cell(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }

    /// Spatial average of every channel.
    pub fn average_pool(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        (0..self.channels)
            .map(|c| self.channel(c).iter().sum::<f64>() / n)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `[start, end)` of cell `i` when `len` pixels are split into `cells` bins.
fn cell_bounds(len: usize, cells: usize, i: usize) -> (usize, usize) {
    (i * len / cells, (i + 1) * len / cells)
}

const RGB_STATS_PER_EYE: usize = 32;
const RGB_BASE: usize = 2 * RGB_STATS_PER_EYE;
const RGB_EXPANSIONS: usize = RGB_CHANNELS / RGB_BASE;

/// Reference semantic extractor: per-patch color moments, extrema, gradient
/// orientation histogram, quadrant means, and intensity histogram for each
/// eye (64 statistics per cell), each lifted through six fixed nonlinear maps
/// into 384 channels. A cell depends only on the pixels of its own patch.
pub fn extract_rgb_features(left: &RgbImage, right: &RgbImage) -> Result<FeatureTensor, DepthError> {
    if (left.height, left.width) != (right.height, right.width) {
        return Err(DepthError::EyeShapeMismatch {
            left: (left.height, left.width),
            right: (right.height, right.width),
        });
    }
    check_grid_size(left.height, left.width)?;
    let mut out = FeatureTensor::zeros(RGB_CHANNELS, GRID_HEIGHT, GRID_WIDTH);
    let mut base = [0.0f64; RGB_BASE];
    for gy in 0..GRID_HEIGHT {
        let (y0, y1) = cell_bounds(left.height, GRID_HEIGHT, gy);
        for gx in 0..GRID_WIDTH {
            let (x0, x1) = cell_bounds(left.width, GRID_WIDTH, gx);
            patch_stats(left, y0, y1, x0, x1, &mut base[..RGB_STATS_PER_EYE]);
            patch_stats(right, y0, y1, x0, x1, &mut base[RGB_STATS_PER_EYE..]);
            for (t, lift) in LIFTS.iter().enumerate() {
                for (s, &b) in base.iter().enumerate() {
                    out.set(t * RGB_BASE + s, gy, gx, lift(b));
                }
            }
        }
    }
    debug_assert_eq!(LIFTS.len(), RGB_EXPANSIONS);
    Ok(out)
}

const LIFTS: [fn(f64) -> f64; RGB_EXPANSIONS] = [
    |b| b,
    |b| b * b,
    |b| libm::sqrt(b.max(0.0)),
    |b| libm::sin(PI * b),
    |b| libm::cos(PI * b),
    |b| libm::tanh(4.0 * b - 2.0),
];

fn luminance(p: [f32; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn patch_stats(img: &RgbImage, y0: usize, y1: usize, x0: usize, x1: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = ((y1 - y0) * (x1 - x0)) as f64;
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    let (ym, xm) = ((y0 + y1) / 2, (x0 + x1) / 2);
    let mut quad = [0.0f64; 4];
    let mut quad_n = [0usize; 4];
    for y in y0..y1 {
        for x in x0..x1 {
            let p = img.pixel(y, x);
            for c in 0..3 {
                let v = p[c] as f64;
                sum[c] += v;
                sum_sq[c] += v * v;
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
            let l = luminance(p);
            let q = usize::from(y >= ym) * 2 + usize::from(x >= xm);
            quad[q] += l;
            quad_n[q] += 1;
            let bin = ((l * 8.0) as usize).min(7);
            out[24 + bin] += 1.0;

            if y + 1 < y1 && x + 1 < x1 {
                let gx = luminance(img.pixel(y, x + 1)) - l;
                let gy = luminance(img.pixel(y + 1, x)) - l;
                let mag = libm::sqrt(gx * gx + gy * gy);
                if mag > 0.0 {
                    let theta = libm::atan2(gy, gx);
                    let bin = (((theta + PI) / (2.0 * PI) * 8.0) as usize) % 8;
                    out[12 + bin] += mag;
                }
            }
        }
    }
    for v in &mut out[12..32] {
        *v /= n;
    }
    for c in 0..3 {
        let mean = sum[c] / n;
        out[c] = mean;
        out[3 + c] = (sum_sq[c] / n - mean * mean).max(0.0);
        out[6 + c] = min[c];
        out[9 + c] = max[c];
    }
    for q in 0..4 {
        // Degenerate quadrants (1-pixel patches) fall back to the patch mean luminance.
        out[20 + q] = if quad_n[q] > 0 {
            quad[q] / quad_n[q] as f64
        } else {
            quad.iter().sum::<f64>() / n
        };
    }
}

fn check_grid_size(height: usize, width: usize) -> Result<(), DepthError> {
    if height < GRID_HEIGHT || width < GRID_WIDTH {
        Err(DepthError::TooSmall { height, width })
    } else {
        Ok(())
    }
}

const CONV1_OUT: usize = 8;
const CONV2_OUT: usize = 16;

/// Fixed-weight geometric extractor: adaptive average pool to 36×48, 3×3
/// conv (1→8) + tanh, 2×2 average pool to 18×24, 3×3 conv (8→16) + tanh,
/// 1×1 projection (16→128) + tanh. Convolutions replicate edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthNet {
    seed: u64,
    conv1: Vec<f64>,
    bias1: Vec<f64>,
    conv2: Vec<f64>,
    bias2: Vec<f64>,
    proj: Vec<f64>,
    bias3: Vec<f64>,
}

impl DepthNet {
    /// Draws all weights uniformly from `±sqrt(3 / fan_in)` and biases from
    /// `±0.5` using the keyed stream for `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut r = rng::stream(seed, 0xDE97);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = libm::sqrt(3.0 / fan_in as f64);
            (0..n).map(|_| r.random_range(-a..a)).collect()
        };
        let conv1 = draw(CONV1_OUT * 9, 9);
        let conv2 = draw(CONV2_OUT * CONV1_OUT * 9, CONV1_OUT * 9);
        let proj = draw(DEPTH_CHANNELS * CONV2_OUT, CONV2_OUT);
        let mut r = rng::stream(seed, 0xB1A5);
        let mut bias = |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-0.5..0.5)).collect() };
        Self {
            seed,
            conv1,
            bias1: bias(CONV1_OUT),
            conv2,
            bias2: bias(CONV2_OUT),
            proj,
            bias3: bias(DEPTH_CHANNELS),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Runs the depth path on a plane already normalized and free of invalid pixels.
pub fn extract_depth_features(depth: &Plane<f64>, net: &DepthNet) -> Result<FeatureTensor, DepthError> {
    let unresolved = depth.data.iter().filter(|&&d| is_invalid(d)).count();
    if unresolved > 0 {
        return Err(DepthError::UnresolvedSentinel { count: unresolved });
    }
    check_grid_size(depth.height, depth.width)?;
    let (h1, w1) = (2 * GRID_HEIGHT, 2 * GRID_WIDTH);
    let pooled = adaptive_pool(depth, h1, w1);
    let a1 = conv3x3(&[pooled], &net.conv1, &net.bias1, h1, w1);
    let a1: Vec<Vec<f64>> = a1.iter().map(|c| pool2x2(c, h1, w1)).collect();
    let a2 = conv3x3(&a1, &net.conv2, &net.bias2, GRID_HEIGHT, GRID_WIDTH);

    let n = GRID_HEIGHT * GRID_WIDTH;
    let mut out = FeatureTensor::zeros(DEPTH_CHANNELS, GRID_HEIGHT, GRID_WIDTH);
    for o in 0..DEPTH_CHANNELS {
        let w = &net.proj[o * CONV2_OUT..(o + 1) * CONV2_OUT];
        for p in 0..n {
            let s: f64 = w.iter().zip(&a2).map(|(wi, ch)| wi * ch[p]).sum();
            out.values[o * n + p] = libm::tanh(s + net.bias3[o]);
        }
    }
    Ok(out)
}

fn adaptive_pool(plane: &Plane<f64>, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for gy in 0..h {
        let (y0, y1) = cell_bounds(plane.height, h, gy);
        let y1 = y1.max(y0 + 1);
        for gx in 0..w {
            let (x0, x1) = cell_bounds(plane.width, w, gx);
            let x1 = x1.max(x0 + 1);
            let mut s = 0.0;
            for y in y0..y1 {
                s += plane.data[y * plane.width + x0..y * plane.width + x1]
                    .iter()
                    .sum::<f64>();
            }
            out[gy * w + gx] = s / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

fn conv3x3(input: &[Vec<f64>], weights: &[f64], bias: &[f64], h: usize, w: usize) -> Vec<Vec<f64>> {
    let cin = input.len();
    let (hi, wi) = (h as i64, w as i64);
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let mut out = vec![b; h * w];
            for (c, ch) in input.iter().enumerate() {
                let k = &weights[(o * cin + c) * 9..(o * cin + c + 1) * 9];
                for y in 0..hi {
                    for x in 0..wi {
                        let mut s = 0.0;
                        for dy in -1..=1i64 {
                            let sy = (y + dy).clamp(0, hi - 1) as usize;
                            for dx in -1..=1i64 {
                                let sx = (x + dx).clamp(0, wi - 1) as usize;
                                s += k[((dy + 1) * 3 + dx + 1) as usize] * ch[sy * w + sx];
                            }
                        }
                        out[y as usize * w + x as usize] += s;
                    }
                }
            }
            out.iter_mut().for_each(|v| *v = libm::tanh(*v));
            out
        })
        .collect()
}

fn pool2x2(ch: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let at = |yy: usize, xx: usize| ch[yy * w + xx];
            out[y * wo + x] =
                0.25 * (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1));
        }
    }
    out
}

/// Channel-wise concatenation: RGB channels first, then depth channels.
pub fn fuse_features(rgb: &FeatureTensor, depth: &FeatureTensor) -> Result<FeatureTensor, DepthError> {
    if (rgb.height, rgb.width) != (depth.height, depth.width) {
        return Err(DepthError::SpatialMismatch {
            a: (rgb.height, rgb.width),
            b: (depth.height, depth.width),
        });
    }
    if rgb.channels != RGB_CHANNELS {
        return Err(DepthError::ChannelMismatch {
            expected: RGB_CHANNELS,
            got: rgb.channels,
        });
    }
    if depth.channels != DEPTH_CHANNELS {
        return Err(DepthError::ChannelMismatch {
            expected: DEPTH_CHANNELS,
            got: depth.channels,
        });
    }
    let mut values = Vec::with_capacity(rgb.values.len() + depth.values.len());
    values.extend_from_slice(&rgb.values);
    values.extend_from_slice(&depth.values);
    Ok(FeatureTensor {
        channels: FUSED_CHANNELS,
        height: rgb.height,
        width: rgb.width,
        values,
    })
}

/// Parameters of the full observation → feature pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineConfig {
    pub sigma: f64,
    /// Kernel radius; `None` selects `ceil(3σ)`.
    pub radius: Option<usize>,
    /// Depth in meters mapped to 1.0 before the depth path.
    pub max_range_m: f64,
    /// Normalized value given to pixels that stay invalid after filtering.
    pub invalid_fill: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            radius: None,
            max_range_m: 5.0,
            invalid_fill: 0.0,
            seed: 0x5EED,
        }
    }
}

/// Observation → 512×18×24 fused features.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    config: PipelineConfig,
    kernel: GaussianKernel,
    net: DepthNet,
}

impl FeaturePipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, DepthError> {
        let kernel = match config.radius {
            Some(r) => GaussianKernel::new(config.sigma, r)?,
            None => GaussianKernel::with_default_radius(config.sigma)?,
        };
        Ok(Self {
            config,
            kernel,
            net: DepthNet::seeded(config.seed),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    /// Filtered depth, normalized by the max range, with holes resolved.
    pub fn preprocess_depth(&self, depth: &Plane<f32>) -> Result<Plane<f64>, DepthError> {
        let filtered = filter_depth(&depth.map(f64::from), &self.kernel);
        if filtered.all_invalid {
            return Err(DepthError::AllInvalid);
        }
        let scale = 1.0 / self.config.max_range_m;
        Ok(resolve_invalid(&filtered.plane, self.config.invalid_fill / scale).map(|d| d * scale))
    }

    pub fn features(&self, obs: &Observation) -> Result<FeatureTensor, DepthError> {
        let rgb = extract_rgb_features(&obs.rgb_left, &obs.rgb_right)?;
        let depth = extract_depth_features(&self.preprocess_depth(&obs.depth)?, &self.net)?;
        fuse_features(&rgb, &depth)
    }

    /// Spatially average-pooled fused features (512 values).
    pub fn pooled(&self, obs: &Observation) -> Result<Vec<f64>, DepthError> {
        Ok(self.features(obs)?.average_pool())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_density_matches_closed_form() {
        let k = GaussianKernel::new(1.0, 1).unwrap();
        let expected = 1.0 / (2.0 * PI);
        assert!((k.unnormalized(0, 0) - expected).abs() < 1e-15);
        assert!((expected - 0.159155).abs() < 1e-6);
    }

    #[test]
    fn corner_to_center_ratio_is_exp_minus_one() {
        let k = GaussianKernel::new(1.0, 1).unwrap();
        let ratio = k.unnormalized(1, 1) / k.unnormalized(0, 0);
        assert!((ratio - libm::exp(-1.0)).abs() < 1e-15);
        assert!((ratio - 0.367879).abs() < 1e-6);
        assert!((k.weight(1, 1) / k.weight(0, 0) - ratio).abs() < 1e-15);
    }

    #[test]
    fn kernel_grid_is_symmetric_and_normalized() {
        for sigma in [0.5, 1.0, 2.0, 5.0] {
            for radius in [1usize, 2, 3, 7] {
                let k = GaussianKernel::new(sigma, radius).unwrap();
                let sum: f64 = k.weights().iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "sigma {sigma} radius {radius}");
                let r = radius as i64;
                let center = k.weight(0, 0);
                for y in -r..=r {
                    for x in -r..=r {
                        assert_eq!(k.weight(x, y), k.weight(-x, y));
                        assert_eq!(k.weight(x, y), k.weight(x, -y));
                        assert!(k.weight(x, y) <= center);
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert_eq!(GaussianKernel::new(0.0, 1), Err(DepthError::BadSigma(0.0)));
        assert_eq!(GaussianKernel::new(-1.0, 1), Err(DepthError::BadSigma(-1.0)));
        assert_eq!(GaussianKernel::new(1.0, 0), Err(DepthError::ZeroRadius));
        assert_eq!(default_radius(1.0), 3);
        assert_eq!(default_radius(0.2), 1);
        assert_eq!(default_radius(1.1), 4);
    }

    #[test]
    fn constant_plane_is_unchanged() {
        let k = GaussianKernel::new(1.5, 3).unwrap();
        let p = Plane::filled(9, 11, 2.25);
        let out = filter_depth(&p, &k);
        assert!(!out.all_invalid);
        assert!(out.plane.data.iter().all(|&v| (v - 2.25).abs() < 1e-12));
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let k = GaussianKernel::new(1.0, 1).unwrap();
        let mut p = Plane::filled(9, 9, 0.0);
        p.set(4, 4, 1.0);
        let out = filter_depth(&p, &k).plane;
        assert_eq!(out.get(4, 4), k.weight(0, 0));
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let v = out.get((4 + dy) as usize, (4 + dx) as usize);
                assert!((v - k.weight(-dx, -dy)).abs() < 1e-15);
            }
        }
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn single_hole_is_filled_from_neighbors() {
        let k = GaussianKernel::new(1.0, 2).unwrap();
        let mut p = Plane::filled(7, 7, 3.0);
        p.set(3, 3, f64::INFINITY);
        let out = filter_depth(&p, &k).plane;
        assert!((out.get(3, 3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_invalid_is_flagged() {
        let k = GaussianKernel::new(1.0, 1).unwrap();
        let p = Plane::filled(4, 4, f64::INFINITY);
        let out = filter_depth(&p, &k);
        assert!(out.all_invalid);
        assert!(out.plane.data.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn fusion_concatenates_channels() {
        let mut rgb = FeatureTensor::zeros(RGB_CHANNELS, GRID_HEIGHT, GRID_WIDTH);
        let mut depth = FeatureTensor::zeros(DEPTH_CHANNELS, GRID_HEIGHT, GRID_WIDTH);
        rgb.values.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        depth.values.iter_mut().enumerate().for_each(|(i, v)| *v = -(i as f64));
        let fused = fuse_features(&rgb, &depth).unwrap();
        assert_eq!(fused.shape(), (512, 18, 24));
        assert_eq!(fused.get(10, 3, 4), rgb.get(10, 3, 4));
        assert_eq!(fused.get(384 + 7, 17, 23), depth.get(7, 17, 23));
        assert_eq!(fused.slice_channels(0..384), rgb);
        assert_eq!(fused.slice_channels(384..512), depth);
    }

    #[test]
    fn fusion_rejects_mismatched_grids() {
        let rgb = FeatureTensor::zeros(RGB_CHANNELS, GRID_HEIGHT, GRID_WIDTH);
        let depth = FeatureTensor::zeros(DEPTH_CHANNELS, 9, 12);
        assert!(matches!(
            fuse_features(&rgb, &depth),
            Err(DepthError::SpatialMismatch { .. })
        ));
    }

    #[test]
    fn zero_images_give_identical_cells() {
        let img = RgbImage::filled(36, 48, [0.0; 3]);
        let f = extract_rgb_features(&img, &img).unwrap();
        assert_eq!(f.shape(), (384, 18, 24));
        let first = f.cell(0, 0);
        for y in 0..GRID_HEIGHT {
            for x in 0..GRID_WIDTH {
                assert_eq!(f.cell(y, x), first);
            }
        }
    }

    #[test]
    fn eye_shape_mismatch_is_an_error() {
        let a = RgbImage::filled(36, 48, [0.0; 3]);
        let b = RgbImage::filled(36, 50, [0.0; 3]);
        assert!(matches!(
            extract_rgb_features(&a, &b),
            Err(DepthError::EyeShapeMismatch { .. })
        ));
    }

    #[test]
    fn depth_path_rejects_unresolved_holes() {
        let net = DepthNet::seeded(1);
        let mut p = Plane::filled(36, 48, 0.5);
        p.set(0, 0, f64::INFINITY);
        assert_eq!(
            extract_depth_features(&p, &net),
            Err(DepthError::UnresolvedSentinel { count: 1 })
        );
    }
}
