use fabg_core::depth::{
    extract_depth_features, extract_rgb_features, filter_depth, fuse_features, DepthNet, FeaturePipeline,
    GaussianKernel, PipelineConfig, DEPTH_CHANNELS, FUSED_CHANNELS, GRID_HEIGHT, GRID_WIDTH, RGB_CHANNELS,
};
use fabg_core::episode::{Observation, Plane, RgbImage, REFERENCE_HEIGHT, REFERENCE_WIDTH};
use proptest::prelude::*;

#[test]
fn kernel_invariants_over_grid() {
    for sigma in [0.5, 1.0, 2.0, 5.0] {
        for radius in [1usize, 2, 3, 7] {
            let k = GaussianKernel::new(sigma, radius).unwrap();
            let r = radius as i64;
            let sum: f64 = k.weights().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "sigma {sigma} radius {radius}: {sum}");
            let center = k.weight(0, 0);
            for y in -r..=r {
                for x in -r..=r {
                    let w = k.weight(x, y);
                    assert_eq!(w, k.weight(-x, y));
                    assert_eq!(w, k.weight(x, -y));
                    assert!(w <= center);
                }
            }
        }
    }
}

#[test]
fn default_radius_is_three_sigma() {
    assert_eq!(GaussianKernel::with_default_radius(1.0).unwrap().radius(), 3);
    assert_eq!(GaussianKernel::with_default_radius(0.4).unwrap().radius(), 2);
}

fn reference_images(level: f32) -> (RgbImage, RgbImage) {
    (
        RgbImage::filled(REFERENCE_HEIGHT, REFERENCE_WIDTH, [level; 3]),
        RgbImage::filled(REFERENCE_HEIGHT, REFERENCE_WIDTH, [level; 3]),
    )
}

#[test]
fn reference_shapes() {
    let (l, r) = reference_images(0.0);
    let rgb = extract_rgb_features(&l, &r).unwrap();
    assert_eq!(rgb.shape(), (RGB_CHANNELS, GRID_HEIGHT, GRID_WIDTH));
    let cell = rgb.cell(0, 0);
    for y in 0..GRID_HEIGHT {
        for x in 0..GRID_WIDTH {
            assert_eq!(rgb.cell(y, x), cell);
        }
    }
    let depth = Plane::filled(REFERENCE_HEIGHT, REFERENCE_WIDTH, 0.4f64);
    let d = extract_depth_features(&depth, &DepthNet::seeded(7)).unwrap();
    assert_eq!(d.shape(), (DEPTH_CHANNELS, GRID_HEIGHT, GRID_WIDTH));
    let fused = fuse_features(&rgb, &d).unwrap();
    assert_eq!(fused.shape(), (FUSED_CHANNELS, GRID_HEIGHT, GRID_WIDTH));
}

#[test]
fn rgb_features_are_local_to_patches() {
    let (l, r) = reference_images(0.3);
    let base = extract_rgb_features(&l, &r).unwrap();
    // Patch (2, 5) of an 18×24 grid over 480×640 covers rows 53..80 and columns 133..160.
    let mut l2 = l.clone();
    for y in 60..70 {
        for x in 140..150 {
            l2.set_pixel(y, x, [0.9, 0.1, 0.5]);
        }
    }
    let changed = extract_rgb_features(&l2, &r).unwrap();
    for y in 0..GRID_HEIGHT {
        for x in 0..GRID_WIDTH {
            let same = base.cell(y, x) == changed.cell(y, x);
            assert_eq!(same, (y, x) != (2, 5), "cell ({y}, {x})");
        }
    }
}

#[test]
fn depth_path_properties() {
    let net = DepthNet::seeded(11);
    let c = Plane::filled(96, 128, 0.3f64);
    let a = extract_depth_features(&c, &net).unwrap();
    for ch in 0..DEPTH_CHANNELS {
        let v = a.channel(ch);
        assert!(v.iter().all(|&x| x == v[0]), "channel {ch} not constant");
    }
    let b = extract_depth_features(&c.map(|d| 2.0 * d), &net).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, extract_depth_features(&c, &net).unwrap());
}

#[test]
fn fusion_is_lossless() {
    let (l, r) = reference_images(0.6);
    let rgb = extract_rgb_features(&l, &r).unwrap();
    let depth = Plane::from_fn(REFERENCE_HEIGHT, REFERENCE_WIDTH, |y, x| ((y + x) % 17) as f64 / 17.0);
    let d = extract_depth_features(&depth, &DepthNet::seeded(3)).unwrap();
    let fused = fuse_features(&rgb, &d).unwrap();
    assert_eq!(fused.slice_channels(0..RGB_CHANNELS), rgb);
    assert_eq!(fused.slice_channels(RGB_CHANNELS..FUSED_CHANNELS), d);
    assert_eq!(fused.get(10, 4, 7), rgb.get(10, 4, 7));
    assert_eq!(fused.get(RGB_CHANNELS + 10, 4, 7), d.get(10, 4, 7));
}

#[test]
fn pipeline_is_deterministic() {
    let obs = Observation {
        tick: 0,
        rgb_left: RgbImage::filled(36, 48, [0.2, 0.4, 0.6]),
        rgb_right: RgbImage::filled(36, 48, [0.3, 0.4, 0.5]),
        depth: Plane::from_fn(36, 48, |y, x| 0.5 + (y * x) as f32 / 2000.0),
    };
    let p = FeaturePipeline::new(PipelineConfig::default()).unwrap();
    let a = p.features(&obs).unwrap();
    assert!(a.is_finite());
    assert_eq!(a, p.features(&obs).unwrap());
    assert_eq!(p.pooled(&obs).unwrap().len(), FUSED_CHANNELS);
}

fn plane_strategy() -> impl Strategy<Value = Plane<f64>> {
    (2usize..9, 2usize..9).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.1f64..8.0, h * w).prop_map(move |data| Plane {
            height: h,
            width: w,
            data,
        })
    })
}

proptest! {
    #[test]
    fn filter_commutes_with_offsets(d in plane_strategy(), c in -3.0f64..3.0, sigma in 0.3f64..3.0) {
        let k = GaussianKernel::with_default_radius(sigma).unwrap();
        let a = filter_depth(&d, &k).plane;
        let b = filter_depth(&d.map(|v| v + c), &k).plane;
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x + c - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn filter_stays_within_valid_range(
        d in plane_strategy(),
        holes in prop::collection::vec(any::<prop::sample::Index>(), 0..4),
        sigma in 0.3f64..3.0,
    ) {
        let mut d = d;
        let n = d.data.len();
        for h in &holes {
            d.data[h.index(n)] = f64::INFINITY;
        }
        let valid: Vec<f64> = d.data.iter().copied().filter(|v| v.is_finite()).collect();
        prop_assume!(!valid.is_empty());
        let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = filter_depth(&d, &GaussianKernel::new(sigma, 2).unwrap());
        prop_assert!(!out.all_invalid);
        for v in out.plane.data {
            if v.is_finite() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
