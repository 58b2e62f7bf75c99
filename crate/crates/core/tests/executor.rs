use fabg_core::action::{ActionChunk, ActionFrame, ACTION_DIM, JAW_OPEN};
use fabg_core::episode::{Episode, LatencyModel};
use fabg_core::executor::{execute, run_no_te, run_pdlc, run_te, ExecError, StrategyConfig, StrategyKind};
use fabg_core::metrics::{dtw, Cost};
use fabg_core::policy::{OraclePolicy, OracleSpec, Policy, PolicyError, PolicyInput};
use fabg_core::pwm::{map_to_pwm, PwmMapping};
use fabg_core::scenario::{generate, ScenarioKind, ScenarioSpec};
use proptest::prelude::*;

fn ramp(len: usize, slope: f32) -> Episode {
    Episode::from_actions(
        30.0,
        (0..len).map(|t| {
            let mut f = ActionFrame::zero();
            f.set(JAW_OPEN, (t as f32 * slope).min(1.0));
            f
        }),
    )
}

fn frames(ep: &Episode) -> Vec<ActionFrame> {
    ep.actions().copied().collect()
}

#[test]
fn constant_demo_gives_constant_trace() {
    let mut c = ActionFrame::zero();
    c.set(3, 0.4);
    let ep = Episode::from_actions(30.0, std::iter::repeat_n(c, 17));
    let oracle = OraclePolicy::new(OracleSpec::exact(&ep), 4);
    let t = run_no_te(&oracle, &ep, &LatencyModel::zero(), 4).unwrap();
    assert!(t.commanded.iter().all(|f| *f == c));
}

#[test]
fn zero_latency_chunks_tile_the_demo() {
    let ep = generate(&ScenarioSpec::new(ScenarioKind::RapidCycle, 50).with_period(7)).unwrap();
    for k in [1, 3, 8, 50, 60] {
        let oracle = OraclePolicy::new(OracleSpec::exact(&ep), k);
        let lat = LatencyModel::zero();
        assert_eq!(run_no_te(&oracle, &ep, &lat, k).unwrap().commanded, frames(&ep));
        assert_eq!(run_te(&oracle, &ep, &lat, k, 0.1).unwrap().commanded, frames(&ep));
        assert_eq!(run_pdlc(&oracle, &ep, &lat, k, 0).unwrap().commanded, frames(&ep));
    }
}

#[test]
fn stale_observation_delays_plain_chunking() {
    let ep = ramp(40, 0.02);
    let (p, k) = (2, 6);
    let lat = LatencyModel::new(p, 0, 0);
    let full = OraclePolicy::new(OracleSpec::exact(&ep), k);
    let trace = run_no_te(&full, &ep, &lat, k).unwrap();
    for t in 0..40 {
        assert_eq!(trace.commanded[t], *ep.action_clamped(t as i64 - p as i64), "tick {t}");
    }

    // An oracle that only knows what it saw holds the observed pose for the
    // whole chunk: the error against the ramp grows inside each chunk and
    // resets at every boundary.
    let stale = OraclePolicy::new(OracleSpec::exact(&ep).with_foresight(Some(0)), k);
    let trace = run_no_te(&stale, &ep, &lat, k).unwrap();
    for t in 0..40usize {
        let q = t - t % k;
        let expected = ep.action_clamped(q as i64 - p as i64).get(JAW_OPEN);
        assert_eq!(trace.commanded[t].get(JAW_OPEN), expected, "tick {t}");
    }
    let err: Vec<f32> = (0..40)
        .map(|t| ep.action(t).get(JAW_OPEN) - trace.commanded[t].get(JAW_OPEN))
        .collect();
    for t in 1..40 {
        if t % k == 0 {
            assert!(err[t] < err[t - 1], "no reset at {t}");
        } else if t >= 2 {
            assert!(err[t] >= err[t - 1], "error shrank inside chunk at {t}");
        }
    }
}

#[test]
fn pdlc_compensates_every_decomposition() {
    let ep = generate(&ScenarioSpec::new(ScenarioKind::RapidCycle, 60).with_period(10)).unwrap();
    for total in 0u32..=5 {
        for p in 0..=total {
            for i in 0..=total - p {
                let lat = LatencyModel::new(p, i, total - p - i);
                let oracle = OraclePolicy::new(OracleSpec::exact(&ep), 8);
                let exact = run_pdlc(&oracle, &ep, &lat, 8, total as usize).unwrap();
                assert_eq!(exact.commanded, frames(&ep), "latency {lat:?}");
                assert_eq!(dtw(&exact.commanded, &frames(&ep), Cost::L1All).unwrap(), 0.0);
                let shifted = run_pdlc(&oracle, &ep, &lat, 8, 0).unwrap();
                for t in 0..60 {
                    assert_eq!(shifted.commanded[t], *ep.action_clamped(t as i64 - total as i64));
                }
            }
        }
    }
}

struct FailsAt(i64, usize);

impl Policy for FailsAt {
    fn chunk_length(&self) -> usize {
        self.1
    }

    fn predict(&self, input: &PolicyInput<'_>) -> Result<ActionChunk, PolicyError> {
        if input.query_tick == self.0 {
            return Err(PolicyError::MissingFeatures(input.observed_tick));
        }
        Ok(ActionChunk {
            origin_tick: input.observed_tick,
            actions: vec![*input.previous; self.1],
            padded: false,
        })
    }
}

#[test]
fn policy_failure_names_the_tick() {
    let ep = ramp(20, 0.01);
    let err = run_pdlc(&FailsAt(7, 3), &ep, &LatencyModel::zero(), 3, 1).unwrap_err();
    assert!(matches!(err, ExecError::Policy { tick: 7, .. }));
    assert!(err.to_string().contains("tick 7"));
    let err = run_no_te(&FailsAt(9, 3), &ep, &LatencyModel::zero(), 3).unwrap_err();
    assert!(matches!(err, ExecError::Policy { tick: 9, .. }));
}

#[test]
fn pdlc_offset_must_fit_in_chunk() {
    let ep = ramp(5, 0.1);
    let oracle = OraclePolicy::new(OracleSpec::exact(&ep), 3);
    let err = execute(&oracle, &ep, &LatencyModel::zero(), &StrategyConfig::pdlc(3, 3)).unwrap_err();
    assert!(matches!(err, ExecError::Config(_)));
}

#[test]
fn pwm_is_affine_inside_the_clamp() {
    let m = PwmMapping::synthetic();
    let mut f = ActionFrame::zero();
    for d in 0..ACTION_DIM {
        f.set(d, ((d * 7) % 10) as f32 / 20.0);
    }
    let base = map_to_pwm(&f, &m);
    for alpha in [0.0f32, 0.25, 0.5, 1.0] {
        let mut g = f;
        g.values_mut().iter_mut().for_each(|v| *v *= alpha);
        let scaled = map_to_pwm(&g, &m);
        for c in 0..base.len() {
            let lhs = scaled[c] - m.offsets()[c];
            let rhs = alpha as f64 * (base[c] - m.offsets()[c]);
            assert!((lhs - rhs).abs() < 1e-4, "channel {c} alpha {alpha}");
        }
    }
}

/// Independent reference for plain chunking: the chunk playing at tick `t` is
/// the one from the latest query `q ≡ 0 (mod k)` with `q + D ≤ t`.
fn reference_no_te(spec: &OracleSpec<'_>, len: usize, lat: &LatencyModel, k: usize) -> Vec<ActionFrame> {
    let (p, d) = (lat.perception_delay as i64, lat.dispatch_delay() as i64);
    (0..len as i64)
        .map(|t| {
            let q = (t - d).div_euclid(k as i64) * k as i64;
            spec.chunk_at(q - p, k).actions[(t - q - d) as usize]
        })
        .collect()
}

/// Independent reference for the temporal ensemble, in f64.
fn reference_te(spec: &OracleSpec<'_>, len: usize, lat: &LatencyModel, k: usize, m: f64) -> Vec<[f64; ACTION_DIM]> {
    let (p, d) = (lat.perception_delay as i64, lat.dispatch_delay() as i64);
    (0..len as i64)
        .map(|t| {
            let mut acc = [0.0; ACTION_DIM];
            let mut total = 0.0;
            // Arrivals t−k+1 (oldest, j = 0) through t (newest).
            for (j, a) in (t - k as i64 + 1..=t).enumerate() {
                let q = a - d;
                let w = (-m * j as f64).exp();
                let frame = spec.chunk_at(q - p, k).actions[(t - a) as usize];
                for (x, &v) in acc.iter_mut().zip(frame.values()) {
                    *x += w * v as f64;
                }
                total += w;
            }
            acc.map(|x| x / total)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strategies_match_reference_models(
        len in 1usize..70,
        k in 1usize..12,
        p in 0u32..4,
        i in 0u32..4,
        c in 0u32..3,
        m in 0.0f64..1.0,
        sigma in 0.0f64..0.2,
        seed in any::<u64>(),
        foresight in prop::option::of(0usize..6),
    ) {
        let ep = generate(&ScenarioSpec::new(ScenarioKind::TrackingSine, len).with_period(9).with_target(JAW_OPEN)).unwrap();
        let spec = OracleSpec::exact(&ep).with_noise(sigma, seed).with_foresight(foresight);
        let oracle = OraclePolicy::new(spec, k);
        let lat = LatencyModel::new(p, i, c);

        let no_te = run_no_te(&oracle, &ep, &lat, k).unwrap();
        prop_assert_eq!(&no_te.commanded, &reference_no_te(&spec, len, &lat, k));
        prop_assert_eq!(no_te.query_ticks.len(), len.div_ceil(k));

        let te = run_te(&oracle, &ep, &lat, k, m).unwrap();
        prop_assert_eq!(te.query_ticks.len(), len);
        let want = reference_te(&spec, len, &lat, k, m);
        let env = te.envelope.as_ref().unwrap();
        for (t, row) in want.iter().enumerate() {
            for (dim, &w) in row.iter().enumerate().take(ACTION_DIM) {
                let v = te.commanded[t].get(dim);
                prop_assert!((v as f64 - w).abs() <= 1e-6, "tick {} dim {}", t, dim);
                prop_assert!(env.lower[t].get(dim) <= v && v <= env.upper[t].get(dim));
            }
        }

        let n = (p + i + c) as usize;
        if n < k {
            let pdlc = run_pdlc(&oracle, &ep, &lat, k, n).unwrap();
            prop_assert_eq!(pdlc.query_ticks.len(), len);
            prop_assert_eq!(&pdlc.chunk_boundaries, &vec![0u64]);
            let d = lat.dispatch_delay() as i64;
            for t in 0..len as i64 {
                prop_assert_eq!(pdlc.commanded[t as usize], spec.chunk_at(t - d - p as i64, k).actions[n]);
            }
        }

        for trace in [&no_te, &te] {
            prop_assert!(trace.query_ticks.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(trace.commanded.len(), len);
        }
        prop_assert_eq!(run_te(&oracle, &ep, &lat, k, m).unwrap(), te);
    }

    #[test]
    fn execute_dispatches_by_kind(kind in prop::sample::select(StrategyKind::ALL.to_vec()), k in 2usize..6) {
        let ep = ramp(15, 0.05);
        let oracle = OraclePolicy::new(OracleSpec::exact(&ep), k);
        let cfg = StrategyConfig { kind, ..StrategyConfig::pdlc(k, 1) };
        let trace = execute(&oracle, &ep, &LatencyModel::new(0, 1, 0), &cfg).unwrap();
        prop_assert_eq!(trace.strategy, kind);
    }
}
