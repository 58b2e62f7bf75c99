use fabg_core::action::{validate_frame, JAW_OPEN};
use fabg_core::format::encode_episode;
use fabg_core::scenario::{build_corpus, generate, CorpusOptions, ScenarioError, ScenarioKind, ScenarioSpec};
use proptest::prelude::*;

const KINDS: [ScenarioKind; 5] = [
    ScenarioKind::Step,
    ScenarioKind::SustainedOpen,
    ScenarioKind::RapidCycle,
    ScenarioKind::TrackingSine,
    ScenarioKind::GestureSwitch,
];

fn spec_strategy() -> impl Strategy<Value = ScenarioSpec> {
    (
        prop::sample::select(KINDS.to_vec()),
        1usize..200,
        0.0f64..=1.0,
        2usize..40,
        any::<u64>(),
        prop::option::of(0usize..61),
    )
        .prop_map(|(kind, len, amp, period, seed, target)| ScenarioSpec {
            kind,
            duration_ticks: len,
            rate_hz: 30.0,
            target_dim: target,
            amplitude: amp,
            period_ticks: Some(period),
            seed,
        })
}

#[test]
fn zero_amplitude_is_all_zero() {
    for kind in KINDS {
        let spec = ScenarioSpec::new(kind, 33).with_period(6).with_amplitude(0.0);
        let ep = generate(&spec).unwrap();
        assert_eq!(ep.len(), 33);
        assert!(ep.actions().all(|f| f.values().iter().all(|&v| v == 0.0)), "{kind:?}");
    }
}

#[test]
fn step_has_two_jumps_of_amplitude() {
    let spec = ScenarioSpec::new(ScenarioKind::Step, 120).with_amplitude(0.7);
    let ep = generate(&spec).unwrap();
    let v: Vec<f32> = ep.actions().map(|f| f.get(JAW_OPEN)).collect();
    let jumps: Vec<(usize, f32)> = (1..v.len())
        .filter(|&t| v[t] != v[t - 1])
        .map(|t| (t, (v[t] - v[t - 1]).abs()))
        .collect();
    assert_eq!(jumps, vec![(30, 0.7), (90, 0.7)]);
}

#[test]
fn corpus_of_fifty_seeds() {
    let specs: Vec<ScenarioSpec> = (0..50)
        .map(|s| ScenarioSpec::new(ScenarioKind::Step, 40).with_seed(s))
        .collect();
    let corpus = build_corpus(&specs, &CorpusOptions::default()).unwrap();
    assert_eq!(corpus.len(), 50);
    let clean = generate(&specs[0]).unwrap();
    for (i, a) in corpus.iter().enumerate() {
        assert!(!a.has_observations());
        assert_eq!(encode_episode(a).unwrap()[6] & 1, 0);
        for (t, f) in a.actions().enumerate() {
            assert!((f.get(JAW_OPEN) - clean.action(t).get(JAW_OPEN)).abs() < 0.1);
        }
        for b in &corpus[i + 1..] {
            assert_ne!(a, b);
        }
    }
    assert_eq!(corpus, build_corpus(&specs, &CorpusOptions::default()).unwrap());
}

#[test]
fn corpus_with_observations_sets_the_flag() {
    let specs = [ScenarioSpec::new(ScenarioKind::RapidCycle, 12).with_period(4)];
    let opts = CorpusOptions {
        observations: true,
        obs_height: 18,
        obs_width: 24,
        ..CorpusOptions::default()
    };
    let corpus = build_corpus(&specs, &opts).unwrap();
    assert!(corpus[0].frames.iter().all(|f| f.observation.is_some()));
    assert_eq!(encode_episode(&corpus[0]).unwrap()[6] & 1, 1);
    assert_eq!(corpus, build_corpus(&specs, &opts).unwrap());
    assert_eq!(build_corpus(&[], &opts), Err(ScenarioError::EmptyCorpus));
}

proptest! {
    #[test]
    fn generated_frames_are_valid(spec in spec_strategy()) {
        let ep = generate(&spec).unwrap();
        prop_assert_eq!(ep.len(), spec.duration_ticks);
        for f in ep.actions() {
            prop_assert!(validate_frame(f).is_ok());
        }
    }

    #[test]
    fn cyclic_kinds_are_periodic(spec in spec_strategy()) {
        prop_assume!(spec.kind.is_cyclic());
        let ep = generate(&spec).unwrap();
        let p = spec.period_ticks.unwrap();
        for t in 0..ep.len().saturating_sub(p) {
            prop_assert_eq!(ep.action(t), ep.action(t + p));
        }
    }

    #[test]
    fn only_driven_dims_move(spec in spec_strategy()) {
        let ep = generate(&spec).unwrap();
        let driven = spec.driven_dims();
        for f in ep.actions() {
            for (d, &v) in f.values().iter().enumerate() {
                if !driven.contains(&d) {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }
}
