//! Threshold and split fixtures. Each function panics on the first violation.

pub mod success {
    use codev_core::env::success::*;
    use codev_core::env::ObjectInstance;
    use codev_core::language::{Color, Sentence, Shape, Verb};
    use glam::DVec2;

    fn objects() -> [ObjectInstance; 2] {
        [ObjectInstance::new(Shape::Pillar, Color::Red, DVec2::ZERO), ObjectInstance::new(Shape::Pole, Color::Green, DVec2::new(5.0, 5.0))]
    }

    fn far() -> ObjectFacts {
        ObjectFacts { facing_deg: 180.0, distance: 30.0, ..Default::default() }
    }

    /// Feeds the same facts about object 0 for `steps` steps; returns the events.
    fn run(f: ObjectFacts, wheel: f64, steps: usize) -> Vec<Option<SuccessEvent>> {
        let mut streaks = Streaks::default();
        let facts = StepFacts { objects: [f, far()], max_wheel_speed: wheel };
        (1..=steps).map(|t| evaluate_success(&facts, &mut streaks, &objects(), t, None)).collect()
    }

    fn fires(f: ObjectFacts, wheel: f64, verb: Verb) -> bool {
        run(f, wheel, 10).iter().flatten().any(|e| e.action == verb)
    }

    fn watch(facing: f64, distance: f64) -> ObjectFacts {
        ObjectFacts { facing_deg: facing, distance, ..Default::default() }
    }

    pub fn facing_boundary() {
        assert!(fires(watch(14.9, 8.0), 0.0, Verb::Watch));
        assert!(!fires(watch(15.1, 8.0), 0.0, Verb::Watch));
        assert!(fires(watch(14.9, 3.0), 0.0, Verb::BeNear));
        assert!(!fires(watch(15.1, 3.0), 0.0, Verb::BeNear));
    }

    pub fn watch_band() {
        assert!(!fires(watch(0.0, 5.99), 0.0, Verb::Watch));
        assert!(fires(watch(0.0, 6.01), 0.0, Verb::Watch));
        assert!(fires(watch(0.0, 9.99), 0.0, Verb::Watch));
        assert!(!fires(watch(0.0, 10.01), 0.0, Verb::Watch));
    }

    pub fn near_band_and_contact() {
        assert!(fires(watch(0.0, 5.99), 0.0, Verb::BeNear));
        assert!(!fires(watch(0.0, 6.01), 0.0, Verb::BeNear));
        let touching = ObjectFacts { contact: true, ..watch(0.0, 2.0) };
        assert!(!fires(touching, 0.0, Verb::BeNear));
    }

    pub fn touch_top_needs_a_high_hand() {
        let top = ObjectFacts { contact: true, hand_top_contact: true, ..far() };
        assert!(fires(top, 0.0, Verb::TouchTop));
        let side = ObjectFacts { contact: true, hand_top_contact: false, ..far() };
        assert!(!fires(side, 0.0, Verb::TouchTop));
    }

    pub fn push_thresholds() {
        let fwd = |d| ObjectFacts { contact: true, forward_push: d, ..far() };
        assert!(fires(fwd(0.11), 9.0, Verb::PushForward));
        assert!(!fires(fwd(0.09), 9.0, Verb::PushForward));
        let lat = |d| ObjectFacts { contact: true, lateral_push: d, ..far() };
        assert!(fires(lat(0.21), 0.0, Verb::PushLeft));
        assert!(!fires(lat(0.19), 0.0, Verb::PushLeft));
        assert!(fires(lat(-0.21), 0.0, Verb::PushRight));
        assert!(!fires(lat(-0.19), 0.0, Verb::PushRight));
        // pushing without contact is not a push
        assert!(!fires(ObjectFacts { contact: false, ..fwd(1.0) }, 0.0, Verb::PushForward));
    }

    pub fn wheel_gate_on_sideways_pushes() {
        let lat = ObjectFacts { contact: true, lateral_push: 0.5, ..far() };
        assert!(fires(lat, 4.99, Verb::PushLeft));
        assert!(!fires(lat, 5.01, Verb::PushLeft));
        let right = ObjectFacts { lateral_push: -0.5, ..lat };
        assert!(fires(right, 4.99, Verb::PushRight));
        assert!(!fires(right, 5.01, Verb::PushRight));
    }

    pub fn streak_lengths() {
        let cases = [
            (Verb::Watch, watch(0.0, 8.0), 0.0),
            (Verb::BeNear, watch(0.0, 3.0), 0.0),
            (Verb::TouchTop, ObjectFacts { contact: true, hand_top_contact: true, ..far() }, 0.0),
            (Verb::PushForward, ObjectFacts { contact: true, forward_push: 0.5, ..far() }, 9.0),
            (Verb::PushLeft, ObjectFacts { contact: true, lateral_push: 0.5, ..far() }, 0.0),
            (Verb::PushRight, ObjectFacts { contact: true, lateral_push: -0.5, ..far() }, 0.0),
        ];
        for ((verb, f, wheel), need) in cases.into_iter().zip(STREAK_LENGTHS) {
            let events = run(f, wheel, need as usize);
            let first = events.iter().position(|e| e.is_some_and(|e| e.action == verb));
            assert_eq!(first, Some(need as usize - 1), "{verb:?}");
        }
    }

    pub fn one_failed_step_restarts_the_streak() {
        let mut streaks = Streaks::default();
        let good = StepFacts { objects: [watch(0.0, 8.0), far()], max_wheel_speed: 0.0 };
        let bad = StepFacts { objects: [watch(20.0, 8.0), far()], max_wheel_speed: 0.0 };
        let seq = [good, good, good, good, good, bad, good, good, good, good, good, good];
        let events: Vec<_> = seq.iter().enumerate().map(|(t, f)| evaluate_success(f, &mut streaks, &objects(), t + 1, None)).collect();
        assert_eq!(events.iter().position(Option::is_some), Some(11));
    }

    fn candidate(action: Verb, object: usize, pushed: f64) -> Candidate {
        let o = objects()[object];
        Candidate { event: SuccessEvent { action, color: o.color, shape: o.shape, step: 3 }, object, pushed }
    }

    pub fn prioritisation_table() {
        use Verb::*;
        let red_pillar = |v| Sentence::new(v, Color::Red, Shape::Pillar);
        let push_cmd = red_pillar(PushForward);
        let rows: Vec<(Vec<Candidate>, Option<&Sentence>, Option<(Verb, usize)>)> = vec![
            (vec![], None, None),
            (vec![candidate(PushForward, 0, 0.3), candidate(PushLeft, 0, 0.5)], None, Some((PushLeft, 0))),
            (vec![candidate(PushForward, 0, 0.6), candidate(PushRight, 1, 0.5)], None, Some((PushForward, 0))),
            (vec![candidate(PushForward, 0, 0.6), candidate(TouchTop, 0, 0.0)], None, Some((TouchTop, 0))),
            (vec![candidate(PushLeft, 1, 0.9), candidate(TouchTop, 0, 0.0), candidate(PushRight, 0, 0.3)], None, Some((TouchTop, 0))),
            (vec![candidate(Watch, 1, 0.0), candidate(PushForward, 0, 0.2)], None, Some((Watch, 1))),
            (vec![candidate(Watch, 1, 0.0), candidate(PushForward, 0, 0.2)], Some(&push_cmd), Some((PushForward, 0))),
            (vec![candidate(Watch, 1, 0.0), candidate(Watch, 0, 0.0)], None, Some((Watch, 0))),
        ];
        let cmd = red_pillar(PushLeft);
        let suppressed = vec![candidate(PushLeft, 0, 0.2), candidate(PushForward, 0, 0.4)];
        // the commanded push lost to a farther push, so it cannot be reported
        assert_eq!(apply_action_constraints(&suppressed, Some(&cmd)).map(|e| e.action), Some(PushForward));
        for (i, (cands, cmd, expect)) in rows.iter().enumerate() {
            let got = apply_action_constraints(cands, *cmd).map(|e| {
                let k = if e.color == Color::Red { 0 } else { 1 };
                (e.action, k)
            });
            assert_eq!(got, *expect, "row {i}");
        }
    }
}

pub mod split {
    use std::collections::HashSet;

    use codev_core::language::{generate_split, ScaleConfig};

    pub fn preset_counts_and_invariants_over_seeds() {
        for (scale, total, train) in [(ScaleConfig::FULL, 180, 60), (ScaleConfig::MIDDLE, 100, 33), (ScaleConfig::SMALL, 48, 16)] {
            for seed in 0..100 {
                let split = generate_split(scale, seed);
                assert_eq!(split.train.len(), train);
                assert_eq!(split.train.len() + split.test.len(), total);
                let a: HashSet<_> = split.train.iter().collect();
                let b: HashSet<_> = split.test.iter().collect();
                assert!(a.is_disjoint(&b));
                assert_eq!(a.len() + b.len(), total);
                assert!(split.train.iter().chain(&split.test).all(|s| scale.contains(s)));
                assert!(split.covers_vocabulary(), "{} seed {seed}", scale.name());
            }
        }
    }

    pub fn splits_depend_only_on_the_seed() {
        assert_eq!(generate_split(ScaleConfig::FULL, 5), generate_split(ScaleConfig::FULL, 5));
        assert_ne!(generate_split(ScaleConfig::FULL, 5).train, generate_split(ScaleConfig::FULL, 6).train);
    }
}
