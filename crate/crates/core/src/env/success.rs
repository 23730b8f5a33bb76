//! Goal predicates, streak counting and the one-event-per-step rule.

use alloc::vec::Vec;

use crate::language::{Color, Sentence, Shape, Verb};

use super::ObjectInstance;

pub const FACING_LIMIT_DEG: f64 = 15.0;
pub const WATCH_MIN: f64 = 6.0;
pub const WATCH_MAX: f64 = 10.0;
pub const NEAR_MAX: f64 = 6.0;
pub const TOP_HEIGHT_MIN: f64 = 3.75;
pub const PUSH_FORWARD_MIN: f64 = 0.1;
pub const PUSH_LATERAL_MIN: f64 = 0.2;
pub const WHEEL_GATE: f64 = 5.0;
/// Consecutive qualifying steps per verb, in token order.
pub const STREAK_LENGTHS: [u32; 6] = [6, 5, 3, 3, 3, 3];

/// Per-step measurements about one object.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectFacts {
    /// Angle between the heading and the direction to the object centre.
    pub facing_deg: f64,
    /// Body centre to object centre, meters.
    pub distance: f64,
    /// Any robot part touched the object during the step.
    pub contact: bool,
    /// The hand touched it while its centre was at least [`TOP_HEIGHT_MIN`] high.
    pub hand_top_contact: bool,
    /// Displacement over the step along the final heading.
    pub forward_push: f64,
    /// Displacement over the step towards the robot's left.
    pub lateral_push: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepFacts {
    pub objects: [ObjectFacts; 2],
    /// Largest wheel speed magnitude reached during the step.
    pub max_wheel_speed: f64,
}

/// Consecutive-step counters per verb and object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Streaks {
    pub counts: [[u32; 2]; 6],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuccessEvent {
    pub action: Verb,
    pub color: Color,
    pub shape: Shape,
    /// Step index (1-based) at which it was reported.
    pub step: usize,
}

impl SuccessEvent {
    pub fn sentence(&self) -> Sentence {
        Sentence::new(self.action, self.color, self.shape)
    }
}

/// An event before prioritisation, with the distance pushed for push verbs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub event: SuccessEvent,
    pub object: usize,
    pub pushed: f64,
}

fn is_push(v: Verb) -> bool {
    matches!(v, Verb::PushForward | Verb::PushLeft | Verb::PushRight)
}

fn holds(verb: Verb, f: &ObjectFacts, max_wheel: f64) -> bool {
    let facing = f.facing_deg < FACING_LIMIT_DEG;
    match verb {
        Verb::Watch => facing && f.distance > WATCH_MIN && f.distance < WATCH_MAX,
        Verb::BeNear => facing && f.distance < NEAR_MAX && !f.contact,
        Verb::TouchTop => f.hand_top_contact,
        Verb::PushForward => f.contact && f.forward_push > PUSH_FORWARD_MIN,
        Verb::PushLeft => f.contact && max_wheel < WHEEL_GATE && f.lateral_push > PUSH_LATERAL_MIN,
        Verb::PushRight => f.contact && max_wheel < WHEEL_GATE && -f.lateral_push > PUSH_LATERAL_MIN,
    }
}

fn pushed(verb: Verb, f: &ObjectFacts) -> f64 {
    match verb {
        Verb::PushForward => f.forward_push,
        Verb::PushLeft | Verb::PushRight => f.lateral_push.abs(),
        _ => 0.0,
    }
}

/// Updates the streaks with this step's facts and returns the surviving event.
pub fn evaluate_success(
    facts: &StepFacts,
    streaks: &mut Streaks,
    objects: &[ObjectInstance; 2],
    step: usize,
    command: Option<&Sentence>,
) -> Option<SuccessEvent> {
    let mut candidates = Vec::new();
    for verb in Verb::ALL {
        for (k, obj) in objects.iter().enumerate() {
            let f = &facts.objects[k];
            let count = &mut streaks.counts[verb.index()][k];
            if holds(verb, f, facts.max_wheel_speed) {
                *count += 1;
            } else {
                *count = 0;
            }
            if *count >= STREAK_LENGTHS[verb.index()] {
                candidates.push(Candidate {
                    event: SuccessEvent { action: verb, color: obj.color, shape: obj.shape, step },
                    object: k,
                    pushed: pushed(verb, f),
                });
            }
        }
    }
    apply_action_constraints(&candidates, command)
}

/// Reduces candidates to at most one event.
///
/// Touch the Top removes every push; among pushes only the greatest distance
/// survives. If several events remain, the commanded one wins, otherwise the
/// first in verb order, then object order.
pub fn apply_action_constraints(candidates: &[Candidate], command: Option<&Sentence>) -> Option<SuccessEvent> {
    let touching = candidates.iter().any(|c| c.event.action == Verb::TouchTop);
    let best_push = candidates
        .iter()
        .filter(|c| is_push(c.event.action) && !touching)
        .fold(None::<&Candidate>, |best, c| match best {
            Some(b) if b.pushed >= c.pushed => Some(b),
            _ => Some(c),
        });
    let mut kept: Vec<&Candidate> = candidates.iter().filter(|c| !is_push(c.event.action)).collect();
    kept.extend(best_push);
    if let Some(cmd) = command {
        if let Some(c) = kept.iter().find(|c| c.event.sentence() == *cmd) {
            return Some(c.event);
        }
    }
    kept.into_iter().min_by_key(|c| (c.event.action, c.object)).map(|c| c.event)
}
