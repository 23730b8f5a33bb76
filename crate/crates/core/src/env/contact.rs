//! Overlap resolution between robot parts and objects, and touch patches.
//!
//! Patches 0-7 sit on the body's side faces (front-left, front-right,
//! back-left, back-right, left-front, left-back, right-front, right-back),
//! 8-11 along the arm from pivot to tip, 12-15 on the hand's front, left,
//! back and right faces.

use alloc::vec::Vec;

use glam::{DVec2, DVec3};

use super::geometry::{closest_param, Solid};
use super::{ObjectInstance, RobotState, ARENA_HALF, ARM_RADIUS, BODY_HALF, BODY_HEIGHT, HAND_HALF};

pub const TOUCH_PATCHES: usize = 16;
/// Gap below which a part counts as touching.
pub const CONTACT_TOLERANCE: f64 = 1e-3;

const ARM_SAMPLES: usize = 32;
const RESOLVE_PASSES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Part {
    Body,
    Arm,
    Hand,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Contact {
    pub object: usize,
    pub part: Part,
    pub patch: usize,
}

/// Signed gap between a part and an object, the horizontal direction that
/// moves the object away, and the touched patch.
#[derive(Clone, Copy, Debug)]
struct Probe {
    gap: f64,
    away: DVec2,
    patch: usize,
}

fn rotate(v: DVec2, angle: f64) -> DVec2 {
    DVec2::from_angle(angle).rotate(v)
}

fn probe_body(robot: &RobotState, solid: &Solid, center: DVec2, band_pad: f64) -> Option<Probe> {
    let radius = solid.max_radius(0.0, BODY_HEIGHT + band_pad)?;
    let local = rotate(center - robot.position, -robot.heading);
    let q = local.clamp(DVec2::splat(-BODY_HALF), DVec2::splat(BODY_HALF));
    let (gap, dir, q) = if local != q {
        let diff = local - q;
        let d = diff.length();
        (d - radius, diff / d, q)
    } else {
        // centre inside the body: leave through the nearest face
        let (fx, fy) = (BODY_HALF - local.x.abs(), BODY_HALF - local.y.abs());
        if fx <= fy {
            let s = if local.x >= 0.0 { 1.0 } else { -1.0 };
            (-(fx + radius), DVec2::new(s, 0.0), DVec2::new(s * BODY_HALF, local.y))
        } else {
            let s = if local.y >= 0.0 { 1.0 } else { -1.0 };
            (-(fy + radius), DVec2::new(0.0, s), DVec2::new(local.x, s * BODY_HALF))
        }
    };
    let patch = if q.x.abs() >= q.y.abs() {
        let base = if q.x > 0.0 { 0 } else { 2 };
        base + usize::from(q.y <= 0.0)
    } else {
        let base = if q.y > 0.0 { 4 } else { 6 };
        base + usize::from(q.x <= 0.0)
    };
    Some(Probe { gap, away: rotate(dir, robot.heading), patch })
}

fn probe_arm(robot: &RobotState, solid: &Solid, center: DVec2, band_pad: f64) -> Option<Probe> {
    let a = robot.arm_pivot();
    let b = robot.arm_tip();
    let s_star = closest_param(a.truncate(), b.truncate(), center);
    let mut best: Option<(f64, f64, DVec2)> = None;
    let samples = (0..=ARM_SAMPLES).map(|k| k as f64 / ARM_SAMPLES as f64).chain(core::iter::once(s_star));
    for s in samples {
        let p: DVec3 = a + (b - a) * s;
        let Some(r) = solid.max_radius(p.z - ARM_RADIUS - band_pad, p.z + ARM_RADIUS) else { continue };
        let diff = center - p.truncate();
        let d = diff.length();
        let gap = d - r - ARM_RADIUS;
        if best.map_or(true, |(g, _, _)| gap < g) {
            let away = if d > 1e-12 { diff / d } else { robot.forward() };
            best = Some((gap, s, away));
        }
    }
    best.map(|(gap, s, away)| Probe { gap, away, patch: 8 + ((s * 4.0) as usize).min(3) })
}

fn probe_hand(robot: &RobotState, solid: &Solid, center: DVec2, band_pad: f64) -> Option<Probe> {
    let h = robot.hand_center();
    let r = solid.max_radius(h.z - HAND_HALF - band_pad, h.z + HAND_HALF)?;
    let diff = center - h.truncate();
    let d = diff.length();
    let away = if d > 1e-12 { diff / d } else { robot.forward() };
    let local = rotate(away, -robot.arm_azimuth());
    let patch = if local.x.abs() >= local.y.abs() {
        if local.x >= 0.0 {
            12
        } else {
            14
        }
    } else if local.y > 0.0 {
        13
    } else {
        15
    };
    Some(Probe { gap: d - r - HAND_HALF, away, patch })
}

fn probes(robot: &RobotState, obj: &ObjectInstance, band_pad: f64) -> [(Part, Option<Probe>); 3] {
    let solid = obj.solid();
    [
        (Part::Body, probe_body(robot, &solid, obj.position, band_pad)),
        (Part::Arm, probe_arm(robot, &solid, obj.position, band_pad)),
        (Part::Hand, probe_hand(robot, &solid, obj.position, band_pad)),
    ]
}

/// Pushes objects out of every robot part, then apart from each other, then
/// inside the walls. Returns the total depth resolved per object.
pub(crate) fn resolve(robot: &RobotState, objects: &mut [ObjectInstance; 2]) -> [f64; 2] {
    let mut depth = [0.0; 2];
    for _ in 0..RESOLVE_PASSES {
        let mut moved = false;
        for (i, obj) in objects.iter_mut().enumerate() {
            let deepest = probes(robot, obj, 0.0)
                .into_iter()
                .filter_map(|(_, p)| p)
                .filter(|p| p.gap < 0.0)
                .min_by(|a, b| a.gap.total_cmp(&b.gap));
            if let Some(p) = deepest {
                obj.position += p.away * -p.gap;
                depth[i] += -p.gap;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let (ra, rb) = (objects[0].solid().footprint(), objects[1].solid().footprint());
    let diff = objects[1].position - objects[0].position;
    let d = diff.length();
    let overlap = ra + rb - d;
    if overlap > 0.0 {
        let dir = if d > 1e-12 { diff / d } else { DVec2::X };
        objects[0].position -= dir * (0.5 * overlap);
        objects[1].position += dir * (0.5 * overlap);
        depth[0] += 0.5 * overlap;
        depth[1] += 0.5 * overlap;
    }

    for obj in objects.iter_mut() {
        let lim = ARENA_HALF - obj.solid().footprint();
        obj.position = obj.position.clamp(DVec2::splat(-lim), DVec2::splat(lim));
    }
    depth
}

/// Every part touching every object.
pub(crate) fn detect(robot: &RobotState, objects: &[ObjectInstance; 2]) -> Vec<Contact> {
    let mut out = Vec::new();
    for (i, obj) in objects.iter().enumerate() {
        for (part, probe) in probes(robot, obj, CONTACT_TOLERANCE) {
            if let Some(p) = probe {
                if p.gap < CONTACT_TOLERANCE {
                    out.push(Contact { object: i, part, patch: p.patch });
                }
            }
        }
    }
    out
}
