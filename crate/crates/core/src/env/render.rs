//! Pinhole camera on the body's front face.
//!
//! Flat colours, no lighting. The floor is not drawn: rays that hit nothing
//! return the background colour and a distance of 1.

use alloc::vec::Vec;

use glam::DVec3;

use super::geometry::{intersect_box, intersect_capsule};
use super::{ArenaState, RobotState, ARM_RADIUS, BODY_HALF, HAND_HALF};

pub const CAMERA_HEIGHT: f64 = 1.5;
/// Half the field of view, horizontally and vertically.
pub const HALF_FOV_DEG: f64 = 45.0;
pub const FAR_PLANE: f64 = 30.0;
pub const BACKGROUND: [f64; 3] = [0.75, 0.75, 0.75];
pub const ROBOT_GRAY: [f64; 3] = [0.3, 0.3, 0.3];

/// Camera origin and unit ray direction for pixel `(row, col)` of an `n × n` image.
pub fn camera_ray(robot: &RobotState, n: usize, row: usize, col: usize) -> (DVec3, DVec3) {
    let f = robot.forward();
    let right = -robot.left();
    let origin = (robot.position + f * BODY_HALF).extend(CAMERA_HEIGHT);
    let span = libm::tan(HALF_FOV_DEG.to_radians());
    let u = (2.0 * (col as f64 + 0.5) / n as f64 - 1.0) * span;
    let v = (1.0 - 2.0 * (row as f64 + 0.5) / n as f64) * span;
    let dir = (f + right * u).extend(0.0) + DVec3::Z * v;
    (origin, dir.normalize())
}

/// Renders `n × n × 4` values: red, green, blue, distance / far plane.
pub fn render_vision(state: &ArenaState) -> Vec<f64> {
    let n = state.config.vision_size;
    let robot = &state.robot;
    let pivot = robot.arm_pivot();
    let tip = robot.arm_tip();
    let hand = robot.hand_center();
    let hand_yaw = robot.arm_azimuth();
    let mut out = Vec::with_capacity(n * n * 4);
    for row in 0..n {
        for col in 0..n {
            let (o, d) = camera_ray(robot, n, row, col);
            let mut best = FAR_PLANE;
            let mut color = BACKGROUND;
            let mut consider = |t: Option<f64>, c: [f64; 3]| {
                if let Some(t) = t {
                    if t < best {
                        best = t;
                        color = c;
                    }
                }
            };
            for obj in &state.objects {
                consider(obj.solid().intersect(obj.position, o, d), obj.color.rgb());
            }
            consider(intersect_capsule(o, d, pivot, tip, ARM_RADIUS), ROBOT_GRAY);
            consider(intersect_box(o, d, hand, hand_yaw, HAND_HALF), ROBOT_GRAY);
            out.extend_from_slice(&color);
            out.push((best / FAR_PLANE).min(1.0));
        }
    }
    out
}

/// Pixel count whose colour equals `rgb`.
pub fn count_color(vision: &[f64], rgb: [f64; 3]) -> usize {
    vision.chunks_exact(4).filter(|px| px[..3] == rgb).count()
}
