//! Kinematic arena: a crane robot, two objects, sensors and goal events.
//!
//! The arena is a 20 m square centred on the origin. The robot is a 2 m cube
//! on two wheels with a 4 m arm on a yaw/pitch pivot at the centre of its top
//! face; a 1 m cube hand hangs 1.5 m below the arm tip. Objects never move on
//! their own: robot parts that overlap them translate them by the minimal
//! horizontal vector that removes the overlap.

mod contact;
pub mod geometry;
mod render;
pub mod success;

use alloc::vec::Vec;
use core::f64::consts::PI;

use glam::{DVec2, DVec3};
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::language::{self, Color, ScaleConfig, Sentence, Shape, VoiceRow, SENTENCE_LEN};
use crate::rng::{stream, stream_rng};
use crate::EPISODE_STEPS;

pub use contact::{TOUCH_PATCHES, CONTACT_TOLERANCE};
pub use geometry::Solid;
pub use render::{camera_ray, count_color, render_vision, BACKGROUND, CAMERA_HEIGHT, FAR_PLANE, HALF_FOV_DEG, ROBOT_GRAY};
pub use success::{
    apply_action_constraints, evaluate_success, Candidate, ObjectFacts, StepFacts, Streaks, SuccessEvent, FACING_LIMIT_DEG,
    NEAR_MAX, PUSH_FORWARD_MIN, PUSH_LATERAL_MIN, STREAK_LENGTHS, TOP_HEIGHT_MIN, WATCH_MAX, WATCH_MIN, WHEEL_GATE,
};

pub const ARENA_HALF: f64 = 10.0;
pub const BODY_HALF: f64 = 1.0;
pub const BODY_HEIGHT: f64 = 2.0;
pub const WHEEL_BASE: f64 = 2.0;
pub const MAX_WHEEL_SPEED: f64 = 10.0;
pub const YAW_LIMIT_DEG: f64 = 30.0;
pub const PITCH_MAX_DEG: f64 = 90.0;
pub const JOINT_SPEED_DEG: f64 = 90.0;
pub const SUBSTEPS: usize = 10;
pub const SUBSTEP_DT: f64 = 0.025;
pub const ARM_LENGTH: f64 = 4.0;
pub const ARM_RADIUS: f64 = 0.15;
pub const HAND_DROP: f64 = 1.5;
pub const HAND_HALF: f64 = 0.5;
pub const SPAWN_SEPARATION: f64 = 4.0;

/// Simulation settings that vary between network presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvConfig {
    /// Side length of the square camera image in pixels.
    pub vision_size: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { vision_size: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotState {
    pub position: DVec2,
    /// Radians in (-π, π].
    pub heading: f64,
    pub wheel_left: f64,
    pub wheel_right: f64,
    /// Degrees; positive turns the arm to the robot's left.
    pub yaw: f64,
    /// Degrees; 0 points the arm straight up, 90 straight ahead.
    pub pitch: f64,
    pub yaw_vel: f64,
    pub pitch_vel: f64,
}

impl RobotState {
    pub fn at(position: DVec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
            wheel_left: 0.0,
            wheel_right: 0.0,
            yaw: 0.0,
            pitch: 0.0,
            yaw_vel: 0.0,
            pitch_vel: 0.0,
        }
    }

    pub fn forward(&self) -> DVec2 {
        DVec2::from_angle(self.heading)
    }

    /// Unit vector to the robot's left.
    pub fn left(&self) -> DVec2 {
        self.forward().perp()
    }

    pub fn arm_pivot(&self) -> DVec3 {
        self.position.extend(BODY_HEIGHT)
    }

    /// Horizontal direction of the arm in world coordinates (radians).
    pub fn arm_azimuth(&self) -> f64 {
        self.heading + self.yaw.to_radians()
    }

    pub fn arm_tip(&self) -> DVec3 {
        let p = self.pitch.to_radians();
        let az = self.arm_azimuth();
        let (sp, cp) = (libm::sin(p), libm::cos(p));
        self.arm_pivot() + DVec3::new(sp * libm::cos(az), sp * libm::sin(az), cp) * ARM_LENGTH
    }

    pub fn hand_center(&self) -> DVec3 {
        self.arm_tip() - DVec3::new(0.0, 0.0, HAND_DROP)
    }

    /// True when every field is within its physical bounds.
    pub fn in_bounds(&self) -> bool {
        let lim = ARENA_HALF - BODY_HALF;
        self.position.x.abs() <= lim
            && self.position.y.abs() <= lim
            && self.heading > -PI
            && self.heading <= PI
            && self.wheel_left.abs() <= MAX_WHEEL_SPEED
            && self.wheel_right.abs() <= MAX_WHEEL_SPEED
            && self.yaw.abs() <= YAW_LIMIT_DEG
            && (0.0..=PITCH_MAX_DEG).contains(&self.pitch)
            && self.yaw_vel.abs() <= JOINT_SPEED_DEG
            && self.pitch_vel.abs() <= JOINT_SPEED_DEG
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = libm::fmod(a + PI, 2.0 * PI);
    if x <= 0.0 {
        x += 2.0 * PI;
    }
    x - PI
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectInstance {
    pub shape: Shape,
    pub color: Color,
    pub position: DVec2,
}

impl ObjectInstance {
    pub fn new(shape: Shape, color: Color, position: DVec2) -> Self {
        Self { shape, color, position }
    }

    pub fn solid(&self) -> Solid {
        Solid::of(self.shape)
    }

    pub fn matches(&self, s: &Sentence) -> bool {
        self.color == s.color && self.shape == s.shape
    }
}

/// Four target velocities in [-1, 1]: left wheel, right wheel, yaw, pitch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotorCommand(pub [f64; 4]);

impl MotorCommand {
    pub const ZERO: MotorCommand = MotorCommand([0.0; 4]);

    /// Clamps every component into [-1, 1]; NaN becomes 0.
    pub fn new(values: [f64; 4]) -> Self {
        MotorCommand(values.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) }))
    }

    fn targets(&self) -> [f64; 4] {
        let [l, r, y, p] = self.0;
        [l * MAX_WHEEL_SPEED, r * MAX_WHEEL_SPEED, y * JOINT_SPEED_DEG, p * JOINT_SPEED_DEG]
    }
}

/// The five-modality sensation.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBundle {
    pub vision_size: usize,
    /// `vision_size² × 4` values, row-major over pixels, channels red, green, blue, distance.
    pub vision: Vec<f64>,
    pub touch: [f64; TOUCH_PATCHES],
    pub proprio: [f64; 4],
    pub command: [VoiceRow; SENTENCE_LEN],
    /// One silence row or three sentence rows.
    pub feedback: Vec<VoiceRow>,
}

impl ObservationBundle {
    /// Feedback voice as three rows, silence repeated when nothing was achieved.
    pub fn feedback_rows(&self) -> [VoiceRow; SENTENCE_LEN] {
        match self.feedback.len() {
            SENTENCE_LEN => [self.feedback[0], self.feedback[1], self.feedback[2]],
            _ => [self.feedback[0]; SENTENCE_LEN],
        }
    }

    /// Every value in [0, 1] and every voice row one-hot.
    pub fn is_valid(&self) -> bool {
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        let voice_ok = |r: &VoiceRow| language::decode_row(r).is_ok();
        self.vision.len() == self.vision_size * self.vision_size * 4
            && self.vision.iter().all(unit)
            && self.touch.iter().all(unit)
            && self.proprio.iter().all(unit)
            && self.command.iter().all(voice_ok)
            && self.feedback.iter().all(voice_ok)
            && language::decode(&self.feedback).is_ok()
    }
}

/// Ground truth of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ArenaState {
    pub config: EnvConfig,
    pub scale: ScaleConfig,
    pub seed: u64,
    pub command: Sentence,
    pub robot: RobotState,
    /// Commanded target first, distractor second.
    pub objects: [ObjectInstance; 2],
    pub step_index: usize,
    pub streaks: Streaks,
    pub done: bool,
    /// Touch readings of the last step.
    pub touch: [f64; TOUCH_PATCHES],
    /// Event reported by the feedback voice after the last step.
    pub last_event: Option<SuccessEvent>,
}

/// Result of one [`step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: ObservationBundle,
    pub reward: f64,
    pub done: bool,
    pub event: Option<SuccessEvent>,
    pub facts: StepFacts,
}

/// One line of an exported episode trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub position: [f64; 2],
    pub heading: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub objects: [[f64; 2]; 2],
    pub event: Option<SuccessEvent>,
    pub reward: f64,
}

impl TraceRecord {
    pub fn capture(state: &ArenaState, event: Option<SuccessEvent>, reward: f64) -> Self {
        Self {
            step: state.step_index,
            position: state.robot.position.to_array(),
            heading: state.robot.heading,
            yaw: state.robot.yaw,
            pitch: state.robot.pitch,
            objects: state.objects.map(|o| o.position.to_array()),
            event,
            reward,
        }
    }
}

fn uniform_point<R: Rng>(rng: &mut R, half: f64) -> DVec2 {
    DVec2::new(rng.gen_range(-half..=half), rng.gen_range(-half..=half))
}

/// Starts an episode for `command`.
pub fn reset(seed: u64, command: Sentence, scale: ScaleConfig, config: EnvConfig) -> Result<(ArenaState, ObservationBundle)> {
    scale.validate(&command)?;
    let mut rng = stream_rng(seed, stream::ENV);

    let others: Vec<(Color, Shape)> = scale
        .colors()
        .iter()
        .flat_map(|&c| scale.shapes().iter().map(move |&s| (c, s)))
        .filter(|&(c, s)| (c, s) != (command.color, command.shape))
        .collect();
    if others.is_empty() {
        return Err(CoreError::Config("scale has no distractor object".into()));
    }
    let (dc, ds) = others[rng.gen_range(0..others.len())];

    let half = ARENA_HALF - BODY_HALF;
    let (robot_pos, a, b) = loop {
        let r = uniform_point(&mut rng, half);
        let a = uniform_point(&mut rng, half);
        let b = uniform_point(&mut rng, half);
        if r.distance(a) >= SPAWN_SEPARATION && r.distance(b) >= SPAWN_SEPARATION && a.distance(b) >= SPAWN_SEPARATION {
            break (r, a, b);
        }
    };
    let heading = rng.gen_range(-PI..PI);

    let state = ArenaState {
        config,
        scale,
        seed,
        command,
        robot: RobotState::at(robot_pos, heading),
        objects: [ObjectInstance::new(command.shape, command.color, a), ObjectInstance::new(ds, dc, b)],
        step_index: 0,
        streaks: Streaks::default(),
        done: false,
        touch: [0.0; TOUCH_PATCHES],
        last_event: None,
    };
    let obs = observe(&state);
    Ok((state, obs))
}

/// Normalised yaw, pitch, yaw velocity and pitch velocity.
pub fn sense_proprioception(robot: &RobotState) -> [f64; 4] {
    let norm = |x: f64, lo: f64, hi: f64| ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    [
        norm(robot.yaw, -YAW_LIMIT_DEG, YAW_LIMIT_DEG),
        norm(robot.pitch, 0.0, PITCH_MAX_DEG),
        norm(robot.yaw_vel, -JOINT_SPEED_DEG, JOINT_SPEED_DEG),
        norm(robot.pitch_vel, -JOINT_SPEED_DEG, JOINT_SPEED_DEG),
    ]
}

/// Inverse of [`sense_proprioception`].
pub fn denormalize_proprioception(p: &[f64; 4]) -> [f64; 4] {
    let den = |x: f64, lo: f64, hi: f64| lo + x * (hi - lo);
    [
        den(p[0], -YAW_LIMIT_DEG, YAW_LIMIT_DEG),
        den(p[1], 0.0, PITCH_MAX_DEG),
        den(p[2], -JOINT_SPEED_DEG, JOINT_SPEED_DEG),
        den(p[3], -JOINT_SPEED_DEG, JOINT_SPEED_DEG),
    ]
}

/// Touch readings of the last step.
pub fn sense_touch(state: &ArenaState) -> [f64; TOUCH_PATCHES] {
    state.touch
}

/// Builds the observation for the current state.
pub fn observe(state: &ArenaState) -> ObservationBundle {
    let achieved = state.last_event.map(|e| Sentence::new(e.action, e.color, e.shape));
    ObservationBundle {
        vision_size: state.config.vision_size,
        vision: render_vision(state),
        touch: state.touch,
        proprio: sense_proprioception(&state.robot),
        command: language::encode_sentence(&state.command),
        feedback: language::feedback_sentence(achieved),
    }
}

fn integrate_joint(angle: &mut f64, vel: f64, lo: f64, hi: f64) -> f64 {
    let next = *angle + vel * SUBSTEP_DT;
    if next < lo {
        *angle = lo;
        0.0
    } else if next > hi {
        *angle = hi;
        0.0
    } else {
        *angle = next;
        vel
    }
}

/// Advances one substep of robot kinematics with the given velocities.
fn move_robot(robot: &mut RobotState, v: [f64; 4]) {
    let [vl, vr, yv, pv] = v;
    robot.wheel_left = vl;
    robot.wheel_right = vr;
    let lin = 0.5 * (vl + vr);
    let ang = (vr - vl) / WHEEL_BASE;
    let th = robot.heading;
    robot.position += DVec2::new(libm::cos(th), libm::sin(th)) * (lin * SUBSTEP_DT);
    robot.heading = th + ang * SUBSTEP_DT;
    let lim = ARENA_HALF - BODY_HALF;
    robot.position = robot.position.clamp(DVec2::splat(-lim), DVec2::splat(lim));
    robot.yaw_vel = integrate_joint(&mut robot.yaw, yv, -YAW_LIMIT_DEG, YAW_LIMIT_DEG);
    robot.pitch_vel = integrate_joint(&mut robot.pitch, pv, 0.0, PITCH_MAX_DEG);
}

/// Advances the arena by one 0.25 s step.
pub fn step(state: &mut ArenaState, command: MotorCommand) -> Result<StepOutcome> {
    if state.done || state.step_index >= EPISODE_STEPS {
        return Err(CoreError::EpisodeDone(state.step_index));
    }
    let command = MotorCommand::new(command.0);
    let target = command.targets();
    let r0 = state.robot;
    let start = [r0.wheel_left, r0.wheel_right, r0.yaw_vel, r0.pitch_vel];
    let starts = state.objects.map(|o| o.position);

    let mut touch_counts = [0u32; TOUCH_PATCHES];
    let mut facts = StepFacts::default();
    for k in 1..=SUBSTEPS {
        let f = k as f64 / SUBSTEPS as f64;
        let limits = [MAX_WHEEL_SPEED, MAX_WHEEL_SPEED, JOINT_SPEED_DEG, JOINT_SPEED_DEG];
        let v: [f64; 4] = core::array::from_fn(|i| (start[i] + (target[i] - start[i]) * f).clamp(-limits[i], limits[i]));
        facts.max_wheel_speed = facts.max_wheel_speed.max(v[0].abs()).max(v[1].abs());
        move_robot(&mut state.robot, v);
        contact::resolve(&state.robot, &mut state.objects);
        let touching = contact::detect(&state.robot, &state.objects);
        let mut seen = [false; TOUCH_PATCHES];
        for c in &touching {
            seen[c.patch] = true;
            let of = &mut facts.objects[c.object];
            of.contact = true;
            if c.part == contact::Part::Hand && state.robot.hand_center().z >= TOP_HEIGHT_MIN {
                of.hand_top_contact = true;
            }
        }
        for (n, s) in touch_counts.iter_mut().zip(seen) {
            *n += u32::from(s);
        }
    }
    state.robot.heading = wrap_angle(state.robot.heading);
    state.touch = touch_counts.map(|n| n as f64 / SUBSTEPS as f64);

    let robot = state.robot;
    for (i, of) in facts.objects.iter_mut().enumerate() {
        let to = state.objects[i].position - robot.position;
        of.distance = to.length();
        of.facing_deg = robot.forward().angle_to(to).abs().to_degrees();
        let moved = state.objects[i].position - starts[i];
        of.forward_push = moved.dot(robot.forward());
        of.lateral_push = moved.dot(robot.left());
    }

    state.step_index += 1;
    let event = evaluate_success(&facts, &mut state.streaks, &state.objects, state.step_index, Some(&state.command));
    state.last_event = event;
    let reward = match event {
        Some(e) if e.sentence() == state.command => 1.0,
        _ => 0.0,
    };
    state.done = reward > 0.0 || state.step_index >= EPISODE_STEPS;
    Ok(StepOutcome { observation: observe(state), reward, done: state.done, event, facts })
}
