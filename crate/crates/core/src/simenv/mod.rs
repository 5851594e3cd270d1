//! Kinematic world model for the dolly-in task.
//!
//! A differential-drive base carries a pan-tilt camera turret toward a
//! spherical subject. Ground-plane angles grow clockwise: `+x` points from the
//! robot start toward the subject and `+y` lies to the robot's right, so a
//! positive heading rate, pan angle or offset angle all mean "to the right".

mod perturb;
mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{self, BinaryMask, CameraIntrinsics, ShotMetrics};
use crate::{Error, Result};

pub use perturb::{PerturbationConfig, PerturbedEnv};
pub use trajectory::{write_trajectory_csv, TraceRow};

/// Number of observation channels.
pub const OBS_DIM: usize = 9;
/// Number of actuation channels.
pub const ACTION_DIM: usize = 4;

/// Ground truth of the simulated scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot_x: f64,
    pub robot_y: f64,
    pub robot_heading: f64,
    pub pan: f64,
    pub tilt: f64,
    pub subject_x: f64,
    pub subject_y: f64,
    /// Height of the subject centre.
    pub subject_z: f64,
    pub subject_radius: f64,
    pub camera_height: f64,
    pub t: usize,
}

/// Start placement relative to the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPosition {
    Left,
    Right,
    Centre,
    /// One of the three fixed starts, chosen by the episode seed.
    Mixed,
}

impl StartPosition {
    pub const FIXED: [StartPosition; 3] = [StartPosition::Left, StartPosition::Right, StartPosition::Centre];

    pub fn as_str(&self) -> &'static str {
        match self {
            StartPosition::Left => "left",
            StartPosition::Right => "right",
            StartPosition::Centre => "centre",
            StartPosition::Mixed => "mixed",
        }
    }

    /// Lateral sign of the start: left of the approach line is `-y`.
    fn side(self) -> f64 {
        match self {
            StartPosition::Left => -1.0,
            StartPosition::Right => 1.0,
            StartPosition::Centre | StartPosition::Mixed => 0.0,
        }
    }
}

impl std::fmt::Display for StartPosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StartPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(StartPosition::Left),
            "right" => Ok(StartPosition::Right),
            "centre" | "center" => Ok(StartPosition::Centre),
            "mixed" => Ok(StartPosition::Mixed),
            other => Err(Error::Config(format!("unknown start position {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Arena {
    fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectConfig {
    pub x: f64,
    pub y: f64,
    /// Height of the subject centre.
    pub z: f64,
    pub radius: f64,
}

/// Simulator configuration. Every field has a default; TOML files may
/// override any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Seconds per step.
    pub dt: f64,
    pub max_speed: f64,
    pub max_turn_rate: f64,
    pub max_pan_rate: f64,
    pub max_tilt_rate: f64,
    pub pan_limit: f64,
    pub tilt_limit: f64,
    pub episode_len: usize,
    pub arena: Arena,
    /// Desired subject area as a fraction of the frame.
    pub target_area: f64,
    /// Largest admissible subject area fraction.
    pub area_max: f64,
    pub start_position: StartPosition,
    /// Mixed into every episode seed.
    pub rng_seed: u64,
    pub camera: CameraIntrinsics,
    pub camera_height: f64,
    pub subject: SubjectConfig,
    /// Nominal start distance from the subject along the approach line.
    pub standoff: f64,
    /// Nominal lateral offset of the left/right starts.
    pub lateral_offset: f64,
    pub standoff_jitter: f64,
    pub lateral_jitter: f64,
    pub heading_jitter: f64,
    /// The base cannot drive closer than this to the subject centre.
    pub min_clearance: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_speed: 0.5,
            max_turn_rate: 1.5,
            max_pan_rate: 1.0,
            max_tilt_rate: 1.0,
            pan_limit: 1.3,
            tilt_limit: 0.6,
            episode_len: 1500,
            arena: Arena {
                x_min: -1.0,
                x_max: 4.0,
                y_min: -2.0,
                y_max: 2.0,
            },
            target_area: 0.10,
            area_max: 0.60,
            start_position: StartPosition::Mixed,
            rng_seed: 0,
            camera: CameraIntrinsics::default(),
            camera_height: 0.2,
            subject: SubjectConfig {
                x: 2.0,
                y: 0.0,
                z: 0.1,
                radius: 0.1,
            },
            standoff: 1.5,
            lateral_offset: 0.35,
            standoff_jitter: 0.15,
            lateral_jitter: 0.08,
            heading_jitter: 0.08,
            min_clearance: 0.3,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("max_speed", self.max_speed),
            ("max_turn_rate", self.max_turn_rate),
            ("max_pan_rate", self.max_pan_rate),
            ("max_tilt_rate", self.max_tilt_rate),
            ("pan_limit", self.pan_limit),
            ("tilt_limit", self.tilt_limit),
            ("subject.radius", self.subject.radius),
            ("standoff", self.standoff),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        let non_negative = [
            ("lateral_offset", self.lateral_offset),
            ("standoff_jitter", self.standoff_jitter),
            ("lateral_jitter", self.lateral_jitter),
            ("heading_jitter", self.heading_jitter),
            ("min_clearance", self.min_clearance),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {value}")));
            }
        }
        if self.episode_len == 0 {
            return Err(Error::Config("episode_len must be at least 1".into()));
        }
        if !(0.0 < self.target_area && self.target_area < self.area_max && self.area_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 < target_area < area_max <= 1, got target_area={}, area_max={}",
                self.target_area, self.area_max
            )));
        }
        if !(self.arena.x_min < self.arena.x_max && self.arena.y_min < self.arena.y_max) {
            return Err(Error::Config("arena bounds are empty".into()));
        }
        if self.standoff_jitter >= self.standoff {
            return Err(Error::Config("standoff_jitter must be smaller than standoff".into()));
        }
        self.camera.validate()
    }

    fn episode_rng(&self, seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix_seed(self.rng_seed, seed))
    }
}

/// Deterministic 64-bit seed mixing (splitmix64 finaliser).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The nine state channels. Ranges: `area`, `centroid_x`, `centroid_y` in
/// `[0, 1]`; every other channel in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// s1: subject area fraction.
    pub area: f64,
    /// s2: signed relative area error, clamped.
    pub area_error: f64,
    /// s3: centroid x over frame width.
    pub centroid_x: f64,
    /// s4: signed centroid x error relative to half the width.
    pub centroid_x_error: f64,
    /// s5: centroid y over frame height.
    pub centroid_y: f64,
    /// s6: signed centroid y error relative to half the height.
    pub centroid_y_error: f64,
    /// s7: pan over its limit.
    pub pan: f64,
    /// s8: tilt over its limit.
    pub tilt: f64,
    /// s9: subject offset angle over pi.
    pub subject_offset: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.area,
            self.area_error,
            self.centroid_x,
            self.centroid_x_error,
            self.centroid_y,
            self.centroid_y_error,
            self.pan,
            self.tilt,
            self.subject_offset,
        ]
    }

    pub fn from_array(s: [f64; OBS_DIM]) -> Self {
        Self {
            area: s[0],
            area_error: s[1],
            centroid_x: s[2],
            centroid_x_error: s[3],
            centroid_y: s[4],
            centroid_y_error: s[5],
            pan: s[6],
            tilt: s[7],
            subject_offset: s[8],
        }
    }

    /// Declared `(low, high)` range of channel `i`.
    pub fn channel_range(i: usize) -> (f64, f64) {
        match i {
            0 | 2 | 4 => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }

    /// Clamps every channel into its declared range.
    pub fn clamped(&self) -> Self {
        let mut s = self.to_array();
        for (i, v) in s.iter_mut().enumerate() {
            let (lo, hi) = Self::channel_range(i);
            *v = v.clamp(lo, hi);
        }
        Self::from_array(s)
    }

    pub fn in_range(&self) -> bool {
        self.to_array().iter().enumerate().all(|(i, v)| {
            let (lo, hi) = Self::channel_range(i);
            (lo..=hi).contains(v)
        })
    }
}

/// Throttle, steering, pan and tilt commands in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    values: [f64; ACTION_DIM],
    active: [bool; ACTION_DIM],
}

impl Default for ActionVector {
    fn default() -> Self {
        Self::zero()
    }
}

impl ActionVector {
    pub fn zero() -> Self {
        Self {
            values: [0.0; ACTION_DIM],
            active: [true; ACTION_DIM],
        }
    }

    /// All four channels active.
    pub fn full(values: [f64; ACTION_DIM]) -> Result<Self> {
        Self::masked(values, [true; ACTION_DIM])
    }

    /// Inactive channels are forced to exactly zero.
    pub fn masked(values: [f64; ACTION_DIM], active: [bool; ACTION_DIM]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(-1.0..=1.0).contains(v) {
                return Err(Error::InputDomain(format!("action a{} = {v} outside [-1, 1]", i + 1)));
            }
        }
        let mut values = values;
        for (v, &on) in values.iter_mut().zip(&active) {
            if !on {
                *v = 0.0;
            }
        }
        Ok(Self { values, active })
    }

    /// Like [`ActionVector::masked`] but clips out-of-range values instead of
    /// rejecting them.
    pub fn clipped(values: [f64; ACTION_DIM], active: [bool; ACTION_DIM]) -> Self {
        let values = values.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) });
        Self::masked(values, active).expect("clipped values are in range")
    }

    pub fn values(&self) -> [f64; ACTION_DIM] {
        self.values
    }

    pub fn active(&self) -> [bool; ACTION_DIM] {
        self.active
    }

    pub fn throttle(&self) -> f64 {
        self.values[0]
    }

    pub fn steering(&self) -> f64 {
        self.values[1]
    }

    pub fn pan(&self) -> f64 {
        self.values[2]
    }

    pub fn tilt(&self) -> f64 {
        self.values[3]
    }
}

/// What the observation falls back to while the subject is out of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastSighting {
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub x_error_sign: f64,
    pub y_error_sign: f64,
    pub subject_offset: f64,
}

impl Default for LastSighting {
    fn default() -> Self {
        Self {
            centroid_x: 0.5,
            centroid_y: 0.5,
            x_error_sign: 1.0,
            y_error_sign: 1.0,
            subject_offset: 0.0,
        }
    }
}

/// Builds the state channels for the current frame.
///
/// When the subject is not visible the area reads zero, the normalised
/// centroid and offset hold their last valid values from `last`, and the
/// error channels saturate at `±1` in the direction the subject was last seen.
pub fn assemble_observation(
    world: &WorldState,
    metrics: &ShotMetrics,
    cfg: &EnvConfig,
    last: &LastSighting,
) -> Observation {
    let cam = &cfg.camera;
    let half_w = cam.midpoint_px();
    let half_h = cam.vertical_midpoint_px();
    let area = metrics.area_frac;
    let area_error = ((area - cfg.target_area) / cfg.target_area).clamp(-1.0, 1.0);
    let pan = world.pan / cfg.pan_limit;
    let tilt = world.tilt / cfg.tilt_limit;
    let obs = match (metrics.centroid, metrics.subject_offset) {
        (Some((x, y)), Some(theta)) => Observation {
            area,
            area_error,
            centroid_x: x / f64::from(cam.width_px),
            centroid_x_error: (x - half_w) / half_w,
            centroid_y: y / f64::from(cam.height_px),
            centroid_y_error: (y - half_h) / half_h,
            pan,
            tilt,
            subject_offset: theta / std::f64::consts::PI,
        },
        _ => Observation {
            area: 0.0,
            area_error,
            centroid_x: last.centroid_x,
            centroid_x_error: last.x_error_sign,
            centroid_y: last.centroid_y,
            centroid_y_error: last.y_error_sign,
            pan,
            tilt,
            subject_offset: last.subject_offset,
        },
    };
    obs.clamped()
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    /// Metrics of the frame the observation was built from.
    pub metrics: ShotMetrics,
    pub done: bool,
}

/// Common surface of the clean and perturbed simulators.
pub trait Environment {
    fn config(&self) -> &EnvConfig;
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, action: &ActionVector) -> Result<StepOutcome>;
    fn world(&self) -> &WorldState;
    /// Metrics of the most recent frame.
    fn metrics(&self) -> &ShotMetrics;
}

/// The clean kinematic simulator.
#[derive(Debug, Clone)]
pub struct SimEnv {
    cfg: EnvConfig,
    world: WorldState,
    metrics: ShotMetrics,
    last: LastSighting,
    observation: Observation,
    ready: bool,
}

impl SimEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let world = initial_world(&cfg, StartPosition::Centre, 0.0, 0.0, 0.0);
        let metrics = ShotMetrics::measure(&BinaryMask::new(cfg.camera.width_px, cfg.camera.height_px), &cfg.camera, 0.0);
        let last = LastSighting::default();
        let observation = assemble_observation(&world, &metrics, &cfg, &last);
        Ok(Self {
            cfg,
            world,
            metrics,
            last,
            observation,
            ready: false,
        })
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    /// Start position actually used by the last reset.
    pub fn start_for_seed(&self, seed: u64) -> StartPosition {
        choose_start(&self.cfg, &mut self.cfg.episode_rng(seed))
    }

    pub(crate) fn frame(&self) -> BinaryMask {
        imaging::render_mask(&self.world, &self.cfg.camera)
    }

    /// Advances the kinematics by one step with already-resolved physical
    /// commands, then re-measures the frame through `filter`.
    pub(crate) fn advance(
        &mut self,
        commands: [f64; ACTION_DIM],
        filter: impl FnOnce(&mut BinaryMask),
    ) -> Result<StepOutcome> {
        if !self.ready {
            return Err(Error::Usage("step called before reset or after the episode ended".into()));
        }
        let cfg = &self.cfg;
        let w = &mut self.world;
        let dt = cfg.dt;
        let speed = commands[0] * cfg.max_speed;
        let turn = commands[1] * cfg.max_turn_rate;

        let (sin_h, cos_h) = w.robot_heading.sin_cos();
        let nx = (w.robot_x + speed * cos_h * dt).clamp(cfg.arena.x_min, cfg.arena.x_max);
        let ny = (w.robot_y + speed * sin_h * dt).clamp(cfg.arena.y_min, cfg.arena.y_max);
        if (nx - w.subject_x).hypot(ny - w.subject_y) >= cfg.min_clearance {
            w.robot_x = nx;
            w.robot_y = ny;
        }
        w.robot_heading += turn * dt;
        w.pan = (w.pan + commands[2] * cfg.max_pan_rate * dt).clamp(-cfg.pan_limit, cfg.pan_limit);
        w.tilt = (w.tilt + commands[3] * cfg.max_tilt_rate * dt).clamp(-cfg.tilt_limit, cfg.tilt_limit);
        w.t += 1;

        let mut mask = self.frame();
        filter(&mut mask);
        self.refresh(&mask);
        let done = self.world.t >= self.cfg.episode_len;
        if done {
            self.ready = false;
        }
        Ok(StepOutcome {
            observation: self.observation,
            metrics: self.metrics,
            done,
        })
    }

    pub(crate) fn reset_with(&mut self, seed: u64, filter: impl FnOnce(&mut BinaryMask)) -> Result<Observation> {
        let mut rng = self.cfg.episode_rng(seed);
        let start = choose_start(&self.cfg, &mut rng);
        // Always draw all three jitters so every start consumes the same stream.
        let d_standoff = rng.random_range(-1.0..=1.0) * self.cfg.standoff_jitter;
        let d_lateral = rng.random_range(-1.0..=1.0) * self.cfg.lateral_jitter;
        let d_heading = rng.random_range(-1.0..=1.0) * self.cfg.heading_jitter;
        let world = initial_world(&self.cfg, start, d_standoff, d_lateral, d_heading);
        if !self.cfg.arena.contains(world.robot_x, world.robot_y) {
            return Err(Error::Config(format!(
                "start ({:.3}, {:.3}) lies outside the arena",
                world.robot_x, world.robot_y
            )));
        }
        self.world = world;
        self.last = LastSighting::default();
        let mut mask = self.frame();
        filter(&mut mask);
        self.refresh(&mask);
        if self.metrics.area_frac >= self.cfg.target_area {
            return Err(Error::Config(format!(
                "initial subject area {:.4} is not below the target {}",
                self.metrics.area_frac, self.cfg.target_area
            )));
        }
        self.ready = true;
        Ok(self.observation)
    }

    fn refresh(&mut self, mask: &BinaryMask) {
        self.metrics = ShotMetrics::measure(mask, &self.cfg.camera, self.world.pan);
        self.observation = assemble_observation(&self.world, &self.metrics, &self.cfg, &self.last);
        if self.metrics.subject_visible() {
            let o = &self.observation;
            self.last = LastSighting {
                centroid_x: o.centroid_x,
                centroid_y: o.centroid_y,
                x_error_sign: if o.centroid_x_error < 0.0 { -1.0 } else { 1.0 },
                y_error_sign: if o.centroid_y_error < 0.0 { -1.0 } else { 1.0 },
                subject_offset: o.subject_offset,
            };
        }
    }
}

impl Environment for SimEnv {
    fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.reset_with(seed, |_| {})
    }

    fn step(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        let values = ActionVector::masked(action.values(), action.active())?.values();
        self.advance(values, |_| {})
    }

    fn world(&self) -> &WorldState {
        &self.world
    }

    fn metrics(&self) -> &ShotMetrics {
        &self.metrics
    }
}

fn choose_start(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> StartPosition {
    let pick = rng.random_range(0..StartPosition::FIXED.len());
    match cfg.start_position {
        StartPosition::Mixed => StartPosition::FIXED[pick],
        fixed => fixed,
    }
}

fn initial_world(cfg: &EnvConfig, start: StartPosition, d_standoff: f64, d_lateral: f64, d_heading: f64) -> WorldState {
    let side = start.side();
    WorldState {
        robot_x: cfg.subject.x - (cfg.standoff + d_standoff),
        robot_y: cfg.subject.y + side * (cfg.lateral_offset + d_lateral),
        robot_heading: side * d_heading,
        pan: 0.0,
        tilt: 0.0,
        subject_x: cfg.subject.x,
        subject_y: cfg.subject.y,
        subject_z: cfg.subject.z,
        subject_radius: cfg.subject.radius,
        camera_height: cfg.camera_height,
        t: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env(start: StartPosition) -> SimEnv {
        SimEnv::new(EnvConfig {
            start_position: start,
            episode_len: 50,
            ..EnvConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        EnvConfig::default().validate().unwrap();
    }

    #[test]
    fn centre_start_has_zero_offset() {
        let mut e = env(StartPosition::Centre);
        for seed in 0..10 {
            let obs = e.reset(seed).unwrap();
            assert_eq!(obs.subject_offset, 0.0, "seed {seed}");
            assert_eq!(obs.centroid_x_error, 0.0);
        }
    }

    #[test]
    fn left_and_right_starts_mirror() {
        let mut l = env(StartPosition::Left);
        let mut r = env(StartPosition::Right);
        for seed in 0..10 {
            l.reset(seed).unwrap();
            r.reset(seed).unwrap();
            let (al, ar) = (l.metrics().camera_offset.unwrap(), r.metrics().camera_offset.unwrap());
            assert!(al != 0.0);
            assert!((al + ar).abs() < 1e-12, "seed {seed}: {al} vs {ar}");
        }
    }

    #[test]
    fn initial_area_between_one_and_two_percent() {
        let mut e = env(StartPosition::Mixed);
        for seed in 0..50 {
            let obs = e.reset(seed).unwrap();
            assert!(obs.area > 0.008 && obs.area < 0.025, "seed {seed}: {}", obs.area);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = env(StartPosition::Mixed);
        let mut b = env(StartPosition::Mixed);
        assert_eq!(a.reset(42).unwrap(), b.reset(42).unwrap());
        assert_eq!(a.world(), b.world());
    }

    #[test]
    fn start_outside_arena_is_config_error() {
        let mut cfg = EnvConfig::default();
        cfg.arena.x_min = 1.0;
        let mut e = SimEnv::new(cfg).unwrap();
        assert!(matches!(e.reset(0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_action_keeps_world_static() {
        let mut e = env(StartPosition::Left);
        let obs0 = e.reset(3).unwrap();
        let w0 = *e.world();
        let out = e.step(&ActionVector::zero()).unwrap();
        assert_eq!(out.observation, obs0);
        let w1 = e.world();
        assert_eq!((w1.robot_x, w1.robot_y, w1.robot_heading, w1.pan, w1.tilt),
                   (w0.robot_x, w0.robot_y, w0.robot_heading, w0.pan, w0.tilt));
    }

    #[test]
    fn full_throttle_toward_subject_grows_area() {
        let mut e = env(StartPosition::Centre);
        let a0 = e.reset(0).unwrap().area;
        let out = e.step(&ActionVector::full([1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert!(out.observation.area > a0);
    }

    #[test]
    fn first_steps_follow_unicycle_integration() {
        let mut e = env(StartPosition::Left);
        e.reset(11).unwrap();
        let cfg = e.config().clone();
        let mut w = *e.world();
        let actions = [[0.6, -0.4, 0.3, -0.2], [1.0, 0.5, -1.0, 1.0], [-0.3, 1.0, 0.2, 0.0]];
        for a in actions {
            e.step(&ActionVector::full(a).unwrap()).unwrap();
            let v = a[0] * cfg.max_speed;
            let om = a[1] * cfg.max_turn_rate;
            w.robot_x += v * w.robot_heading.cos() * cfg.dt;
            w.robot_y += v * w.robot_heading.sin() * cfg.dt;
            w.robot_heading += om * cfg.dt;
            w.pan += a[2] * cfg.max_pan_rate * cfg.dt;
            w.tilt += a[3] * cfg.max_tilt_rate * cfg.dt;
            let g = e.world();
            for (lhs, rhs) in [(g.robot_x, w.robot_x), (g.robot_y, w.robot_y), (g.robot_heading, w.robot_heading), (g.pan, w.pan), (g.tilt, w.tilt)] {
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn episode_ends_exactly_at_horizon() {
        let mut e = env(StartPosition::Right);
        e.reset(0).unwrap();
        for t in 1..=50 {
            let out = e.step(&ActionVector::zero()).unwrap();
            assert_eq!(out.done, t == 50);
        }
        assert!(matches!(e.step(&ActionVector::zero()), Err(Error::Usage(_))));
    }

    #[test]
    fn step_before_reset_is_usage_error() {
        let mut e = env(StartPosition::Centre);
        assert!(matches!(e.step(&ActionVector::zero()), Err(Error::Usage(_))));
    }

    #[test]
    fn out_of_range_action_rejected() {
        assert!(ActionVector::full([1.5, 0.0, 0.0, 0.0]).is_err());
        let masked = ActionVector::masked([0.5, 0.7, -0.2, 0.1], [true, false, false, true]).unwrap();
        assert_eq!(masked.values(), [0.5, 0.0, 0.0, 0.1]);
    }

    #[test]
    fn lost_subject_saturates_errors_and_holds_position() {
        let mut e = env(StartPosition::Right);
        e.reset(5).unwrap();
        let seen = *e.observation();
        assert!(seen.centroid_x_error < 0.0);
        // Spin right until the subject leaves the frame on the left.
        let mut out = None;
        for _ in 0..30 {
            let o = e.step(&ActionVector::full([0.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
            if !o.metrics.subject_visible() {
                out = Some(o);
                break;
            }
        }
        let o = out.expect("subject should leave the frame").observation;
        assert_eq!(o.area, 0.0);
        assert_eq!(o.area_error, -1.0);
        assert_eq!(o.centroid_x_error, -1.0);
        assert!(o.centroid_x < 0.2);
    }

    #[test]
    fn assemble_observation_examples() {
        let cfg = EnvConfig::default();
        let world = initial_world(&cfg, StartPosition::Centre, 0.0, 0.0, 0.0);
        let last = LastSighting::default();
        let on_target = ShotMetrics {
            area_frac: cfg.target_area,
            centroid: Some((60.0, 45.0)),
            pixel_offset: Some(0.0),
            camera_offset: Some(0.0),
            subject_offset: Some(0.0),
        };
        let o = assemble_observation(&world, &on_target, &cfg, &last);
        assert_eq!((o.area_error, o.centroid_x_error, o.centroid_y_error), (0.0, 0.0, 0.0));

        let double = ShotMetrics { area_frac: 2.0 * cfg.target_area, ..on_target };
        assert_eq!(assemble_observation(&world, &double, &cfg, &last).area_error, 1.0);

        let left_edge = ShotMetrics { centroid: Some((0.0, 45.0)), ..on_target };
        assert_eq!(assemble_observation(&world, &left_edge, &cfg, &last).centroid_x_error, -1.0);
    }

    fn touches_left_edge(e: &SimEnv) -> bool {
        let m = e.frame();
        (0..m.height_px()).any(|y| m.get(0, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn state_stays_bounded(seed in 0u64..1000, actions in proptest::collection::vec(
            proptest::array::uniform4(-1.0f64..=1.0), 1..120)) {
            let mut e = SimEnv::new(EnvConfig { episode_len: 200, ..EnvConfig::default() }).unwrap();
            e.reset(seed).unwrap();
            for a in actions {
                let out = e.step(&ActionVector::full(a).unwrap()).unwrap();
                let w = e.world();
                prop_assert!(w.pan.abs() <= e.config().pan_limit);
                prop_assert!(w.tilt.abs() <= e.config().tilt_limit);
                prop_assert!(out.observation.in_range());
                prop_assert!(out.metrics.area_frac <= e.config().area_max);
            }
        }

        #[test]
        fn mirrored_runs_negate_lateral_channels(seed in 0u64..1000, actions in proptest::collection::vec(
            proptest::array::uniform4(-0.3f64..=0.3), 1..50)) {
            let mut l = env(StartPosition::Left);
            let mut r = env(StartPosition::Right);
            l.reset(seed).unwrap();
            r.reset(seed).unwrap();
            for a in actions {
                let ol = l.step(&ActionVector::full(a).unwrap()).unwrap();
                let mirrored = [a[0], -a[1], -a[2], a[3]];
                let or = r.step(&ActionVector::full(mirrored).unwrap()).unwrap();
                // Column 0 has no mirror image in an even-width frame.
                if ol.metrics.subject_visible() && !touches_left_edge(&l) && !touches_left_edge(&r) {
                    prop_assert!((ol.observation.centroid_x_error + or.observation.centroid_x_error).abs() < 1e-12);
                    prop_assert!((ol.observation.subject_offset + or.observation.subject_offset).abs() < 1e-12);
                    prop_assert!((ol.observation.area - or.observation.area).abs() < 1e-12);
                }
            }
        }
    }
}
