//! Automated dolly-in shots for a ground-based filming robot.
//!
//! The crate is organised bottom-up:
//!
//! - [`imaging`]: binary subject masks, geometric moments and the shot metrics
//!   derived from them (area fraction, centroid, camera/subject offset angles,
//!   the normalised distance metric).
//! - [`simenv`]: a kinematic differential-drive robot with a pan-tilt camera
//!   turret, observation assembly and a perturbed variant used as a stand-in
//!   for real hardware.
//! - [`rewards`]: per-step reward components for each agent configuration.
//! - [`neural`]: dense networks with hand-written backprop and Adam.
//! - [`td3`]: the TD3 learner, replay buffer and training loops.
//! - [`baseline`]: the PD controller baseline and its gain search.
//! - [`evalharness`]: trial runners, order statistics, sim-vs-perturbed
//!   correlation studies and policy comparisons.
//! - [`config`]: the TOML run configuration and shipped profiles.

pub mod baseline;
pub mod config;
pub mod error;
pub mod evalharness;
pub mod imaging;
pub mod neural;
pub mod rewards;
pub mod simenv;
pub mod td3;

pub use error::{Error, Result};
