//! Per-step rewards for the four agent configurations.
//!
//! Every component is `<= 0` and reaches `0` exactly at its target, so
//! episode returns accumulate negatively and `0` is the best attainable.

use serde::{Deserialize, Serialize};

use crate::imaging::{delta_metric, DeltaParams, ShotMetrics};
use crate::simenv::{ActionVector, EnvConfig};
use crate::{Error, Result};

/// Form of the scaled-area reward above the threshold `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AreaUpperBranch {
    /// `-0.5 * |a - a_E| / a_E`: penalises overshoot as well as undershoot.
    #[default]
    Absolute,
    /// `0.5 * (a - a_E) / a_E`: grows without bound past the target.
    Printed,
}

/// Fully resolved reward parameters for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Area threshold between the two branches of the scaled area reward.
    pub k: f64,
    pub target_area: f64,
    pub area_max: f64,
    /// Target centroid, pixels.
    pub x_e: f64,
    pub y_e: f64,
    pub frame_width: f64,
    pub theta_max: f64,
    pub smooth_coeff: f64,
    /// Per-channel action change tolerated between steps.
    pub smooth_threshold: f64,
    pub upper_branch: AreaUpperBranch,
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("smooth_coeff", self.smooth_coeff)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("reward weight {name} must be >= 0, got {w}")));
            }
        }
        if !(0.0 < self.k && self.k < self.target_area && self.target_area < self.area_max) {
            return Err(Error::Config(format!(
                "need 0 < k < target_area < area_max, got k={}, target_area={}, area_max={}",
                self.k, self.target_area, self.area_max
            )));
        }
        if !(self.theta_max > 0.0) {
            return Err(Error::Config("theta_max must be positive".into()));
        }
        if !(self.smooth_threshold >= 0.0) {
            return Err(Error::Config("smooth_threshold must be >= 0".into()));
        }
        DeltaParams::new(self.x_e, self.frame_width)?;
        Ok(())
    }

    fn area_params(&self) -> Result<DeltaParams> {
        DeltaParams::new(self.target_area, self.area_max)
    }

    /// Size of the designed jump of the scaled area reward at `k`.
    pub fn area_scaled_jump(&self) -> f64 {
        let above = -((self.k - self.target_area).abs() / self.target_area) * 0.5;
        (-0.5 - above).abs()
    }
}

/// Which reward a task trains and evaluates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    AreaOriginal,
    Position,
    Combined,
    Complex,
}

impl RewardKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RewardKind::AreaOriginal => "area-original",
            RewardKind::Position => "position",
            RewardKind::Combined => "combined",
            RewardKind::Complex => "complex",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area-original" => Ok(RewardKind::AreaOriginal),
            "position" => Ok(RewardKind::Position),
            "combined" => Ok(RewardKind::Combined),
            "complex" => Ok(RewardKind::Complex),
            other => Err(Error::Config(format!("unknown reward kind {other:?}"))),
        }
    }
}

/// User-facing reward settings; combined with an [`EnvConfig`] to produce
/// [`RewardWeights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Defaults to half the target area.
    pub k: Option<f64>,
    pub smooth_coeff: f64,
    pub smooth_threshold: f64,
    /// Defaults to half the horizontal field of view plus the pan limit.
    pub theta_max: Option<f64>,
    pub area_upper_branch: AreaUpperBranch,
    /// `[w1, w2]` for the combined reward.
    pub combined_weights: [f64; 2],
    /// `[w1, w2, w3]` for the complex reward.
    pub complex_weights: [f64; 3],
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            k: None,
            smooth_coeff: 0.1,
            smooth_threshold: 0.2,
            theta_max: None,
            area_upper_branch: AreaUpperBranch::Absolute,
            combined_weights: [0.5, 0.5],
            complex_weights: [0.4, 0.4, 0.2],
        }
    }
}

impl RewardConfig {
    pub fn weights(&self, kind: RewardKind, env: &EnvConfig) -> Result<RewardWeights> {
        let [w1, w2, w3] = match kind {
            RewardKind::Combined => [self.combined_weights[0], self.combined_weights[1], 0.0],
            RewardKind::Complex => self.complex_weights,
            RewardKind::AreaOriginal => [1.0, 0.0, 0.0],
            RewardKind::Position => [0.0, 1.0, 0.0],
        };
        let wts = RewardWeights {
            w1,
            w2,
            w3,
            k: self.k.unwrap_or(env.target_area / 2.0),
            target_area: env.target_area,
            area_max: env.area_max,
            x_e: env.camera.midpoint_px(),
            y_e: env.camera.vertical_midpoint_px(),
            frame_width: f64::from(env.camera.width_px),
            theta_max: self
                .theta_max
                .unwrap_or(env.camera.fov_h / 2.0 + env.pan_limit),
            smooth_coeff: self.smooth_coeff,
            smooth_threshold: self.smooth_threshold,
            upper_branch: self.area_upper_branch,
        };
        wts.validate()?;
        Ok(wts)
    }
}

/// Area reward built directly on the distance metric: `-|delta|`.
pub fn r_area_original(area: f64, wts: &RewardWeights) -> Result<f64> {
    Ok(-delta_metric(area, &wts.area_params()?)?.abs())
}

/// Centring reward on the centroid x position; `-1` when the subject is lost.
pub fn r_position(centroid_x: Option<f64>, wts: &RewardWeights) -> Result<f64> {
    match centroid_x {
        None => Ok(-1.0),
        Some(x) => Ok(-delta_metric(x, &DeltaParams::new(wts.x_e, wts.frame_width)?)?.abs()),
    }
}

/// Piecewise area reward: steep below `k`, proportional above it.
pub fn r_area_scaled(area: f64, wts: &RewardWeights) -> Result<f64> {
    if !(0.0..=wts.area_max).contains(&area) {
        return Err(Error::InputDomain(format!("area {area} outside [0, {}]", wts.area_max)));
    }
    let k = wts.k;
    let a_e = wts.target_area;
    Ok(if area <= k {
        -0.5 + ((area - k).abs() / k) * -0.5
    } else {
        match wts.upper_branch {
            AreaUpperBranch::Absolute => -((area - a_e).abs() / a_e) * 0.5,
            AreaUpperBranch::Printed => ((area - a_e) / a_e) * 0.5,
        }
    })
}

pub fn r_combined(metrics: &ShotMetrics, wts: &RewardWeights) -> Result<f64> {
    Ok(wts.w1 * r_area_scaled(metrics.area_frac, wts)? + wts.w2 * r_position(metrics.centroid_x(), wts)?)
}

/// Heading deviation penalty, linear in `|theta|` and saturating at
/// `theta_max`.
pub fn r_object_offset(theta: f64, wts: &RewardWeights) -> f64 {
    -(theta.abs() / wts.theta_max).min(1.0)
}

/// Penalty for per-channel action changes beyond the smoothness threshold,
/// summed over the channels active in `curr`.
pub fn smoothness_penalty(curr: &ActionVector, prev: &ActionVector, wts: &RewardWeights) -> f64 {
    let excess: f64 = curr
        .values()
        .iter()
        .zip(prev.values())
        .zip(curr.active())
        .filter(|(_, on)| *on)
        .map(|((c, p), _)| ((c - p).abs() - wts.smooth_threshold).max(0.0))
        .sum();
    -wts.smooth_coeff * excess
}

/// Reward total and its components for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub total: f64,
    /// Area component (original or scaled, depending on the reward kind).
    pub area: f64,
    pub position: f64,
    pub offset: f64,
    pub penalty: f64,
    /// Raw signed distance metric of the area, kept for logging.
    pub delta_area: f64,
}

pub fn r_complex(
    metrics: &ShotMetrics,
    curr: &ActionVector,
    prev: &ActionVector,
    wts: &RewardWeights,
) -> Result<RewardBreakdown> {
    let area = r_area_scaled(metrics.area_frac, wts)?;
    let position = r_position(metrics.centroid_x(), wts)?;
    let offset = metrics.subject_offset.map_or(-1.0, |theta| r_object_offset(theta, wts));
    let penalty = smoothness_penalty(curr, prev, wts);
    Ok(RewardBreakdown {
        total: wts.w1 * area + wts.w2 * position + wts.w3 * offset + penalty,
        area,
        position,
        offset,
        penalty,
        delta_area: delta_metric(metrics.area_frac, &wts.area_params()?)?,
    })
}

/// Evaluates the reward of `kind` for one step.
pub fn evaluate(
    kind: RewardKind,
    metrics: &ShotMetrics,
    curr: &ActionVector,
    prev: &ActionVector,
    wts: &RewardWeights,
) -> Result<RewardBreakdown> {
    let delta_area = delta_metric(metrics.area_frac, &wts.area_params()?)?;
    Ok(match kind {
        RewardKind::AreaOriginal => {
            let area = r_area_original(metrics.area_frac, wts)?;
            RewardBreakdown { total: area, area, delta_area, ..Default::default() }
        }
        RewardKind::Position => {
            let position = r_position(metrics.centroid_x(), wts)?;
            RewardBreakdown { total: position, position, delta_area, ..Default::default() }
        }
        RewardKind::Combined => {
            let area = r_area_scaled(metrics.area_frac, wts)?;
            let position = r_position(metrics.centroid_x(), wts)?;
            RewardBreakdown {
                total: wts.w1 * area + wts.w2 * position,
                area,
                position,
                delta_area,
                ..Default::default()
            }
        }
        RewardKind::Complex => r_complex(metrics, curr, prev, wts)?,
    })
}
