//! Proportional-derivative baseline driving all four channels from image
//! errors, and the coordinate search used to tune its gains.

use serde::{Deserialize, Serialize};

use crate::evalharness::{run_trials, summarize, EvalTask, Policy, StartScheme, TrialSpec};
use crate::imaging::ShotMetrics;
use crate::simenv::{ActionVector, EnvConfig, Observation, ACTION_DIM};
use crate::{Error, Result};

/// Commands decay by this factor per step while the subject is out of view.
pub const LOST_DECAY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelGains {
    pub kp: f64,
    pub kd: f64,
}

impl ChannelGains {
    pub const fn new(kp: f64, kd: f64) -> Self {
        Self { kp, kd }
    }
}

/// Gains per channel. Throttle acts on the area error, steering and pan on
/// the horizontal centroid error, tilt on the vertical centroid error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PDGains {
    pub throttle: ChannelGains,
    pub steering: ChannelGains,
    pub pan: ChannelGains,
    pub tilt: ChannelGains,
}

impl Default for PDGains {
    /// Result of `tune_pd` on the complex reward, clean simulator, desk
    /// profile. Tilt settles near zero because no reward term sees it.
    fn default() -> Self {
        Self {
            throttle: ChannelGains::new(6.4, 0.03),
            steering: ChannelGains::new(2.0, 0.0),
            pan: ChannelGains::new(0.5, 0.1),
            tilt: ChannelGains::new(0.0078125, 0.0),
        }
    }
}

impl PDGains {
    pub fn channels(&self) -> [ChannelGains; ACTION_DIM] {
        [self.throttle, self.steering, self.pan, self.tilt]
    }

    fn channels_mut(&mut self) -> [&mut ChannelGains; ACTION_DIM] {
        [&mut self.throttle, &mut self.steering, &mut self.pan, &mut self.tilt]
    }

    pub fn validate(&self) -> Result<()> {
        for g in self.channels() {
            if !(g.kp.is_finite() && g.kd.is_finite()) {
                return Err(Error::Config(format!("PD gains must be finite, got {g:?}")));
            }
        }
        Ok(())
    }
}

/// `clamp(kp * e + kd * (e - e_prev) / dt, -1, 1)`; no derivative term
/// without a previous error.
pub fn pd_step(error: f64, prev_error: Option<f64>, gains: &ChannelGains, dt: f64) -> f64 {
    let derivative = prev_error.map_or(0.0, |p| (error - p) / dt);
    (gains.kp * error + gains.kd * derivative).clamp(-1.0, 1.0)
}

/// Signed errors `[area, x, x, y]` for the four channels: positive area
/// error when the subject is too small, positive x error when it sits right
/// of centre, positive y error when it sits above centre.
pub fn channel_errors(metrics: &ShotMetrics, cfg: &EnvConfig) -> Option<[f64; ACTION_DIM]> {
    let (x, y) = metrics.centroid?;
    let half_w = cfg.camera.midpoint_px();
    let half_h = cfg.camera.vertical_midpoint_px();
    let area = (cfg.target_area - metrics.area_frac) / cfg.target_area;
    let ex = (x - half_w) / half_w;
    let ey = (half_h - y) / half_h;
    Some([area, ex, ex, ey])
}

/// PD controller with its per-episode memory.
#[derive(Debug, Clone)]
pub struct PdController {
    gains: PDGains,
    cfg: EnvConfig,
    active: [bool; ACTION_DIM],
    prev_errors: Option<[f64; ACTION_DIM]>,
    last: [f64; ACTION_DIM],
}

impl PdController {
    pub fn new(gains: PDGains, cfg: EnvConfig) -> Result<Self> {
        gains.validate()?;
        cfg.validate()?;
        Ok(Self {
            gains,
            cfg,
            active: [true; ACTION_DIM],
            prev_errors: None,
            last: [0.0; ACTION_DIM],
        })
    }

    /// Restricts the controller to a subset of channels.
    pub fn with_active(mut self, active: [bool; ACTION_DIM]) -> Self {
        self.active = active;
        self
    }

    pub fn gains(&self) -> &PDGains {
        &self.gains
    }

    pub fn clear(&mut self) {
        self.prev_errors = None;
        self.last = [0.0; ACTION_DIM];
    }

    /// Next command. While the subject is out of view the last commands are
    /// held and decayed, and the derivative restarts on reacquisition.
    pub fn pd_policy(&mut self, metrics: &ShotMetrics) -> ActionVector {
        let Some(errors) = channel_errors(metrics, &self.cfg) else {
            self.prev_errors = None;
            for v in &mut self.last {
                *v *= LOST_DECAY;
            }
            return ActionVector::clipped(self.last, self.active);
        };
        let gains = self.gains.channels();
        let mut out = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            if self.active[i] {
                out[i] = pd_step(errors[i], self.prev_errors.map(|p| p[i]), &gains[i], self.cfg.dt);
            }
        }
        self.prev_errors = Some(errors);
        self.last = out;
        ActionVector::clipped(out, self.active)
    }
}

impl Policy for PdController {
    fn name(&self) -> String {
        "pd".into()
    }

    fn reset(&mut self, _seed: u64) {
        self.clear();
    }

    fn act(&mut self, _obs: &Observation, metrics: &ShotMetrics) -> Result<ActionVector> {
        Ok(self.pd_policy(metrics))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Outcome of a gain search.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub gains: PDGains,
    /// Mean cumulative reward of `gains` on the tuning trials.
    pub score: f64,
    /// Accepted `(gains, score)` steps, starting with the initial gains.
    pub history: Vec<(PDGains, f64)>,
}

const KP_FACTORS: [f64; 4] = [0.5, 0.8, 1.25, 2.0];
const KD_STEPS: [f64; 4] = [0.0, 0.01, 0.03, 0.1];

/// Coordinate search over the eight gains. Each round tries scaling every
/// `kp` and a few fixed `kd` values, keeping any change that raises the mean
/// cumulative reward; rounds repeat until nothing improves or `max_rounds`
/// is reached.
pub fn tune_pd(
    initial: PDGains,
    env: &EnvConfig,
    task: &EvalTask,
    active: [bool; ACTION_DIM],
    trials: usize,
    base_seed: u64,
    max_rounds: usize,
    jobs: usize,
) -> Result<TuneOutcome> {
    let spec = TrialSpec {
        env: env.clone(),
        perturbation: None,
        task: task.clone(),
        n: trials,
        starts: StartScheme::Mixed,
        base_seed,
        record_trace: false,
        jobs,
    };
    let score = |g: PDGains| -> Result<f64> {
        let pd = PdController::new(g, env.clone())?.with_active(active);
        Ok(summarize(&run_trials(&pd, &spec)?)?.cumulative_reward.mean)
    };
    let mut best = initial;
    let mut best_score = score(best)?;
    let mut history = vec![(best, best_score)];
    for _ in 0..max_rounds {
        let mut improved = false;
        for ch in (0..ACTION_DIM).filter(|&c| active[c]) {
            let mut candidates = Vec::new();
            for f in KP_FACTORS {
                let mut g = best;
                g.channels_mut()[ch].kp *= f;
                candidates.push(g);
            }
            for kd in KD_STEPS {
                let mut g = best;
                g.channels_mut()[ch].kd = kd;
                candidates.push(g);
            }
            for g in candidates {
                if g == best {
                    continue;
                }
                let s = score(g)?;
                if s > best_score + 1e-9 {
                    best = g;
                    best_score = s;
                    history.push((g, s));
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(TuneOutcome {
        gains: best,
        score: best_score,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ShotMetrics;

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    fn metrics(area: f64, x: f64, y: f64) -> ShotMetrics {
        ShotMetrics {
            area_frac: area,
            centroid: Some((x, y)),
            pixel_offset: Some(x - 60.0),
            camera_offset: Some(0.0),
            subject_offset: Some(0.0),
        }
    }

    #[test]
    fn pd_step_examples() {
        let g = ChannelGains::new(2.0, 0.1);
        assert_eq!(pd_step(0.0, Some(0.0), &g, 0.05), 0.0);
        assert!((pd_step(0.3, Some(0.2), &g, 0.05) - 0.8).abs() < 1e-12);
        assert_eq!(pd_step(0.3, None, &g, 0.05), 0.6);
        assert_eq!(pd_step(0.3, Some(0.2), &ChannelGains::new(2.0, 0.0), 0.05), 0.6);
        assert_eq!(pd_step(0.9, None, &g, 0.05), 1.0);
    }

    #[test]
    fn on_target_gives_zero_action() {
        let mut pd = PdController::new(PDGains::default(), cfg()).unwrap();
        let a = pd.pd_policy(&metrics(0.10, 60.0, 45.0));
        assert_eq!(a.values(), [0.0; 4]);
    }

    #[test]
    fn subject_left_turns_left_and_small_subject_drives_forward() {
        let mut pd = PdController::new(PDGains::default(), cfg()).unwrap();
        let a = pd.pd_policy(&metrics(0.02, 30.0, 20.0));
        assert!(a.throttle() > 0.0);
        assert!(a.steering() < 0.0);
        assert!(a.pan() < 0.0);
        assert!(a.tilt() > 0.0, "subject above centre tilts up");
    }

    #[test]
    fn scripted_sequence_matches_hand_chain() {
        let gains = PDGains {
            throttle: ChannelGains::new(1.0, 0.02),
            steering: ChannelGains::new(0.5, 0.01),
            pan: ChannelGains::new(0.25, 0.0),
            tilt: ChannelGains::new(0.4, 0.0),
        };
        let mut pd = PdController::new(gains, cfg()).unwrap();
        // area 0.05 -> e 0.5; x 75 -> e 0.25; y 36 -> e 0.2
        let a0 = pd.pd_policy(&metrics(0.05, 75.0, 36.0)).values();
        assert_eq!(a0, [0.5, 0.125, 0.0625, 0.4 * 0.2]);
        // area 0.08 -> e 0.2; x 66 -> e 0.1; y 45 -> e 0
        let a1 = pd.pd_policy(&metrics(0.08, 66.0, 45.0)).values();
        let expect = [
            0.2 + 0.02 * (0.2 - 0.5) / 0.05,
            0.5 * 0.1 + 0.01 * (0.1 - 0.25) / 0.05,
            0.25 * 0.1,
            0.0,
        ];
        for (g, e) in a1.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12, "{a1:?} vs {expect:?}");
        }
    }

    #[test]
    fn lost_subject_decays_last_command() {
        let mut pd = PdController::new(PDGains::default(), cfg()).unwrap();
        let first = pd.pd_policy(&metrics(0.05, 90.0, 45.0)).values();
        let lost = ShotMetrics {
            area_frac: 0.0,
            centroid: None,
            pixel_offset: None,
            camera_offset: None,
            subject_offset: None,
        };
        let a = pd.pd_policy(&lost).values();
        for (x, y) in a.iter().zip(first) {
            assert!((x - 0.9 * y).abs() < 1e-15);
        }
        let b = pd.pd_policy(&lost).values();
        for (x, y) in b.iter().zip(first) {
            assert!((x - 0.81 * y).abs() < 1e-15);
        }
    }

    #[test]
    fn inactive_channels_stay_zero() {
        let mut pd = PdController::new(PDGains::default(), cfg())
            .unwrap()
            .with_active([true, true, false, false]);
        let a = pd.pd_policy(&metrics(0.02, 20.0, 10.0));
        assert_eq!((a.pan(), a.tilt()), (0.0, 0.0));
    }

    #[test]
    fn doubling_errors_doubles_commands_below_clamp() {
        let gains = PDGains {
            throttle: ChannelGains::new(0.5, 0.0),
            steering: ChannelGains::new(0.5, 0.0),
            pan: ChannelGains::new(0.3, 0.0),
            tilt: ChannelGains::new(0.3, 0.0),
        };
        let mut a = PdController::new(gains, cfg()).unwrap();
        let mut b = PdController::new(gains, cfg()).unwrap();
        // errors (0.2, 0.1, 0.1, 0.1) and their doubles
        let x = a.pd_policy(&metrics(0.08, 66.0, 40.5)).values();
        let y = b.pd_policy(&metrics(0.06, 72.0, 36.0)).values();
        for (p, q) in x.iter().zip(y) {
            assert!((2.0 * p - q).abs() < 1e-12, "{x:?} {y:?}");
        }
    }

    #[test]
    fn non_finite_gains_rejected() {
        let mut g = PDGains::default();
        g.pan.kd = f64::NAN;
        assert!(PdController::new(g, cfg()).is_err());
    }
}
