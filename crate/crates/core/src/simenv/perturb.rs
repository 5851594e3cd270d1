use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mix_seed, ActionVector, EnvConfig, Environment, Observation, SimEnv, StepOutcome, WorldState, ACTION_DIM};
use crate::imaging::{BinaryMask, ShotMetrics};
use crate::{Error, Result};

/// Degradations applied by [`PerturbedEnv`].
///
/// The default is the reality stand-in profile used by the correlation study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Std of the per-episode multiplicative actuation gain around 1.
    pub actuation_gain_std: f64,
    /// Std of additive noise on every observation channel.
    pub observation_noise_std: f64,
    /// Steps between issuing an action and its effect.
    pub actuation_latency: usize,
    /// Probability of losing each subject pixel.
    pub mask_dropout_prob: f64,
    pub rng_seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            actuation_gain_std: 0.1,
            observation_noise_std: 0.02,
            actuation_latency: 1,
            mask_dropout_prob: 0.05,
            rng_seed: 0x5eed,
        }
    }
}

impl PerturbationConfig {
    /// No degradation at all; stepping matches the clean simulator bit for bit.
    pub fn none() -> Self {
        Self {
            actuation_gain_std: 0.0,
            observation_noise_std: 0.0,
            actuation_latency: 0,
            mask_dropout_prob: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.actuation_gain_std >= 0.0 && self.actuation_gain_std.is_finite()) {
            return Err(Error::Config("actuation_gain_std must be >= 0".into()));
        }
        if !(self.observation_noise_std >= 0.0 && self.observation_noise_std.is_finite()) {
            return Err(Error::Config("observation_noise_std must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.mask_dropout_prob) {
            return Err(Error::Config("mask_dropout_prob must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Drops each set pixel independently with probability `prob`.
pub(crate) fn drop_pixels(mask: &mut BinaryMask, prob: f64, rng: &mut ChaCha8Rng) {
    if prob > 0.0 {
        mask.retain_pixels(|| !rng.random_bool(prob));
    }
}

/// The clean simulator seen through actuation gain error, latency,
/// observation noise and mask dropout.
///
/// Episode seeds drive the scene exactly as in [`SimEnv`]; the degradations
/// draw from a separate stream seeded by the perturbation seed.
#[derive(Debug, Clone)]
pub struct PerturbedEnv {
    inner: SimEnv,
    pcfg: PerturbationConfig,
    rng: ChaCha8Rng,
    gain: f64,
    pending: VecDeque<[f64; ACTION_DIM]>,
}

impl PerturbedEnv {
    pub fn new(cfg: EnvConfig, pcfg: PerturbationConfig) -> Result<Self> {
        pcfg.validate()?;
        Ok(Self {
            inner: SimEnv::new(cfg)?,
            pcfg,
            rng: ChaCha8Rng::seed_from_u64(pcfg.rng_seed),
            gain: 1.0,
            pending: VecDeque::new(),
        })
    }

    pub fn perturbation(&self) -> &PerturbationConfig {
        &self.pcfg
    }

    /// Actuation gain drawn for the current episode.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    fn noisy(&mut self, obs: Observation) -> Observation {
        let std = self.pcfg.observation_noise_std;
        if std == 0.0 {
            return obs;
        }
        let mut s = obs.to_array();
        for v in &mut s {
            let z: f64 = self.rng.sample(StandardNormal);
            *v += std * z;
        }
        Observation::from_array(s).clamped()
    }
}

impl Environment for PerturbedEnv {
    fn config(&self) -> &EnvConfig {
        self.inner.config()
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(mix_seed(self.pcfg.rng_seed, seed));
        self.gain = if self.pcfg.actuation_gain_std > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            1.0 + self.pcfg.actuation_gain_std * z
        } else {
            1.0
        };
        self.pending = std::iter::repeat_n([0.0; ACTION_DIM], self.pcfg.actuation_latency).collect();
        let prob = self.pcfg.mask_dropout_prob;
        let rng = &mut self.rng;
        let obs = self.inner.reset_with(seed, |m| drop_pixels(m, prob, rng))?;
        Ok(self.noisy(obs))
    }

    fn step(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        let values = ActionVector::masked(action.values(), action.active())?.values();
        self.pending.push_back(values);
        let issued = self.pending.pop_front().expect("queue holds at least the new action");
        let commands = issued.map(|v| v * self.gain);
        let prob = self.pcfg.mask_dropout_prob;
        let rng = &mut self.rng;
        let mut out = self.inner.advance(commands, |m| drop_pixels(m, prob, rng))?;
        out.observation = self.noisy(out.observation);
        Ok(out)
    }

    fn world(&self) -> &WorldState {
        self.inner.world()
    }

    fn metrics(&self) -> &ShotMetrics {
        self.inner.metrics()
    }
}
