//! TD3 learner: twin critics with clipped double-Q targets, target policy
//! smoothing, delayed actor updates and Polyak-averaged target networks.

mod checkpoint;
mod replay;
mod train;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::neural::{adam_step, polyak_blend, AdamConfig, AdamState, Mlp, OutputActivation};
use crate::rewards::RewardKind;
use crate::simenv::{ActionVector, Observation, ACTION_DIM};
use crate::{Error, Result};

pub use checkpoint::{load_agent, save_agent, AGENT_FORMAT};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{
    independent_pair_train, train, write_training_log, EpisodeRecord, NoCallbacks, PairOutcome, TrainCallbacks,
    TrainOutcome, TRAINING_LOG_HEADER,
};

/// The four agent configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Throttle,
    Steering,
    Combined,
    Complex,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Throttle => "throttle",
            AgentKind::Steering => "steering",
            AgentKind::Combined => "combined",
            AgentKind::Complex => "complex",
        }
    }

    /// Reward the agent is trained on.
    pub fn reward_kind(&self) -> RewardKind {
        match self {
            AgentKind::Throttle => RewardKind::AreaOriginal,
            AgentKind::Steering => RewardKind::Position,
            AgentKind::Combined => RewardKind::Combined,
            AgentKind::Complex => RewardKind::Complex,
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "throttle" => Ok(AgentKind::Throttle),
            "steering" => Ok(AgentKind::Steering),
            "combined" => Ok(AgentKind::Combined),
            "complex" => Ok(AgentKind::Complex),
            other => Err(Error::Config(format!("unknown agent kind {other:?}"))),
        }
    }
}

/// Which observation channels an agent sees and which actions it drives
/// (zero-based indices into s1..s9 and a1..a4).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub state_indices: Vec<usize>,
    pub action_indices: Vec<usize>,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        let (state_indices, action_indices) = match kind {
            AgentKind::Throttle => (vec![0, 1], vec![0]),
            AgentKind::Steering => (vec![2, 3], vec![1]),
            AgentKind::Combined => (vec![0, 1, 2, 3], vec![0, 1]),
            AgentKind::Complex => ((0..9).collect(), (0..4).collect()),
        };
        Self {
            kind,
            state_indices,
            action_indices,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_indices.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_indices.len()
    }

    pub fn active_mask(&self) -> [bool; ACTION_DIM] {
        let mut mask = [false; ACTION_DIM];
        for &i in &self.action_indices {
            mask[i] = true;
        }
        mask
    }

    /// The agent's view of an observation.
    pub fn project(&self, obs: &Observation) -> Vec<f64> {
        let s = obs.to_array();
        self.state_indices.iter().map(|&i| s[i]).collect()
    }

    /// Places the agent's action components into a full masked action.
    pub fn expand(&self, action: &[f64]) -> Result<ActionVector> {
        if action.len() != self.action_dim() {
            return Err(Error::shape(self.action_dim(), action.len()));
        }
        let mut values = [0.0; ACTION_DIM];
        for (&i, &v) in self.action_indices.iter().zip(action) {
            values[i] = v;
        }
        ActionVector::masked(values, self.active_mask())
    }
}

/// Early stopping on the moving average of periodic evaluation rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopping {
    /// Training episodes covered by the moving average.
    pub window: usize,
    /// Training episodes without improvement before stopping.
    pub patience: usize,
    /// Required improvement of the moving average.
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            window: 100,
            patience: 1000,
            min_delta: 1.0,
        }
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TD3Hyper {
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,
    pub exploration_noise_std: f64,
    pub episodes: usize,
    pub episode_len: usize,
    /// Exploratory steps taken with uniform random actions.
    pub warmup_steps: usize,
    pub hidden: Vec<usize>,
    /// Training episodes between deterministic evaluations.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub early_stopping: Option<EarlyStopping>,
    /// Return the agent as it was at its best evaluation instead of the last.
    pub keep_best: bool,
    /// Training episodes between checkpoint callbacks.
    pub checkpoint_every: Option<usize>,
}

impl Default for TD3Hyper {
    fn default() -> Self {
        Self::paper()
    }
}

impl TD3Hyper {
    /// Full-scale settings: 400/300 networks, 5000 episodes of 1500 steps.
    pub fn paper() -> Self {
        Self {
            batch_size: 128,
            lr: 5e-4,
            gamma: 0.99,
            tau: 0.005,
            buffer_capacity: 10_000_000,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            exploration_noise_std: 0.1,
            episodes: 5000,
            episode_len: 1500,
            warmup_steps: 5000,
            hidden: vec![400, 300],
            eval_interval: 50,
            eval_episodes: 5,
            early_stopping: None,
            keep_best: false,
            checkpoint_every: Some(500),
        }
    }

    /// Scaled-down settings that train in minutes on one core.
    pub fn desk() -> Self {
        Self {
            buffer_capacity: 100_000,
            episodes: 300,
            episode_len: 200,
            hidden: vec![64, 64],
            checkpoint_every: Some(100),
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau {} outside (0, 1]", self.tau));
        }
        if !(self.target_noise_clip > 0.0) || !(self.target_noise_std >= 0.0) {
            return fail("target noise std must be >= 0 and clip > 0".into());
        }
        if !(self.exploration_noise_std >= 0.0) {
            return fail("exploration noise std must be >= 0".into());
        }
        if self.policy_delay == 0 || self.batch_size == 0 || self.episode_len == 0 {
            return fail("policy_delay, batch_size and episode_len must be positive".into());
        }
        if !(self.lr > 0.0) {
            return fail("learning rate must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail(format!("invalid hidden widths {:?}", self.hidden));
        }
        if self.buffer_capacity < self.batch_size {
            return fail("buffer capacity below batch size".into());
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return fail("eval_interval and eval_episodes must be positive".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Losses from one learning iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnStats {
    pub critic_losses: (f64, f64),
    pub actor_loss: Option<f64>,
}

/// Actor, twin critics, their targets and optimiser state.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    config: AgentConfig,
    hyper: TD3Hyper,
    pub(crate) actor: Mlp,
    pub(crate) actor_target: Mlp,
    pub(crate) critic1: Mlp,
    pub(crate) critic2: Mlp,
    pub(crate) critic1_target: Mlp,
    pub(crate) critic2_target: Mlp,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) exploration_steps: u64,
    pub(crate) critic_iterations: u64,
    pub(crate) actor_updates: u64,
}

pub(crate) const MAX_ACTION: f64 = 1.0;

impl Td3Agent {
    pub fn new(config: AgentConfig, hyper: TD3Hyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sd, ad) = (config.state_dim(), config.action_dim());
        let actor_sizes: Vec<usize> = std::iter::once(sd).chain(hyper.hidden.iter().copied()).chain([ad]).collect();
        let critic_sizes: Vec<usize> = std::iter::once(sd + ad).chain(hyper.hidden.iter().copied()).chain([1]).collect();
        let actor = Mlp::new_actor(&actor_sizes, MAX_ACTION, &mut rng)?;
        let critic1 = Mlp::new(&critic_sizes, OutputActivation::Linear, &mut rng)?;
        let critic2 = Mlp::new(&critic_sizes, OutputActivation::Linear, &mut rng)?;
        Ok(Self::assemble(config, hyper, actor, critic1, critic2, rng))
    }

    pub(crate) fn assemble(config: AgentConfig, hyper: TD3Hyper, actor: Mlp, critic1: Mlp, critic2: Mlp, rng: ChaCha8Rng) -> Self {
        let adam = hyper.adam();
        Self {
            actor_opt: AdamState::new(&actor, adam),
            critic1_opt: AdamState::new(&critic1, adam),
            critic2_opt: AdamState::new(&critic2, adam),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            config,
            hyper,
            rng,
            exploration_steps: 0,
            critic_iterations: 0,
            actor_updates: 0,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn hyper(&self) -> &TD3Hyper {
        &self.hyper
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.critic1, &self.critic2)
    }

    pub fn target_critics(&self) -> (&Mlp, &Mlp) {
        (&self.critic1_target, &self.critic2_target)
    }

    /// Mutable access to all six networks, in the order actor, actor target,
    /// critic 1, critic 2, critic 1 target, critic 2 target. Intended for
    /// constructing controlled test fixtures.
    pub fn networks_mut(&mut self) -> [&mut Mlp; 6] {
        [
            &mut self.actor,
            &mut self.actor_target,
            &mut self.critic1,
            &mut self.critic2,
            &mut self.critic1_target,
            &mut self.critic2_target,
        ]
    }

    pub fn critic_iterations(&self) -> u64 {
        self.critic_iterations
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn exploration_steps(&self) -> u64 {
        self.exploration_steps
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.config.state_dim() {
            return Err(Error::shape(
                format!("{} state channels for the {} agent", self.config.state_dim(), self.config.kind.as_str()),
                state.len(),
            ));
        }
        Ok(())
    }

    /// Deterministic actor output for one state.
    pub fn policy_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        self.actor.predict_one(state)
    }

    /// Action for one state. With `explore`, the first `warmup_steps` calls
    /// return uniform random actions and later calls add Gaussian noise;
    /// everything is clipped to `[-1, 1]`.
    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        self.check_state(state)?;
        if !explore {
            return self.actor.predict_one(state);
        }
        let warm = self.exploration_steps < self.hyper.warmup_steps as u64;
        self.exploration_steps += 1;
        if warm {
            return Ok((0..self.config.action_dim())
                .map(|_| self.rng.random_range(-MAX_ACTION..=MAX_ACTION))
                .collect());
        }
        let mut a = self.actor.predict_one(state)?;
        let std = self.hyper.exploration_noise_std * MAX_ACTION;
        for v in &mut a {
            let z: f64 = self.rng.sample(StandardNormal);
            *v = (*v + std * z).clamp(-MAX_ACTION, MAX_ACTION);
        }
        Ok(a)
    }

    /// Target-policy smoothing noise: `N(0, sigma^2)` clipped to `[-c, c]`.
    pub fn smoothing_noise(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let (std, clip) = (self.hyper.target_noise_std, self.hyper.target_noise_clip);
        Array2::from_shape_simple_fn((rows, cols), || {
            let z: f64 = self.rng.sample(StandardNormal);
            (std * z).clamp(-clip, clip)
        })
    }

    /// Smoothed target actions `clip(mu'(s') + clip(eps, -c, c), -1, 1)`.
    pub fn target_action(&mut self, next_states: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut a = self.actor_target.predict(next_states)?;
        let noise = self.smoothing_noise(a.nrows(), a.ncols());
        a += &noise;
        a.mapv_inplace(|v| v.clamp(-MAX_ACTION, MAX_ACTION));
        Ok(a)
    }

    /// Regression targets `r + gamma * (1 - done) * min(Q1'(s', a'), Q2'(s', a'))`.
    pub fn critic_targets(&mut self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.target_action(batch.next_states.view())?;
        let next_input = concatenate(Axis(1), &[batch.next_states.view(), next_actions.view()])
            .map_err(|e| Error::shape("state/action concat", e))?;
        let q1 = self.critic1_target.predict(next_input.view())?;
        let q2 = self.critic2_target.predict(next_input.view())?;
        let gamma = self.hyper.gamma;
        let mut y = Array1::zeros(batch.len());
        if q1.iter().chain(q2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target critic output; update aborted".into()));
        }
        for i in 0..batch.len() {
            let q_min = q1[[i, 0]].min(q2[[i, 0]]);
            y[i] = if batch.dones[i] == 1.0 {
                batch.rewards[i]
            } else {
                batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * q_min
            };
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("critic target; update aborted".into()));
        }
        Ok(y)
    }

    /// One squared-error regression step for each critic toward the shared
    /// clipped double-Q target. Returns both losses.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let y = self.critic_targets(batch)?;
        let input = concatenate(Axis(1), &[batch.states.view(), batch.actions.view()])
            .map_err(|e| Error::shape("state/action concat", e))?;
        let n = batch.len() as f64;
        let mut losses = [0.0; 2];
        let critics = [
            (&mut self.critic1, &mut self.critic1_opt),
            (&mut self.critic2, &mut self.critic2_opt),
        ];
        for (k, (critic, opt)) in critics.into_iter().enumerate() {
            let (q, cache) = critic.forward(input.view())?;
            let mut d_q = Array2::zeros(q.dim());
            let mut loss = 0.0;
            for i in 0..batch.len() {
                let diff = q[[i, 0]] - y[i];
                loss += diff * diff;
                d_q[[i, 0]] = 2.0 * diff / n;
            }
            let (grads, _) = critic.backward(&cache, d_q.view())?;
            adam_step(critic, &grads, opt)?;
            losses[k] = loss / n;
        }
        self.critic_iterations += 1;
        Ok((losses[0], losses[1]))
    }

    /// Whether the delayed-update schedule owes an actor update.
    pub fn actor_update_due(&self) -> bool {
        let d = self.hyper.policy_delay as u64;
        self.critic_iterations / d > self.actor_updates && self.critic_iterations.is_multiple_of(d)
    }

    /// Gradient ascent on `mean Q1(s, mu(s))` through the frozen critic.
    /// Only allowed on every `policy_delay`-th learning iteration.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64> {
        if !self.actor_update_due() {
            return Err(Error::Usage(format!(
                "actor update off schedule: {} critic iterations, {} actor updates, delay {}",
                self.critic_iterations, self.actor_updates, self.hyper.policy_delay
            )));
        }
        let sd = self.config.state_dim();
        let (actions, actor_cache) = self.actor.forward(batch.states.view())?;
        let input = concatenate(Axis(1), &[batch.states.view(), actions.view()])
            .map_err(|e| Error::shape("state/action concat", e))?;
        let (q, critic_cache) = self.critic1.forward(input.view())?;
        let n = batch.len() as f64;
        let loss = -q.sum() / n;
        let d_q = Array2::from_elem(q.dim(), -1.0 / n);
        let (_, d_input) = self.critic1.backward(&critic_cache, d_q.view())?;
        let d_actions = d_input.slice(s![.., sd..]);
        let (grads, _) = self.actor.backward(&actor_cache, d_actions)?;
        adam_step(&mut self.actor, &grads, &mut self.actor_opt)?;
        self.actor_updates += 1;
        Ok(loss)
    }

    /// Blends every online network into its target.
    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.hyper.tau;
        polyak_blend(&mut self.actor_target, &self.actor, tau)?;
        polyak_blend(&mut self.critic1_target, &self.critic1, tau)?;
        polyak_blend(&mut self.critic2_target, &self.critic2, tau)
    }

    /// One learning iteration: critic step, actor step when due, then soft
    /// target updates.
    pub fn learn(&mut self, batch: &Batch) -> Result<LearnStats> {
        let critic_losses = self.critic_update(batch)?;
        let actor_loss = if self.actor_update_due() {
            Some(self.actor_update(batch)?)
        } else {
            None
        };
        self.update_targets()?;
        Ok(LearnStats {
            critic_losses,
            actor_loss,
        })
    }
}
