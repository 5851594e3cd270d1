use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::ShotMetrics;
use crate::neural::Mlp;
use crate::simenv::{mix_seed, ActionVector, Observation, ACTION_DIM};
use crate::td3::{AgentConfig, Td3Agent};
use crate::{Error, Result};

/// Anything that maps the current observation and frame metrics to an action.
pub trait Policy: Send {
    fn name(&self) -> String;

    /// Called before each episode with its seed.
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation, metrics: &ShotMetrics) -> Result<ActionVector>;

    fn boxed_clone(&self) -> Box<dyn Policy>;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Always commands zero on the given channels.
#[derive(Debug, Clone)]
pub struct ZeroPolicy {
    pub active: [bool; ACTION_DIM],
}

impl Policy for ZeroPolicy {
    fn name(&self) -> String {
        "zero".into()
    }

    fn act(&mut self, _obs: &Observation, _metrics: &ShotMetrics) -> Result<ActionVector> {
        ActionVector::masked([0.0; ACTION_DIM], self.active)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Uniform random actions on the active channels, reseeded per episode.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    active: [bool; ACTION_DIM],
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(active: [bool; ACTION_DIM], seed: u64) -> Self {
        Self {
            active,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, seed));
    }

    fn act(&mut self, _obs: &Observation, _metrics: &ShotMetrics) -> Result<ActionVector> {
        let mut values = [0.0; ACTION_DIM];
        for v in &mut values {
            *v = self.rng.random_range(-1.0..=1.0);
        }
        ActionVector::masked(values, self.active)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Deterministic trained actor.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    name: String,
    config: AgentConfig,
    actor: Mlp,
}

impl ActorPolicy {
    pub fn new(name: impl Into<String>, config: AgentConfig, actor: Mlp) -> Result<Self> {
        if actor.input_dim() != config.state_dim() || actor.output_dim() != config.action_dim() {
            return Err(Error::shape(
                format!("{}->{}", config.state_dim(), config.action_dim()),
                format!("{}->{}", actor.input_dim(), actor.output_dim()),
            ));
        }
        Ok(Self {
            name: name.into(),
            config,
            actor,
        })
    }

    pub fn from_agent(agent: &Td3Agent) -> Self {
        Self {
            name: agent.config().kind.as_str().into(),
            config: agent.config().clone(),
            actor: agent.actor().clone(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// The agent's own action components.
    pub fn local_action(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.actor.predict_one(&self.config.project(obs))
    }
}

impl Policy for ActorPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn act(&mut self, obs: &Observation, _metrics: &ShotMetrics) -> Result<ActionVector> {
        let a = self.local_action(obs)?;
        self.config.expand(&a)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Two actors driving disjoint action channels.
#[derive(Debug, Clone)]
pub struct PairPolicy {
    first: ActorPolicy,
    second: ActorPolicy,
}

impl PairPolicy {
    pub fn new(first: ActorPolicy, second: ActorPolicy) -> Result<Self> {
        let overlap = first.config.action_indices.iter().any(|i| second.config.action_indices.contains(i));
        if overlap {
            return Err(Error::Config("paired agents must drive disjoint action channels".into()));
        }
        Ok(Self { first, second })
    }
}

impl Policy for PairPolicy {
    fn name(&self) -> String {
        format!("{}+{}", self.first.name, self.second.name)
    }

    fn act(&mut self, obs: &Observation, _metrics: &ShotMetrics) -> Result<ActionVector> {
        let mut values = [0.0; ACTION_DIM];
        let mut active = [false; ACTION_DIM];
        for p in [&self.first, &self.second] {
            for (&i, v) in p.config.action_indices.iter().zip(p.local_action(obs)?) {
                values[i] = v;
                active[i] = true;
            }
        }
        ActionVector::masked(values, active)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
