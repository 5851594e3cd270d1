use std::path::Path;

use anyhow::{Context, Result};
use dolly_core::baseline::PdController;
use dolly_core::config::RunConfig;
use dolly_core::evalharness::{ActorPolicy, PairPolicy, Policy, RandomPolicy, ZeroPolicy};
use dolly_core::rewards::RewardKind;
use dolly_core::simenv::ACTION_DIM;
use dolly_core::td3::{load_agent, Td3Agent};

/// Where a policy comes from, before it is bound to a task.
pub enum Source {
    Pd,
    Zero,
    Random,
    Agent(Box<Td3Agent>),
    Pair(Box<Td3Agent>, Box<Td3Agent>),
}

fn read_agent(path: &Path) -> Result<Td3Agent> {
    let text = std::fs::read_to_string(path).map_err(|e| dolly_core::Error::io(path, e))?;
    load_agent(&text).with_context(|| format!("loading {}", path.display()))
}

pub fn load_source(spec: &str) -> Result<Source> {
    match spec {
        "pd" => return Ok(Source::Pd),
        "zero" => return Ok(Source::Zero),
        "random" => return Ok(Source::Random),
        _ => {}
    }
    let path = Path::new(spec);
    if path.is_dir() {
        let single = path.join("agent.ckpt");
        if single.is_file() {
            return Ok(Source::Agent(Box::new(read_agent(&single)?)));
        }
        let (t, s) = (path.join("throttle.ckpt"), path.join("steering.ckpt"));
        if t.is_file() && s.is_file() {
            return Ok(Source::Pair(Box::new(read_agent(&t)?), Box::new(read_agent(&s)?)));
        }
        return Err(dolly_core::Error::Config(format!("no checkpoint found in {}", path.display())).into());
    }
    Ok(Source::Agent(Box::new(read_agent(path)?)))
}

impl Source {
    /// The reward a trained policy was trained on.
    pub fn native_reward(&self) -> Option<RewardKind> {
        match self {
            Source::Agent(a) => Some(a.config().kind.reward_kind()),
            Source::Pair(..) => Some(RewardKind::Combined),
            _ => None,
        }
    }

    /// Binds the source to a task; hand-written policies drive only the
    /// channels the task rewards.
    pub fn into_policy(self, cfg: &RunConfig, reward: RewardKind, seed: u64) -> Result<Box<dyn Policy>> {
        let mask = channels_for(reward);
        Ok(match self {
            Source::Pd => Box::new(PdController::new(cfg.pd, cfg.env.clone())?.with_active(mask)),
            Source::Zero => Box::new(ZeroPolicy { active: mask }),
            Source::Random => Box::new(RandomPolicy::new(mask, seed)),
            Source::Agent(a) => Box::new(ActorPolicy::from_agent(&a)),
            Source::Pair(t, s) => Box::new(PairPolicy::new(ActorPolicy::from_agent(&t), ActorPolicy::from_agent(&s))?),
        })
    }
}

pub fn channels_for(reward: RewardKind) -> [bool; ACTION_DIM] {
    match reward {
        RewardKind::AreaOriginal => [true, false, false, false],
        RewardKind::Position => [false, true, false, false],
        RewardKind::Combined => [true, true, false, false],
        RewardKind::Complex => [true; ACTION_DIM],
    }
}
