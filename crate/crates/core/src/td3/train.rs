use std::io::Write;

use super::{AgentConfig, AgentKind, ReplayBuffer, TD3Hyper, Td3Agent, Transition};
use crate::evalharness::{run_episode, ActorPolicy, EvalTask, PairPolicy, Policy};
use crate::rewards::{self, RewardConfig, RewardKind, RewardWeights};
use crate::simenv::{mix_seed, ActionVector, Environment, SimEnv, ACTION_DIM};
use crate::{Error, Result};

pub const TRAINING_LOG_HEADER: [&str; 8] = [
    "episode",
    "cumulative_reward",
    "mean_area",
    "mean_centroid_x",
    "mean_centroid_y",
    "critic_loss",
    "actor_loss",
    "eval_reward",
];

const AGENT_SALT: u64 = 0xa6e7;
const BUFFER_SALT: u64 = 0xb0ff;
const EVAL_SALT: u64 = 0xe7a1;

/// Per-episode training statistics. Rewards are in the task's terms: the
/// agent's own reward, or the combined reward for the independent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// One-based episode number.
    pub episode: usize,
    pub cumulative_reward: f64,
    pub mean_area: f64,
    /// Pixels, over frames where the subject was visible.
    pub mean_centroid_x: f64,
    pub mean_centroid_y: f64,
    /// Mean over the episode's learning iterations; absent before learning starts.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    /// Mean deterministic evaluation reward, on evaluation episodes only.
    pub eval_reward: Option<f64>,
}

pub fn write_training_log<W: Write>(out: W, log: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAINING_LOG_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in log {
        w.write_record([
            r.episode.to_string(),
            r.cumulative_reward.to_string(),
            r.mean_area.to_string(),
            r.mean_centroid_x.to_string(),
            r.mean_centroid_y.to_string(),
            opt(r.critic_loss),
            opt(r.actor_loss),
            opt(r.eval_reward),
        ])?;
    }
    w.flush().map_err(|e| Error::io("training log", e))?;
    Ok(())
}

/// Hooks invoked by the training loops. Returning an error aborts training.
pub trait TrainCallbacks {
    fn on_episode(&mut self, _record: &EpisodeRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _episode: usize, _agents: &[&Td3Agent]) -> Result<()> {
        Ok(())
    }
}

pub struct NoCallbacks;

impl TrainCallbacks for NoCallbacks {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    pub log: Vec<EpisodeRecord>,
    pub stopped_early: bool,
    /// Episode and score of the best evaluation.
    pub best_eval: Option<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub throttle: Td3Agent,
    pub steering: Td3Agent,
    pub log: Vec<EpisodeRecord>,
    pub stopped_early: bool,
    pub best_eval: Option<(usize, f64)>,
}

struct Learner {
    agent: Td3Agent,
    buffer: ReplayBuffer,
    reward: RewardKind,
    weights: RewardWeights,
}

impl Learner {
    fn new(kind: AgentKind, hyper: &TD3Hyper, rewards: &RewardConfig, env: &dyn Environment, seed: u64, idx: u64) -> Result<Self> {
        let cfg = AgentConfig::new(kind);
        let buffer = ReplayBuffer::new(
            cfg.state_dim(),
            cfg.action_dim(),
            hyper.buffer_capacity,
            mix_seed(seed, BUFFER_SALT + idx),
        )?;
        Ok(Self {
            weights: rewards.weights(kind.reward_kind(), env.config())?,
            reward: kind.reward_kind(),
            agent: Td3Agent::new(cfg, hyper.clone(), mix_seed(seed, AGENT_SALT + idx))?,
            buffer,
        })
    }
}

struct LoopResult {
    log: Vec<EpisodeRecord>,
    stopped_early: bool,
    best_eval: Option<(usize, f64)>,
}

/// Trains one agent against `env` for up to `hyper.episodes` episodes.
///
/// Episode `i` (zero-based) resets the environment with `mix_seed(seed, i)`.
/// Transitions at the time limit are stored as non-terminal. Every
/// `eval_interval` episodes the deterministic actor is scored on
/// `eval_episodes` fixed clean episodes, which drive early stopping and
/// best-agent selection.
pub fn train(
    env: &mut dyn Environment,
    kind: AgentKind,
    hyper: &TD3Hyper,
    rewards: &RewardConfig,
    seed: u64,
    callbacks: &mut dyn TrainCallbacks,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let mut learners = vec![Learner::new(kind, hyper, rewards, env, seed, 0)?];
    let task = EvalTask::new(kind.reward_kind(), learners[0].weights);
    let res = run_loop(env, &mut learners, &task, hyper, seed, callbacks)?;
    let learner = learners.pop().expect("one learner");
    Ok(TrainOutcome {
        agent: learner.agent,
        log: res.log,
        stopped_early: res.stopped_early,
        best_eval: res.best_eval,
    })
}

/// Trains a throttle agent and a steering agent side by side, each on its
/// own reward with its own replay buffer. The logged and evaluated reward is
/// the combined reward of the joint action.
pub fn independent_pair_train(
    env: &mut dyn Environment,
    hyper: &TD3Hyper,
    rewards: &RewardConfig,
    seed: u64,
    callbacks: &mut dyn TrainCallbacks,
) -> Result<PairOutcome> {
    hyper.validate()?;
    let mut learners = vec![
        Learner::new(AgentKind::Throttle, hyper, rewards, env, seed, 0)?,
        Learner::new(AgentKind::Steering, hyper, rewards, env, seed, 1)?,
    ];
    let task = EvalTask::new(RewardKind::Combined, rewards.weights(RewardKind::Combined, env.config())?);
    let res = run_loop(env, &mut learners, &task, hyper, seed, callbacks)?;
    let steering = learners.pop().expect("steering learner").agent;
    let throttle = learners.pop().expect("throttle learner").agent;
    Ok(PairOutcome {
        throttle,
        steering,
        log: res.log,
        stopped_early: res.stopped_early,
        best_eval: res.best_eval,
    })
}

fn eval_policy(learners: &[Learner]) -> Result<Box<dyn Policy>> {
    match learners {
        [one] => Ok(Box::new(ActorPolicy::from_agent(&one.agent))),
        [a, b] => Ok(Box::new(PairPolicy::new(
            ActorPolicy::from_agent(&a.agent),
            ActorPolicy::from_agent(&b.agent),
        )?)),
        _ => Err(Error::Usage("training supports one or two learners".into())),
    }
}

fn evaluate(learners: &[Learner], env: &mut SimEnv, task: &EvalTask, hyper: &TD3Hyper, seed: u64) -> Result<f64> {
    let mut policy = eval_policy(learners)?;
    let mut total = 0.0;
    for i in 0..hyper.eval_episodes {
        let ep = run_episode(env, policy.as_mut(), mix_seed(mix_seed(seed, EVAL_SALT), i as u64), task, false)?;
        total += ep.cumulative_reward;
    }
    Ok(total / hyper.eval_episodes as f64)
}

fn run_loop(
    env: &mut dyn Environment,
    learners: &mut [Learner],
    task: &EvalTask,
    hyper: &TD3Hyper,
    seed: u64,
    callbacks: &mut dyn TrainCallbacks,
) -> Result<LoopResult> {
    let mut eval_cfg = env.config().clone();
    eval_cfg.episode_len = eval_cfg.episode_len.min(hyper.episode_len);
    let mut eval_env = SimEnv::new(eval_cfg)?;

    let mut active = [false; ACTION_DIM];
    for l in learners.iter() {
        for (slot, on) in active.iter_mut().zip(l.agent.config().active_mask()) {
            *slot |= on;
        }
    }

    let mut log = Vec::with_capacity(hyper.episodes);
    let mut evals: Vec<(usize, f64)> = Vec::new();
    let mut best_eval: Option<(usize, f64)> = None;
    let mut best_agents: Option<Vec<Td3Agent>> = None;
    let mut best_smoothed = f64::NEG_INFINITY;
    let mut last_improvement = 0usize;
    let mut stopped_early = false;

    for ep in 0..hyper.episodes {
        let mut obs = env.reset(mix_seed(seed, ep as u64))?;
        let mut states: Vec<Vec<f64>> = learners.iter().map(|l| l.agent.config().project(&obs)).collect();
        let mut prev = ActionVector::masked([0.0; ACTION_DIM], active)?;
        let (mut reward_sum, mut area_sum, mut cx_sum, mut cy_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut visible, mut steps) = (0usize, 0usize);
        let (mut critic_sum, mut critic_n, mut actor_sum, mut actor_n) = (0.0, 0usize, 0.0, 0usize);

        for _ in 0..hyper.episode_len {
            let mut values = [0.0; ACTION_DIM];
            let mut local = Vec::with_capacity(learners.len());
            for (l, s) in learners.iter_mut().zip(&states) {
                let a = l.agent.select_action(s, true)?;
                for (&i, &v) in l.agent.config().action_indices.iter().zip(&a) {
                    values[i] = v;
                }
                local.push(a);
            }
            let action = ActionVector::masked(values, active)?;
            let out = env.step(&action)?;
            obs = out.observation;
            let m = out.metrics;

            reward_sum += rewards::evaluate(task.kind, &m, &action, &prev, &task.weights)?.total;
            area_sum += m.area_frac;
            if let Some((x, y)) = m.centroid {
                cx_sum += x;
                cy_sum += y;
                visible += 1;
            }
            steps += 1;

            for ((l, s), a) in learners.iter_mut().zip(states.iter_mut()).zip(local) {
                let r = rewards::evaluate(l.reward, &m, &action, &prev, &l.weights)?.total;
                let next = l.agent.config().project(&obs);
                l.buffer.push(Transition {
                    state: std::mem::replace(s, next.clone()),
                    action: a,
                    reward: r,
                    next_state: next,
                    done: false,
                })?;
                if l.buffer.len() >= hyper.batch_size {
                    let batch = l.buffer.sample(hyper.batch_size)?;
                    let stats = l.agent.learn(&batch)?;
                    critic_sum += 0.5 * (stats.critic_losses.0 + stats.critic_losses.1);
                    critic_n += 1;
                    if let Some(al) = stats.actor_loss {
                        actor_sum += al;
                        actor_n += 1;
                    }
                }
            }
            prev = action;
            if out.done {
                break;
            }
        }

        let episode = ep + 1;
        let mut record = EpisodeRecord {
            episode,
            cumulative_reward: reward_sum,
            mean_area: area_sum / steps.max(1) as f64,
            mean_centroid_x: if visible > 0 { cx_sum / visible as f64 } else { f64::NAN },
            mean_centroid_y: if visible > 0 { cy_sum / visible as f64 } else { f64::NAN },
            critic_loss: (critic_n > 0).then(|| critic_sum / critic_n as f64),
            actor_loss: (actor_n > 0).then(|| actor_sum / actor_n as f64),
            eval_reward: None,
        };

        if episode % hyper.eval_interval == 0 {
            let score = evaluate(learners, &mut eval_env, task, hyper, seed)?;
            record.eval_reward = Some(score);
            evals.push((episode, score));
            if best_eval.is_none_or(|(_, b)| score > b) {
                best_eval = Some((episode, score));
                if hyper.keep_best {
                    best_agents = Some(learners.iter().map(|l| l.agent.clone()).collect());
                }
            }
            if let Some(es) = hyper.early_stopping {
                let recent: Vec<f64> =
                    evals.iter().filter(|(e, _)| *e + es.window > episode).map(|(_, s)| *s).collect();
                let smoothed = recent.iter().sum::<f64>() / recent.len() as f64;
                if smoothed > best_smoothed + es.min_delta {
                    best_smoothed = smoothed;
                    last_improvement = episode;
                } else if episode - last_improvement >= es.patience {
                    stopped_early = true;
                }
            }
        }

        callbacks.on_episode(&record)?;
        log.push(record);
        if hyper.checkpoint_every.is_some_and(|k| k > 0 && episode % k == 0) {
            let agents: Vec<&Td3Agent> = learners.iter().map(|l| &l.agent).collect();
            callbacks.on_checkpoint(episode, &agents)?;
        }
        if stopped_early {
            break;
        }
    }

    if let Some(best) = best_agents {
        for (l, a) in learners.iter_mut().zip(best) {
            l.agent = a;
        }
    }
    Ok(LoopResult {
        log,
        stopped_early,
        best_eval,
    })
}
