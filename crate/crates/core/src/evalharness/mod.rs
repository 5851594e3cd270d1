//! Evaluation protocols: deterministic trial fans, order statistics, policy
//! comparisons and the paired nominal/perturbed correlation study.

mod compare;
mod policy;
mod srcc;
mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::rewards::{self, RewardKind, RewardWeights};
use crate::simenv::{
    ActionVector, EnvConfig, Environment, PerturbationConfig, PerturbedEnv, SimEnv, StartPosition, TraceRow, ACTION_DIM,
};
use crate::{Error, Result};

pub use compare::{compare, write_comparison_csv, Comparison};
pub use policy::{ActorPolicy, PairPolicy, Policy, RandomPolicy, ZeroPolicy};
pub use srcc::{pearson, spearman, srcc, Correlation, Estimator, MetricCorrelation, SRCCReport, SrccGroup};
pub use stats::{summarize, summarize_values, write_summary_csv, MetricSummary, Summary};

/// The reward a run is scored with.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub kind: RewardKind,
    pub weights: RewardWeights,
}

impl EvalTask {
    pub fn new(kind: RewardKind, weights: RewardWeights) -> Self {
        Self { kind, weights }
    }
}

/// Outcome of one deterministic episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub cumulative_reward: f64,
    pub steps: usize,
    /// Percent of the frame.
    pub final_area_pct: f64,
    pub mean_area_pct: f64,
    /// Pixels; the last position at which the subject was seen.
    pub final_centroid_x: f64,
    pub final_centroid_y: f64,
    pub trace: Vec<TraceRow>,
}

/// Runs one episode to its horizon with `policy`, scoring every step with
/// `task`. The previous action of the first step is zero.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    seed: u64,
    task: &EvalTask,
    record_trace: bool,
) -> Result<EpisodeSummary> {
    policy.reset(seed);
    let mut obs = env.reset(seed)?;
    let mut metrics = *env.metrics();
    let (mut cx, mut cy) = metrics
        .centroid
        .unwrap_or((env.config().camera.midpoint_px(), env.config().camera.vertical_midpoint_px()));
    let mut prev = ActionVector::masked([0.0; ACTION_DIM], [true; ACTION_DIM])?;
    let mut trace = Vec::new();
    let (mut total, mut area_sum, mut steps) = (0.0, 0.0, 0usize);
    loop {
        let action = policy.act(&obs, &metrics)?;
        if steps == 0 {
            prev = ActionVector::masked([0.0; ACTION_DIM], action.active())?;
        }
        let out = env.step(&action)?;
        let r = rewards::evaluate(task.kind, &out.metrics, &action, &prev, &task.weights)?;
        total += r.total;
        area_sum += out.metrics.area_frac;
        if let Some((x, y)) = out.metrics.centroid {
            (cx, cy) = (x, y);
        }
        if record_trace {
            trace.push(TraceRow {
                t: steps,
                action,
                observation: out.observation,
                reward: r,
            });
        }
        steps += 1;
        obs = out.observation;
        metrics = out.metrics;
        prev = action;
        if out.done {
            break;
        }
    }
    Ok(EpisodeSummary {
        cumulative_reward: total,
        steps,
        final_area_pct: 100.0 * metrics.area_frac,
        mean_area_pct: 100.0 * area_sum / steps as f64,
        final_centroid_x: cx,
        final_centroid_y: cy,
        trace,
    })
}

/// How start positions are assigned to trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartScheme {
    /// Trial `i` starts at left, right, centre in turn.
    Mixed,
    /// Consecutive blocks of `k` trials per position: left, right, centre.
    PerPosition(usize),
    Fixed(StartPosition),
}

impl StartScheme {
    pub fn position(&self, i: usize) -> StartPosition {
        match *self {
            StartScheme::Mixed => StartPosition::FIXED[i % 3],
            StartScheme::PerPosition(k) => StartPosition::FIXED[(i / k.max(1)) % 3],
            StartScheme::Fixed(p) => p,
        }
    }
}

impl std::fmt::Display for StartScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartScheme::Mixed => write!(f, "mixed"),
            StartScheme::PerPosition(k) => write!(f, "per-position-{k}"),
            StartScheme::Fixed(p) => write!(f, "{p}"),
        }
    }
}

impl std::str::FromStr for StartScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mixed" {
            return Ok(StartScheme::Mixed);
        }
        if let Some(k) = s.strip_prefix("per-position-") {
            let k: usize = k.parse().map_err(|_| Error::Config(format!("bad start scheme {s:?}")))?;
            if k == 0 {
                return Err(Error::Config("per-position block size must be positive".into()));
            }
            return Ok(StartScheme::PerPosition(k));
        }
        match s.parse::<StartPosition>()? {
            StartPosition::Mixed => Ok(StartScheme::Mixed),
            p => Ok(StartScheme::Fixed(p)),
        }
    }
}

/// Everything a trial fan needs besides the policy.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub env: EnvConfig,
    /// `None` runs the clean simulator.
    pub perturbation: Option<PerturbationConfig>,
    pub task: EvalTask,
    pub n: usize,
    pub starts: StartScheme,
    pub base_seed: u64,
    pub record_trace: bool,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy: String,
    pub trial: usize,
    pub start: StartPosition,
    pub seed: u64,
    pub cumulative_reward: f64,
    pub final_area_pct: f64,
    pub mean_area_pct: f64,
    pub final_centroid_x: f64,
    pub final_centroid_y: f64,
    pub steps: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

fn run_one(policy: &mut dyn Policy, spec: &TrialSpec, i: usize) -> Result<TrialResult> {
    let start = spec.starts.position(i);
    let mut cfg = spec.env.clone();
    cfg.start_position = start;
    let seed = spec.base_seed + i as u64;
    let mut env: Box<dyn Environment> = match &spec.perturbation {
        Some(p) => Box::new(PerturbedEnv::new(cfg, *p)?),
        None => Box::new(SimEnv::new(cfg)?),
    };
    let ep = run_episode(env.as_mut(), policy, seed, &spec.task, spec.record_trace)?;
    let finite = [ep.cumulative_reward, ep.final_area_pct, ep.mean_area_pct, ep.final_centroid_x, ep.final_centroid_y];
    if finite.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("trial {i} metrics")));
    }
    Ok(TrialResult {
        policy: policy.name(),
        trial: i,
        start,
        seed,
        cumulative_reward: ep.cumulative_reward,
        final_area_pct: ep.final_area_pct,
        mean_area_pct: ep.mean_area_pct,
        final_centroid_x: ep.final_centroid_x,
        final_centroid_y: ep.final_centroid_y,
        steps: ep.steps,
        trace: ep.trace,
    })
}

/// Runs `spec.n` deterministic episodes with seeds `base_seed..base_seed+n`.
pub fn run_trials(policy: &dyn Policy, spec: &TrialSpec) -> Result<Vec<TrialResult>> {
    if spec.n == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let jobs = spec.jobs.clamp(1, spec.n);
    if jobs == 1 {
        let mut p = policy.boxed_clone();
        return (0..spec.n).map(|i| run_one(p.as_mut(), spec, i)).collect();
    }
    let chunks: Vec<Result<Vec<TrialResult>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let mut p = policy.boxed_clone();
                scope.spawn(move || (w..spec.n).step_by(jobs).map(|i| run_one(p.as_mut(), spec, i)).collect())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Usage("trial worker panicked".into()))))
            .collect()
    });
    let mut out: Vec<Option<TrialResult>> = vec![None; spec.n];
    for chunk in chunks {
        for r in chunk? {
            let i = r.trial;
            out[i] = Some(r);
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every trial ran")).collect())
}

pub const TRIAL_CSV_HEADER: [&str; 10] = [
    "policy",
    "trial",
    "start",
    "seed",
    "cumulative_reward",
    "final_area_pct",
    "mean_area_pct",
    "final_centroid_x",
    "final_centroid_y",
    "steps",
];

/// One row per trial.
pub fn write_trials_csv<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.policy.clone(),
            r.trial.to_string(),
            r.start.to_string(),
            r.seed.to_string(),
            r.cumulative_reward.to_string(),
            r.final_area_pct.to_string(),
            r.mean_area_pct.to_string(),
            r.final_centroid_x.to_string(),
            r.final_centroid_y.to_string(),
            r.steps.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("trial csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests;
