//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.
//!
//! Criteria 7, 8 and 10 train desk-profile agents on three seeds each and
//! take several minutes on one core.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dolly_core::baseline::PdController;
use dolly_core::config::{Profile, RunConfig};
use dolly_core::evalharness::{
    run_trials, srcc, summarize, ActorPolicy, EvalTask, Estimator, PairPolicy, Policy, RandomPolicy, StartScheme,
    TrialResult, TrialSpec,
};
use dolly_core::imaging::{compute_moments, delta_metric, BinaryMask, DeltaParams};
use dolly_core::neural::{finite_difference_gradients, max_relative_error, Mlp, OutputActivation};
use dolly_core::rewards::{
    r_area_original, r_area_scaled, r_object_offset, r_position, smoothness_penalty, RewardConfig, RewardKind,
    RewardWeights,
};
use dolly_core::simenv::{ActionVector, EnvConfig, PerturbationConfig, SimEnv, ACTION_DIM};
use dolly_core::td3::{
    independent_pair_train, save_agent, train, write_training_log, AgentConfig, AgentKind, Batch, NoCallbacks,
    ReplayBuffer, Td3Agent, Transition, TD3Hyper,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
const EVAL_BASE_SEED: u64 = 1_000_000;
const SMOKE_BASE_SEED: u64 = 3_000_000;
const SRCC_BASE_SEED: u64 = 2_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn desk() -> RunConfig {
    RunConfig::profile(Profile::Desk)
}

fn task(cfg: &RunConfig, kind: RewardKind) -> Result<EvalTask, String> {
    Ok(EvalTask::new(kind, cfg.rewards.weights(kind, &cfg.env).map_err(err)?))
}

fn trials(policy: &dyn Policy, cfg: &RunConfig, kind: RewardKind, n: usize, base_seed: u64) -> Result<Vec<TrialResult>, String> {
    let spec = TrialSpec {
        env: cfg.env.clone(),
        perturbation: None,
        task: task(cfg, kind)?,
        n,
        starts: StartScheme::Mixed,
        base_seed,
        record_trace: false,
        jobs: 1,
    };
    run_trials(policy, &spec).map_err(err)
}

fn mean_reward(r: &[TrialResult]) -> f64 {
    r.iter().map(|t| t.cumulative_reward).sum::<f64>() / r.len() as f64
}

fn channels(kind: RewardKind) -> [bool; ACTION_DIM] {
    match kind {
        RewardKind::AreaOriginal => [true, false, false, false],
        RewardKind::Position => [false, true, false, false],
        RewardKind::Combined => [true, true, false, false],
        RewardKind::Complex => [true; ACTION_DIM],
    }
}

fn pd(cfg: &RunConfig, kind: RewardKind) -> Result<PdController, String> {
    Ok(PdController::new(cfg.pd, cfg.env.clone()).map_err(err)?.with_active(channels(kind)))
}

fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let w = rng.random_range(1..=64u32);
    let h = rng.random_range(1..=64u32);
    let density: f64 = rng.random_range(0.0..1.0);
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_bits(w, h, bits).unwrap()
}

fn c1_moments() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for i in 0..100 {
        let mask = random_mask(&mut rng);
        let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
        for y in 0..mask.height_px() {
            for x in 0..mask.width_px() {
                if mask.get(x, y) {
                    m00 += 1.0;
                    m10 += f64::from(x);
                    m01 += f64::from(y);
                }
            }
        }
        let m = compute_moments(&mask);
        if (m.m00, m.m10, m.m01) != (m00, m10, m01) {
            return Ok(outcome(false, format!("mask {i}: {:?} vs ({m00}, {m10}, {m01})", (m.m00, m.m10, m.m01))));
        }
    }
    Ok(outcome(true, "100 masks exact"))
}

fn c2_delta() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..10_000 {
        let max: f64 = rng.random_range(1e-3..1e3);
        let expected = rng.random_range(0.01..0.99) * max;
        let actual = rng.random_range(0.0..=max);
        let p = DeltaParams::new(expected, max).map_err(err)?;
        let d = delta_metric(actual, &p).map_err(err)?;
        let hand = if actual < expected {
            (expected - actual) / expected
        } else {
            (actual - expected) / (expected - max)
        };
        if !(-1.0..=1.0).contains(&d) || d != hand || (d == 0.0) != (actual == expected) {
            return Ok(outcome(false, format!("delta({actual}; {expected}, {max}) = {d}, hand {hand}")));
        }
        if delta_metric(expected, &p).map_err(err)? != 0.0
            || delta_metric(0.0, &p).map_err(err)? != 1.0
            || delta_metric(max, &p).map_err(err)? != -1.0
        {
            return Ok(outcome(false, format!("endpoint or target law broken for ({expected}, {max})")));
        }
    }
    Ok(outcome(true, "10^4 triples, endpoints exact"))
}

fn c3_gradients() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let sd = rng.random_range(2..=9usize);
        let ad = rng.random_range(1..=4usize);
        let hidden = [rng.random_range(4..=16usize), rng.random_range(4..=16usize)];
        let actor = Mlp::new_actor(&[sd, hidden[0], hidden[1], ad], 1.0, &mut rng).map_err(err)?;
        let critic = Mlp::new(&[sd + ad, hidden[0], hidden[1], 1], OutputActivation::Linear, &mut rng).map_err(err)?;
        for net in [actor, critic] {
            let input = Array2::from_shape_fn((5, net.input_dim()), |_| rng.random_range(-1.0..1.0));
            let coeff = Array2::from_shape_fn((5, net.output_dim()), |_| rng.random_range(-1.0..1.0));
            // loss = sum(coeff * out + 0.5 * out^2)
            let loss = |out: &Array2<f64>| (&coeff * out + out.mapv(|v| 0.5 * v * v)).sum();
            let (out, cache) = net.forward(input.view()).map_err(err)?;
            let d_out = &coeff + &out;
            let (analytic, _) = net.backward(&cache, d_out.view()).map_err(err)?;
            let numeric = finite_difference_gradients(&net, input.view(), loss, 1e-6).map_err(err)?;
            worst = worst.max(max_relative_error(&analytic, &numeric));
        }
    }
    Ok(outcome(worst < 1e-4, format!("worst relative error {worst:.2e} over 20 seeds")))
}

fn td3_hyper() -> TD3Hyper {
    TD3Hyper {
        hidden: vec![16, 16],
        batch_size: 16,
        buffer_capacity: 1000,
        ..TD3Hyper::desk()
    }
}

fn batch(rng: &mut ChaCha8Rng, n: usize, sd: usize, ad: usize, done: bool) -> Batch {
    let items: Vec<Transition> = (0..n)
        .map(|_| Transition {
            state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-1.0..0.0),
            next_state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
            done,
        })
        .collect();
    Batch::from_transitions(&items).unwrap()
}

fn c4_td3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let hyper = td3_hyper();
    let mut agent = Td3Agent::new(AgentConfig::new(AgentKind::Complex), hyper.clone(), 4).map_err(err)?;

    let terminal = batch(&mut rng, 32, 9, 4, true);
    if agent.critic_targets(&terminal).map_err(err)? != terminal.rewards {
        return Ok(outcome(false, "terminal targets differ from rewards"));
    }

    let clip = hyper.target_noise_clip;
    let noise = agent.smoothing_noise(2000, 4);
    if noise.iter().any(|v| v.abs() > clip) {
        return Ok(outcome(false, "smoothing noise escaped its clip"));
    }
    let next = Array2::from_shape_fn((500, 9), |_| rng.random_range(-3.0..3.0));
    let acts = agent.target_action(next.view()).map_err(err)?;
    if acts.iter().any(|v| v.abs() > 1.0) {
        return Ok(outcome(false, "target action outside [-1, 1]"));
    }

    let d = hyper.policy_delay as u64;
    let b = batch(&mut rng, 16, 9, 4, false);
    for n in 1..=(6 * d) {
        let before_target = agent.target_critics().0.clone();
        let stats = agent.learn(&b).map_err(err)?;
        if stats.actor_loss.is_some() != (n % d == 0) || agent.actor_updates() != n / d {
            return Ok(outcome(false, format!("actor update schedule broken at iteration {n}")));
        }
        let online = agent.critics().0;
        let target = agent.target_critics().0;
        for ((t0, o), t1) in before_target.layers().iter().zip(online.layers()).zip(target.layers()) {
            let expect = &t0.weights * (1.0 - hyper.tau) + &o.weights * hyper.tau;
            if expect.iter().zip(t1.weights.iter()).any(|(x, y)| (x - y).abs() > 1e-15) {
                return Ok(outcome(false, "Polyak identity off by more than 1e-15"));
            }
        }
    }

    let mut buf = ReplayBuffer::new(1, 1, 5, 0).map_err(err)?;
    for i in 0..12 {
        buf.push(Transition {
            state: vec![f64::from(i)],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![0.0],
            done: false,
        })
        .map_err(err)?;
    }
    let kept: Vec<f64> = buf.iter_oldest_first().map(|t| t.state[0]).collect();
    if kept != [7.0, 8.0, 9.0, 10.0, 11.0] {
        return Ok(outcome(false, format!("ring buffer kept {kept:?}")));
    }
    Ok(outcome(true, format!("terminal y = r, clip {clip}, delay {d}, Polyak 1e-15, ring eviction")))
}

fn c5_rewards() -> Check {
    let env = EnvConfig::default();
    let wts: RewardWeights = RewardConfig::default().weights(RewardKind::Complex, &env).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let zero = [0.0; ACTION_DIM];
    for _ in 0..10_000 {
        let area = rng.random_range(0.0..=wts.area_max);
        let x = rng.random_range(0.0..=wts.frame_width);
        let theta = rng.random_range(-4.0..4.0);
        let curr = ActionVector::full(std::array::from_fn(|_| rng.random_range(-1.0..=1.0))).map_err(err)?;
        let prev = ActionVector::full(std::array::from_fn(|_| rng.random_range(-1.0..=1.0))).map_err(err)?;
        let checks = [
            (r_area_original(area, &wts).map_err(err)?, area == wts.target_area),
            (r_area_scaled(area, &wts).map_err(err)?, area == wts.target_area),
            (r_position(Some(x), &wts).map_err(err)?, x == wts.x_e),
            (r_object_offset(theta, &wts), theta == 0.0),
            (smoothness_penalty(&curr, &prev, &wts), false),
        ];
        for (i, (r, on_target)) in checks.into_iter().enumerate() {
            if r > 0.0 || (i < 4 && (r == 0.0) != on_target) {
                return Ok(outcome(false, format!("component {i} = {r} (area {area}, x {x}, theta {theta})")));
            }
        }
    }
    let exact = [
        (r_area_original(wts.target_area, &wts).map_err(err)?, 0.0),
        (r_position(Some(wts.x_e), &wts).map_err(err)?, 0.0),
        (r_object_offset(0.0, &wts), 0.0),
        (smoothness_penalty(&ActionVector::full(zero).unwrap(), &ActionVector::full(zero).unwrap(), &wts), 0.0),
        (r_area_scaled(0.0, &wts).map_err(err)?, -1.0),
        (r_area_scaled(wts.k, &wts).map_err(err)?, -0.5),
        (r_area_scaled(wts.target_area, &wts).map_err(err)?, 0.0),
    ];
    for (got, want) in exact {
        if got != want {
            return Ok(outcome(false, format!("expected {want}, got {got}")));
        }
    }
    Ok(outcome(true, "10^4 inputs, scaled area at 0, k, a_E = -1, -0.5, 0"))
}

fn c6_determinism() -> Check {
    let cfg = desk();
    let hyper = TD3Hyper {
        episodes: 3,
        ..cfg.td3.clone()
    };
    let run = || -> Result<(Vec<u8>, String), String> {
        let mut env = SimEnv::new(cfg.env.clone()).map_err(err)?;
        let out = train(&mut env, AgentKind::Combined, &hyper, &cfg.rewards, 17, &mut NoCallbacks).map_err(err)?;
        let mut log = Vec::new();
        write_training_log(&mut log, &out.log).map_err(err)?;
        Ok((log, save_agent(&out.agent).map_err(err)?))
    };
    let (a, b) = (run()?, run()?);
    Ok(outcome(a == b, format!("log {} bytes, checkpoint {} bytes", a.0.len(), a.1.len())))
}

struct Trained {
    combined: Vec<Td3Agent>,
}

fn train_agent(cfg: &RunConfig, hyper: &TD3Hyper, kind: AgentKind, seed: u64) -> Result<Td3Agent, String> {
    let mut env = SimEnv::new(cfg.env.clone()).map_err(err)?;
    Ok(train(&mut env, kind, hyper, &cfg.rewards, seed, &mut NoCallbacks).map_err(err)?.agent)
}

fn c7_learning(trained: &mut Trained) -> Check {
    let cfg = desk();
    let kind = RewardKind::Combined;
    let random = mean_reward(&trials(&RandomPolicy::new(channels(kind), 0), &cfg, kind, 5, SMOKE_BASE_SEED)?);
    let baseline = mean_reward(&trials(&pd(&cfg, kind)?, &cfg, kind, 5, SMOKE_BASE_SEED)?);
    let need = random + 0.5 * (baseline - random);
    let mut passes = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let agent = train_agent(&cfg, &cfg.td3, AgentKind::Combined, seed)?;
        let score = mean_reward(&trials(&ActorPolicy::from_agent(&agent), &cfg, kind, 5, SMOKE_BASE_SEED)?);
        passes += usize::from(score >= need);
        parts.push(format!("{score:.1}"));
        trained.combined.push(agent);
    }
    Ok(outcome(
        passes >= 2,
        format!(
            "random {random:.1}, pd {baseline:.1}, need >= {need:.1}; agents [{}], {passes}/3 seeds",
            parts.join(", ")
        ),
    ))
}

fn c8_combined_vs_pair(trained: &Trained) -> Check {
    let cfg = desk();
    let kind = RewardKind::Combined;
    let mut passes = 0;
    let mut parts = Vec::new();
    for (i, seed) in SEEDS.into_iter().enumerate() {
        let mut env = SimEnv::new(cfg.env.clone()).map_err(err)?;
        let pair = independent_pair_train(&mut env, &cfg.td3, &cfg.rewards, seed, &mut NoCallbacks).map_err(err)?;
        let pair_policy =
            PairPolicy::new(ActorPolicy::from_agent(&pair.throttle), ActorPolicy::from_agent(&pair.steering)).map_err(err)?;
        let pair_res = summarize(&trials(&pair_policy, &cfg, kind, 100, EVAL_BASE_SEED)?).map_err(err)?;
        let comb_res =
            summarize(&trials(&ActorPolicy::from_agent(&trained.combined[i]), &cfg, kind, 100, EVAL_BASE_SEED)?).map_err(err)?;
        let mean_ok = comb_res.cumulative_reward.mean >= pair_res.cumulative_reward.mean;
        let iqr_ok = pair_res.final_centroid_x.iqr >= comb_res.final_centroid_x.iqr;
        passes += usize::from(mean_ok && iqr_ok);
        parts.push(format!(
            "seed {seed}: mean {:.1} vs {:.1}, cx IQR {:.3} vs {:.3}",
            comb_res.cumulative_reward.mean,
            pair_res.cumulative_reward.mean,
            comb_res.final_centroid_x.iqr,
            pair_res.final_centroid_x.iqr
        ));
    }
    Ok(outcome(passes >= 2, format!("combined vs pair; {}; {passes}/3 seeds", parts.join("; "))))
}

fn srcc_spec(cfg: &RunConfig, kind: RewardKind, perturbation: PerturbationConfig) -> Result<TrialSpec, String> {
    Ok(TrialSpec {
        env: cfg.env.clone(),
        perturbation: Some(perturbation),
        task: task(cfg, kind)?,
        n: 30,
        starts: StartScheme::PerPosition(10),
        base_seed: SRCC_BASE_SEED,
        record_trace: false,
        jobs: 1,
    })
}

fn c9_srcc(trained: &Trained) -> Check {
    let cfg = desk();
    let kind = RewardKind::Combined;
    let policy = ActorPolicy::from_agent(&trained.combined[0]);
    let started = Instant::now();
    let clean = TrialSpec {
        perturbation: None,
        ..srcc_spec(&cfg, kind, PerturbationConfig::none())?
    };
    let nominal = run_trials(&policy, &clean).map_err(err)?;

    let zero = run_trials(&policy, &srcc_spec(&cfg, kind, PerturbationConfig::none())?).map_err(err)?;
    let identity = srcc(&nominal, &zero, Estimator::Pearson).map_err(err)?;
    for g in &identity.groups {
        for m in g.metrics.iter().filter(|m| m.defined) {
            if (m.correlation.unwrap() - 1.0).abs() > 1e-9 {
                return Ok(outcome(false, format!("zero perturbation: {} {} r = {:?}", g.start, m.metric, m.correlation)));
            }
        }
    }

    let perturbed = run_trials(&policy, &srcc_spec(&cfg, kind, cfg.perturbation)?).map_err(err)?;
    let report = srcc(&nominal, &perturbed, Estimator::Pearson).map_err(err)?;
    let mut ok = report.groups.len() == 3;
    let mut parts = Vec::new();
    for g in &report.groups {
        ok &= g.n == 10;
        for name in ["cumulative_reward", "object_area"] {
            let r = g.metric(name).and_then(|m| m.correlation);
            ok &= r.is_some_and(|r| r >= 0.3);
            parts.push(format!("{} {name} {}", g.start, r.map_or("undefined".into(), |r| format!("{r:.2}"))));
        }
    }
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    Ok(outcome(ok, format!("zero perturbation all 1.0; {}", parts.join(", "))))
}

fn c10_pd_parity() -> Check {
    let cfg = desk();
    let kind = RewardKind::Complex;
    // Early stopping on frequent evaluations, keeping the best snapshot.
    let hyper = TD3Hyper {
        eval_interval: 10,
        keep_best: true,
        ..cfg.td3.clone()
    };
    let baseline = mean_reward(&trials(&pd(&cfg, kind)?, &cfg, kind, 100, EVAL_BASE_SEED)?);
    let floor = baseline - 0.25 * baseline.abs();
    let mut passes = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let agent = train_agent(&cfg, &hyper, AgentKind::Complex, seed)?;
        let score = mean_reward(&trials(&ActorPolicy::from_agent(&agent), &cfg, kind, 100, EVAL_BASE_SEED)?);
        passes += usize::from(score >= floor);
        parts.push(format!("{score:.2}"));
    }
    Ok(outcome(
        passes >= 1,
        format!("pd {baseline:.2}, need >= {floor:.2}; agents [{}], {passes}/3 seeds", parts.join(", ")),
    ))
}

fn report(n: usize, name: &str, limit: Duration, started: Instant, result: Check) -> bool {
    let elapsed = started.elapsed();
    let (pass, detail) = match result {
        Ok(o) => (o.pass && elapsed <= limit, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {verdict} {name} ({:.1}s, limit {}s): {detail}", elapsed.as_secs_f64(), limit.as_secs());
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut all = true;
    let mut trained = Trained { combined: Vec::new() };

    let t = Instant::now();
    all &= report(1, "moment oracle", secs(1), t, c1_moments());
    let t = Instant::now();
    all &= report(2, "delta metric laws", secs(1), t, c2_delta());
    let t = Instant::now();
    all &= report(3, "gradient fidelity", secs(30), t, c3_gradients());
    let t = Instant::now();
    all &= report(4, "TD3 mechanics", secs(10), t, c4_td3());
    let t = Instant::now();
    all &= report(5, "reward signs and optima", secs(1), t, c5_rewards());
    let t = Instant::now();
    all &= report(6, "end-to-end determinism", secs(120), t, c6_determinism());
    let t = Instant::now();
    all &= report(7, "learning smoke", secs(30 * 60), t, c7_learning(&mut trained));
    if trained.combined.len() == SEEDS.len() {
        let t = Instant::now();
        all &= report(8, "combined vs independent", secs(30 * 60), t, c8_combined_vs_pair(&trained));
        // The runtime bound covers the study itself, not training.
        let t = Instant::now();
        all &= report(9, "SRCC protocol", secs(600), t, c9_srcc(&trained));
    } else {
        let t = Instant::now();
        all &= report(8, "combined vs independent", secs(0), t, Err("combined agents unavailable".into()));
        all &= report(9, "SRCC protocol", secs(0), t, Err("combined agents unavailable".into()));
    }
    let t = Instant::now();
    all &= report(10, "PD parity", secs(30 * 60), t, c10_pd_parity());

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
