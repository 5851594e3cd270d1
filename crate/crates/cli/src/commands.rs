use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use dolly_core::baseline::tune_pd;
use dolly_core::config::RunConfig;
use dolly_core::evalharness::{
    compare, run_trials, srcc, summarize, write_comparison_csv, write_summary_csv, write_trials_csv, EvalTask,
    Estimator, Policy, StartScheme, TrialResult, TrialSpec,
};
use dolly_core::rewards::RewardKind;
use dolly_core::simenv::{write_trajectory_csv, SimEnv};
use dolly_core::td3::{
    independent_pair_train, save_agent, train, write_training_log, AgentKind, TrainCallbacks, Td3Agent,
};
use serde::Serialize;

use crate::manifest::{strip_out, unix_now, RunManifest, MANIFEST_FILE};
use crate::policies::{channels_for, load_source};
use crate::{Cli, Command, CommonArgs, TrialArgs};

pub const OUTPUT_ROOT_VAR: &str = "DOLLY_OUTPUT_ROOT";

/// 2 for configuration and usage problems, 3 for runtime and numeric failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use dolly_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Usage(_) | E::Parse { .. } | E::Io { .. } | E::InputDomain(_)) => 2,
        _ => 3,
    }
}

/// A configuration recorded by an earlier run, replacing profile and file.
pub struct Replay {
    pub config: RunConfig,
}

fn resolve_config(common: &CommonArgs, replay: Option<&Replay>) -> Result<RunConfig> {
    let mut cfg = match replay {
        Some(r) => r.config.clone(),
        None => {
            let base = RunConfig::profile(common.profile);
            match &common.config {
                Some(path) => RunConfig::load(&base, path)?,
                None => base,
            }
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_out(out: Option<&Path>, default_name: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from);
    match (out, root) {
        (Some(p), _) if p.is_absolute() => p.to_path_buf(),
        (Some(p), Some(root)) => root.join(p),
        (Some(p), None) => p.to_path_buf(),
        (None, Some(root)) => root.join(default_name),
        (None, None) => PathBuf::from("runs").join(default_name),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| dolly_core::Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| dolly_core::Error::io(path, e).into())
}

fn parse_reward(s: &str) -> Result<RewardKind> {
    Ok(s.parse::<RewardKind>()?)
}

struct Invocation {
    command: &'static str,
    args: Vec<String>,
    started: u64,
}

impl Invocation {
    fn finish(self, dir: &Path, cfg: &RunConfig, seeds: Vec<u64>) -> Result<()> {
        RunManifest {
            command: self.command.into(),
            args: self.args,
            seeds,
            code_version: env!("CARGO_PKG_VERSION").into(),
            output_dir: dir.display().to_string(),
            started_unix: self.started,
            finished_unix: unix_now(),
            config: cfg.clone(),
        }
        .write(dir)
    }
}

/// Runs the parsed command. `replay` carries the configuration and
/// arguments of a manifest when invoked through `rerun`.
pub fn dispatch(cli: &Cli, replay: Option<(&Replay, Vec<String>)>) -> Result<Option<PathBuf>> {
    let args = match &replay {
        Some((_, a)) => a.clone(),
        None => strip_out(&std::env::args().skip(1).collect::<Vec<_>>()),
    };
    let replay_cfg = replay.as_ref().map(|(r, _)| *r);
    let inv = |command| Invocation {
        command,
        args: args.clone(),
        started: unix_now(),
    };
    match &cli.command {
        Command::Train(a) => cmd_train(a, replay_cfg, inv("train")).map(Some),
        Command::Eval(a) => cmd_eval(a, replay_cfg, cli.jobs, inv("eval")).map(Some),
        Command::Compare(a) => cmd_compare(a, replay_cfg, cli.jobs, inv("compare")).map(Some),
        Command::Srcc(a) => cmd_srcc(a, replay_cfg, cli.jobs, inv("srcc")).map(Some),
        Command::Export(a) => cmd_export(&a.run, a.out.as_deref()).map(Some),
        Command::TunePd(a) => cmd_tune_pd(a, replay_cfg, cli.jobs, inv("tune-pd")).map(Some),
        Command::Rerun(a) => cmd_rerun(&a.manifest, &a.out, cli.jobs).map(Some),
    }
}

fn cmd_rerun(manifest: &Path, out: &Path, jobs: usize) -> Result<PathBuf> {
    let m = RunManifest::read(manifest)?;
    if m.command == "rerun" || m.command == "export" {
        bail!(dolly_core::Error::Usage(format!("cannot rerun a {:?} manifest", m.command)));
    }
    let mut argv = vec!["dolly".to_string(), "--jobs".into(), jobs.to_string()];
    argv.extend(m.args.iter().cloned());
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let cli = Cli::try_parse_from(&argv).map_err(|e| dolly_core::Error::Usage(e.to_string()))?;
    let replay = Replay { config: m.config };
    dispatch(&cli, Some((&replay, m.args))).map(|d| d.unwrap_or_else(|| out.to_path_buf()))
}

struct CheckpointWriter {
    dir: PathBuf,
}

impl TrainCallbacks for CheckpointWriter {
    fn on_checkpoint(&mut self, episode: usize, agents: &[&Td3Agent]) -> dolly_core::Result<()> {
        let dir = self.dir.join(format!("episode_{episode:06}"));
        fs::create_dir_all(&dir).map_err(|e| dolly_core::Error::io(&dir, e))?;
        for a in agents {
            let path = dir.join(format!("{}.ckpt", a.config().kind.as_str()));
            fs::write(&path, save_agent(a)?).map_err(|e| dolly_core::Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TrainSummary {
    agent: String,
    episodes_run: usize,
    stopped_early: bool,
    best_eval_episode: Option<usize>,
    best_eval_reward: Option<f64>,
    final_eval_reward: Option<f64>,
}

fn cmd_train(a: &crate::TrainArgs, replay: Option<&Replay>, inv: Invocation) -> Result<PathBuf> {
    let mut cfg = resolve_config(&a.common, replay)?;
    if let Some(n) = a.episodes {
        cfg.td3.episodes = n;
    }
    cfg.validate()?;
    let pair = a.agent == "independent-pair";
    let kind = if pair { None } else { Some(a.agent.parse::<AgentKind>()?) };
    let out = resolve_out(a.common.out.as_deref(), &format!("train-{}-seed{}", a.agent, cfg.seed));
    fs::create_dir_all(&out).map_err(|e| dolly_core::Error::io(&out, e))?;

    let mut env = SimEnv::new(cfg.env.clone())?;
    let mut callbacks = CheckpointWriter {
        dir: out.join("checkpoints"),
    };
    let (agents, log, stopped_early, best) = match kind {
        Some(kind) => {
            let o = train(&mut env, kind, &cfg.td3, &cfg.rewards, cfg.seed, &mut callbacks)?;
            (vec![o.agent], o.log, o.stopped_early, o.best_eval)
        }
        None => {
            let o = independent_pair_train(&mut env, &cfg.td3, &cfg.rewards, cfg.seed, &mut callbacks)?;
            (vec![o.throttle, o.steering], o.log, o.stopped_early, o.best_eval)
        }
    };

    write_training_log(create(&out.join("training_log.csv"))?, &log)?;
    for agent in &agents {
        let name = if pair { agent.config().kind.as_str() } else { "agent" };
        write_text(&out.join(format!("{name}.ckpt")), &save_agent(agent)?)?;
    }
    let summary = TrainSummary {
        agent: a.agent.clone(),
        episodes_run: log.len(),
        stopped_early,
        best_eval_episode: best.map(|b| b.0),
        best_eval_reward: best.map(|b| b.1),
        final_eval_reward: log.iter().rev().find_map(|r| r.eval_reward),
    };
    write_text(&out.join("train_summary.toml"), &toml::to_string(&summary)?)?;
    inv.finish(&out, &cfg, vec![cfg.seed])?;
    Ok(out)
}

fn trial_spec(cfg: &RunConfig, t: &TrialArgs, reward: RewardKind, jobs: usize) -> Result<TrialSpec> {
    Ok(TrialSpec {
        env: cfg.env.clone(),
        perturbation: None,
        task: EvalTask::new(reward, cfg.rewards.weights(reward, &cfg.env)?),
        n: t.trials,
        starts: t.starts.parse::<StartScheme>()?,
        base_seed: t.base_seed,
        record_trace: t.traces,
        jobs,
    })
}

/// Loads policies and picks the scoring reward: the flag, else the first
/// trained policy's own reward, else the complex reward.
fn load_policies(specs: &[String], reward: Option<&str>, cfg: &RunConfig) -> Result<(Vec<Box<dyn Policy>>, RewardKind)> {
    let sources = specs.iter().map(|s| load_source(s)).collect::<Result<Vec<_>>>()?;
    let reward = match reward {
        Some(r) => parse_reward(r)?,
        None => sources.iter().find_map(|s| s.native_reward()).unwrap_or(RewardKind::Complex),
    };
    let policies = sources
        .into_iter()
        .map(|s| s.into_policy(cfg, reward, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((policies, reward))
}

fn write_traces(dir: &Path, results: &[TrialResult]) -> Result<()> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|e| dolly_core::Error::io(&traces, e))?;
    for r in results {
        let name = format!("{}_trial_{:04}.csv", r.policy.replace('+', "_"), r.trial);
        write_trajectory_csv(create(&traces.join(name))?, &r.trace)?;
    }
    Ok(())
}

fn cmd_eval(a: &crate::EvalArgs, replay: Option<&Replay>, jobs: usize, inv: Invocation) -> Result<PathBuf> {
    let cfg = resolve_config(&a.common, replay)?;
    let (policies, reward) = load_policies(std::slice::from_ref(&a.policy), a.trials.reward.as_deref(), &cfg)?;
    let spec = trial_spec(&cfg, &a.trials, reward, jobs)?;
    let out = resolve_out(a.common.out.as_deref(), &format!("eval-{}", policies[0].name()));
    fs::create_dir_all(&out).map_err(|e| dolly_core::Error::io(&out, e))?;

    let results = run_trials(policies[0].as_ref(), &spec)?;
    write_trials_csv(create(&out.join("trials.csv"))?, &results)?;
    let summary = summarize(&results)?;
    write_summary_csv(create(&out.join("summary.csv"))?, &[(policies[0].name(), summary)])?;
    if a.trials.traces {
        write_traces(&out, &results)?;
    }
    let seeds = results.iter().map(|r| r.seed).collect();
    inv.finish(&out, &cfg, seeds)?;
    println!(
        "{}: {} trials, mean reward {:.3} (median {:.3}, IQR {:.3})",
        policies[0].name(),
        results.len(),
        summary.cumulative_reward.mean,
        summary.cumulative_reward.median,
        summary.cumulative_reward.iqr
    );
    Ok(out)
}

fn cmd_compare(a: &crate::CompareArgs, replay: Option<&Replay>, jobs: usize, inv: Invocation) -> Result<PathBuf> {
    let cfg = resolve_config(&a.common, replay)?;
    let (policies, reward) = load_policies(&a.policies, a.trials.reward.as_deref(), &cfg)?;
    let spec = trial_spec(&cfg, &a.trials, reward, jobs)?;
    let out = resolve_out(a.common.out.as_deref(), "compare");
    fs::create_dir_all(&out).map_err(|e| dolly_core::Error::io(&out, e))?;

    let refs: Vec<&dyn Policy> = policies.iter().map(|p| p.as_ref()).collect();
    let cmp = compare(&refs, &spec)?;
    write_comparison_csv(create(&out.join("comparison.csv"))?, &cmp)?;
    let all: Vec<TrialResult> = cmp.results.iter().flatten().cloned().collect();
    write_trials_csv(create(&out.join("trials.csv"))?, &all)?;
    if a.trials.traces {
        write_traces(&out, &all)?;
    }
    let table = cmp.to_table();
    write_text(&out.join("comparison.txt"), &table)?;
    inv.finish(&out, &cfg, cmp.results[0].iter().map(|r| r.seed).collect())?;
    print!("{table}");
    Ok(out)
}

fn cmd_srcc(a: &crate::SrccArgs, replay: Option<&Replay>, jobs: usize, inv: Invocation) -> Result<PathBuf> {
    let cfg = resolve_config(&a.common, replay)?;
    let (policies, reward) = load_policies(std::slice::from_ref(&a.policy), a.reward.as_deref(), &cfg)?;
    let estimator: Estimator = a.estimator.parse()?;
    if a.per_position < 2 {
        bail!(dolly_core::Error::Config("at least two runs per start position are needed".into()));
    }
    let out = resolve_out(a.common.out.as_deref(), "srcc");
    fs::create_dir_all(&out).map_err(|e| dolly_core::Error::io(&out, e))?;

    let nominal_spec = TrialSpec {
        env: cfg.env.clone(),
        perturbation: None,
        task: EvalTask::new(reward, cfg.rewards.weights(reward, &cfg.env)?),
        n: 3 * a.per_position,
        starts: StartScheme::PerPosition(a.per_position),
        base_seed: a.base_seed,
        record_trace: false,
        jobs,
    };
    let perturbation = if a.zero_perturbation {
        dolly_core::simenv::PerturbationConfig::none()
    } else {
        cfg.perturbation
    };
    let perturbed_spec = TrialSpec {
        perturbation: Some(perturbation),
        ..nominal_spec.clone()
    };
    let nominal = run_trials(policies[0].as_ref(), &nominal_spec)?;
    let perturbed = run_trials(policies[0].as_ref(), &perturbed_spec)?;
    let report = srcc(&nominal, &perturbed, estimator)?;

    write_trials_csv(create(&out.join("nominal.csv"))?, &nominal)?;
    write_trials_csv(create(&out.join("perturbed.csv"))?, &perturbed)?;
    write_text(&out.join("srcc.toml"), &report.to_toml()?)?;
    report.write_csv(create(&out.join("srcc.csv"))?)?;
    let table = report.to_table();
    write_text(&out.join("srcc.txt"), &table)?;
    inv.finish(&out, &cfg, nominal.iter().map(|r| r.seed).collect())?;
    print!("{table}");
    Ok(out)
}

fn cmd_tune_pd(a: &crate::TunePdArgs, replay: Option<&Replay>, jobs: usize, inv: Invocation) -> Result<PathBuf> {
    let cfg = resolve_config(&a.common, replay)?;
    let reward = parse_reward(&a.reward)?;
    let out = resolve_out(a.common.out.as_deref(), &format!("tune-pd-{}", reward.as_str()));
    fs::create_dir_all(&out).map_err(|e| dolly_core::Error::io(&out, e))?;
    let task = EvalTask::new(reward, cfg.rewards.weights(reward, &cfg.env)?);
    let tuned = tune_pd(cfg.pd, &cfg.env, &task, channels_for(reward), a.trials, a.base_seed, a.rounds, jobs)?;

    #[derive(Serialize)]
    struct GainsFile<'a> {
        pd: &'a dolly_core::baseline::PDGains,
    }
    write_text(&out.join("pd_gains.toml"), &toml::to_string(&GainsFile { pd: &tuned.gains })?)?;
    let mut w = csv::Writer::from_writer(create(&out.join("tune_history.csv"))?);
    w.write_record(["step", "score", "gains"])?;
    for (i, (g, s)) in tuned.history.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string(), format!("{g:?}")])?;
    }
    w.flush()?;
    inv.finish(&out, &cfg, vec![a.base_seed])?;
    println!("tuned mean reward {:.3}: {:?}", tuned.score, tuned.gains);
    Ok(out)
}

const CURVE_WINDOW: usize = 50;

/// Writes the plotting data behind a run directory's figures.
fn cmd_export(run: &Path, out: Option<&Path>) -> Result<PathBuf> {
    if !run.join(MANIFEST_FILE).is_file() {
        bail!(dolly_core::Error::Usage(format!("{} has no {MANIFEST_FILE}", run.display())));
    }
    let m = RunManifest::read(run)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.join("figures"));
    fs::create_dir_all(&out).map_err(|e| dolly_core::Error::io(&out, e))?;
    match m.command.as_str() {
        "train" => export_training_curve(&run.join("training_log.csv"), &out.join("training_curve.csv"))?,
        "eval" | "compare" => {
            let trials = read_trials(&run.join("trials.csv"))?;
            export_box_stats(&trials, &out)?;
        }
        "srcc" => {
            let nominal = read_trials(&run.join("nominal.csv"))?;
            let perturbed = read_trials(&run.join("perturbed.csv"))?;
            let text = fs::read_to_string(run.join("srcc.csv")).context("reading srcc.csv")?;
            write_text(&out.join("srcc.csv"), &text)?;
            export_box_stats(&[nominal, perturbed].concat(), &out)?;
        }
        "tune-pd" => {
            let text = fs::read_to_string(run.join("tune_history.csv")).context("reading tune_history.csv")?;
            write_text(&out.join("tune_history.csv"), &text)?;
        }
        other => bail!(dolly_core::Error::Usage(format!("nothing to export for a {other:?} run"))),
    }
    Ok(out)
}

fn read_trials(path: &Path) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn export_box_stats(trials: &[TrialResult], out: &Path) -> Result<()> {
    let mut names: Vec<String> = Vec::new();
    for t in trials {
        if !names.contains(&t.policy) {
            names.push(t.policy.clone());
        }
    }
    let mut rows = Vec::new();
    for n in names {
        let subset: Vec<TrialResult> = trials.iter().filter(|t| t.policy == n).cloned().collect();
        rows.push((n, summarize(&subset)?));
    }
    write_summary_csv(create(&out.join("box_stats.csv"))?, &rows)?;
    let mut w = csv::Writer::from_writer(create(&out.join("comparison_bars.csv"))?);
    w.write_record(["policy", "mean_reward", "q1", "median", "q3", "min", "max"])?;
    for (name, s) in &rows {
        let c = s.cumulative_reward;
        w.write_record([
            name.clone(),
            c.mean.to_string(),
            c.q1.to_string(),
            c.median.to_string(),
            c.q3.to_string(),
            c.min.to_string(),
            c.max.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Episode-indexed reward curve with a trailing moving average.
fn export_training_curve(log: &Path, out: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(log).map_err(|e| anyhow::anyhow!("{}: {e}", log.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).context(format!("training log lacks {name}"));
    let (ep, rew, eval) = (col("episode")?, col("cumulative_reward")?, col("eval_reward")?);
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["episode", "cumulative_reward", "moving_average", "eval_reward"])?;
    let mut window: Vec<f64> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let reward: f64 = rec[rew].parse().context("cumulative_reward")?;
        window.push(reward);
        if window.len() > CURVE_WINDOW {
            window.remove(0);
        }
        let avg = window.iter().sum::<f64>() / window.len() as f64;
        w.write_record([rec[ep].to_string(), rec[rew].to_string(), avg.to_string(), rec[eval].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
