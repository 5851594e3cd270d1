mod commands;
mod manifest;
mod policies;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dolly_core::config::Profile;

/// Train, evaluate and compare dolly-in shot controllers.
#[derive(Debug, Parser)]
#[command(name = "dolly", version)]
pub struct Cli {
    /// Upper bound on worker threads for trial fans.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write its log and checkpoints.
    Train(TrainArgs),
    /// Run deterministic trials of one policy.
    Eval(EvalArgs),
    /// Evaluate several policies on the same trials.
    Compare(CompareArgs),
    /// Paired nominal/perturbed study per start position.
    Srcc(SrccArgs),
    /// Write plotting data for an existing run directory.
    Export(ExportArgs),
    /// Coordinate search over the PD gains.
    TunePd(TunePdArgs),
    /// Repeat the run recorded in a manifest into a new directory.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value = "desk")]
    pub profile: Profile,

    /// TOML file overriding profile values.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory; relative paths resolve against $DOLLY_OUTPUT_ROOT.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// throttle, steering, combined, complex or independent-pair.
    #[arg(long)]
    pub agent: String,

    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrialArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// mixed, per-position-<k>, left, right or centre.
    #[arg(long, default_value = "mixed")]
    pub starts: String,

    #[arg(long, default_value_t = 1_000_000)]
    pub base_seed: u64,

    /// Reward to score with; defaults to the first trained policy's reward,
    /// or the complex reward.
    #[arg(long)]
    pub reward: Option<String>,

    /// Also write one trajectory CSV per trial.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// pd, zero, random, a checkpoint file or a training run directory.
    #[arg(long)]
    pub policy: String,

    #[command(flatten)]
    pub trials: TrialArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Policies as accepted by `eval --policy`; repeat the flag.
    #[arg(long = "policy", required = true)]
    pub policies: Vec<String>,

    #[command(flatten)]
    pub trials: TrialArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SrccArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long)]
    pub policy: String,

    /// Runs per start position.
    #[arg(long, default_value_t = 10)]
    pub per_position: usize,

    #[arg(long, default_value_t = 2_000_000)]
    pub base_seed: u64,

    #[arg(long)]
    pub reward: Option<String>,

    /// Use the clean simulator for the perturbed leg as well.
    #[arg(long)]
    pub zero_perturbation: bool,

    /// pearson or spearman.
    #[arg(long, default_value = "pearson")]
    pub estimator: String,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Run directory containing a manifest.
    #[arg(long)]
    pub run: PathBuf,

    /// Defaults to `<run>/figures`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TunePdArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value = "complex")]
    pub reward: String,

    #[arg(long, default_value_t = 30)]
    pub trials: usize,

    #[arg(long, default_value_t = 6)]
    pub rounds: usize,

    #[arg(long, default_value_t = 500_000)]
    pub base_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,

    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli, None) {
        Ok(dir) => {
            if let Some(dir) = dir {
                println!("{}", dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
