use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowdrift_cli::config::{builtin, load_config, parse_eps_list};
use slowdrift_cli::{emit_summary, run_experiment, CliError, PipelineKind, Result, RunArtifacts, Task};

/// Experiments on slow drift in slow-fast Hamiltonian systems.
///
/// Exit status: 0 when every check passes, 1 when a check fails,
/// 2 on a configuration error, 3 on a runtime error.
#[derive(Parser)]
#[command(name = "slowdrift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML or JSON experiment configuration. Defaults to the shipped scenario
    /// of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to `out` from the configuration, then to
    /// `runs/<task>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated eps values overriding the configuration.
    #[arg(long, global = true, allow_hyphen_values = true)]
    eps: Option<String>,
    /// Seed overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic orbits of the frozen system and their Floquet multipliers.
    Orbit {
        #[command(subcommand)]
        action: OrbitCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Action map over the slow domain and the gradient identity.
    Action {
        #[command(subcommand)]
        action: ActionCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Slow flow of one action against the full system.
    Slow {
        #[command(subcommand)]
        action: SlowCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Accessible paths along level lines of two actions.
    Path {
        #[command(subcommand)]
        action: PathCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Orbits, mixing bounds and invariant surfaces of the horseshoe.
    Horseshoe {
        #[command(subcommand)]
        action: HorseshoeCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Slow drift along one symbol code.
    Drift {
        #[command(subcommand)]
        action: DriftCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Shadowing of an accessible path by the drift, with eps scaling.
    Theorem1 {
        #[command(flatten)]
        common: Common,
    },
    /// The pipeline named by `pipeline` in the configuration.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Prints the check table of a finished run.
    Summary {
        /// Output directory of the run.
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum OrbitCmd {
    Find,
}
#[derive(Subcommand)]
enum ActionCmd {
    Map,
}
#[derive(Subcommand)]
enum SlowCmd {
    Flow,
}
#[derive(Subcommand)]
enum PathCmd {
    Plan,
}
#[derive(Subcommand)]
enum HorseshoeCmd {
    Verify,
}
#[derive(Subcommand)]
enum DriftCmd {
    Run,
}

/// The task and its shipped scenario, or `None` when the task comes from the
/// configuration.
fn resolve(command: Command) -> std::result::Result<(Option<(Task, &'static str)>, Common), PathBuf> {
    use PipelineKind::*;
    Ok(match command {
        Command::Orbit { common, .. } => (Some((Task::Pipeline(Floquet), "floquet")), common),
        Command::Action { common, .. } => (Some((Task::Pipeline(ActionIdentity), "action_identity")), common),
        Command::Slow { common, .. } => (Some((Task::Pipeline(LemmaStab), "lemma_stab")), common),
        Command::Path { common, .. } => (Some((Task::PathPlan, "path_plan")), common),
        Command::Horseshoe { common, .. } => (Some((Task::Pipeline(HorseshoeLemmas), "horseshoe_lemmas")), common),
        Command::Drift { common, .. } => (Some((Task::DriftRun, "drift")), common),
        Command::Theorem1 { common } => (Some((Task::Pipeline(Theorem1), "theorem1")), common),
        Command::Run { common } => (None, common),
        Command::Summary { dir } => return Err(dir),
    })
}

fn execute(task: Option<(Task, &'static str)>, common: Common) -> Result<bool> {
    let mut loaded = match (&common.config, task) {
        (Some(path), _) => load_config(path)?,
        (None, Some((_, name))) => builtin(name)?,
        (None, None) => return Err(CliError::Config("`run` needs --config".into())),
    };
    if let Some(eps) = &common.eps {
        loaded.config = loaded.config.with_eps(parse_eps_list(eps)?)?;
    }
    if let Some(seed) = common.seed {
        loaded.config.seed = seed;
    }
    let task = match task {
        Some((t, _)) => t,
        None => Task::Pipeline(
            loaded.config.pipeline.ok_or_else(|| CliError::Config("the configuration names no pipeline".into()))?,
        ),
    };
    let out =
        common.out.clone().or_else(|| loaded.config.out.clone()).unwrap_or_else(|| Path::new("runs").join(task.name()));
    let run = run_experiment(&loaded, task, &out)?;
    let pass = emit_summary(&run)?;
    eprintln!("artifacts written to {}", out.display());
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match resolve(cli.command) {
        Ok((task, common)) => execute(task, common),
        Err(dir) => RunArtifacts::load(&dir).and_then(|run| emit_summary(&run)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
