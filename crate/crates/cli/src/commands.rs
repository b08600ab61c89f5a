use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use misc_core::filter::FilterSettings;
use misc_core::invariance::{build_atlas, CisAtlas, CisConfig, CisError};
use misc_core::world::{
    default_environment, parse_replay, run_session, scripted_user, write_replay, write_trajectory_csv, Environment,
    PolicyKind, SessionMetrics, SimConfig, FACE_NAMES,
};
use thiserror::Error;

use crate::server::{serve, ServerConfig};

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid input files (exit 2).
    #[error("{0}")]
    Input(String),
    /// Atlas built for another environment (exit 3).
    #[error("{0}")]
    Mismatch(String),
    /// Some face could not be certified (exit 4).
    #[error("{0}")]
    Uncertified(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Uncertified(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<CisError> for CliError {
    fn from(e: CisError) -> Self {
        match e {
            CisError::HashMismatch { .. } => CliError::Mismatch(e.to_string()),
            CisError::UncertifiedFaces { .. } | CisError::Uncertified { .. } => CliError::Uncertified(e.to_string()),
            CisError::Io(_) | CisError::Format(_) | CisError::Version { .. } | CisError::Environment(_) => CliError::Input(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "misc", version, about = "Minimal-intervention safety filter: offline sets, headless runs and the live service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Control-invariant set cache.
    #[command(subcommand)]
    Cis(CisCommand),
    /// Headless simulation.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Environment files.
    #[command(subcommand)]
    Env(EnvCommand),
    /// Real-time WebSocket service on `/session`.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CisCommand {
    /// Computes and certifies one set per obstacle face.
    Compute(CisComputeArgs),
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Runs one session and writes its trajectory and metrics.
    Run(SimRunArgs),
}

#[derive(Debug, Subcommand)]
pub enum EnvCommand {
    /// Writes the built-in maze.
    Default {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CisComputeArgs {
    /// Environment JSON; the built-in maze when omitted.
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = CisConfig::default().max_iterations)]
    pub max_iterations: usize,
    /// Contraction factor of the retry after a plain run fails to converge.
    #[arg(long, default_value_t = CisConfig::default().lambda)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Certified set cache; computed in memory when omitted.
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    /// `adversarial`, `random_walk`, `goal_seeker` or `replay:<file>`.
    #[arg(long, default_value = "goal_seeker")]
    pub policy: PolicyKind,
    /// Defaults to on, or to the first recorded tick for replays.
    #[arg(long)]
    pub assist: Option<bool>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV, one row per frame.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSON; next to `--out` when omitted.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Writes the user inputs as a replay file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Control ticks before the run is cut off.
    #[arg(long, default_value_t = SimConfig::default().max_ticks)]
    pub ticks: u64,
    /// Wall-clock budget per solve; unlimited (and reproducible) when omitted.
    #[arg(long)]
    pub budget_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Assist state of new sessions.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub assist: bool,
    /// Directory for session recordings.
    #[arg(long, default_value = "recordings")]
    pub out: PathBuf,
    #[arg(long)]
    pub no_record: bool,
    /// Wall-clock budget per solve; 0 disables it.
    #[arg(long, default_value_t = 20.0)]
    pub budget_ms: f64,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

pub fn load_env(path: Option<&Path>) -> Result<Environment, CliError> {
    match path {
        None => Ok(default_environment()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            Environment::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

fn load_or_build_atlas(path: Option<&Path>, env: &Environment) -> Result<CisAtlas, CliError> {
    match path {
        Some(p) => Ok(CisAtlas::load_for(p, env).map_err(|e| match e {
            CisError::HashMismatch { .. } => CliError::Mismatch(format!("{}: {e}", p.display())),
            other => CliError::from(other),
        })?),
        None => {
            tracing::info!(target: "misc::cli", "no atlas given, computing one");
            Ok(build_atlas(&env.system(), env, &CisConfig::default())?)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cis(CisCommand::Compute(a)) => cis_compute(a),
        Command::Sim(SimCommand::Run(a)) => sim_run(a),
        Command::Env(EnvCommand::Default { out }) => {
            fs::write(&out, default_environment().to_json()).map_err(anyhow::Error::from)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Serve(a) => serve_cmd(a),
    }
}

fn cis_compute(a: CisComputeArgs) -> Result<(), CliError> {
    let env = load_env(a.env.as_deref())?;
    let config = CisConfig { max_iterations: a.max_iterations, lambda: a.lambda };
    let atlas = build_atlas(&env.system(), &env, &config)?;
    for e in &atlas.entries {
        let face = FACE_NAMES.get(e.face).copied().unwrap_or("?");
        let note = if e.empty { "  empty" } else { "" };
        println!(
            "obstacle {} face {:<5} iterations {:>3} rows {:>4} lambda {}{note}",
            e.obstacle,
            face,
            e.iterations,
            e.set.num_rows(),
            e.lambda
        );
    }
    atlas.save(&a.out).map_err(|e| CliError::Other(e.into()))?;
    println!("certified {} entries -> {}", atlas.len(), a.out.display());
    Ok(())
}

fn print_metrics(m: &SessionMetrics) {
    println!("collisions: {}", m.collisions);
    println!("goals: {}", m.goals_reached);
    match m.completion_duration {
        Some(d) => println!("completion_duration: {d}"),
        None => println!("completion_duration: none"),
    }
    println!("control_ticks: {}", m.control_ticks);
    println!("violations: {}", m.violations);
    println!("infeasible: {}", m.infeasible);
    println!("mean_intervention: {}", m.mean_intervention);
    println!("max_intervention: {}", m.max_intervention);
    println!(
        "modes: pass_through {} corrected {} fallback {}",
        m.pass_through_ticks, m.corrected_ticks, m.fallback_ticks
    );
}

fn sim_run(a: SimRunArgs) -> Result<(), CliError> {
    let env = load_env(a.env.as_deref())?;
    let mut user = scripted_user(&a.policy, &env, a.seed).map_err(|e| CliError::Input(e.to_string()))?;
    let assist = match (a.assist, &a.policy) {
        (Some(on), _) => on,
        (None, PolicyKind::Replay(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
            parse_replay(&text).map_err(|e| CliError::Input(e.to_string()))?.first().is_none_or(|r| r.assist)
        }
        (None, _) => true,
    };
    let atlas = if assist || a.atlas.is_some() { Some(load_or_build_atlas(a.atlas.as_deref(), &env)?) } else { None };
    let config = SimConfig {
        max_ticks: a.ticks,
        stop_on_completion: true,
        log_ticks: false,
        record_inputs: a.record.is_some(),
    };
    let filter = FilterSettings { budget_ms: a.budget_ms, ..FilterSettings::default() };
    let result = run_session(&env, atlas.as_ref(), user.as_mut(), assist, config, filter).map_err(anyhow::Error::from)?;

    let file = fs::File::create(&a.out).map_err(anyhow::Error::from)?;
    write_trajectory_csv(&result.frames, file).map_err(anyhow::Error::from)?;
    let metrics_path = a.metrics.unwrap_or_else(|| a.out.with_extension("metrics.json"));
    fs::write(&metrics_path, serde_json::to_string_pretty(&result.metrics).map_err(anyhow::Error::from)?).map_err(anyhow::Error::from)?;
    if let Some(path) = &a.record {
        write_replay(&result.inputs, fs::File::create(path).map_err(anyhow::Error::from)?).map_err(anyhow::Error::from)?;
    }
    print_metrics(&result.metrics);
    println!("trajectory: {}", a.out.display());
    println!("metrics: {}", metrics_path.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    let env = load_env(a.env.as_deref())?;
    let atlas = load_or_build_atlas(a.atlas.as_deref(), &env)?;
    let mut config = ServerConfig::new(env, atlas);
    config.assist = a.assist;
    config.record_dir = (!a.no_record).then_some(a.out);
    config.filter.budget_ms = (a.budget_ms > 0.0).then_some(a.budget_ms);
    config.time_scale = a.speed;
    config.input_timeout = Duration::from_millis(500);
    let rt = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.bind).await?;
        println!("listening on ws://{}/session", listener.local_addr()?);
        tokio::select! {
            r = serve(config, listener) => r,
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })?;
    Ok(())
}
