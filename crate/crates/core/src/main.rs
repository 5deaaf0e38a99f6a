use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use ctoqw::config::{parse_config, ExperimentKind};
use ctoqw::harness::{run_experiment, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "ctoqw", version, about = "Continuous-time open quantum walks on Z^d")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed (overrides `root_seed`).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads, 0 for automatic. Affects speed only.
    #[arg(long, value_name = "N", default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model and report stationary state and irreducibility.
    Validate(Common),
    /// Integrate the master equation.
    Master(Common),
    /// Sample an ensemble of quantum trajectories.
    Sample(Common),
    /// Drift, Poisson solutions and CLT covariance.
    Clt(Common),
    /// Deformed spectral abscissa, rate function and empirical decay rates.
    Ldp(Common),
    /// Regenerate the data of a built-in example.
    ReproduceExample {
        /// Example index (1, 2 or 3).
        index: usize,
        /// Only run this experiment kind.
        #[arg(long, value_name = "KIND")]
        target: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: Option<&PathBuf>) -> anyhow::Result<Map<String, Value>> {
    let Some(path) = path else { return Ok(Map::new()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => bail!("{}: configuration must be a JSON object", path.display()),
        Err(e) => bail!("{}: malformed JSON: {e}", path.display()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (kind, common, extra) = match cli.command {
        Command::Validate(c) => (ExperimentKind::Validate, c, None),
        Command::Master(c) => (ExperimentKind::Master, c, None),
        Command::Sample(c) => (ExperimentKind::Sample, c, None),
        Command::Clt(c) => (ExperimentKind::Clt, c, None),
        Command::Ldp(c) => (ExperimentKind::Ldp, c, None),
        Command::ReproduceExample { index, target, common } => {
            (ExperimentKind::ReproduceExample, common, Some((index, target)))
        }
    };
    if extra.is_none() && common.config.is_none() {
        bail!("{kind} needs --config PATH");
    }
    let mut map = load(common.config.as_ref())?;
    match map.get("kind").and_then(Value::as_str) {
        Some(k) if k != kind.name() => bail!("configuration is for kind {k:?}, not {kind}"),
        _ => {
            map.insert("kind".into(), Value::from(kind.name()));
        }
    }
    if let Some((index, target)) = extra {
        map.insert("example".into(), Value::from(index));
        if let Some(t) = target {
            map.insert("target".into(), Value::from(t));
        }
    }
    let cfg = parse_config(&Value::Object(map).to_string())?;
    let opts = RunOptions { out_dir: common.out, seed: common.seed, threads: common.threads };
    let manifest = run_experiment(&cfg, &opts).map_err(|e| match e {
        HarnessError::Config(c) => anyhow::Error::new(c),
        other => anyhow::anyhow!("{kind} run failed: {other}"),
    })?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, o.file);
    }
    log::info!("finished in {:.3} s", manifest.wall_clock_seconds);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
