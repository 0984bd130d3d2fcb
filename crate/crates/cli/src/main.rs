use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use growlab::config::apply_flags;
use growlab::experiments::builtin;
use growlab::runner::{execute, exit_code, load_config};
use growlab::{CliError, ExperimentConfig};
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "growlab", version, about = "Random walks on growing graphs: experiments and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; runs land in <out>/<experiment>/<hash>/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Rational arithmetic where supported.
    #[arg(long)]
    exact_arithmetic: bool,
    /// Experiment parameters as `--key value` pairs, e.g. `--N 32 --t-max 1000`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "PARAMS")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check monotonicity, laziness and degrees of a family.
    Validate(Common),
    /// Exact distribution by kernel products.
    Evolve(Common),
    /// Monte Carlo marginals and return statistics.
    Simulate(Common),
    /// Evolving-set identity, martingale and size-biased contraction.
    Evoset(Common),
    /// Isoperimetric profiles of snapshots.
    Isoperimetry(Common),
    /// Heat-kernel upper bounds and transience series.
    Bounds(Common),
    /// Two-start merging distances of the drifting chain.
    Merging(Common),
    /// Fitted lower-bound constant on windows.
    LowerBound(Common),
    /// Stage local times on a frozen nested family.
    FrozenRecurrence(Common),
    /// The full acceptance suite.
    Acceptance(Common),
    /// Run a config file; its `experiment` key selects the experiment.
    Run {
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// List registered experiments.
    List,
}

fn build_config(experiment: Option<&str>, base: Option<&PathBuf>, common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut map = match base {
        Some(path) => match serde_json::to_value(load_config(path)?).map_err(|e| CliError::Validation(e.to_string()))? {
            Value::Object(m) => m,
            _ => Map::new(),
        },
        None => Map::new(),
    };
    if let Some(name) = experiment {
        map.insert("experiment".into(), name.into());
    }
    apply_flags(&mut map, &common.params)?;
    if let Some(seed) = common.seed {
        map.insert("seed".into(), seed.into());
    }
    if let Some(out) = &common.out {
        map.insert("out".into(), out.display().to_string().into());
    }
    if let Some(w) = common.workers {
        map.insert("workers".into(), w.into());
    }
    if common.exact_arithmetic {
        map.insert("exact_arithmetic".into(), true.into());
    }
    ExperimentConfig::from_value(Value::Object(map))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let registry = builtin();
    let (name, base, common) = match &cli.command {
        Command::List => {
            for (name, about) in registry.names() {
                println!("{name:<20} {about}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { file, common } => (None, Some(file), common),
        Command::Validate(c) => (Some("validate"), c.config.as_ref(), c),
        Command::Evolve(c) => (Some("evolve"), c.config.as_ref(), c),
        Command::Simulate(c) => (Some("simulate"), c.config.as_ref(), c),
        Command::Evoset(c) => (Some("evoset"), c.config.as_ref(), c),
        Command::Isoperimetry(c) => (Some("isoperimetry"), c.config.as_ref(), c),
        Command::Bounds(c) => (Some("bounds"), c.config.as_ref(), c),
        Command::Merging(c) => (Some("merging"), c.config.as_ref(), c),
        Command::LowerBound(c) => (Some("lower-bound"), c.config.as_ref(), c),
        Command::FrozenRecurrence(c) => (Some("frozen-recurrence"), c.config.as_ref(), c),
        Command::Acceptance(c) => (Some("acceptance"), c.config.as_ref(), c),
    };
    let code = build_config(name, base, common).and_then(|config| {
        let records = execute(&config, &registry)?;
        for r in &records {
            println!("{}\t{}\t{}", r.status, r.hash, r.dir.display());
        }
        Ok(exit_code(&records))
    });
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
