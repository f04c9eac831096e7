use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reds::eval::{MethodSpec, MIN_ORACLE_SAMPLES};
use reds::experiment::{self, ErrorRecord, ExperimentConfig};
use reds::{RedsError, Result};

#[derive(Parser)]
#[command(name = "red", version, about = "Constrained latent traversal experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Set a scalar config field, e.g. `traversal.step=0.5`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Traverse every seed with the configured method.
    Run(Common),
    /// Run several methods on the same seeds and compare them.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', default_value = "reds-lin,reds-proj,random,max-dx,min-dy")]
        methods: Vec<String>,
    },
    /// Check the top direction at each seed against random sampling.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Render one trajectory as PGM frames plus a strip.
    Strip {
        #[command(flatten)]
        common: Common,
        /// `SEED:PATH` or a flat index.
        #[arg(long)]
        trajectory: String,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let config = ExperimentConfig::load(&common.config, &common.overrides)?;
    let out = match (&common.out, &config.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => Path::new(p).to_path_buf(),
        (None, None) => return Err(RedsError::InvalidConfig("no --out given and no output_dir in config".into())),
    };
    Ok((config, out))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(common) => {
            let (config, out) = load(&common)?;
            experiment::with_workers(common.workers, || experiment::run(&config, &out, "run"))??;
        }
        Command::Compare { common, methods } => {
            let (config, out) = load(&common)?;
            let methods = methods.iter().map(|m| m.parse()).collect::<Result<Vec<MethodSpec>>>()?;
            experiment::with_workers(common.workers, || experiment::compare(&config, &methods, &out, "compare"))??;
        }
        Command::Oracle { common, samples } => {
            if samples < MIN_ORACLE_SAMPLES {
                return Err(RedsError::InvalidConfig(format!("--samples must be at least {MIN_ORACLE_SAMPLES}")));
            }
            let (config, out) = load(&common)?;
            let (_, results) = experiment::with_workers(common.workers, || experiment::oracle(&config, samples, &out, "oracle"))??;
            let worst = results.iter().filter_map(|r| r.report).map(|r| r.relative_gap).fold(f64::NEG_INFINITY, f64::max);
            log::info!("oracle: worst relative gap {worst:e}");
        }
        Command::Strip { common, trajectory } => {
            let (config, out) = load(&common)?;
            experiment::with_workers(common.workers, || experiment::strip(&config, &trajectory, &out, "strip"))??;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RED_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord::from_error(&e);
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            ExitCode::from(record.exit_code as u8)
        }
    }
}
