//! `oss-survival` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oss_survival::config::{RunConfig, OUTPUT_DIR_ENV};
use oss_survival::synth::{self, BundleSpec};
use oss_survival::{RunError, Stage};

#[derive(Parser)]
#[command(name = "oss-survival", version, about = "Survival analysis of open-source project lifetimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampler seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the censored cohort from the revision logs.
    Cohort(RunArgs),
    /// Kaplan-Meier curves and log-rank tests per attribute.
    Km(RunArgs),
    /// Cox proportional-hazards fit.
    Cox(RunArgs),
    /// Bayesian exponential survival model.
    Bayes(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// Write a synthetic input bundle and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = BundleSpec::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = BundleSpec::default().projects)]
        projects: usize,
    },
    /// Print the effective configuration (all defaults filled in).
    PrintConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn execute(stage: Stage, args: RunArgs) -> Result<(), RunError> {
    let mut config = RunConfig::load(&args.config).map_err(|e| match e {
        oss_survival::config::ConfigError::Read { .. } => RunError::Input(e.to_string()),
        other => RunError::Config(other.to_string()),
    })?;
    let env_out = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    config.apply_overrides(env_out, args.out, args.seed);
    let outcome = oss_survival::run(stage, &config)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for path in &outcome.artifacts {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cohort(a) => execute(Stage::Cohort, a),
        Command::Km(a) => execute(Stage::Km, a),
        Command::Cox(a) => execute(Stage::Cox, a),
        Command::Bayes(a) => execute(Stage::Bayes, a),
        Command::All(a) => execute(Stage::All, a),
        Command::Synth { out, seed, projects } => write_synthetic(out, seed, projects),
        Command::PrintConfig { config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p).map_err(|e| RunError::Config(e.to_string())),
                None => Ok(RunConfig::default()),
            };
            cfg.map(|c| print!("{}", c.to_toml_string()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_synthetic(out: PathBuf, seed: u64, projects: usize) -> Result<(), RunError> {
    let spec = BundleSpec {
        seed,
        projects,
        ..BundleSpec::default()
    };
    let config = RunConfig::default();
    let bundle = synth::synthetic_bundle(&spec, &config.study_window());
    synth::write_bundle(&bundle, &out).map_err(|e| RunError::Output(e.to_string()))?;
    std::fs::write(out.join("config.toml"), synth::bundle_config_toml())
        .map_err(|e| RunError::Output(e.to_string()))?;
    Ok(())
}
