use anyhow::{anyhow, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use symflow_cli::config::ExperimentConfig;
use symflow_cli::presets::{preset, PRESET_NAMES};
use symflow_cli::runner::run_experiment;

/// Gradient-flow tensor decomposition experiments.
#[derive(Debug, Parser)]
#[command(name = "symflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from a preset or a JSON config file.
    Run(RunArgs),
    /// List the shipped presets.
    Presets,
}

#[derive(Debug, Args)]
#[command(group = ArgGroup::new("source").required(true).multiple(false))]
struct RunArgs {
    /// Path to a JSON experiment config.
    #[arg(long, group = "source")]
    config: Option<PathBuf>,
    /// Name of a shipped preset.
    #[arg(long, group = "source")]
    preset: Option<String>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    if let Some(name) = &args.preset {
        let cfg = preset(name).ok_or_else(|| {
            anyhow!(
                "unknown preset {name:?}; available presets: {}",
                PRESET_NAMES.join(", ")
            )
        })?;
        return Ok((cfg, PathBuf::from(".")));
    }
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("one of --config or --preset is required"))?;
    let cfg = ExperimentConfig::from_file(path)?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    Ok((cfg, base))
}

fn run(args: &RunArgs) -> Result<()> {
    let (mut cfg, base_dir) = load_config(args)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let summary = run_experiment(&cfg, &args.out, &base_dir)
        .with_context(|| format!("running the {} experiment", cfg.mode.name()))?;
    println!(
        "wrote {} seed(s) to {} (mode: {})",
        summary.seeds.len(),
        args.out.display(),
        cfg.mode.name()
    );
    println!("summary: {}", args.out.join("summary.json").display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
