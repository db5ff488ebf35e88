use clap::{Parser, Subcommand};
use quasiflow_cli::commands::{self, EXIT_CONFIG};
use quasiflow_cli::config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "quasiflow",
    about = "Straighten perturbed constant vector fields on tori and reduce quasi-periodic transport operators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML); may reference a builtin.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `[output].dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel maps (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed override for Monte Carlo sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Straighten a perturbed field at a single parameter point.
    Straighten,
    /// Sweep a parameter box and estimate the excluded measure.
    Sweep,
    /// Reduce a transport operator and evolve initial data.
    Transport,
    /// Solve the forced transport equation.
    Forced,
    /// Run the oracle audits (rotation, conjugacy, tame, two-perturbation).
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Straighten => "straighten",
            Command::Sweep => "sweep",
            Command::Transport => "transport",
            Command::Forced => "forced",
            Command::Verify => "verify",
        }
    }
}

fn main() {
    let cli = Cli::parse();

    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        // Ignore failure: the global pool may already exist under test harnesses.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    // Precedence: --out flag, then QUASIFLOW_OUT, then [output].dir.
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("QUASIFLOW_OUT").map(PathBuf::from))
        .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    commands::run_command(cli.command.name(), &cfg, &out)
}
