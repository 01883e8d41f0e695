//! `mzlab`: config-driven Marcinkiewicz–Zygmund experiments.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Overrides, RunError};
use config::ExperimentConfig;
use report::{config_hash, Emitter};

#[derive(Parser)]
#[command(name = "mzlab", version, about = "MZ inequalities and positive quadrature on compact manifolds")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accept partition scales above 1/81.
    #[arg(long, global = true)]
    relax_d: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "MZLAB_THREADS")]
    threads: Option<usize>,
    /// Replace the config seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Support points, separated subset, mesh norm and separation.
    Points,
    /// Build and audit the MZ partition at scale `d`.
    Partition,
    /// MZ constants for each level and exponent.
    Mz,
    /// Positive quadrature rules for each level.
    Quad,
    /// Localization and heat-kernel probes.
    Kernel,
    /// Run the full acceptance battery.
    VerifyAll,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Points => "points",
            Command::Partition => "partition",
            Command::Mz => "mz",
            Command::Quad => "quad",
            Command::Kernel => "kernel",
            Command::VerifyAll => "verify-all",
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, RunError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = ExperimentConfig::parse(&text, base)?;
    if let Some(s) = cli.seed_override {
        cfg.seed = Some(s);
    }
    if cli.relax_d {
        cfg.partition.relax_d = true;
    }
    Ok(Some(cfg))
}

fn run(cli: &Cli) -> Result<(), RunError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(cli)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.out.as_ref().map(|o| c.base_dir.join(o))))
        .unwrap_or_else(|| PathBuf::from("mzlab-out"));
    let hash = match &cfg {
        Some(c) => config_hash(c),
        None => config_hash(&()),
    };
    let mut em = Emitter::new(&out, cli.command.name(), hash)?;
    let ov = Overrides { relax_d: cli.relax_d };
    let need = || cfg.as_ref().ok_or_else(|| RunError::Usage(format!("`{}` needs --config", cli.command.name())));
    let result = match cli.command {
        Command::Points => commands::points(need()?, &mut em),
        Command::Partition => commands::partition(need()?, &mut em, ov),
        Command::Mz => commands::mz(need()?, &mut em, ov),
        Command::Quad => commands::quad(need()?, &mut em, ov),
        Command::Kernel => commands::kernel(need()?, &mut em),
        Command::VerifyAll => commands::verify_all(&mut em),
    };
    for p in em.written() {
        eprintln!("wrote {}", p.display());
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mzlab: {e}");
            match e {
                RunError::Usage(_) => ExitCode::from(1),
                RunError::Assertion(_) => ExitCode::from(2),
            }
        }
    }
}
