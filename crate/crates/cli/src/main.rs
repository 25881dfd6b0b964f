use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crashdrl_cli::{load_config, run, CliError, Command};

#[derive(Parser)]
#[command(name = "crashdrl", version, about = "Crash impact estimation with doubly robust learners")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Build the panel and validation pool from raw tables.
    Ingest,
    /// Collinearity screen and CSVI variable selection.
    Select,
    /// Effects over the scenario grid.
    Estimate,
    /// Score individual effects against matched or planted effects.
    Validate,
    /// Error at each CSVI threshold.
    Sweep,
    /// Generate synthetic data.
    Synth,
    /// Every stage in order.
    Pipeline,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Select => Command::Select,
            Cmd::Estimate => Command::Estimate,
            Cmd::Validate => Command::Validate,
            Cmd::Sweep => Command::Sweep,
            Cmd::Synth => Command::Synth,
            Cmd::Pipeline => Command::Pipeline,
        }
    }
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let path = args.config.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = load_config(&path, args.seed, args.out)?;
    for m in run(args.cmd.into(), &cfg)? {
        let total = m.timings.last().map(|t| t.seconds).unwrap_or_default();
        eprintln!("{}: {} outputs in {total:.1}s", m.command, m.outputs.len());
        for n in &m.notes {
            eprintln!("  note: {n}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
