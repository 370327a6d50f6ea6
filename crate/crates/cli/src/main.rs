use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use retire_cli::artifacts::OutDir;
use retire_cli::{commands, CliError, RunConfig};
use retire_core::simulator::SolutionKind;

#[derive(Parser)]
#[command(name = "retire", version, about = "Solve, simulate and analyze the retirement models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Simulation seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-information model.
    SolveRe,
    /// Solve the inattentive model.
    SolveRi,
    /// Simulate panels from the stored solutions.
    Simulate,
    /// Regression tables, summaries and belief histograms from the panels.
    Analyze,
    /// Check the solvers against brute-force and direct oracles on tiny instances.
    OracleCheck {
        #[arg(long, hide = true, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// Solve, simulate and analyze.
    All,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config", "a config file is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("--workers", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--workers", e.to_string()))?;
    }
    if let Command::OracleCheck { tolerance_scale } = cli.command {
        return commands::oracle_check(tolerance_scale);
    }
    let cfg = load_config(cli)?;
    let mut out = OutDir::open(&cfg)?;
    let result = match cli.command {
        Command::SolveRe => commands::solve(&cfg, &mut out, SolutionKind::Re),
        Command::SolveRi => commands::solve(&cfg, &mut out, SolutionKind::Ri),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Analyze => commands::analyze(&cfg, &mut out),
        Command::All => commands::all(&cfg, &mut out),
        Command::OracleCheck { .. } => unreachable!(),
    };
    out.save()?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
