use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consensus_admm::experiments::{
    cmd_optimal_rho, cmd_rate, cmd_run, cmd_sweep, gen_topology, write_sweep_csv, ExperimentConfig,
    ExperimentError, TopologyDocument,
};

#[derive(Parser)]
#[command(
    name = "cadmm",
    version,
    about = "Consensus ADMM simulation and exact rate analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate α, kernel dimension and tightness at the configured ρ.
    Rate(Common),
    /// α over a ρ grid, as CSV.
    Sweep(Common),
    /// Simulate ADMM and fit the empirical rate.
    Run(Common),
    /// Minimize α over ρ.
    OptimalRho(Common),
    /// Materialize the configured topology as JSON.
    GenTopology(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides the config's output paths.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.apply_seed(seed);
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let io_err = |e: io::Error| ExperimentError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match cli.command {
        Command::Rate(c) => {
            let cfg = c.load()?;
            cmd_rate(&cfg, c.out.as_deref())?
                .print(&mut out)
                .map_err(io_err)?;
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let rows = cmd_sweep(&cfg, c.out.as_deref())?;
            if c.out.is_none() && cfg.outputs.csv.is_none() {
                write_sweep_csv(&mut out, &rows)?;
            } else {
                writeln!(out, "rows={}", rows.len()).map_err(io_err)?;
            }
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            let (_, summary) = cmd_run(&cfg, c.out.as_deref())?;
            summary.print(&mut out).map_err(io_err)?;
        }
        Command::OptimalRho(c) => {
            let cfg = c.load()?;
            cmd_optimal_rho(&cfg, c.out.as_deref())?
                .print(&mut out)
                .map_err(io_err)?;
        }
        Command::GenTopology(c) => {
            let cfg = c.load()?;
            let doc = gen_topology(&cfg, c.out.as_deref())?;
            if c.out.is_none() {
                writeln!(out, "{}", serde_json::to_string_pretty(&doc)?).map_err(io_err)?;
            } else if let TopologyDocument::Rgg(s) = &doc {
                writeln!(out, "seed={} edges={}", s.seed, s.edges.len()).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
