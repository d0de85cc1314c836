use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use degvisc_cli::commands::{
    cmd_mms, cmd_oracle_compare, cmd_run, cmd_sweep, cmd_validate, RunStatus,
};
use degvisc_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "degvisc",
    version,
    about = "Degenerate-viscosity Navier-Stokes solver and verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.directory` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check parameters and initial data, print constraint margins.
    Validate(Common),
    /// Run the continuation pipeline and diagnostics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write final-state snapshots.
        #[arg(long)]
        snapshots: bool,
    },
    /// Run every point of the `[sweep]` axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        snapshots: bool,
    },
    /// Convergence orders on manufactured solutions.
    Mms(Common),
    /// Compare against the primitive-variable solver.
    OracleCompare(Common),
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.directory.clone());
    Ok((cfg, out))
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Validate(c) => {
            let (cfg, _) = load(&c)?;
            cmd_validate(&cfg, &mut stdout)?;
            Ok(0)
        }
        Command::Run { common, snapshots } => {
            let (cfg, out) = load(&common)?;
            let s = cmd_run(&cfg, &out, snapshots)?;
            let t_valid = s.t_valid.map_or("-".to_string(), |t| format!("{t}"));
            println!(
                "status {:?}, t_valid {t_valid}, bundle {}",
                s.status,
                out.display()
            );
            if s.status == RunStatus::ValidityLost {
                eprintln!("warning: validity guard stopped the solve at t = {t_valid}");
            }
            Ok(0)
        }
        Command::Sweep {
            common,
            workers,
            snapshots,
        } => {
            let (cfg, out) = load(&common)?;
            let r = cmd_sweep(&cfg, &out, workers, snapshots)?;
            println!("{} rows, bundle {}", r.rows.len(), out.display());
            if r.warnings() > 0 {
                eprintln!(
                    "warning: {} rows rejected, {} rows failed",
                    r.rejected, r.failed
                );
            }
            Ok(0)
        }
        Command::Mms(c) => {
            let (cfg, out) = load(&c)?;
            cmd_mms(&cfg, &out, &mut stdout)?;
            Ok(0)
        }
        Command::OracleCompare(c) => {
            let (cfg, out) = load(&c)?;
            cmd_oracle_compare(&cfg, &out, &mut stdout)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli).context("degvisc") {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            let code = e.downcast_ref::<CliError>().map_or(2, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
