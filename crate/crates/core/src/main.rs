use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dyadic_lab::cli_io::{self, check, RunError};

#[derive(Parser)]
#[command(
    name = "dyadic-lab",
    version,
    about = "Dyadic shell models: runs, sweeps and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a template over a parameter grid such as `analysis.delta=0.5,1;model.lambda=2,4`.
    Sweep {
        template: PathBuf,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Run the built-in verification suites.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read(path: &PathBuf) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::Io {
        path: path.clone(),
        message: e.to_string(),
        partial: Box::default(),
    })
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let text = read(&config)?;
            let cfg = cli_io::parse_config(&text).map_err(RunError::from)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let outcome = cli_io::run_in(&cfg, &dir)?;
            println!(
                "{} -> {} ({} files, {})",
                config.display(),
                dir.display(),
                outcome.manifest.files.len(),
                outcome.trajectory.termination.name()
            );
            if let Some(r) = &outcome.report {
                if let Some(c) = &r.cascade {
                    println!(
                        "cascade from J = {}: {} resolved levels, all bounds satisfied = {}",
                        c.start_shell,
                        c.resolved_depth(),
                        c.all_satisfied()
                    );
                }
                if let Some(f) = &r.blowup_fit {
                    println!("fitted blow-up time {:.8} (gamma {:.4})", f.t_star, f.gamma);
                }
                for n in &r.notes {
                    println!("note: {n}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            template,
            grid,
            out,
            workers,
        } => {
            let text = read(&template)?;
            let axes = cli_io::parse_grid(&grid).map_err(RunError::from)?;
            let cells = cli_io::sweep(&text, &axes, &out, workers)?;
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            println!(
                "{} cells ({failed} failed), summary in {}",
                cells.len(),
                out.join("sweep_summary.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { seed } => {
            let results = check::run_checks(seed);
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            Ok(if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dyadic-lab: {e}");
            let code = e.downcast_ref::<RunError>().map_or(2, RunError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
