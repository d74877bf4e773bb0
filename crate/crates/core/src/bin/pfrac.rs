//! Command-line front end: `pfrac run <config.toml>` executes a staggered
//! evolution and writes trajectory.csv, state_####.vtk and report.txt;
//! `pfrac verify <suite>` runs a self-contained property suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pfrac::evolution::ParamMode;

#[derive(Parser)]
#[command(
    name = "pfrac",
    about = "Staggered phase-field fracture evolutions on P1 triangles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file end to end.
    Run {
        /// TOML configuration file.
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the parametrization mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ParamMode>,
    },
    /// Run a verification suite: gradcheck, oracle, flows, ledger, norms.
    Verify {
        suite: String,
        /// Seed of the randomized property suites.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_mode(s: &str) -> Result<ParamMode, String> {
    match s {
        "chord" => Ok(ParamMode::Chord),
        "flow" => Ok(ParamMode::Flow),
        "energy-norm-chord" => Ok(ParamMode::EnergyNormChord),
        other => Err(format!(
            "unknown mode \"{other}\"; expected chord, flow or energy-norm-chord"
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            output_dir,
            mode,
        } => match pfrac::run::run_file(&config, output_dir.as_deref(), mode) {
            Ok(outcome) => {
                for msg in &outcome.messages {
                    eprintln!("{msg}");
                }
                println!(
                    "S_k = {:.6}, {} trajectory rows",
                    outcome.total_length, outcome.csv_rows
                );
                ExitCode::from(outcome.exit_code as u8)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Verify { suite, seed } => match pfrac::verify::suite(&suite, seed) {
            Ok(checks) => {
                let mut all_ok = true;
                for c in &checks {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!("[{tag}] {} — {}", c.name, c.measured);
                    all_ok &= c.passed;
                }
                if all_ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
