use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fvqsd_cli::run::{self, RunError};
use fvqsd_cli::Verdict;

#[derive(Parser)]
#[command(name = "fvqsd", version, about = "Fleming-Viot QSD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        config: PathBuf,
        /// `--key value` or `--key=value` overrides; `--self-test` adds the
        /// discretization checks to the verdicts.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Parse the config and check the potential against the assumptions.
    Validate {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Mesh-doubling and dt-halving checks for the config.
    SelfTest {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} {} value={} threshold={} {}", v.criterion_id, v.value, v.threshold, v.detail);
    }
}

fn dispatch(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Run { config, mut overrides } => {
            let before = overrides.len();
            overrides.retain(|a| a != "--self-test");
            let with_self_test = overrides.len() != before;
            let cfg = run::load_config(&config, &overrides)?;
            let report = run::run(&cfg, with_self_test)?;
            print_verdicts(&report.outcome.verdicts);
            println!("wrote {} files to {}", report.files.len(), report.output_dir.display());
            Ok(report.exit_code())
        }
        Command::Validate { config, overrides } => {
            let cfg = run::load_config(&config, &overrides)?;
            let report = run::validate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(RunError::from)?);
            Ok(0)
        }
        Command::SelfTest { config, overrides } => {
            let cfg = run::load_config(&config, &overrides)?;
            let verdicts = run::self_test(&cfg)?;
            print_verdicts(&verdicts);
            Ok(if verdicts.iter().all(|v| v.pass) { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let kind = if e.exit_code() == 2 { "configuration error" } else { "runtime error" };
            eprintln!("fvqsd: {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
