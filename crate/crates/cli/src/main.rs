use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qmdp_cli::{init_threads, parse_config, run_command, CliError, Command};

/// Static VaR solver and learner for tabular MDPs.
#[derive(Parser, Debug)]
#[command(name = "qmdp", version)]
struct Args {
    /// solve | train | eval | oracle | gap
    command: String,
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides such as `--domain cliffwalk --J 256 --domain.slip 0.1`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn run(args: Args) -> Result<(), CliError> {
    init_threads(std::env::var("QMDP_THREADS").ok().as_deref())?;
    let cmd: Command = args.command.parse()?;
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| {
            CliError::Core(qmdp::Error::Io { path: p.display().to_string(), message: e.to_string() })
        })?),
        None => None,
    };
    let cfg = parse_config(&args.overrides, text.as_deref())?;
    for path in run_command(cmd, &cfg)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
