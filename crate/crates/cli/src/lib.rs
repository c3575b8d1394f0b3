//! Command-line front end: argument handling, output directories and the
//! subcommands built on `ucbs-core`.

pub mod args;
pub mod commands;
pub mod error;
mod html;
pub mod inputs;
pub mod run;

use clap::Parser;

use args::{Cli, Command};
pub use error::CliError;
use run::OutputDir;

fn thread_pool() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("UCBS_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::usage(format!("UCBS_THREADS must be a positive integer, got {v:?}")))?;
        // Fails only if a pool already exists, e.g. when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn seed_of(cmd: &Command) -> Option<u64> {
    match cmd {
        Command::Synth(a) => Some(a.seed),
        Command::BuildData(a) => Some(a.seed),
        Command::Train(a) => Some(a.seed),
        Command::ExplainGlobal(a) => Some(a.seed),
        Command::Evaluate(a) => Some(a.seed),
        Command::ExplainLocal(_) | Command::Rank(_) | Command::Report(_) => None,
    }
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    let to_value = |v: Result<serde_json::Value, serde_json::Error>| v.map_err(ucbs_core::Error::from);
    let (out_path, params) = match cmd {
        Command::Synth(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::BuildData(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::Train(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::ExplainLocal(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::ExplainGlobal(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::Evaluate(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::Rank(a) => (&a.out, to_value(serde_json::to_value(a))?),
        Command::Report(a) => (&a.out, to_value(serde_json::to_value(a))?),
    };
    let mut out = OutputDir::open(out_path)?;
    match cmd {
        Command::Synth(a) => commands::synth(a, &mut out)?,
        Command::BuildData(a) => commands::build_data(a, &mut out)?,
        Command::Train(a) => commands::train(a, &mut out)?,
        Command::ExplainLocal(a) => commands::explain_local(a, &mut out)?,
        Command::ExplainGlobal(a) => commands::explain_global(a, &mut out)?,
        Command::Evaluate(a) => commands::evaluate(a, &mut out)?,
        Command::Rank(a) => commands::rank(a, &mut out)?,
        Command::Report(a) => commands::report(a, &mut out)?,
    }
    out.finish(cmd.name(), &params, seed_of(cmd))
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_line());
            return err.exit_code();
        }
    };
    let result = thread_pool().and_then(|_| execute(&cli.command));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}
