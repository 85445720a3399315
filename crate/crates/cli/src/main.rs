//! `lapmc`: command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 when the
//! solver fails numerically. `LAPMC_THREADS` sets the worker-thread count.

mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use lapmc::ingest::{write_atomic, LabelConvention};

use args::{Cli, Command};
use commands::Globals;
use error::{CliError, CliResult};
use manifest::RunLog;

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("LAPMC_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::usage(format!(
            "LAPMC_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot start {threads} worker threads: {e}")))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn default_manifest(command: &Command) -> PathBuf {
    match command {
        Command::Synth(a) => a.out.join("synth.manifest"),
        Command::Mask(a) => sibling(&a.output, ".manifest"),
        Command::Prepare(a) => a.out.join("prepare.manifest"),
        Command::Cv(a) => sibling(&a.output, ".manifest"),
        Command::Train(a) => sibling(&a.output, ".manifest"),
        Command::Evaluate(a) => sibling(&a.report, ".manifest"),
        Command::Pipeline(a) => a.out.join("pipeline.manifest"),
    }
}

fn run(argv: Vec<OsString>) -> CliResult<()> {
    let mut root = Cli::command();
    // propagates global flags so manifests list them per subcommand
    root.build();
    let (argv, from_config, config_file) = match config::config_path(&argv) {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path).map_err(|e| lapmc::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let entries = config::parse_config(&path, &text)?;
            let (argv, keys) = config::expand(argv, &root, &path, &entries)?;
            (argv, keys, Some(path))
        }
        None => (argv, Default::default(), None),
    };
    let matches = root.clone().try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    init_threads()?;

    let globals = Globals {
        format: cli.format,
        convention: if cli.signed_labels {
            LabelConvention::Signed
        } else {
            LabelConvention::Binary
        },
    };
    let mut log = RunLog::default();
    match &cli.command {
        Command::Synth(a) => commands::synth(a, &mut log)?,
        Command::Mask(a) => commands::mask(a, &globals, &mut log)?,
        Command::Prepare(a) => commands::prepare(a, &globals, &mut log)?,
        Command::Cv(a) => commands::cv(a, &globals, &mut log)?,
        Command::Train(a) => commands::train(a, &globals, &mut log)?,
        Command::Evaluate(a) => commands::evaluate(a, &globals, &mut log)?,
        Command::Pipeline(a) => commands::run_pipeline(a, &globals, &mut log)?,
    }

    let name = cli.command.name();
    let sub = root
        .find_subcommand(name)
        .expect("parsed subcommand exists");
    let sub_matches = matches
        .subcommand_matches(name)
        .expect("parsed subcommand matched");
    let text = manifest::render(sub, sub_matches, &from_config, config_file.as_deref(), &log)?;
    let path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| default_manifest(&cli.command));
    write_atomic(&path, text.as_bytes())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            // help and version go to stdout
            let _ = e.print();
            CliError::Clap(e).exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
