//! Run manifests: the resolved configuration of a run, where every value came
//! from, and checksums of the files read and written. No timestamps, so
//! repeated runs produce identical manifests.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

/// Files and derived settings reported by a command.
#[derive(Debug, Default, Clone)]
pub struct RunLog {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Settings resolved after parsing (e.g. defaults that depend on data).
    pub resolved: Vec<(String, String)>,
}

impl RunLog {
    pub fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    pub fn output(&mut self, p: &Path) {
        if !self.outputs.iter().any(|q| q == p) {
            self.outputs.push(p.to_path_buf());
        }
    }

    pub fn resolve(&mut self, key: &str, value: impl ToString) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    pub fn merge(&mut self, other: RunLog, prefix: &str) {
        for p in other.inputs {
            // files produced earlier in the same run are not inputs
            if !self.outputs.contains(&p) {
                self.input(&p);
            }
        }
        for p in other.outputs {
            self.output(&p);
        }
        for (k, v) in other.resolved {
            self.resolved.push((format!("{prefix}{k}"), v));
        }
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| lapmc::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn render(
    command: &Command,
    matches: &ArgMatches,
    from_config: &BTreeSet<String>,
    config_file: Option<&Path>,
    log: &RunLog,
) -> CliResult<String> {
    let mut out = String::from("# lapmc run manifest\n");
    out.push_str(&format!("command = {}\n", command.get_name()));
    out.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("threads = {}\n", rayon::current_num_threads()));
    if let Some(c) = config_file {
        out.push_str(&format!(
            "config_file = {} sha256={}\n",
            c.display(),
            sha256_file(c)?
        ));
    }
    out.push_str("\n[arguments]\n");
    for arg in command.get_arguments() {
        let id = arg.get_id().as_str();
        if matches!(id, "help" | "version" | "config" | "manifest") {
            continue;
        }
        let long = arg.get_long().unwrap_or(id);
        let value = matches
            .get_raw(id)
            .map(|vals| {
                vals.map(|v| v.to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .unwrap_or_else(|| "(unset)".to_string());
        let source = if from_config.contains(long) {
            "config"
        } else {
            match matches.value_source(id) {
                Some(ValueSource::CommandLine) => "command-line",
                Some(ValueSource::EnvVariable) => "environment",
                Some(ValueSource::DefaultValue) => "default",
                _ => "unset",
            }
        };
        out.push_str(&format!("{long} = {value}  # {source}\n"));
    }
    if !log.resolved.is_empty() {
        out.push_str("\n[resolved]\n");
        for (k, v) in &log.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    for (title, files) in [("inputs", &log.inputs), ("outputs", &log.outputs)] {
        out.push_str(&format!("\n[{title}]\n"));
        for f in files {
            out.push_str(&format!("{}  {}\n", sha256_file(f)?, f.display()));
        }
    }
    Ok(out)
}
