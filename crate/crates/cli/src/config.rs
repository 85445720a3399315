//! `--config` files: `key = value` lines, `#` comments. Keys are long flag
//! names (`k_v` and `k-v` both work). Entries are spliced in front of the
//! command-line flags, so an explicit flag overrides its config value.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_config(path: &Path, text: &str) -> CliResult<Vec<ConfigEntry>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!(
                "{}:{}: expected 'key = value'",
                path.display(),
                k + 1
            ))
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::usage(format!(
                "{}:{}: empty key",
                path.display(),
                k + 1
            )));
        }
        if !seen.insert(key.clone()) {
            return Err(CliError::usage(format!(
                "{}:{}: conflicting config: '{key}' given twice",
                path.display(),
                k + 1
            )));
        }
        out.push(ConfigEntry {
            key,
            value: value.trim().to_string(),
            line: k + 1,
        });
    }
    Ok(out)
}

/// Value of `--config` in `argv`, if present.
pub fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(OsString::from(v));
        }
    }
    None
}

/// Splices config entries into `argv` directly after the subcommand name.
/// Returns the new argv and the long names whose value came from the file
/// (keys also given on the command line are excluded).
pub fn expand(
    argv: Vec<OsString>,
    root: &Command,
    path: &Path,
    entries: &[ConfigEntry],
) -> CliResult<(Vec<OsString>, BTreeSet<String>)> {
    let sub_pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| {
            let s = a.to_string_lossy();
            root.get_subcommands().any(|c| c.get_name() == s)
        })
        .map(|(k, _)| k);
    let Some(pos) = sub_pos else {
        // let clap report the missing subcommand
        return Ok((argv, BTreeSet::new()));
    };
    let sub = root
        .find_subcommand(argv[pos].to_string_lossy().as_ref())
        .expect("subcommand found above");
    let mut injected = Vec::new();
    let mut keys = BTreeSet::new();
    for e in entries {
        if e.key == "config" {
            return Err(CliError::usage(format!(
                "{}:{}: config files cannot include other config files",
                path.display(),
                e.line
            )));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(e.key.as_str()))
            .ok_or_else(|| {
                CliError::usage(format!(
                    "{}:{}: unknown key '{}' for '{}'",
                    path.display(),
                    e.line,
                    e.key,
                    sub.get_name()
                ))
            })?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            let on = e.value.parse::<bool>().map_err(|_| {
                CliError::usage(format!(
                    "{}:{}: '{}' expects true or false",
                    path.display(),
                    e.line,
                    e.key
                ))
            })?;
            if on {
                injected.push(OsString::from(format!("--{}", e.key)));
            }
        } else {
            injected.push(OsString::from(format!("--{}={}", e.key, e.value)));
        }
        let flag = format!("--{}", e.key);
        let on_command_line = argv.iter().skip(1).any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&format!("{flag}="))
        });
        if !on_command_line {
            keys.insert(e.key.clone());
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend(argv[pos + 1..].iter().cloned());
    Ok((out, keys))
}
