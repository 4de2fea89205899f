mod args;
mod commands;

use std::ffi::OsString;
use std::process::ExitCode;

use catsdr::io::parse_key_values;
use catsdr::SdrError;
use clap::{ArgMatches, CommandFactory, FromArgMatches};

use args::Cli;

const COMMANDS: [&str; 7] = ["simulate", "estimate", "tune", "order", "bench", "project", "prepare"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Sdr(SdrError),
}

impl From<SdrError> for CliError {
    fn from(e: SdrError) -> Self {
        CliError::Sdr(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Sdr(SdrError::Parameter(_)) => 1,
            CliError::Sdr(e) if e.is_data_error() => 2,
            CliError::Sdr(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Sdr(e) => write!(f, "{e}"),
        }
    }
}

/// Splices `key = value` entries from `--config` into the argument list.
///
/// Config entries go right after the subcommand so that later, explicit flags
/// override them.
fn expand_config(raw: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<String> = raw.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            config_path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(raw);
    };
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config `{path}`: {e}")))?;
    let entries = parse_key_values(&text)?;
    let mut command = strs
        .iter()
        .skip(1)
        .position(|a| COMMANDS.contains(&a.as_str()))
        .map(|i| i + 1);
    let mut out: Vec<OsString> = raw.clone();
    let mut flags = Vec::new();
    let mut config_command = None;
    for (k, v) in entries {
        match k.as_str() {
            "command" => config_command = Some(v),
            "version" => {}
            _ => {
                flags.push(OsString::from(format!("--{}", k.replace('_', "-"))));
                flags.push(OsString::from(v));
            }
        }
    }
    if command.is_none() {
        let cmd =
            config_command.ok_or_else(|| CliError::Usage("no subcommand given and config has no `command`".into()))?;
        out.insert(1, OsString::from(cmd));
        command = Some(1);
    }
    let at = command.expect("command position") + 1;
    out.splice(at..at, flags);
    Ok(out)
}

/// Every argument of the subcommand with the value it resolved to.
fn resolved_settings(def: &clap::Command, sub: &ArgMatches) -> Vec<(String, String)> {
    let mut ids: Vec<String> = def.get_arguments().map(|a| a.get_id().as_str().to_string()).collect();
    ids.sort();
    ids.into_iter()
        .filter(|id| id != "config")
        .filter_map(|id| {
            let raw = sub.try_get_raw(&id).ok().flatten()?;
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            Some((id.replace('_', "-"), vals.join(",")))
        })
        .collect()
}

fn run(raw: Vec<OsString>) -> Result<(), CliError> {
    let argv = expand_config(raw)?;
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(
                e.render()
                    .to_string()
                    .trim_start_matches("error: ")
                    .trim_end()
                    .to_string(),
            ));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // ignore the error if a pool already exists (only possible in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let mut manifest = vec![
        ("command".to_string(), name.to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ];
    let def = Cli::command();
    let def = def.find_subcommand(name).expect("known subcommand");
    manifest.extend(resolved_settings(def, sub));
    commands::dispatch(&cli.command, &manifest)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("catsdr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
