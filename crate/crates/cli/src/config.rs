//! Config-file merging. A flat TOML table maps flag names to values; each
//! entry whose flag was not typed on the command line is appended to argv
//! before the final parse.

use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches};

use crate::cli::{command, lenient_command};
use crate::UsageError;

pub fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, clap::Error> {
    let matches = lenient_command().try_get_matches_from(&argv)?;
    let Some((name, sub)) = matches.subcommand() else {
        return Ok(argv);
    };
    let Ok(Some(path)) = sub.try_get_one::<std::path::PathBuf>("config") else {
        return Ok(argv);
    };
    let extra = config_args(name, sub, path).map_err(|e| {
        command().error(clap::error::ErrorKind::ValueValidation, e.0)
    })?;
    let mut argv = argv;
    argv.extend(extra);
    Ok(argv)
}

fn config_args(name: &str, sub: &ArgMatches, path: &Path) -> Result<Vec<OsString>, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        text.parse().map_err(|e| UsageError(format!("config {} is not valid TOML: {e}", path.display())))?;
    let cmd = command();
    let sub_cmd = cmd.find_subcommand(name).expect("matched subcommand exists");
    let mut out = Vec::new();
    for (key, value) in &table {
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| UsageError(format!("unknown key '{key}' in config {}", path.display())))?;
        let id = arg.get_id().as_str();
        if sub.value_source(id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{key}");
        match (arg.get_action(), value) {
            (ArgAction::SetTrue, toml::Value::Boolean(b)) => {
                if *b {
                    out.push(flag.into());
                }
            }
            (ArgAction::SetTrue, _) => {
                return Err(UsageError(format!("config key '{key}' must be true or false")));
            }
            (_, v) => out.push(format!("{flag}={}", scalar(key, v)?).into()),
        }
    }
    Ok(out)
}

fn scalar(key: &str, v: &toml::Value) -> Result<String, UsageError> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items.iter().map(|i| scalar(key, i)).collect::<Result<Vec<_>, _>>()?.join(","),
        _ => return Err(UsageError(format!("config key '{key}' must be a scalar or a list"))),
    })
}
