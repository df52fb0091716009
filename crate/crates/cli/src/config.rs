//! `--config FILE`: `key = value` lines turned into flags placed before the
//! user's own flags, so that anything given on the command line wins.

use crate::args::Cli;
use crate::failure::{CliResult, ExitKind, Failure};
use clap::{ArgAction, CommandFactory};

const GLOBAL_WITH_VALUE: [&str; 2] = ["--threads", "--config"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

/// Position of the subcommand and the config path, if any.
fn locate(argv: &[String]) -> (Option<usize>, Option<String>) {
    let mut config = None;
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if GLOBAL_WITH_VALUE.contains(&a.as_str()) {
            if a == "--config" {
                config = argv.get(i + 1).cloned();
            }
            i += 1;
        } else if !a.starts_with('-') {
            // the subcommand; a global `--config` may still follow it
            let rest = locate_config(&argv[i + 1..]);
            return (Some(i), rest.or(config));
        }
        i += 1;
    }
    (None, config)
}

fn locate_config(args: &[String]) -> Option<String> {
    let mut found = None;
    for (i, a) in args.iter().enumerate() {
        if let Some(v) = a.strip_prefix("--config=") {
            found = Some(v.to_string());
        } else if a == "--config" {
            found = args.get(i + 1).cloned();
        }
    }
    found
}

pub fn inject(argv: Vec<String>) -> CliResult<Vec<String>> {
    let (sub_pos, path) = locate(&argv);
    let (Some(sub_pos), Some(path)) = (sub_pos, path) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::msg(ExitKind::Config, format!("config file {path}: {e}")))?;
    let pairs = parse(&text).map_err(|e| Failure::msg(ExitKind::Config, format!("config file {path}: {e}")))?;
    let root = Cli::command();
    let sub_name = &argv[sub_pos];
    let Some(sub) = root.find_subcommand(sub_name) else {
        // let clap report the unknown subcommand
        return Ok(argv);
    };
    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            return Err(Failure::msg(ExitKind::Config, "config files cannot include other config files"));
        }
        if key == "threads" {
            global.push(format!("--threads={value}"));
            continue;
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                Failure::msg(
                    ExitKind::Config,
                    format!("config file {path}: `{key}` is not a flag of `{sub_name}`"),
                )
            })?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => local.push(format!("--{key}")),
                "false" => {}
                other => {
                    return Err(Failure::msg(
                        ExitKind::Config,
                        format!("config file {path}: `{key}` takes true or false, not `{other}`"),
                    ))
                }
            },
            _ => local.push(format!("--{key}={value}")),
        }
    }
    let mut out = Vec::with_capacity(argv.len() + global.len() + local.len());
    out.extend_from_slice(&argv[..sub_pos]);
    out.extend(global);
    out.push(argv[sub_pos].clone());
    out.extend(local);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}
