//! TOML config files: each key is a long flag name, either at top level or
//! in a `[<subcommand>]` table. Keys are turned into flags inserted right
//! after the subcommand, so flags given on the command line win.

use std::path::Path;

use toml::{Table, Value};

use crate::{data, usage, CliError};

const GLOBAL_VALUE_FLAGS: [&str; 2] = ["--seed", "--config"];

struct Located {
    config: Option<String>,
    /// Index of the subcommand token in `argv`.
    subcommand: Option<usize>,
    /// Indices of the `--config` tokens, removed from the resolved argv.
    config_tokens: Vec<usize>,
}

fn locate(cmd: &clap::Command, argv: &[String]) -> Located {
    let mut found = Located {
        config: None,
        subcommand: None,
        config_tokens: Vec::new(),
    };
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if a == "--" {
            break;
        }
        if a == "--config" {
            found.config = argv.get(i + 1).cloned();
            found.config_tokens.extend([i, i + 1]);
            i += 2;
            continue;
        }
        if let Some(path) = a.strip_prefix("--config=") {
            found.config = Some(path.to_string());
            found.config_tokens.push(i);
        } else if GLOBAL_VALUE_FLAGS.contains(&a) && found.subcommand.is_none() {
            i += 2;
            continue;
        } else if found.subcommand.is_none()
            && !a.starts_with('-')
            && cmd.find_subcommand(a).is_some()
        {
            found.subcommand = Some(i);
        }
        i += 1;
    }
    found
}

fn flag_args(
    sub: &clap::Command,
    key: &str,
    value: &Value,
) -> Result<Option<Vec<String>>, CliError> {
    let long = key.replace('_', "-");
    if long == "seed" {
        return Ok(Some(vec![format!("--seed={}", scalar(key, value)?)]));
    }
    let Some(arg) = sub
        .get_arguments()
        .find(|a| a.get_long() == Some(long.as_str()))
    else {
        return Ok(None);
    };
    if !arg.get_action().takes_values() {
        return match value {
            Value::Boolean(true) => Ok(Some(vec![format!("--{long}")])),
            Value::Boolean(false) => Ok(Some(vec![])),
            _ => Err(usage(format!("config key `{key}` must be a boolean"))),
        };
    }
    let text = match value {
        Value::Array(items) => items
            .iter()
            .map(|v| scalar(key, v))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        v => scalar(key, v)?,
    };
    Ok(Some(vec![format!("--{long}={text}")]))
}

fn scalar(key: &str, value: &Value) -> Result<String, CliError> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Integer(i) => Ok(i.to_string()),
        Value::Float(f) => Ok(f.to_string()),
        Value::Boolean(b) => Ok(b.to_string()),
        _ => Err(usage(format!(
            "config key `{key}` has an unsupported value"
        ))),
    }
}

/// Returns `argv` with the config file's settings spliced in as flags and
/// the `--config` flag removed.
pub(crate) fn expand(cmd: &clap::Command, argv: &[String]) -> Result<Vec<String>, CliError> {
    let found = locate(cmd, argv);
    let Some(path) = found.config else {
        return Ok(argv.to_vec());
    };
    let Some(sub_index) = found.subcommand else {
        return Ok(argv.to_vec());
    };
    let text =
        std::fs::read_to_string(Path::new(&path)).map_err(|e| data(format!("{path}: {e}")))?;
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| usage(format!("{path}: {e}")))?;
    let sub_name = argv[sub_index].as_str();
    let sub = cmd
        .find_subcommand(sub_name)
        .expect("located subcommand exists");

    let mut extra = Vec::new();
    for (key, value) in &table {
        if value.is_table() {
            if cmd.find_subcommand(key).is_none() {
                return Err(usage(format!("{path}: unknown section [{key}]")));
            }
            continue;
        }
        let accepted_somewhere = key == "seed"
            || cmd.get_subcommands().any(|s| {
                s.get_arguments()
                    .any(|a| a.get_long() == Some(key.replace('_', "-").as_str()))
            });
        if !accepted_somewhere {
            return Err(usage(format!("{path}: unknown key `{key}`")));
        }
        if let Some(args) = flag_args(sub, key, value)? {
            extra.extend(args);
        }
    }
    if let Some(Value::Table(section)) = table.get(sub_name) {
        for (key, value) in section {
            let args = flag_args(sub, key, value)?
                .ok_or_else(|| usage(format!("{path}: `{sub_name}` has no flag `{key}`")))?;
            extra.extend(args);
        }
    }

    let mut resolved = Vec::with_capacity(argv.len() + extra.len());
    for (i, a) in argv.iter().enumerate() {
        if found.config_tokens.contains(&i) {
            continue;
        }
        resolved.push(a.clone());
        if i == sub_index {
            resolved.append(&mut extra);
        }
    }
    Ok(resolved)
}
