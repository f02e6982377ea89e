//! `key = value` config files, spliced into the argument list so that
//! command-line flags still win.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

/// Parsed `(key, value)` pairs in file order. Keys use dashes; blank lines
/// and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Long names of options that may appear in a config file: every flag of
/// every subcommand except paths that only make sense per invocation.
fn known_keys(cmd: &Command) -> BTreeSet<String> {
    cmd.get_subcommands()
        .flat_map(|s| s.get_arguments())
        .filter_map(|a| a.get_long())
        .filter(|l| !matches!(*l, "config" | "help"))
        .map(str::to_string)
        .collect()
}

fn value_of<'a>(args: &'a [OsString], flag: &str) -> Option<&'a OsString> {
    let eq = format!("{flag}=");
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == flag {
            return args.get(i + 1);
        }
        if s.starts_with(&eq) {
            return None;
        }
    }
    None
}

fn inline_value(args: &[OsString], flag: &str) -> Option<OsString> {
    let eq = format!("{flag}=");
    args.iter()
        .find_map(|a| a.to_string_lossy().strip_prefix(&eq).map(OsString::from))
}

/// Returns `args` with the config file's options inserted right after the
/// subcommand name. Keys that belong to other subcommands are ignored;
/// keys no subcommand knows are an error.
pub fn splice(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let path = match value_of(&args, "--config")
        .cloned()
        .or_else(|| inline_value(&args, "--config"))
    {
        Some(p) => p,
        None => return Ok(args),
    };
    let path = Path::new(&path);
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let pairs = parse(&text).with_context(|| format!("config {}", path.display()))?;
    let known = known_keys(cmd);
    if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(k)) {
        bail!("config {}: unknown key `{k}`", path.display());
    }

    let globals: BTreeSet<&str> = cmd
        .get_arguments()
        .filter(|a| a.get_action().takes_values())
        .filter_map(|a| a.get_long())
        .collect();
    let mut pos = None;
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if let Some(flag) = s.strip_prefix("--") {
            if globals.contains(flag) {
                i += 1;
            }
        } else if !s.starts_with('-') {
            pos = Some(i);
            break;
        }
        i += 1;
    }
    let Some(pos) = pos else { return Ok(args) };
    let name = args[pos].to_string_lossy().to_string();
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(args);
    };

    let mut extra = Vec::new();
    for (k, v) in pairs {
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(k.as_str()))
        else {
            continue;
        };
        match arg.get_action() {
            ArgAction::SetTrue => match v.as_str() {
                "true" | "1" | "yes" => extra.push(OsString::from(format!("--{k}"))),
                "false" | "0" | "no" => {}
                other => bail!("config key `{k}`: expected true or false, got `{other}`"),
            },
            _ => {
                extra.push(OsString::from(format!("--{k}")));
                extra.push(OsString::from(v));
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let p = parse("theta = 0.4\n# note\n\nsigma_low=0.2 # inline\n").unwrap();
        assert_eq!(
            p,
            vec![
                ("theta".to_string(), "0.4".to_string()),
                ("sigma-low".to_string(), "0.2".to_string())
            ]
        );
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse("theta 0.4").is_err());
    }
}
