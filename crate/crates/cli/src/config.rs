//! `--config file.json`: values from the file are spliced into the argument
//! list right after the subcommand, so flags given on the command line win.
//!
//! Top-level keys apply to whichever subcommand runs; an object stored under
//! a subcommand's name applies to that subcommand only.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

pub const SUBCOMMANDS: [&str; 6] = ["gen-data", "train", "restore", "evaluate", "bench", "gradcheck"];

fn flag(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn push_value(out: &mut Vec<String>, key: &str, value: &Value) -> Result<()> {
    match value {
        Value::Null | Value::Bool(false) => {}
        Value::Bool(true) => out.push(flag(key)),
        Value::Number(n) => out.extend([flag(key), n.to_string()]),
        Value::String(s) => out.extend([flag(key), s.clone()]),
        Value::Array(_) | Value::Object(_) => bail!("config key {key:?}: expected a scalar"),
    }
    Ok(())
}

/// Flags contributed by `config` for `subcommand`.
pub fn config_args(config: &Map<String, Value>, subcommand: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (key, value) in config {
        if SUBCOMMANDS.contains(&key.as_str()) {
            continue;
        }
        push_value(&mut out, key, value)?;
    }
    if let Some(section) = config.get(subcommand) {
        let section = section
            .as_object()
            .with_context(|| format!("config section {subcommand:?} must be an object"))?;
        for (key, value) in section {
            push_value(&mut out, key, value)?;
        }
    }
    Ok(out)
}

fn load(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("config {} must contain a JSON object", path.display()),
    }
}

/// Removes `--config PATH` / `--config=PATH` from `args` and splices the
/// file's flags in after the subcommand.
pub fn expand(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            config = Some(iter.next().context("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let map = load(Path::new(&path))?;
    let Some(pos) = rest.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        bail!("--config needs a subcommand");
    };
    let extra = config_args(&map, &rest[pos])?;
    rest.splice(pos + 1..pos + 1, extra);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        s.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = std::env::temp_dir().join(format!("udae-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"seed": 3, "train": {"epochs": 2, "learning_rate": 0.01}, "bench": {"size": 9}}"#)
            .unwrap();
        let out = expand(args(&["udae", "--config", path.to_str().unwrap(), "train", "--epochs", "5"])).unwrap();
        assert_eq!(
            out,
            args(&["udae", "train", "--seed", "3", "--epochs", "2", "--learning-rate", "0.01", "--epochs", "5"])
        );
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn booleans_and_nulls() {
        let map: Map<String, Value> = serde_json::from_str(r#"{"timing": true, "identity": false, "x": null}"#).unwrap();
        assert_eq!(config_args(&map, "evaluate").unwrap(), args(&["--timing"]));
        let bad: Map<String, Value> = serde_json::from_str(r#"{"a": [1]}"#).unwrap();
        assert!(config_args(&bad, "train").is_err());
    }

    #[test]
    fn without_config_args_are_untouched() {
        let a = args(&["udae", "train", "--epochs", "1"]);
        assert_eq!(expand(a.clone()).unwrap(), a);
    }
}
