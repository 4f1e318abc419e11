//! `key = value` config files. Each entry becomes `--key value` inserted right
//! after the subcommand, unless the same flag already appears on the command
//! line. Repeatable flags may be given as comma-separated lists.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use crate::args::SUBCOMMANDS;

#[derive(Debug)]
pub struct ConfigError(pub String);

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError(format!("config line {}: expected `key = value`", n + 1)));
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn flag_name(arg: &str) -> Option<&str> {
    let body = arg.strip_prefix("--")?;
    Some(body.split_once('=').map_or(body, |(k, _)| k))
}

/// Pull `--config` out of `argv` and splice the file's entries in.
pub fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let mut args: Vec<String> = Vec::with_capacity(argv.len());
    for a in argv {
        args.push(a.into_string().map_err(|_| ConfigError("arguments must be valid UTF-8".into()))?);
    }
    let mut config_path = None;
    let mut kept = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config_path = Some(it.next().ok_or_else(|| ConfigError("--config needs a path".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else {
            kept.push(a);
        }
    }
    let Some(path) = config_path else {
        return Ok(kept.into_iter().map(OsString::from).collect());
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| ConfigError(format!("cannot read config `{path}`: {e}")))?;
    let entries = parse_config(&text)?;

    let given: BTreeSet<&str> = kept.iter().filter_map(|a| flag_name(a)).collect();
    let mut extra = Vec::new();
    for (key, value) in &entries {
        if given.contains(key.as_str()) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                for part in value.split(',') {
                    extra.push(format!("--{key}"));
                    extra.push(part.trim().to_string());
                }
            }
        }
    }
    let pos = kept.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())).map_or(kept.len(), |p| p + 1);
    let merged: Vec<String> = kept[..pos].iter().cloned().chain(extra).chain(kept[pos..].iter().cloned()).collect();
    Ok(merged.into_iter().map(OsString::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let e = parse_config("# c\n\nalpha = 0.7\nn_paths=10\n").unwrap();
        assert_eq!(e, vec![("alpha".into(), "0.7".into()), ("n-paths".into(), "10".into())]);
        assert!(parse_config("nonsense").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "alpha = 0.5\nt = 1, 2\n").unwrap();
        let argv: Vec<OsString> = ["fracbd", "--config", p.to_str().unwrap(), "simulate", "--alpha", "0.9"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged: Vec<String> =
            merge_config(argv).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(merged, ["fracbd", "simulate", "--t", "1", "--t", "2", "--alpha", "0.9"]);
    }
}
