//! `key=value` config files. Each entry becomes `--key value` and is placed
//! ahead of the explicit flags, so the command line wins on conflicts.

use std::ffi::OsString;
use std::path::Path;

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", k + 1))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", k + 1));
        }
        if key == "config" {
            return Err(format!("config line {}: config files cannot include each other", k + 1));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(rest.into());
        }
    }
    None
}

/// Splices the entries of the `--config` file (if any) right after the
/// subcommand name.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let entries = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut out: Vec<OsString> = args[..at].to_vec();
    for (key, value) in entries {
        out.push(format!("--{key}").into());
        out.push(value.into());
    }
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
