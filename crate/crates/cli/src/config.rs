//! `key=value` config files, spliced in front of the command-line flags so the
//! flags win.

use std::ffi::OsString;
use std::path::Path;

const VERBS: [&str; 5] = ["train", "eval", "bench", "fit-width", "sweep"];

pub fn parse_config(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key {key:?}", i + 1));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Inserts config entries directly after the verb.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let extra = parse_config(&text)?;
    let Some(verb) = args.iter().position(|a| VERBS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut merged = args[..=verb].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[verb + 1..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_flags() {
        let args = parse_config("# c\nmax_depth = 2\nbias=true\nno-tie=false\n\nhead=softmax\n").unwrap();
        let s: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s, ["--max-depth", "2", "--bias", "--head", "softmax"]);
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn inserted_after_verb() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.cfg");
        std::fs::write(&cfg, "epsilon=0.5\n").unwrap();
        let args: Vec<OsString> = ["pilae", "--config", cfg.to_str().unwrap(), "train", "--epsilon", "0.1"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = merge(args).unwrap();
        let s: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(&s[3..], ["train", "--epsilon", "0.5", "--epsilon", "0.1"]);
    }
}
