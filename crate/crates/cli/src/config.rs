//! Optional TOML config mirroring the command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [refine]
//! programmer = "remote"
//! endpoint = "http://localhost:8000"
//! iterations = 3
//! ```
//!
//! Top-level keys apply to every subcommand, tables to the subcommand of the
//! same name. Flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use toml::{Table, Value};

/// Locates `--config PATH` or `--config=PATH` in raw arguments.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
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

pub fn load(path: &Path) -> Result<Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.parse::<Table>().map_err(|e| format!("{}: {e}", path.display()))
}

fn flag_present(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

fn to_flags(table: &Table, args: &[OsString], out: &mut Vec<OsString>) -> Result<(), String> {
    for (key, value) in table {
        if matches!(value, Value::Table(_)) {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if flag_present(args, &flag) {
            continue;
        }
        match value {
            Value::Boolean(true) => out.push(flag.into()),
            Value::Boolean(false) => {}
            Value::String(s) => {
                out.push(flag.into());
                out.push(s.into());
            }
            Value::Integer(_) | Value::Float(_) => {
                out.push(flag.into());
                out.push(value.to_string().into());
            }
            other => return Err(format!("config key {key}: unsupported value {other}")),
        }
    }
    Ok(())
}

// global options that take a value
const VALUE_OPTIONS: [&str; 4] = ["--config", "--seed", "--jobs", "--meta"];

fn subcommand_position(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if VALUE_OPTIONS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Inserts flags from `config` into `args`, right after the subcommand
/// name so clap attributes them to it.
pub fn merge(args: Vec<OsString>, config: &Table) -> Result<Vec<OsString>, String> {
    let Some(pos) = subcommand_position(&args) else {
        return Ok(args);
    };
    let sub = args[pos].to_string_lossy().into_owned();
    let mut extra = Vec::new();
    to_flags(config, &args, &mut extra)?;
    if let Some(Value::Table(t)) = config.get(&sub) {
        to_flags(t, &args, &mut extra)?;
    }
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn flags_are_inserted_after_the_subcommand() {
        let config: Table = "seed = 3\n[refine]\niterations = 4\nno_early_stop = true\nprogrammer = \"noop\"\n"
            .parse()
            .unwrap();
        let merged = merge(args("sgr --config c.toml refine --input x --iterations 1"), &config).unwrap();
        let s: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(&s[..4], ["sgr", "--config", "c.toml", "refine"]);
        assert!(s.windows(2).any(|w| w == ["--seed", "3"]));
        assert!(s.windows(2).any(|w| w == ["--programmer", "noop"]));
        assert!(s.contains(&"--no-early-stop".to_string()));
        // command line wins
        assert_eq!(s.iter().filter(|a| *a == "--iterations").count(), 1);
    }

    #[test]
    fn finds_config_path() {
        assert_eq!(config_path(&args("sgr --config=a.toml score")), Some("a.toml".into()));
        assert_eq!(config_path(&args("sgr score")), None);
    }
}
