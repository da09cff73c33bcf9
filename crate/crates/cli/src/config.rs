//! JSON config files mirroring the command-line flags.
//!
//! Keys are long flag names without the leading dashes. A key is only
//! applied when the same flag is absent from the command line.

use std::ffi::OsString;

use serde_json::Value;

use crate::error::{CliError, CliResult};

fn config_path(argv: &[OsString]) -> CliResult<Option<OsString>> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it
                .next()
                .cloned()
                .map(Some)
                .ok_or_else(|| CliError::Config("--config needs a path".into()));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(p.into()));
        }
    }
    Ok(None)
}

fn flag_present(argv: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == long || s.starts_with(&eq)
    })
}

fn scalar(key: &str, v: &Value) -> CliResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(CliError::Config(format!("config key {key:?} must hold a string, number or list of them"))),
    }
}

/// Appends flags from the `--config` file that the command line leaves unset.
pub fn merge_config_file(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| interspec::Error::Io {
        path: Some(path.clone().into()),
        source: e,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{path:?}: {e}")))?;
    merge_config_value(argv, &value)
}

pub fn merge_config_value(mut argv: Vec<OsString>, value: &Value) -> CliResult<Vec<OsString>> {
    let Value::Object(map) = value else {
        return Err(CliError::Config("config file must hold a JSON object".into()));
    };
    let explicit = argv.clone();
    for (key, v) in map {
        if key == "config" || flag_present(&explicit, key) {
            continue;
        }
        match v {
            Value::Bool(true) => argv.push(format!("--{key}").into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    argv.push(format!("--{key}").into());
                    argv.push(scalar(key, item)?.into());
                }
            }
            other => {
                argv.push(format!("--{key}").into());
                argv.push(scalar(key, other)?.into());
            }
        }
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn argv(s: &[&str]) -> Vec<OsString> {
        s.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_win_over_config() {
        let merged = merge_config_value(
            argv(&["interspec", "train", "--epochs", "5"]),
            &json!({"epochs": 60, "seed": 3, "no-spd-branch": true, "no-noise": false, "angle": [30, 60]}),
        )
        .unwrap();
        let s: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[..4], ["interspec", "train", "--epochs", "5"]);
        assert!(!s[4..].contains(&"--epochs".to_string()));
        assert!(s.windows(2).any(|w| w == ["--seed", "3"]));
        assert!(s.contains(&"--no-spd-branch".to_string()));
        assert!(!s.contains(&"--no-noise".to_string()));
        assert_eq!(s.iter().filter(|a| *a == "--angle").count(), 2);
    }

    #[test]
    fn rejects_nested_objects() {
        assert!(merge_config_value(argv(&["x"]), &json!({"a": {"b": 1}})).is_err());
        assert!(merge_config_value(argv(&["x"]), &json!([1])).is_err());
    }

    #[test]
    fn equals_form_counts_as_present() {
        let merged = merge_config_value(argv(&["x", "--seed=1"]), &json!({"seed": 2})).unwrap();
        assert_eq!(merged.len(), 2);
    }
}
