//! JSON run configs.
//!
//! A config is a flat object naming the subcommand and its flags, e.g.
//! `{"command": "simulate", "policy": "lp", "boxes": 7, "seed": 1}`. It is
//! turned into an argument list and parsed like a command line, so configs
//! get exactly the same defaults and validation as flags.

use serde_json::Value;

pub fn config_to_args(text: &str) -> Result<Vec<String>, String> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
    let Value::Object(map) = value else {
        return Err("config must be a JSON object".into());
    };
    let command = match map.get("command") {
        Some(Value::String(c)) => c.clone(),
        Some(_) => return Err("`command` must be a string".into()),
        None => return Err("config needs a `command` field".into()),
    };
    let mut args = vec!["stoplab".to_string(), command];
    for (key, value) in map.iter().filter(|(k, _)| k.as_str() != "command") {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => args.push(flag),
            Value::Number(n) => args.extend([flag, n.to_string()]),
            Value::String(s) => args.extend([flag, s.clone()]),
            Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        _ => Err(format!("`{key}`: list items must be strings or numbers")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                args.extend([flag, parts.join(",")]);
            }
            Value::Object(_) => return Err(format!("`{key}`: nested objects are not supported")),
        }
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattens_config() {
        let args = config_to_args(
            r#"{"command": "curves", "data": "log.csv", "boxes": 7, "bands": ["1", "2-4"], "bin_width": 0.1, "quiet": false}"#,
        )
        .unwrap();
        assert_eq!(
            args,
            [
                "stoplab",
                "curves",
                "--bands",
                "1,2-4",
                "--bin-width",
                "0.1",
                "--boxes",
                "7",
                "--data",
                "log.csv"
            ]
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(config_to_args("[]").is_err());
        assert!(config_to_args("{}").is_err());
        assert!(config_to_args(r#"{"command": "fit", "sampler": {"draws": 5}}"#).is_err());
        assert!(config_to_args("{").is_err());
    }
}
