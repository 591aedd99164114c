use std::ffi::OsString;
use std::fs;

use serde_json::Value;

/// Splices the keys of a `--config` JSON file into the argument list, right
/// after the subcommand. Keys already given as flags are skipped, so the
/// command line wins.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest: Vec<OsString> = Vec::with_capacity(args.len());
    let mut path = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let value = iter.next().ok_or("--config needs a file path")?;
            path = Some(value);
        } else if let Some(v) = s.strip_prefix("--config=") {
            path = Some(OsString::from(v));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else { return Ok(rest) };

    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let json: Value =
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.to_string_lossy()))?;
    let Value::Object(map) = json else {
        return Err("config file must hold a JSON object".into());
    };

    let given: Vec<String> = rest
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut injected = Vec::new();
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if given.contains(&flag) {
            continue;
        }
        let values = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        for v in values {
            match v {
                Value::Bool(true) => injected.push(OsString::from(format!("--{flag}"))),
                Value::Bool(false) | Value::Null => {}
                Value::String(s) => injected.push(OsString::from(format!("--{flag}={s}"))),
                Value::Number(n) => injected.push(OsString::from(format!("--{flag}={n}"))),
                other => return Err(format!("config key '{key}' has unsupported value {other}")),
            }
        }
    }

    // Program name, then the first positional token is the subcommand.
    let sub = rest.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|i| i + 2);
    let at = sub.unwrap_or(rest.len());
    rest.splice(at..at, injected);
    Ok(rest)
}
