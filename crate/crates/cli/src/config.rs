//! JSON run configs. A config names a command and its options, e.g.
//!
//! ```json
//! {"command": "optimal-cd", "seed": 1, "out": "lido.csv",
//!  "options": {"fixture": "lidocaine", "draws": 100000}}
//! ```
//!
//! Options map one-to-one onto the command's flags (`exact: true` becomes
//! `--exact`, arrays become comma lists); `figure` is positional for
//! `reproduce`.

use std::path::Path;

use anyhow::Result;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub sidecar: Option<String>,
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub options: Map<String, Value>,
}

fn scalar(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(failure::config(format!("unsupported option value {other}"))),
    }
}

impl RunConfig {
    pub fn argv(&self) -> Result<Vec<String>> {
        if self.command == "run" {
            return Err(failure::config("a config cannot invoke `run`"));
        }
        let mut argv = vec!["confcurve".to_string(), self.command.clone()];
        if let Some(fig) = self.options.get("figure") {
            argv.push(scalar(fig)?);
        }
        let named = [("seed", self.seed.map(|s| s.to_string())), ("out", self.out.clone()), ("sidecar", self.sidecar.clone()), ("grid", self.grid.clone())];
        for (flag, value) in named {
            if let Some(v) = value {
                argv.push(format!("--{flag}"));
                argv.push(v);
            }
        }
        for (key, value) in &self.options {
            if key == "figure" {
                continue;
            }
            let flag = format!("--{}", key.replace('_', "-"));
            match value {
                Value::Bool(true) => argv.push(flag),
                Value::Bool(false) | Value::Null => {}
                Value::Array(items) => {
                    let list: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
                    argv.push(flag);
                    argv.push(list.join(","));
                }
                v => {
                    argv.push(flag);
                    argv.push(scalar(v)?);
                }
            }
        }
        Ok(argv)
    }
}

pub fn argv_from_file(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| failure::config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| failure::config(format!("invalid config {}: {e}", path.display())))?;
    cfg.argv()
}
