//! Flat `key = value` configuration files and the settings echo.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gatbind::gat::{HeadKind, ModelKind};
use gatbind::train::TrainConfig;

use crate::error::CliError;

pub const CONFIG_ECHO_FILE: &str = "config.txt";

/// Keys accepted in a training config file.
pub const TRAIN_KEYS: [&str; 10] = [
    "lr",
    "epochs",
    "batch_size",
    "dim",
    "blocks",
    "hidden",
    "model",
    "head",
    "seed",
    "threshold",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key=value",
                k + 1
            )));
        };
        let key = key.trim().replace('-', "_");
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!(
                "config line {}: duplicate key '{key}'",
                k + 1
            )));
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("config key '{key}': cannot parse '{v}'")))
}

pub fn parse_hidden(v: &str) -> Result<Vec<usize>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split([',', '-'])
        .map(|s| parse_num("hidden", s.trim()))
        .collect()
}

pub fn apply_config(cfg: &mut TrainConfig, map: &BTreeMap<String, String>) -> Result<(), CliError> {
    for (key, v) in map {
        match key.as_str() {
            "lr" => cfg.lr = parse_num(key, v)?,
            "epochs" => cfg.epochs = parse_num(key, v)?,
            "batch_size" => cfg.batch_size = parse_num(key, v)?,
            "dim" => cfg.dim = parse_num(key, v)?,
            "blocks" => cfg.n_blocks = parse_num(key, v)?,
            "hidden" => cfg.hidden = parse_hidden(v)?,
            "seed" => cfg.seed = parse_num(key, v)?,
            "threshold" => cfg.threshold = parse_num(key, v)?,
            "model" => {
                cfg.model = ModelKind::parse(v)
                    .ok_or_else(|| CliError::Usage(format!("unknown model '{v}'")))?
            }
            "head" => {
                cfg.head = HeadKind::parse(v)
                    .ok_or_else(|| CliError::Usage(format!("unknown head '{v}'")))?
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown config key '{other}' (expected one of {})",
                    TRAIN_KEYS.join(", ")
                )))
            }
        }
    }
    Ok(())
}

pub fn train_config_pairs(cfg: &TrainConfig) -> Vec<(String, String)> {
    let hidden: Vec<String> = cfg.hidden.iter().map(usize::to_string).collect();
    vec![
        ("lr".into(), cfg.lr.to_string()),
        ("epochs".into(), cfg.epochs.to_string()),
        ("batch_size".into(), cfg.batch_size.to_string()),
        ("dim".into(), cfg.dim.to_string()),
        ("blocks".into(), cfg.n_blocks.to_string()),
        ("hidden".into(), hidden.join(",")),
        ("model".into(), cfg.model.as_str().into()),
        ("head".into(), cfg.head.as_str().into()),
        ("seed".into(), cfg.seed.to_string()),
        ("threshold".into(), cfg.threshold.to_string()),
    ]
}

/// Writes the effective settings of a command into `dir`.
pub fn write_echo(dir: &Path, command: &str, pairs: &[(String, String)]) -> Result<(), CliError> {
    let mut text = format!("command={command}\n");
    for (k, v) in pairs {
        text.push_str(&format!("{k}={v}\n"));
    }
    let path = dir.join(CONFIG_ECHO_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
