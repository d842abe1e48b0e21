//! TOML configuration file with `section.key=value` overrides.
//!
//! ```toml
//! [scenario]
//! epochs = 400
//! range_noise_std = 5.0
//! r2_path = { shape = { kind = "circle", radius = 50.0 }, center = [100.0, 100.0], speed = 1.0, phase = 0.0 }
//!
//! [sweep]
//! num_runs = 40000
//! gps_noise_scale = 3.0
//! ```
//!
//! Every key is optional; missing keys take the documented defaults and
//! unknown keys are rejected.

use std::path::Path;

use coop_loc::montecarlo::SweepConfig;
use coop_loc::sim::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Built-in configurations selectable by name instead of a path.
pub const PRESETS: [&str; 2] = ["nominal", "noiseless"];

impl ConfigFile {
    pub fn preset(name: &str) -> Option<ConfigFile> {
        match name {
            "nominal" => Some(ConfigFile::default()),
            "noiseless" => Some(ConfigFile {
                scenario: ScenarioConfig::noiseless(0),
                sweep: SweepConfig {
                    range_noise_scale: 0.0,
                    gps_noise_scale: 0.0,
                    vel_offset_scale: 0.0,
                    pos_offset_max: 0,
                    ..SweepConfig::default()
                },
            }),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
        Self::from_table(parse_table(text)?)
    }

    /// Loads a preset name or a file, then applies `overrides` in order.
    pub fn load(
        source: Option<&str>,
        overrides: &[(String, String)],
    ) -> Result<ConfigFile, ConfigError> {
        let mut table = match source {
            None => to_table(&ConfigFile::default()),
            Some(name) => match ConfigFile::preset(name) {
                Some(c) => to_table(&c),
                None => {
                    let text = std::fs::read_to_string(Path::new(name))
                        .map_err(|e| ConfigError(format!("cannot read config {name}: {e}")))?;
                    parse_table(&text).map_err(|e| ConfigError(format!("{name}: {e}")))?
                }
            },
        };
        for (path, value) in overrides {
            apply_override(&mut table, path, value)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: Table) -> Result<ConfigFile, ConfigError> {
        let mut cfg: ConfigFile = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string().trim().to_string()))?;
        cfg.sweep.base = cfg.scenario.clone();
        Ok(cfg)
    }

    /// SHA-256 of the rendered config, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>()
        .map_err(|e| ConfigError(e.to_string().trim().to_string()))
}

fn to_table(cfg: &ConfigFile) -> Table {
    cfg.render().parse().expect("rendered config parses")
}

/// Sets `a.b.c` to `value`, parsed as a TOML value when possible and as a
/// bare string otherwise.
pub fn apply_override(table: &mut Table, path: &str, value: &str) -> Result<(), ConfigError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError(format!("bad override key {path:?}")));
    }
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override {path}: {k} is not a section")))?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

/// Splits `--section.key=value` arguments out of `args`.
pub fn extract_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        if let Some(body) = arg.strip_prefix("--") {
            if let Some((key, value)) = body.split_once('=') {
                if key.contains('.') {
                    overrides.push((key.to_string(), value.to_string()));
                    continue;
                }
            }
        }
        rest.push(arg);
    }
    (rest, overrides)
}
