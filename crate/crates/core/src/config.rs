//! Experiment configuration: one TOML file with `data`, `train` and `sweep`
//! sections, every field defaulting to the desk-scale setup. Command-line
//! overrides use dotted paths, e.g. `train.epochs=5` or `sweep.snr_db=[10,20]`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::channel::ChannelGenParams;
use crate::error::{Error, Result};
use crate::eval::SweepConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub generator: ChannelGenParams,
    pub train_count: usize,
    pub test_count: usize,
    /// Generator seed of the held-out split.
    pub test_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            generator: ChannelGenParams::default(),
            train_count: 2000,
            test_count: 200,
            test_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// Reads `path` (or starts from the defaults) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Applies `a.b.c=value`; `value` is read as a TOML literal, falling back to
/// a bare string.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` in `{path}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
