//! Optional `key = value` configuration files and the seed chain.
//!
//! Config keys mirror the long flag names of the invoked subcommand; flags
//! win over the file, the file wins over defaults. Keys that the subcommand
//! does not consume are ignored, so one file can serve several commands.
//! The seed resolves as flag, then config, then `BDPU_SEED`, then entropy
//! (printed so the run can be replayed).

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::commands::CliError;

#[derive(Debug, Default, Clone)]
pub struct ConfigMap {
    entries: HashMap<String, String>,
}

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::Config(format!("config key {key} = {raw:?}: {e}"))),
        }
    }
}

/// Fills `slot` from the config file when the flag was absent.
pub fn merge<T: FromStr>(
    slot: &mut Option<T>,
    config: &ConfigMap,
    key: &str,
) -> Result<(), CliError>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        *slot = config.get(key)?;
    }
    Ok(())
}

/// Flag, config, `BDPU_SEED`, then entropy (announced on stderr).
pub fn resolve_seed(flag: Option<u64>, config: &ConfigMap) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = config.get::<u64>("seed")? {
        return Ok(seed);
    }
    if let Ok(raw) = std::env::var("BDPU_SEED") {
        return raw
            .parse()
            .map_err(|e| CliError::Config(format!("BDPU_SEED={raw:?}: {e}")));
    }
    let seed = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0x9e3779b97f4a7c15);
    eprintln!("seed = {seed} (auto-generated; pass --seed {seed} to reproduce)");
    Ok(seed)
}
