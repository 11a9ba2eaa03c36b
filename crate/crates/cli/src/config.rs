//! Flag/file configuration merging. Every flag can also come from a TOML
//! file passed with `--config`; explicit flags win over file values.

use condrec_core::model::{KeyKind, RetrievalConfig, Temperature};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Values loadable from a config file. Field names match the long flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub heads: Option<Vec<PathBuf>>,
    pub vocabs: Option<PathBuf>,
    pub key: Option<String>,
    pub k: Option<usize>,
    pub temp: Option<String>,
    pub alpha: Option<f64>,
    pub role: Option<String>,
    pub seed: Option<u64>,
    pub resamples: Option<usize>,
    pub exclusion: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}

/// Pick the flag value when present, else the file value, else the default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Same, but without a default: the value must come from somewhere.
pub fn resolve_required<T: Clone>(
    flag: Option<T>,
    file: Option<T>,
    name: &str,
) -> Result<T, String> {
    flag.or(file)
        .ok_or_else(|| format!("missing required --{name} (flag or config file)"))
}

pub fn parse_key_kind(s: &str) -> Result<KeyKind, String> {
    KeyKind::parse(s).ok_or_else(|| format!("bad --key {s:?}; expected rxn or rxn+delta"))
}

pub fn parse_temperature(s: &str) -> Result<Temperature, String> {
    Temperature::parse(s)
        .ok_or_else(|| format!("bad --temp {s:?}; expected 'uniform' or a positive number"))
}

/// Assemble the retrieval configuration from resolved parts.
pub fn retrieval_config(
    key: KeyKind,
    k: usize,
    temperature: Temperature,
    alpha: f64,
) -> Result<RetrievalConfig, String> {
    let config = RetrievalConfig {
        key_kind: key,
        k,
        temperature,
        alpha,
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}
