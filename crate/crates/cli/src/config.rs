//! Settings resolution: an optional TOML file, overridden key by key by
//! whatever flags were given on the command line.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Loads `path` (if any) as a TOML table and lays `overrides` on top.
pub fn resolve<T: DeserializeOwned>(path: Option<&Path>, overrides: toml::Table) -> Result<T, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k, v);
    }
    T::deserialize(table).map_err(|e| CliError::Config(e.to_string()))
}

/// Builds an override table from `(key, Option<value>)` pairs.
#[macro_export]
macro_rules! overrides {
    ($($key:literal => $val:expr),* $(,)?) => {{
        let mut t = toml::Table::new();
        $(
            if let Some(v) = &$val {
                t.insert($key.to_string(), toml::Value::try_from(v).expect("flag value is TOML-representable"));
            }
        )*
        t
    }};
}

pub fn to_toml<T: Serialize>(settings: &T) -> Result<String, CliError> {
    toml::to_string(settings).map_err(|e| CliError::Config(e.to_string()))
}

pub fn config_hash<T: Serialize>(settings: &T) -> Result<String, CliError> {
    let text = to_toml(settings)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub rng_algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    pub config_hash: String,
}

impl Metadata {
    pub fn new<T: Serialize>(command: &str, base_seed: Option<u64>, settings: &T) -> Result<Self, CliError> {
        Ok(Self {
            tool: "urnphylo".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            rng_algorithm: urnphylo::rng::RNG_ALGORITHM.into(),
            base_seed,
            config_hash: config_hash(settings)?,
        })
    }
}
