//! Service configuration: defaults, then a TOML file, then `PREFADAPT_*`
//! environment variables. Command-line flags are applied by the caller.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use prefadapt::AdaptConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const ENV_PREFIX: &str = "PREFADAPT_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub corpus_matrix: Option<PathBuf>,
    pub corpus_meta: Option<PathBuf>,
    /// Persistence is disabled when unset.
    pub data_dir: Option<PathBuf>,
    pub adapt: AdaptConfig,
    pub compact_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            corpus_matrix: None,
            corpus_meta: None,
            data_dir: None,
            adapt: AdaptConfig::default(),
            compact_every: 0,
        }
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| ServiceError::Invalid(format!("{ENV_PREFIX}{key}={raw}: {e}")))
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ServiceError::Invalid(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Overlays `PREFADAPT_<KEY>` values; `get` looks a full variable name up.
    pub fn apply_env(mut self, get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let var = |key: &str| get(&format!("{ENV_PREFIX}{key}"));
        if let Some(v) = var("LISTEN") {
            self.listen = parse_env("LISTEN", &v)?;
        }
        if let Some(v) = var("CORPUS_MATRIX") {
            self.corpus_matrix = Some(v.into());
        }
        if let Some(v) = var("CORPUS_META") {
            self.corpus_meta = Some(v.into());
        }
        if let Some(v) = var("DATA_DIR") {
            self.data_dir = Some(v.into());
        }
        if let Some(v) = var("EPSILON") {
            self.adapt.epsilon = parse_env("EPSILON", &v)?;
        }
        if let Some(v) = var("STEPS") {
            self.adapt.steps = parse_env("STEPS", &v)?;
        }
        if let Some(v) = var("TEMPERATURE") {
            self.adapt.temperature = parse_env("TEMPERATURE", &v)?;
        }
        if let Some(v) = var("RENORMALIZE") {
            self.adapt.renormalize = parse_env("RENORMALIZE", &v)?;
        }
        if let Some(v) = var("COMPACT_EVERY") {
            self.compact_every = parse_env("COMPACT_EVERY", &v)?;
        }
        Ok(self)
    }

    /// Defaults, optional file, then the process environment.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let base = match file {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        base.apply_env(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<()> {
        self.adapt.validate()?;
        if self.corpus_matrix.is_none() || self.corpus_meta.is_none() {
            return Err(ServiceError::Invalid(
                "corpus_matrix and corpus_meta are required".into(),
            ));
        }
        Ok(())
    }
}
