//! Service configuration: TOML file plus `HYPERFEED_*` environment overrides.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, EngineError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("environment variable {name}: cannot parse `{value}`")]
    Env { name: &'static str, value: String },
    #[error(transparent)]
    Invalid(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Enables the `x-hyperfeed-now` clock override header.
    pub test_mode: bool,
    /// Exploration seed used when a request carries none. Without it, seeds
    /// come from the OS entropy source.
    pub seed: Option<u64>,
    /// Seconds between checks for a newer batch in `data_dir`; 0 disables.
    pub batch_reload_secs: u64,
    #[serde(flatten)]
    pub engine: EngineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            lexicon: None,
            test_mode: false,
            seed: None,
            batch_reload_secs: 30,
            engine: EngineConfig::default(),
        }
    }
}

pub const ENV_OVERRIDES: [&str; 6] = [
    "HYPERFEED_RADIUS_KM",
    "HYPERFEED_MAX_AGE_HOURS",
    "HYPERFEED_ALPHA",
    "HYPERFEED_GAMMA",
    "HYPERFEED_EPSILON",
    "HYPERFEED_SEED",
];

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })
    }

    /// Reads the file (if any), applies process environment overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                let mut cfg = Self::from_toml(&text, p)?;
                let base = p.parent().unwrap_or(Path::new("."));
                cfg.data_dir = cfg.data_dir.map(|d| base.join(d));
                cfg.lexicon = cfg.lexicon.map(|d| base.join(d));
                cfg
            }
            None => Self::default(),
        };
        let env: HashMap<String, String> = ENV_OVERRIDES
            .iter()
            .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)))
            .collect();
        cfg.apply_overrides(&env)?;
        cfg.engine.validate()?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, vars: &HashMap<String, String>) -> Result<(), ConfigError> {
        fn num(vars: &HashMap<String, String>, name: &'static str) -> Result<Option<f64>, ConfigError> {
            vars.get(name)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| ConfigError::Env {
                        name,
                        value: v.clone(),
                    })
                })
                .transpose()
        }
        let e = &mut self.engine;
        if let Some(v) = num(vars, "HYPERFEED_RADIUS_KM")? {
            e.filter.radius_km = v;
        }
        if let Some(v) = num(vars, "HYPERFEED_MAX_AGE_HOURS")? {
            e.filter.max_age_hours = v;
        }
        if let Some(v) = num(vars, "HYPERFEED_ALPHA")? {
            e.learner.alpha = v;
        }
        if let Some(v) = num(vars, "HYPERFEED_GAMMA")? {
            e.learner.gamma = v;
        }
        if let Some(v) = num(vars, "HYPERFEED_EPSILON")? {
            e.weights.epsilon = v;
        }
        if let Some(v) = vars.get("HYPERFEED_SEED") {
            self.seed = Some(v.trim().parse().map_err(|_| ConfigError::Env {
                name: "HYPERFEED_SEED",
                value: v.clone(),
            })?);
        }
        Ok(())
    }
}
