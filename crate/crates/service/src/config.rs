use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use floodsense_core::{PeriodConfig, RegionGrid};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
}

/// Settings as written in the TOML file. Everything is optional so that
/// environment variables can fill the gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    addr: Option<String>,
    log_path: Option<PathBuf>,
    period_seconds: Option<i64>,
    epoch_origin: Option<i64>,
    grid: Option<String>,
    schema_path: Option<PathBuf>,
    admin_token: Option<String>,
    grace_seconds: Option<i64>,
    tick_seconds: Option<u64>,
    iterative_detection: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub log_path: PathBuf,
    pub period: PeriodConfig,
    pub grid: RegionGrid,
    /// `None` selects the bundled questionnaire.
    pub schema_path: Option<PathBuf>,
    /// Admin endpoints answer 401 to everyone when unset.
    pub admin_token: Option<String>,
    /// How long after a period ends the timer waits before evaluating it.
    pub grace_seconds: i64,
    pub tick_seconds: u64,
    pub iterative_detection: bool,
}

pub const ENV_KEYS: [&str; 6] = [
    "FLOODSENSE_ADDR",
    "FLOODSENSE_LOG_PATH",
    "FLOODSENSE_PERIOD_SECONDS",
    "FLOODSENSE_GRID",
    "FLOODSENSE_SCHEMA_PATH",
    "FLOODSENSE_ADMIN_TOKEN",
];

fn value_err(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Value {
        key: key.to_owned(),
        reason: reason.to_string(),
    }
}

impl ServiceConfig {
    /// Reads the TOML file (if given), then applies `FLOODSENSE_*` overrides
    /// from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                reason: e.to_string(),
            })?,
            None => String::new(),
        };
        let env = ENV_KEYS
            .iter()
            .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)));
        let mut cfg = Self::from_sources(&text, env)?;
        // A relative log or schema path is taken relative to the config file.
        if let Some(dir) = path.and_then(Path::parent) {
            if cfg.log_path.is_relative() {
                cfg.log_path = dir.join(&cfg.log_path);
            }
            if let Some(s) = cfg.schema_path.as_mut().filter(|s| s.is_relative()) {
                *s = dir.join(&*s);
            }
        }
        Ok(cfg)
    }

    /// Builds a config from TOML text and explicit overrides; used by
    /// [`ServiceConfig::load`] and by tests.
    pub fn from_sources(
        toml_text: &str,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut file: FileConfig =
            toml::from_str(toml_text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, value) in env {
            match key.as_str() {
                "FLOODSENSE_ADDR" => file.addr = Some(value),
                "FLOODSENSE_LOG_PATH" => file.log_path = Some(value.into()),
                "FLOODSENSE_PERIOD_SECONDS" => {
                    file.period_seconds = Some(value.parse().map_err(|e| value_err(&key, e))?)
                }
                "FLOODSENSE_GRID" => file.grid = Some(value),
                "FLOODSENSE_SCHEMA_PATH" => file.schema_path = Some(value.into()),
                "FLOODSENSE_ADMIN_TOKEN" => file.admin_token = Some(value),
                _ => {}
            }
        }

        let addr = file
            .addr
            .as_deref()
            .unwrap_or("127.0.0.1:8080")
            .parse()
            .map_err(|e| value_err("addr", e))?;
        let log_path = file.log_path.ok_or(ConfigError::Missing("log_path"))?;
        let grid: RegionGrid = file
            .grid
            .ok_or(ConfigError::Missing("grid"))?
            .parse()
            .map_err(|e| value_err("grid", e))?;
        let period = PeriodConfig::new(
            file.period_seconds.unwrap_or(3600),
            file.epoch_origin.unwrap_or(0),
        )
        .map_err(|e| value_err("period_seconds", e))?;
        let grace_seconds = file.grace_seconds.unwrap_or(60);
        if grace_seconds < 0 {
            return Err(value_err("grace_seconds", "must not be negative"));
        }
        let tick_seconds = file.tick_seconds.unwrap_or(30);
        if tick_seconds == 0 {
            return Err(value_err("tick_seconds", "must be at least 1"));
        }
        Ok(Self {
            addr,
            log_path,
            period,
            grid,
            schema_path: file.schema_path,
            admin_token: file.admin_token.filter(|t| !t.is_empty()),
            grace_seconds,
            tick_seconds,
            iterative_detection: file.iterative_detection.unwrap_or(false),
        })
    }
}
