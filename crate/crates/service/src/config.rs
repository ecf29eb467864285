//! Service configuration: defaults, overridden by a TOML file, overridden by
//! `NL2BI_*` environment variables.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use nl2bi_core::sqlgen::Dialect;
use serde::Deserialize;

pub const ENV_PREFIX: &str = "NL2BI_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorMode {
    Rule,
    Model,
}

impl FromStr for TranslatorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(TranslatorMode::Rule),
            "model" => Ok(TranslatorMode::Model),
            other => Err(format!(
                "unknown translator {other}, expected rule or model"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub endpoint: Option<String>,
    pub name: String,
    /// Bearer token. Only ever read from the environment.
    pub token: Option<String>,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub catalog: PathBuf,
    /// Session files live under `<data_dir>/sessions`.
    pub data_dir: PathBuf,
    /// Advisor event log; defaults to `<data_dir>/advisor.jsonl`.
    pub advisor_log: PathBuf,
    pub dialect: Dialect,
    pub null_guard: bool,
    pub translator: TranslatorMode,
    pub model: ModelConfig,
    /// Fixed "today" for relative windows. Unset means the local date.
    pub today: Option<NaiveDate>,
    pub session_cap: usize,
    /// Directory of the built web UI, served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            catalog: PathBuf::from("docs/catalog.json"),
            data_dir: PathBuf::from("data"),
            advisor_log: PathBuf::from("data/advisor.jsonl"),
            dialect: Dialect::default(),
            null_guard: false,
            translator: TranslatorMode::Rule,
            model: ModelConfig {
                endpoint: None,
                name: "default".into(),
                token: None,
                timeout_secs: 30,
            },
            today: None,
            session_cap: 64,
            static_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("translator = \"model\" requires a model endpoint (NL2BI_MODEL_ENDPOINT)")]
    MissingEndpoint,
    #[error("session_cap must be at least 1")]
    ZeroCap,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    listen: Option<SocketAddr>,
    catalog: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    advisor_log: Option<PathBuf>,
    dialect: Option<Dialect>,
    null_guard: Option<bool>,
    translator: Option<TranslatorMode>,
    today: Option<NaiveDate>,
    session_cap: Option<usize>,
    static_dir: Option<PathBuf>,
    #[serde(default)]
    model: FileModel,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileModel {
    endpoint: Option<String>,
    name: Option<String>,
    timeout_secs: Option<u64>,
}

fn env_value<T: FromStr>(
    env: &dyn Fn(&str) -> Option<String>,
    key: &str,
) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let full = format!("{ENV_PREFIX}{key}");
    match env(&full) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
            key: full,
            message: e.to_string(),
        }),
    }
}

impl ServiceConfig {
    /// Loads the configuration. `file` is optional; `env` looks up a
    /// variable by full name.
    pub fn load(
        file: Option<&Path>,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let f: FileConfig = match file {
            None => FileConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.into(),
                    source,
                })?;
                toml::from_str(&text).map_err(|source| ConfigError::Parse {
                    path: path.into(),
                    source,
                })?
            }
        };
        let d = ServiceConfig::default();
        let data_dir: PathBuf = env_value(env, "DATA_DIR")?
            .or(f.data_dir)
            .unwrap_or(d.data_dir);
        let cfg = ServiceConfig {
            listen: env_value(env, "LISTEN")?.or(f.listen).unwrap_or(d.listen),
            catalog: env_value(env, "CATALOG")?
                .or(f.catalog)
                .unwrap_or(d.catalog),
            advisor_log: env_value(env, "ADVISOR_LOG")?
                .or(f.advisor_log)
                .unwrap_or_else(|| data_dir.join("advisor.jsonl")),
            data_dir,
            dialect: env_value(env, "DIALECT")?
                .or(f.dialect)
                .unwrap_or(d.dialect),
            null_guard: env_value(env, "NULL_GUARD")?
                .or(f.null_guard)
                .unwrap_or(d.null_guard),
            translator: env_value(env, "TRANSLATOR")?
                .or(f.translator)
                .unwrap_or(d.translator),
            model: ModelConfig {
                endpoint: env_value(env, "MODEL_ENDPOINT")?.or(f.model.endpoint),
                name: env_value(env, "MODEL_NAME")?
                    .or(f.model.name)
                    .unwrap_or(d.model.name),
                token: env(&format!("{ENV_PREFIX}MODEL_TOKEN")),
                timeout_secs: env_value(env, "MODEL_TIMEOUT_SECS")?
                    .or(f.model.timeout_secs)
                    .unwrap_or(d.model.timeout_secs),
            },
            today: env_value(env, "TODAY")?.or(f.today),
            session_cap: env_value(env, "SESSION_CAP")?
                .or(f.session_cap)
                .unwrap_or(d.session_cap),
            static_dir: env_value(env, "STATIC_DIR")?.or(f.static_dir),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_process_env(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(file, &|k| std::env::var(k).ok())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.translator == TranslatorMode::Model && self.model.endpoint.is_none() {
            return Err(ConfigError::MissingEndpoint);
        }
        if self.session_cap == 0 {
            return Err(ConfigError::ZeroCap);
        }
        Ok(())
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }
}
