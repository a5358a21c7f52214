//! Configuration file handling.
//!
//! The file is TOML. Every key is optional; missing keys take the built-in
//! defaults, and command-line flags override whatever the file says.
//!
//! ```toml
//! log_level = "info"        # error | warn | info | debug | trace
//! jobs = 4
//!
//! [planner]
//! tile_size = 448
//! min_tiles = 1
//! max_tiles = 12
//! tokens_per_tile = 256
//! use_thumbnail = true
//!
//! [mixture]
//! spec = "pretrain-default"  # or "finetune-default", or a JSON spec path
//! buckets = { captioning = 0.6, ocr_large = 0.4 }  # inline spec, wins over `spec`
//! seed = 0
//!
//! [translation]
//! endpoint = "http://localhost:8000/v1/translate"
//! model = "my-model"
//! language = "Chinese"
//! cache_dir = ".translation-cache"
//! concurrency = 8
//! max_retries = 3
//! base_delay_ms = 1000
//! rate_limit = 5.0          # requests per second, unlimited when absent
//! timeout_secs = 60
//! credential_env = "DYNRES_API_KEY"
//!
//! [translation.wire]
//! system_field = "system"
//! user_field = "user"
//! model_field = "model"
//! response_pointer = "/completion"
//!
//! [io]
//! input_dir = "images"
//! output_dir = "tiles"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dynres::mixture::{Bucket, MixtureSpec, Task};
use dynres::planner::PlannerConfig;
use dynres::translate::WireFormat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CREDENTIAL_ENV: &str = "DYNRES_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("config {path}: key `{key}`: {message}")]
    Key {
        path: PathBuf,
        key: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Off,
    Error,
    #[default]
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub spec: String,
    pub buckets: Option<BTreeMap<Task, f64>>,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            spec: "pretrain-default".into(),
            buckets: None,
            seed: 0,
        }
    }
}

impl MixtureConfig {
    pub fn inline_spec(&self) -> Option<dynres::Result<MixtureSpec>> {
        self.buckets.as_ref().map(|b| {
            MixtureSpec::new(
                b.iter()
                    .map(|(&task, &weight)| Bucket { task, weight })
                    .collect(),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub language: Option<String>,
    pub cache_dir: PathBuf,
    pub concurrency: usize,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub rate_limit: Option<f64>,
    pub timeout_secs: u64,
    pub credential_env: String,
    pub wire: WireFormat,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: None,
            language: None,
            cache_dir: PathBuf::from(".translation-cache"),
            concurrency: 8,
            max_retries: 3,
            base_delay_ms: 1000,
            rate_limit: None,
            timeout_secs: 60,
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            wire: WireFormat::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub log_level: LogLevel,
    pub jobs: Option<usize>,
    pub planner: PlannerConfig,
    pub mixture: MixtureConfig,
    pub translation: TranslationConfig,
    pub io: IoConfig,
}

/// Flag values that take precedence over the file. `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub log_level: Option<LogLevel>,
    pub jobs: Option<usize>,
    pub tile_size: Option<u32>,
    pub min_tiles: Option<u32>,
    pub max_tiles: Option<u32>,
    pub tokens_per_tile: Option<u32>,
    pub use_thumbnail: Option<bool>,
    pub mixture_spec: Option<String>,
    pub seed: Option<u64>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub language: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub max_retries: Option<u32>,
    pub rate_limit: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl AppConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let value: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| ConfigError::Syntax {
                path: path.to_path_buf(),
                message: e.to_string().trim_end().to_owned(),
            })?;
        serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Key {
            path: path.to_path_buf(),
            key: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        set(&mut self.log_level, o.log_level);
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        let p = &mut self.planner;
        set(&mut p.tile_size, o.tile_size);
        set(&mut p.min_tiles, o.min_tiles);
        set(&mut p.max_tiles, o.max_tiles);
        set(&mut p.tokens_per_tile, o.tokens_per_tile);
        set(&mut p.use_thumbnail, o.use_thumbnail);
        if let Some(spec) = &o.mixture_spec {
            // An explicit --spec replaces any inline buckets from the file.
            self.mixture.spec = spec.clone();
            self.mixture.buckets = None;
        }
        set(&mut self.mixture.seed, o.seed);
        let t = &mut self.translation;
        if o.endpoint.is_some() {
            t.endpoint = o.endpoint.clone();
        }
        if o.model.is_some() {
            t.model = o.model.clone();
        }
        if o.language.is_some() {
            t.language = o.language.clone();
        }
        set(&mut t.cache_dir, o.cache_dir.clone());
        set(&mut t.concurrency, o.concurrency);
        set(&mut t.max_retries, o.max_retries);
        if o.rate_limit.is_some() {
            t.rate_limit = o.rate_limit;
        }
        set(&mut t.timeout_secs, o.timeout_secs);
        if o.input_dir.is_some() {
            self.io.input_dir = o.input_dir.clone();
        }
        if o.output_dir.is_some() {
            self.io.output_dir = o.output_dir.clone();
        }
    }

    /// Worker threads for batch jobs; defaults to the number of cores.
    pub fn jobs(&self) -> usize {
        self.jobs.filter(|&n| n > 0).unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }
}

/// Defaults, then the file at `path` (if any), then `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<AppConfig, ConfigError> {
    let mut config = match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            AppConfig::from_toml(&text, path)?
        }
        None => AppConfig::default(),
    };
    config.apply(overrides);
    Ok(config)
}
