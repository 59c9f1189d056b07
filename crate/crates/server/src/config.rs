//! Deployment configuration, read from TOML.
//!
//! ```toml
//! port = 8080
//! data_dir = "data"
//! seed = 0
//! folds = 10
//! min_train_examples = 50
//! admin_tokens = ["root-secret"]
//!
//! [tokens]
//! "alice-secret" = "alice"
//!
//! [weather]
//! mode = "fixture"          # stub | fixture | live
//! fixture_path = "weather.csv"
//!
//! [featurize]
//! join_tolerance_minutes = 15
//! vmc_window_hours = 4
//! gps_window_hours = 4
//!
//! [forest]
//! n_trees = 100
//! min_leaf = 50
//! features_per_split = 4
//!
//! [sampling]
//! awake_start = "08:00:00"
//! awake_end = "22:00:00"
//!
//! [influence]
//! radius_m = 50.0
//! slack_minutes = 30
//! ```
//!
//! Every key is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use happimeter_core::analytics::CopresenceConfig;
use happimeter_core::featurize::FeaturizeConfig;
use happimeter_core::forest::Hyperparams;
use happimeter_core::sampling::SamplingConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeatherMode {
    #[default]
    Stub,
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubWeather {
    pub temperature: f64,
    pub humidity: f64,
    pub pressure: f64,
    pub wind: f64,
    pub clouds: f64,
}

impl Default for StubWeather {
    fn default() -> Self {
        StubWeather {
            temperature: 15.0,
            humidity: 60.0,
            pressure: 1013.0,
            wind: 3.0,
            clouds: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherConfig {
    pub mode: WeatherMode,
    pub stub: StubWeather,
    /// weather.csv for fixture mode; relative paths resolve against the config file.
    pub fixture_path: Option<PathBuf>,
    /// Hourly archive endpoint for live mode.
    pub live_url: String,
    pub timeout_secs: u64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        WeatherConfig {
            mode: WeatherMode::Stub,
            stub: StubWeather::default(),
            fixture_path: None,
            live_url: "https://archive-api.open-meteo.com/v1/archive".into(),
            timeout_secs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    /// Trailing VMC window used for the correlation table (4 or 24).
    pub vmc_window_hours: i64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig { vmc_window_hours: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub port: u16,
    /// Event log directory; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub folds: usize,
    pub min_train_examples: usize,
    /// Bearer token -> user id.
    pub tokens: BTreeMap<String, String>,
    pub admin_tokens: Vec<String>,
    pub weather: WeatherConfig,
    pub featurize: FeaturizeConfig,
    pub forest: Hyperparams,
    pub sampling: SamplingConfig,
    pub influence: CopresenceConfig,
    pub correlation: CorrelationConfig,
    /// Display words for mood states 1..=9.
    pub mood_labels: Option<Vec<String>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: 8080,
            data_dir: None,
            seed: 0,
            folds: 10,
            min_train_examples: 50,
            tokens: BTreeMap::new(),
            admin_tokens: Vec::new(),
            weather: WeatherConfig::default(),
            featurize: FeaturizeConfig::default(),
            forest: Hyperparams::default(),
            sampling: SamplingConfig::default(),
            influence: CopresenceConfig::default(),
            correlation: CorrelationConfig::default(),
            mood_labels: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.weather.fixture_path.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.data_dir.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 || self.forest.features_per_split == 0 {
            return bad("forest n_trees, min_leaf and features_per_split must be positive".into());
        }
        if self.featurize.join_tolerance_minutes < 0
            || self.featurize.vmc_window_hours <= 0
            || self.featurize.gps_window_hours <= 0
        {
            return bad("featurize windows must be positive".into());
        }
        if ![4, 24].contains(&self.correlation.vmc_window_hours) {
            return bad("correlation.vmc_window_hours must be 4 or 24".into());
        }
        if self.influence.radius_m <= 0.0 || self.influence.slack_minutes < 0 {
            return bad("influence radius must be positive and slack non-negative".into());
        }
        if self.weather.mode == WeatherMode::Fixture && self.weather.fixture_path.is_none() {
            return bad("weather.mode = \"fixture\" needs weather.fixture_path".into());
        }
        if let Some(labels) = &self.mood_labels {
            if labels.len() != 9 {
                return bad(format!("mood_labels needs 9 entries, got {}", labels.len()));
            }
        }
        for (token, user) in &self.tokens {
            if token.is_empty() {
                return bad("empty token".into());
            }
            happimeter_core::domain::UserId::new(user.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form. Tokens are excluded.
    pub fn hash(&self) -> String {
        let mut public = self.clone();
        public.tokens.clear();
        public.admin_tokens.clear();
        let json = serde_json::to_vec(&public).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn mood_label(&self, code: u8) -> String {
        match &self.mood_labels {
            Some(l) => l[(code as usize).clamp(1, 9) - 1].clone(),
            None => happimeter_core::domain::MoodState::from_code(code as i64)
                .map(|m| m.label().to_string())
                .unwrap_or_default(),
        }
    }
}
