//! Run configuration, loadable from one TOML file. Every field has a
//! default, so an empty file is valid.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bench::{BENCH_SIZE, SAMPLER_STEPS};
use crate::editor::{EditorConfig, TrainConfig};
use crate::mllm::{Fixtures, MllmClient, MllmError, Transport, DEFAULT_MODEL, DEFAULT_TIMEOUT};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub model: EditorConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub data: DataConfig,
    pub mllm: MllmConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: SAMPLER_STEPS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Samples per generated corpus.
    pub n_samples: usize,
    pub max_subs: usize,
    pub bench_size: usize,
    /// Multi-turn records written next to a generated corpus.
    pub records: usize,
    pub turns: usize,
    /// Chance that a turn re-edits an object touched earlier in the record.
    pub reedit_rate: f64,
    pub out_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            max_subs: 4,
            bench_size: BENCH_SIZE,
            records: 0,
            turns: 4,
            reedit_rate: 0.2,
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportProfile {
    #[default]
    Live,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MllmConfig {
    pub transport: TransportProfile,
    /// Directory of recorded request/response pairs for replay.
    pub fixtures: Option<PathBuf>,
    /// Overrides the endpoint environment variable when set.
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: f64,
}

impl Default for MllmConfig {
    fn default() -> Self {
        Self {
            transport: TransportProfile::Live,
            fixtures: None,
            endpoint: None,
            model: None,
            timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }
}

impl MllmConfig {
    /// Builds a client. The API key always comes from the environment.
    pub fn client(&self) -> Result<MllmClient, MllmError> {
        let client = match self.transport {
            TransportProfile::Replay => {
                let dir = self
                    .fixtures
                    .as_ref()
                    .ok_or_else(|| MllmError::Config("replay needs a fixtures directory".into()))?;
                MllmClient::replay(Fixtures::load(dir)?)
            }
            TransportProfile::Live => match &self.endpoint {
                Some(e) => {
                    let key = std::env::var(crate::mllm::ENV_API_KEY).ok();
                    let c = MllmClient::new(e.clone(), DEFAULT_MODEL, Transport::Live);
                    match key {
                        Some(k) => c.with_api_key(crate::mllm::ApiKey::new(k)),
                        None => c,
                    }
                }
                None => MllmClient::from_env()?,
            },
        };
        let client = match &self.model {
            Some(m) => client.with_model(m.clone()),
            None => client,
        };
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(MllmError::Config(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        Ok(client.with_timeout(Duration::from_secs_f64(self.timeout_secs)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), reason: e.to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
