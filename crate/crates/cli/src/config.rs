//! Run configuration: a JSON file plus command-line overrides.
//!
//! The API key never lives in the config; only the name of the environment
//! variable that holds it does.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use fcpipe_core::gateway::{Gateway, GatewayConfig, MockFixture};
use fcpipe_core::synthesis::SynthesisConfig;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub catalog: Option<PathBuf>,
    pub pools: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub gateway: GatewaySection,
    pub synthesis: Option<SynthesisConfig>,
    pub quota_per_tool: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    /// "mock" or "http".
    #[serde(default = "default_backend")]
    pub backend: String,
    pub mock_fixture: Option<PathBuf>,
    pub base_url: Option<String>,
    pub api_key_env_name: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub max_in_flight: Option<usize>,
}

fn default_backend() -> String {
    "mock".to_string()
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            backend: default_backend(),
            mock_fixture: None,
            base_url: None,
            api_key_env_name: None,
            model: None,
            timeout_secs: None,
            max_retries: None,
            max_in_flight: None,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn build_gateway(&self) -> Result<Gateway> {
        let defaults = GatewayConfig::default();
        let section = &self.gateway;
        let config = GatewayConfig {
            base_url: section.base_url.clone().unwrap_or(defaults.base_url),
            api_key_env_name: section
                .api_key_env_name
                .clone()
                .unwrap_or(defaults.api_key_env_name),
            model: section.model.clone().unwrap_or(defaults.model),
            timeout_secs: section.timeout_secs.unwrap_or(defaults.timeout_secs),
            max_retries: section.max_retries.unwrap_or(defaults.max_retries),
            max_in_flight: section.max_in_flight.unwrap_or(defaults.max_in_flight),
        };
        match section.backend.as_str() {
            "http" => Ok(Gateway::http(config)),
            "mock" => {
                let fixture = match &section.mock_fixture {
                    Some(path) => MockFixture::load(path)
                        .with_context(|| format!("loading mock fixture {}", path.display()))?,
                    None => MockFixture::new(),
                };
                Ok(Gateway::mock(config, fixture))
            }
            other => anyhow::bail!("unknown gateway backend `{other}` (expected mock or http)"),
        }
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        self.synthesis.clone().unwrap_or_default()
    }
}
