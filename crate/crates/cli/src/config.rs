//! Effective-setting resolution: flags > environment > config file.
//!
//! Environment variables use the `WEBSTAR_` prefix (`WEBSTAR_SEED`,
//! `WEBSTAR_PARALLELISM`, `WEBSTAR_WINDOW`, `WEBSTAR_CUTOFF`,
//! `WEBSTAR_NOISE`, `WEBSTAR_BACKEND_URL`, `WEBSTAR_BACKEND_MODEL`). The
//! grader API key is only ever read from the environment; the variable
//! name (default `WEBSTAR_API_KEY`) can be overridden in the config file.

use std::path::Path;

use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub window: Option<usize>,
    pub cutoff: Option<u8>,
    pub noise: Option<f64>,
    pub irreversible: Option<f64>,
    #[serde(default)]
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
}

/// Fully resolved settings; every field records its final effective value.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub parallelism: usize,
    pub window: usize,
    pub cutoff: u8,
    pub noise: f64,
    pub irreversible: f64,
    pub backend_url: Option<String>,
    pub backend_model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

pub struct SettingsBuilder {
    file: FileConfig,
}

impl SettingsBuilder {
    pub fn load(config_path: Option<&Path>) -> Result<Self, String> {
        let file = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
                toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?
            }
            None => FileConfig::default(),
        };
        Ok(SettingsBuilder { file })
    }

    pub fn resolve(
        &self,
        seed_flag: Option<u64>,
        parallelism_flag: Option<usize>,
        window_flag: Option<usize>,
        cutoff_flag: Option<u8>,
        noise_flag: Option<f64>,
        irreversible_flag: Option<f64>,
    ) -> Settings {
        Settings {
            seed: pick(seed_flag, env_parse("WEBSTAR_SEED"), self.file.seed, 7),
            parallelism: pick(parallelism_flag, env_parse("WEBSTAR_PARALLELISM"), self.file.parallelism, 1),
            window: pick(window_flag, env_parse("WEBSTAR_WINDOW"), self.file.window, 1).max(1),
            cutoff: pick(cutoff_flag, env_parse("WEBSTAR_CUTOFF"), self.file.cutoff, 5),
            noise: pick(noise_flag, env_parse("WEBSTAR_NOISE"), self.file.noise, 0.4),
            irreversible: pick(irreversible_flag, env_parse("WEBSTAR_IRREVERSIBLE"), self.file.irreversible, 0.03),
            backend_url: env_string("WEBSTAR_BACKEND_URL").or_else(|| self.file.backend.url.clone()),
            backend_model: env_string("WEBSTAR_BACKEND_MODEL")
                .or_else(|| self.file.backend.model.clone())
                .unwrap_or_else(|| "o4-mini".to_string()),
            api_key_env: self
                .file
                .backend
                .api_key_env
                .clone()
                .unwrap_or_else(|| "WEBSTAR_API_KEY".to_string()),
            timeout_secs: self.file.backend.timeout_secs.unwrap_or(120),
        }
    }
}

fn pick<T: Copy>(flag: Option<T>, env: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(env).or(file).unwrap_or(default)
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Option<T> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn env_string(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}
