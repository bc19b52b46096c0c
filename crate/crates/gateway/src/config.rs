//! Gateway configuration: TOML file describing the listen address, the
//! classifier backend (local artifact or delegating LLM), optional
//! per-domain upstreams, and reject behavior.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gqr_core::llm::LlmRouterConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid gateway config: {0}")]
    Invalid(String),
}

/// What a rejected query gets back in forwarding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RejectBehavior {
    /// 200 with a structured refusal body clients can program against.
    #[default]
    #[serde(alias = "structured-refusal")]
    StructuredRefusal,
    /// 403 with a machine-readable reason, for drop-in proxy setups.
    #[serde(rename = "http_403", alias = "http-403")]
    Http403,
}

/// Delegating-backend section: the chat endpoint plus the domain list
/// the prompt is instantiated with (an artifact carries its own).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmSection {
    #[serde(flatten)]
    pub config: LlmRouterConfig,
    pub domains: Vec<String>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".to_string()
}

fn default_body_limit() -> usize {
    64 * 1024
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Local model artifact. Exactly one of `model` / `llm` must be set.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub llm: Option<LlmSection>,
    /// Serve-time gate override; requires a local model.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub reject: RejectBehavior,
    #[serde(default = "default_body_limit")]
    pub body_limit_bytes: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Absent: classify-only mode. Present: must cover every domain.
    #[serde(default)]
    pub upstreams: Option<BTreeMap<String, String>>,
}

impl GatewayConfig {
    pub fn for_model(model: impl Into<PathBuf>) -> Self {
        Self {
            listen: default_listen(),
            model: Some(model.into()),
            llm: None,
            threshold: None,
            reject: RejectBehavior::default(),
            body_limit_bytes: default_body_limit(),
            timeout_ms: default_timeout_ms(),
            upstreams: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: GatewayConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.model, &self.llm) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "set either `model` or `llm`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "one of `model` or `llm` is required".into(),
                ))
            }
            _ => {}
        }
        if let Some(t) = self.threshold {
            if self.model.is_none() {
                return Err(ConfigError::Invalid(
                    "`threshold` requires a local `model`; the delegating backend has no gate to tune".into(),
                ));
            }
            if !(t > 0.0 && t < 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "threshold {t} must lie strictly between 0 and 1"
                )));
            }
        }
        if let Some(llm) = &self.llm {
            llm.config
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if llm.domains.len() < 2 {
                return Err(ConfigError::Invalid(
                    "llm.domains needs at least two domains".into(),
                ));
            }
        }
        if self.body_limit_bytes == 0 {
            return Err(ConfigError::Invalid("body_limit_bytes must be positive".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::Invalid("timeout_ms must be positive".into()));
        }
        if self.listen.is_empty() {
            return Err(ConfigError::Invalid("listen address must not be empty".into()));
        }
        Ok(())
    }

    /// Checks the upstream map against the loaded router's domains:
    /// every key must be a domain and every domain must have an
    /// upstream. Call once the backend is loaded.
    pub fn validate_upstreams(&self, domains: &[String]) -> Result<(), ConfigError> {
        let Some(upstreams) = &self.upstreams else {
            return Ok(());
        };
        for key in upstreams.keys() {
            if !domains.contains(key) {
                return Err(ConfigError::Invalid(format!(
                    "upstream key {key:?} is not a model domain"
                )));
            }
        }
        for d in domains {
            if !upstreams.contains_key(d) {
                return Err(ConfigError::Invalid(format!(
                    "domain {d:?} has no upstream; forwarding mode must cover all domains"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_model_config_round_trips_with_defaults() {
        let toml_text = "model = \"m.gqrm\"\n";
        let config: GatewayConfig = toml::from_str(toml_text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.listen, "127.0.0.1:8080");
        assert_eq!(config.body_limit_bytes, 64 * 1024);
        assert_eq!(config.reject, RejectBehavior::StructuredRefusal);
        assert_eq!(config.upstreams, None);
    }

    #[test]
    fn reject_behavior_accepts_both_spellings() {
        for text in ["reject = \"http_403\"", "reject = \"http-403\""] {
            let full = format!("model = \"m\"\n{text}\n");
            let config: GatewayConfig = toml::from_str(&full).unwrap();
            assert_eq!(config.reject, RejectBehavior::Http403);
        }
    }

    #[test]
    fn backend_choice_is_exclusive_and_required() {
        let neither: GatewayConfig = toml::from_str("listen = \"127.0.0.1:0\"\n").unwrap();
        assert!(neither.validate().is_err());

        let both = "model = \"m\"\n[llm]\nendpoint = \"http://x\"\nmodel = \"m\"\n\
                    timeout_ms = 1000\nmax_retries = 1\ntemperature = 0.0\n\
                    domains = [\"a\", \"b\"]\n";
        let config: GatewayConfig = toml::from_str(both).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn threshold_needs_a_local_model_and_open_interval() {
        let llm_only = "\n[llm]\nendpoint = \"http://x\"\nmodel = \"m\"\n\
                        timeout_ms = 1000\nmax_retries = 1\ntemperature = 0.0\n\
                        domains = [\"a\", \"b\"]\n";
        let mut config: GatewayConfig = toml::from_str(llm_only).unwrap();
        config.threshold = Some(0.9);
        assert!(config.validate().is_err());

        let mut with_model: GatewayConfig = toml::from_str("model = \"m\"\n").unwrap();
        with_model.threshold = Some(1.0);
        assert!(with_model.validate().is_err());
        with_model.threshold = Some(0.99);
        assert!(with_model.validate().is_ok());
    }

    #[test]
    fn upstream_map_must_exactly_cover_the_domains() {
        let text = "model = \"m\"\n[upstreams]\nlaw = \"http://a\"\nfinance = \"http://b\"\n";
        let config: GatewayConfig = toml::from_str(text).unwrap();
        let domains = vec!["law".to_string(), "finance".to_string(), "health".to_string()];
        let err = config.validate_upstreams(&domains).unwrap_err();
        assert!(err.to_string().contains("health"), "{err}");

        let extra = "model = \"m\"\n[upstreams]\nlaw = \"http://a\"\nfinance = \"http://b\"\n\
                     health = \"http://c\"\nweather = \"http://d\"\n";
        let config: GatewayConfig = toml::from_str(extra).unwrap();
        let err = config.validate_upstreams(&domains).unwrap_err();
        assert!(err.to_string().contains("weather"), "{err}");

        let exact = "model = \"m\"\n[upstreams]\nlaw = \"http://a\"\nfinance = \"http://b\"\n\
                     health = \"http://c\"\n";
        let config: GatewayConfig = toml::from_str(exact).unwrap();
        config.validate_upstreams(&domains).unwrap();
        assert!(config.validate_upstreams(&[]).is_err(), "no domains covers nothing");

        let classify_only: GatewayConfig = toml::from_str("model = \"m\"\n").unwrap();
        classify_only.validate_upstreams(&domains).unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "model = \"m\"\nthresold = 0.9\n";
        assert!(toml::from_str::<GatewayConfig>(text).is_err());
    }
}
