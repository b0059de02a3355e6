//! Application config file (TOML) and backend selection.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::{Backend, Gateway, GatewayOptions, HttpBackend, HttpBackendConfig, ScriptedBackend, TemplateSet};
use crate::model::SessionConfig;
use crate::{Error, Result};

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "CONIND_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub port: u16,
    pub session_dir: PathBuf,
    pub ui_dir: Option<PathBuf>,
    pub allow_debug: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { port: 8080, session_dir: PathBuf::from("sessions"), ui_dir: None, allow_debug: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Defaults for new sessions.
    pub session: SessionConfig,
    pub provider: HttpBackendConfig,
    /// Directory of `<template>.txt` files replacing the bundled prompts.
    pub templates_dir: Option<PathBuf>,
    pub serve: ServeConfig,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        let problems = cfg.session.problems();
        if !problems.is_empty() {
            return Err(Error::Invalid(format!("config: {}", problems.join("; "))));
        }
        Ok(cfg)
    }

    /// Reads `path`; defaults when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(AppConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Invalid(format!("config {}: {e}", p.display())))?;
                AppConfig::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match &self.templates_dir {
            Some(dir) => Ok(TemplateSet::with_overrides(dir)?),
            None => Ok(TemplateSet::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live,
    Scripted(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "live" {
            return Ok(BackendSpec::Live);
        }
        match s.strip_prefix("scripted:") {
            Some(p) if !p.is_empty() => Ok(BackendSpec::Scripted(PathBuf::from(p))),
            _ => Err(format!("expected `live` or `scripted:<path>`, got {s:?}")),
        }
    }
}

impl BackendSpec {
    pub fn backend(&self, app: &AppConfig) -> Result<Arc<dyn Backend>> {
        Ok(match self {
            BackendSpec::Live => Arc::new(HttpBackend::new(app.provider.clone())),
            BackendSpec::Scripted(p) => Arc::new(
                ScriptedBackend::from_path(p).map_err(|e| Error::Invalid(e.to_string()))?,
            ),
        })
    }

    /// Gateway for a session, with tier models and limits from `config`.
    pub fn gateway(&self, app: &AppConfig, config: &SessionConfig) -> Result<Gateway> {
        Ok(Gateway::new(self.backend(app)?, GatewayOptions::from_config(config)).with_templates(app.templates()?))
    }
}
