//! TOML run configuration and backend construction. Command-line flags
//! override file values field by field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use lamsum::backend::{HttpBackend, HttpBackendConfig, MockBackend};
use lamsum::config::{Mode, VotingRule};
use lamsum::{Error, LlmBackend, PipelineConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    /// "mock:<behavior>" or "http".
    pub kind: String,
    pub endpoint: String,
    pub model: String,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let http = HttpBackendConfig::default();
        BackendSettings {
            kind: "mock:first-q".to_string(),
            endpoint: http.endpoint,
            model: http.model,
            max_in_flight: http.max_in_flight,
            timeout_ms: http.timeout_ms,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub backend: BackendSettings,
}

pub fn load_config(path: Option<&Path>) -> Result<CliConfig, Error> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_mode(s: &str) -> Result<Mode, Error> {
    match s {
        "lamsum" => Ok(Mode::Lamsum),
        "vanilla" => Ok(Mode::Vanilla),
        other => Err(Error::Config(format!(
            "unknown mode `{other}` (expected lamsum or vanilla)"
        ))),
    }
}

pub fn parse_voting(s: &str) -> Result<VotingRule, Error> {
    match s {
        "plurality" => Ok(VotingRule::Plurality),
        "pav-sequential" => Ok(VotingRule::PavSequential),
        "pav-exact" => Ok(VotingRule::PavExact),
        "borda" => Ok(VotingRule::Borda),
        other => Err(Error::Config(format!(
            "unknown voting rule `{other}` (expected plurality, pav-sequential, pav-exact, or borda)"
        ))),
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Lamsum => "lamsum",
        Mode::Vanilla => "vanilla",
    }
}

pub fn voting_name(rule: VotingRule) -> &'static str {
    match rule {
        VotingRule::Plurality => "plurality",
        VotingRule::PavSequential => "pav-sequential",
        VotingRule::PavExact => "pav-exact",
        VotingRule::Borda => "borda",
    }
}

pub fn build_backend(settings: &BackendSettings) -> Result<Box<dyn LlmBackend>, Error> {
    if let Some(name) = settings.kind.strip_prefix("mock:") {
        return MockBackend::parse(name).map(|b| Box::new(b) as Box<dyn LlmBackend>).ok_or_else(|| {
            Error::Config(format!(
                "unknown mock behavior `{name}` (expected first-q, last-q, random-q, \
                 reverse-rank, identity-rank, or perturb)"
            ))
        });
    }
    match settings.kind.as_str() {
        "http" => Ok(Box::new(HttpBackend::new(HttpBackendConfig {
            endpoint: settings.endpoint.clone(),
            model: settings.model.clone(),
            max_in_flight: settings.max_in_flight,
            timeout_ms: settings.timeout_ms,
            ..HttpBackendConfig::default()
        }))),
        other => Err(Error::Config(format!(
            "unknown backend `{other}` (expected http or mock:<behavior>)"
        ))),
    }
}
