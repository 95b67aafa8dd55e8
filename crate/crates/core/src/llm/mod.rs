//! Chat-completion gateway over remote, local, scripted, and oracle backends.

mod client;
mod oracle;
mod wire;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use client::LlmClient;
pub use oracle::oracle_policy;
pub use wire::{OllamaChatRequest, OllamaChatResponse, OpenAiChatRequest, OpenAiChatResponse};

/// Script entries that make the scripted backend fail instead of answering.
pub const SCRIPT_TIMEOUT_MARKER: &str = "<<timeout>>";
pub const SCRIPT_NETWORK_ERROR_MARKER: &str = "<<network-error>>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Local,
    Scripted,
    Oracle,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Remote => "remote",
            BackendKind::Local => "local",
            BackendKind::Scripted => "scripted",
            BackendKind::Oracle => "oracle",
        })
    }
}

fn default_model() -> String {
    "gpt-4o".into()
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout() -> f64 {
    60.0
}

/// Endpoint profile. Loaded from TOML; `script_file` entries are resolved
/// relative to the profile file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub script: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_file: Option<PathBuf>,
}

impl EndpointConfig {
    fn bare(kind: BackendKind) -> Self {
        Self {
            kind,
            base_url: None,
            model: default_model(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout: default_timeout(),
            api_key_env: None,
            script: Vec::new(),
            script_file: None,
        }
    }

    pub fn oracle() -> Self {
        Self::bare(BackendKind::Oracle)
    }

    pub fn scripted<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Self {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            ..Self::bare(BackendKind::Scripted)
        }
    }

    pub fn remote(base_url: impl Into<String>, model: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        Self {
            base_url: Some(base_url.into()),
            model: model.into(),
            api_key_env: Some(api_key_env.into()),
            ..Self::bare(BackendKind::Remote)
        }
    }

    pub fn local(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: Some(base_url.into()),
            model: model.into(),
            ..Self::bare(BackendKind::Local)
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidConfig(m.to_string()));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return bad("timeout must be positive");
        }
        match self.kind {
            BackendKind::Remote => {
                if self.base_url.is_none() || self.api_key_env.is_none() {
                    return bad("remote endpoints need base_url and api_key_env");
                }
            }
            BackendKind::Local => {
                if self.base_url.is_none() {
                    return bad("local endpoints need base_url");
                }
            }
            BackendKind::Scripted => {
                if self.script.is_empty() {
                    return bad("scripted endpoints need a non-empty script");
                }
            }
            BackendKind::Oracle => {}
        }
        Ok(())
    }

    /// Resolves a `--endpoint` argument: the built-in name `oracle`, or a
    /// path to a TOML profile.
    pub fn resolve(profile: &str) -> Result<Self, LlmError> {
        if profile == "oracle" {
            return Ok(Self::oracle());
        }
        Self::load(Path::new(profile))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg: EndpointConfig =
            toml::from_str(&text).map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        if let Some(file) = cfg.script_file.take() {
            let file = path.parent().unwrap_or(Path::new(".")).join(file);
            let script = std::fs::read_to_string(&file)
                .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", file.display())))?;
            cfg.script.extend(parse_script(&script));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits a script file into responses at lines containing only `---`.
pub fn parse_script(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim_end() == "---" {
            out.push(current.join("\n"));
            current.clear();
        } else {
            current.push(line);
        }
    }
    out.push(current.join("\n"));
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    /// Seconds.
    pub latency: f64,
    pub backend: BackendKind,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("network error: {0}")]
    Network(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("no messages to send")]
    EmptyConversation,
}

impl LlmError {
    /// Short kind tag for diagnostics such as `backend: timeout`.
    pub fn kind(&self) -> &'static str {
        match self {
            LlmError::Network(_) => "network",
            LlmError::Http { .. } => "http",
            LlmError::Timeout => "timeout",
            LlmError::ScriptExhausted => "script-exhausted",
            LlmError::Decode(_) => "decode",
            LlmError::InvalidConfig(_) => "config",
            LlmError::EmptyConversation => "empty-conversation",
        }
    }
}
