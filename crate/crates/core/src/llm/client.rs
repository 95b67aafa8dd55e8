use std::collections::VecDeque;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use tracing::{debug, warn};

use super::wire::{OllamaChatRequest, OllamaChatResponse, OllamaOptions, OpenAiChatRequest, OpenAiChatResponse};
use super::{
    oracle_policy, BackendKind, ChatMessage, CompletionResult, EndpointConfig, LlmError, SCRIPT_NETWORK_ERROR_MARKER,
    SCRIPT_TIMEOUT_MARKER,
};
use crate::par::{self, Parallelism};

/// A configured backend. Safe to share across threads; the scripted
/// backend pops its script under a mutex.
pub struct LlmClient {
    config: EndpointConfig,
    script: Mutex<VecDeque<String>>,
    http: OnceLock<Result<reqwest::blocking::Client, String>>,
    parallelism: Parallelism,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("kind", &self.config.kind).finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self {
            script: Mutex::new(config.script.iter().cloned().collect()),
            config,
            http: OnceLock::new(),
            parallelism: Parallelism::default(),
        })
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn kind(&self) -> BackendKind {
        self.config.kind
    }

    /// Restores the scripted backend to its first entry.
    pub fn reset(&self) {
        *self.script.lock().unwrap_or_else(|e| e.into_inner()) = self.config.script.iter().cloned().collect();
    }

    pub fn remaining_script(&self) -> usize {
        self.script.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn complete_chat(&self, messages: &[ChatMessage]) -> Result<CompletionResult, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyConversation);
        }
        let started = Instant::now();
        let (text, truncated) = match self.config.kind {
            BackendKind::Scripted => (self.pop_script()?, false),
            BackendKind::Oracle => (oracle_policy(messages), false),
            BackendKind::Remote | BackendKind::Local => self.http_with_retry(messages)?,
        };
        Ok(CompletionResult {
            text,
            latency: started.elapsed().as_secs_f64(),
            backend: self.config.kind,
            truncated,
        })
    }

    /// Completes several independent conversations. Results are returned in
    /// input order; scripted entries are consumed in input order too.
    pub fn complete_batch(&self, batch: &[Vec<ChatMessage>]) -> Vec<Result<CompletionResult, LlmError>> {
        match self.config.kind {
            BackendKind::Scripted => batch.iter().map(|m| self.complete_chat(m)).collect(),
            _ => par::map(self.parallelism, batch, |m| self.complete_chat(m)),
        }
    }

    fn pop_script(&self) -> Result<String, LlmError> {
        let next = self
            .script
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .ok_or(LlmError::ScriptExhausted)?;
        match next.as_str() {
            SCRIPT_TIMEOUT_MARKER => Err(LlmError::Timeout),
            SCRIPT_NETWORK_ERROR_MARKER => Err(LlmError::Network("scripted network failure".into())),
            _ => Ok(next),
        }
    }

    fn http(&self) -> Result<&reqwest::blocking::Client, LlmError> {
        let built = self.http.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs_f64(self.config.timeout))
                .build()
                .map_err(|e| e.to_string())
        });
        built.as_ref().map_err(|e| LlmError::Network(e.clone()))
    }

    // one retry on transient network errors, none on timeouts
    fn http_with_retry(&self, messages: &[ChatMessage]) -> Result<(String, bool), LlmError> {
        match self.http_once(messages) {
            Err(LlmError::Network(e)) => {
                warn!(error = %e, "transient network error, retrying once");
                self.http_once(messages)
            }
            other => other,
        }
    }

    fn http_once(&self, messages: &[ChatMessage]) -> Result<(String, bool), LlmError> {
        let base = self
            .config
            .base_url
            .as_deref()
            .ok_or_else(|| LlmError::InvalidConfig("missing base_url".into()))?
            .trim_end_matches('/');
        let client = self.http()?;
        let request = match self.config.kind {
            BackendKind::Remote => {
                let body = OpenAiChatRequest {
                    model: self.config.model.clone(),
                    messages: messages.to_vec(),
                    temperature: self.config.temperature,
                    max_tokens: self.config.max_tokens,
                };
                let mut req = client.post(format!("{base}/chat/completions")).json(&body);
                if let Some(var) = &self.config.api_key_env {
                    let key = std::env::var(var)
                        .map_err(|_| LlmError::InvalidConfig(format!("environment variable {var} is not set")))?;
                    req = req.bearer_auth(key);
                }
                req
            }
            _ => {
                let body = OllamaChatRequest {
                    model: self.config.model.clone(),
                    messages: messages.to_vec(),
                    stream: false,
                    options: OllamaOptions {
                        temperature: self.config.temperature,
                        num_predict: self.config.max_tokens,
                    },
                };
                client.post(format!("{base}/api/chat")).json(&body)
            }
        };
        debug!(kind = %self.config.kind, "sending chat completion");
        let response = request.send().map_err(map_reqwest)?;
        let status = response.status();
        let body = response.text().map_err(map_reqwest)?;
        if !status.is_success() {
            return Err(LlmError::Http { status: status.as_u16(), body });
        }
        match self.config.kind {
            BackendKind::Remote => {
                let parsed: OpenAiChatResponse =
                    serde_json::from_str(&body).map_err(|e| LlmError::Decode(e.to_string()))?;
                let choice = parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or_else(|| LlmError::Decode("no choices".into()))?;
                let truncated = choice.finish_reason.as_deref() == Some("length");
                Ok((choice.message.content.unwrap_or_default(), truncated))
            }
            _ => {
                let parsed: OllamaChatResponse =
                    serde_json::from_str(&body).map_err(|e| LlmError::Decode(e.to_string()))?;
                let truncated = parsed.done_reason.as_deref() == Some("length");
                Ok((parsed.message.content.unwrap_or_default(), truncated))
            }
        }
    }
}

fn map_reqwest(e: reqwest::Error) -> LlmError {
    if e.is_timeout() {
        LlmError::Timeout
    } else if e.is_decode() {
        LlmError::Decode(e.to_string())
    } else {
        LlmError::Network(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::user("hello")]
    }

    #[test]
    fn scripted_pops_in_order_then_exhausts() {
        let c = LlmClient::new(EndpointConfig::scripted(["A", "B"])).unwrap();
        assert_eq!(c.complete_chat(&msgs()).unwrap().text, "A");
        assert_eq!(c.complete_chat(&msgs()).unwrap().text, "B");
        assert_eq!(c.complete_chat(&msgs()), Err(LlmError::ScriptExhausted));
        c.reset();
        assert_eq!(c.complete_chat(&msgs()).unwrap().text, "A");
    }

    #[test]
    fn scripted_failure_markers() {
        let c = LlmClient::new(EndpointConfig::scripted([SCRIPT_TIMEOUT_MARKER, SCRIPT_NETWORK_ERROR_MARKER])).unwrap();
        assert_eq!(c.complete_chat(&msgs()), Err(LlmError::Timeout));
        assert!(matches!(c.complete_chat(&msgs()), Err(LlmError::Network(_))));
    }

    #[test]
    fn batch_preserves_issue_order() {
        let c = LlmClient::new(EndpointConfig::scripted(["1", "2", "3"])).unwrap();
        let out: Vec<String> = c
            .complete_batch(&[msgs(), msgs(), msgs()])
            .into_iter()
            .map(|r| r.unwrap().text)
            .collect();
        assert_eq!(out, vec!["1", "2", "3"]);
    }

    #[test]
    fn empty_conversation_rejected() {
        let c = LlmClient::new(EndpointConfig::oracle()).unwrap();
        assert_eq!(c.complete_chat(&[]), Err(LlmError::EmptyConversation));
    }

    #[test]
    fn oracle_is_repeatable() {
        let c = LlmClient::new(EndpointConfig::oracle()).unwrap();
        let m = vec![ChatMessage::user("(crops, 0.10, 0.20) (weeds, 0.30, 0.40) (crops, 0.50, 0.60)")];
        let a = c.complete_chat(&m).unwrap();
        let b = c.complete_chat(&m).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.backend, BackendKind::Oracle);
        assert!(!a.truncated);
    }
}
