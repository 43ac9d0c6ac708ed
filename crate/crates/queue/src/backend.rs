//! Translator backends: a chat-completions HTTP client and two mocks.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use tarjama_core::{TranslationUnit, Tokenizer};
use thiserror::Error;

pub const DEFAULT_MAX_INPUT_TOKENS: usize = 512;
pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const MAX_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_PROMPT_TEMPLATE: &str = "Translate to {target_language}:\n{source}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    HttpEndpoint,
    MockIdentity,
    MockTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_input_tokens: usize,
    pub temperature: f64,
    /// Retries after the first failed request.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
    pub prompt_template: String,
    pub target_language: String,
    /// Lookup for `mock-table`, keyed by source text.
    pub table: BTreeMap<String, String>,
    /// Simulated latency per unit for the mocks.
    pub delay_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            id: "mock".into(),
            kind: BackendKind::MockIdentity,
            endpoint: None,
            model: None,
            api_key_env: None,
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            timeout_secs: 120,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            target_language: "Arabic".into(),
            table: BTreeMap::new(),
            delay_ms: 0,
        }
    }
}

impl BackendConfig {
    pub fn mock_identity(id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: BackendKind::MockIdentity, ..Self::default() }
    }

    pub fn mock_table(id: impl Into<String>, table: BTreeMap<String, String>) -> Self {
        Self { id: id.into(), kind: BackendKind::MockTable, table, ..Self::default() }
    }

    pub fn http(id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: BackendKind::HttpEndpoint,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::Config(m));
        if self.id.is_empty() {
            return bad("backend id is empty".into());
        }
        if self.max_input_tokens == 0 {
            return bad("max_input_tokens must be positive".into());
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, {MAX_TEMPERATURE}]", self.temperature));
        }
        if !self.prompt_template.contains("{source}") {
            return bad("prompt_template lacks a {source} placeholder".into());
        }
        if self.kind == BackendKind::HttpEndpoint && self.endpoint.is_none() {
            return bad(format!("backend `{}` needs an endpoint", self.id));
        }
        Ok(())
    }

    pub fn render_prompt(&self, source: &str) -> String {
        self.prompt_template
            .replace("{target_language}", &self.target_language)
            .replace("{source}", source)
    }

    /// Tokens the template adds around the source text.
    pub fn prompt_reserve(&self, tokenizer: &Tokenizer) -> usize {
        tokenizer.count(&self.render_prompt(""))
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("environment variable {0} with the API key is not set")]
    MissingApiKey(String),
    #[error("prompt has {tokens} tokens, over the backend limit of {limit}")]
    OverBudget { tokens: usize, limit: usize },
    #[error("no table entry for source text {0:?}")]
    TableMiss(String),
    #[error("request failed after {attempts} attempts: {detail}")]
    Http { attempts: u32, detail: String },
    #[error("unusable response: {0}")]
    InvalidResponse(String),
}

/// Anything that turns one unit into target-language text.
pub trait Translator {
    fn id(&self) -> &str;
    fn translate(&self, unit: &TranslationUnit) -> Result<String, BackendError>;
}

/// A configured backend together with the tokenizer used for its input budget.
pub struct Backend {
    config: BackendConfig,
    tokenizer: Tokenizer,
    client: Option<ChatClient>,
}

impl Backend {
    pub fn new(config: BackendConfig, tokenizer: Tokenizer) -> Result<Self, BackendError> {
        config.validate()?;
        let client = match config.kind {
            BackendKind::HttpEndpoint => Some(ChatClient::new(&config)?),
            _ => None,
        };
        Ok(Self { config, tokenizer, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }
}

impl Translator for Backend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn translate(&self, unit: &TranslationUnit) -> Result<String, BackendError> {
        translate_chunk(self, unit)
    }
}

/// Translates one unit. Whitespace-only sources are returned unchanged
/// without a request.
pub fn translate_chunk(backend: &Backend, unit: &TranslationUnit) -> Result<String, BackendError> {
    let config = &backend.config;
    let prompt = config.render_prompt(&unit.source_text);
    let tokens = backend.tokenizer.count(&prompt);
    if tokens > config.max_input_tokens {
        return Err(BackendError::OverBudget { tokens, limit: config.max_input_tokens });
    }
    if unit.source_text.trim().is_empty() {
        return Ok(unit.source_text.clone());
    }
    if config.delay_ms > 0 {
        thread::sleep(Duration::from_millis(config.delay_ms));
    }
    match config.kind {
        BackendKind::MockIdentity => Ok(unit.source_text.clone()),
        BackendKind::MockTable => config
            .table
            .get(&unit.source_text)
            .cloned()
            .ok_or_else(|| BackendError::TableMiss(unit.source_text.clone())),
        BackendKind::HttpEndpoint => {
            let client = backend.client.as_ref().expect("http backends own a client");
            client.complete(&prompt)
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    content: Option<String>,
}

/// Exponential backoff schedule: `initial * 2^retry`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub max_retries: u32,
    pub initial_ms: u64,
    pub max_ms: u64,
}

impl Backoff {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_ms.saturating_mul(factor).min(self.max_ms))
    }

    /// Calls `attempt` until it succeeds, fails permanently, or retries run
    /// out. `attempt` returns `Err((retryable, detail))` on failure.
    pub fn run<T>(
        &self,
        what: &str,
        mut attempt: impl FnMut() -> Result<T, (bool, String)>,
    ) -> Result<T, BackendError> {
        let mut tries = 0;
        loop {
            tries += 1;
            match attempt() {
                Ok(v) => {
                    if tries > 1 {
                        info!("{what}: succeeded on attempt {tries}");
                    }
                    return Ok(v);
                }
                Err((retryable, detail)) => {
                    if !retryable || tries > self.max_retries {
                        return Err(BackendError::Http { attempts: tries, detail });
                    }
                    let delay = self.delay(tries - 1);
                    warn!("{what}: attempt {tries} failed ({detail}); retrying in {delay:?}");
                    thread::sleep(delay);
                }
            }
        }
    }
}

/// Blocking JSON POST client shared by the translator and scorer backends.
#[derive(Debug, Clone)]
pub(crate) struct JsonPoster {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    pub(crate) backoff: Backoff,
}

impl JsonPoster {
    pub(crate) fn new(
        endpoint: String,
        api_key_env: Option<&str>,
        timeout: Duration,
        backoff: Backoff,
    ) -> Result<Self, BackendError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingApiKey(var.to_owned()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent, endpoint, api_key, backoff })
    }

    pub(crate) fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, BackendError> {
        self.backoff.run(&self.endpoint, || {
            let mut request = self.agent.post(&self.endpoint);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            let mut response = request.send_json(body).map_err(|e| (true, e.to_string()))?;
            let status = response.status().as_u16();
            if status == 429 || status >= 500 {
                return Err((true, format!("HTTP {status}")));
            }
            if !(200..300).contains(&status) {
                let text = response.body_mut().read_to_string().unwrap_or_default();
                return Err((false, format!("HTTP {status}: {text}")));
            }
            response.body_mut().read_json::<R>().map_err(|e| (false, format!("bad JSON body: {e}")))
        })
    }
}

/// Chat-completions client: one user message per request.
#[derive(Debug, Clone)]
pub struct ChatClient {
    poster: JsonPoster,
    model: Option<String>,
    temperature: f64,
}

impl ChatClient {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::Config(format!("backend `{}` needs an endpoint", config.id)))?;
        let backoff = Backoff {
            max_retries: config.max_retries,
            initial_ms: config.initial_backoff_ms,
            max_ms: config.max_backoff_ms,
        };
        let poster = JsonPoster::new(
            endpoint,
            config.api_key_env.as_deref(),
            Duration::from_secs(config.timeout_secs),
            backoff,
        )?;
        Ok(Self { poster, model: config.model.clone(), temperature: config.temperature })
    }

    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let request = ChatRequest {
            model: self.model.as_deref(),
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: self.temperature,
        };
        let response: ChatResponse = self.poster.post(&request)?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::InvalidResponse("no choices[0].message.content".into()))
    }
}
