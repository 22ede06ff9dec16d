//! Chat-completion client for OpenAI-compatible endpoints, typed-output
//! parsing with a relaxed fallback predictor, and per-stratum error
//! accounting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dataset::Label;
use crate::promptkit::{
    render_prompt, render_relaxed, CompiledPrompt, Demo, FieldKind, PromptError, PromptTemplate,
    SchemaField, REASONING_FIELD,
};

pub const API_KEY_ENV: &str = "ASASF_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` should be {expected}")]
    TypeMismatch { field: String, expected: &'static str },
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("schema has no {0} field")]
    SchemaUnsupported(&'static str),
    #[error("fallback response could not be parsed: {0}")]
    FallbackParseFailed(String),
}

fn default_endpoint() -> String {
    "http://localhost:11434".into()
}
fn default_model() -> String {
    "mistral:7b".into()
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Base delay; attempt `n` waits `base * 2^(n-1)`.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            endpoint: default_endpoint(),
            model: default_model(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            concurrency: default_concurrency(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.concurrency == 0 {
            return Err(LlmError::Config("concurrency cap must be at least 1".into()));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::Config("model id is empty".into()));
        }
        Ok(())
    }

    /// Full chat-completions URL for `endpoint`, which may be a bare host, a
    /// `/v1` base, or the complete path.
    pub fn chat_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

/// Assistant text plus the number of HTTP attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

/// Anything that can answer a compiled prompt.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &CompiledPrompt) -> Result<Completion, LlmError>;
    fn model_id(&self) -> &str;
}

/// Backend driven by a closure; for tests and offline experiments.
pub struct FnBackend<F> {
    model: String,
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&CompiledPrompt) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(model: impl Into<String>, respond: F) -> FnBackend<F> {
        FnBackend {
            model: model.into(),
            respond,
        }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&CompiledPrompt) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, prompt: &CompiledPrompt) -> Result<Completion, LlmError> {
        (self.respond)(prompt).map(|text| Completion { text, attempts: 1 })
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Gate {
        Gate {
            available: Mutex::new(permits),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut n = self.available.lock().expect("gate poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.available.lock().expect("gate poisoned") += 1;
        self.gate.freed.notify_one();
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking OpenAI-compatible client (`POST /v1/chat/completions`).
///
/// Transport errors, timeouts, 429 and 5xx responses are retried with
/// exponential backoff; other 4xx responses fail immediately. A bearer token
/// is sent when `ASASF_API_KEY` is set.
pub struct HttpChatClient {
    cfg: ModelConfig,
    url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    gate: Gate,
}

impl fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("url", &self.url)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatClient {
    pub fn new(cfg: ModelConfig) -> Result<HttpChatClient, LlmError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        HttpChatClient::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: ModelConfig, api_key: Option<String>) -> Result<HttpChatClient, LlmError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpChatClient {
            url: cfg.chat_url(),
            gate: Gate::new(cfg.concurrency),
            cfg,
            api_key,
            http,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Result<String, AttemptError> {
        let mut request = self.http.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(AttemptError::RateLimited);
        }
        if status.is_server_error() {
            return Err(AttemptError::Transport(format!("HTTP {status}")));
        }
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(AttemptError::Fatal(LlmError::HttpStatus {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(LlmError::Protocol(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AttemptError::Fatal(LlmError::Protocol("no assistant message".into())))
    }
}

enum AttemptError {
    Timeout,
    RateLimited,
    Transport(String),
    Fatal(LlmError),
}

impl ChatBackend for HttpChatClient {
    fn complete(&self, prompt: &CompiledPrompt) -> Result<Completion, LlmError> {
        let _permit = self.gate.acquire();
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &prompt.system_text,
                },
                ChatMessage {
                    role: "user",
                    content: &prompt.user_text,
                },
            ],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
        };
        let max_attempts = self.cfg.max_retries + 1;
        let mut last = AttemptError::Transport("no attempt made".into());
        for attempt in 1..=max_attempts {
            match self.attempt(&body) {
                Ok(text) => {
                    log::debug!("completion from {} after {attempt} attempt(s)", self.url);
                    return Ok(Completion {
                        text,
                        attempts: attempt,
                    });
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(e) => {
                    let what = match &e {
                        AttemptError::Timeout => "timeout".to_string(),
                        AttemptError::RateLimited => "rate limited".to_string(),
                        AttemptError::Transport(m) => m.clone(),
                        AttemptError::Fatal(_) => unreachable!(),
                    };
                    log::warn!("attempt {attempt}/{max_attempts} to {} failed: {what}", self.url);
                    last = e;
                    if attempt < max_attempts {
                        let factor = 1u64 << (attempt - 1).min(16);
                        let delay = self.cfg.retry_backoff_ms.saturating_mul(factor).min(30_000);
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(match last {
            AttemptError::Timeout => LlmError::Timeout {
                attempts: max_attempts,
            },
            AttemptError::RateLimited => LlmError::RateLimited {
                attempts: max_attempts,
            },
            AttemptError::Transport(message) => LlmError::TransportError {
                attempts: max_attempts,
                message,
            },
            AttemptError::Fatal(e) => e,
        })
    }

    fn model_id(&self) -> &str {
        &self.cfg.model
    }
}

/// How a judgment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsePath {
    Typed,
    Fallback,
    Failed,
}

impl fmt::Display for ParsePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParsePath::Typed => "typed",
            ParsePath::Fallback => "fallback",
            ParsePath::Failed => "failed",
        })
    }
}

/// Model output for one item. `score` and `label` are present exactly when
/// `parse_path` is not `Failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub score: Option<f64>,
    pub label: Option<Label>,
    pub feedback: String,
    pub parse_path: ParsePath,
    /// Text the judgment was parsed from (the fallback response when the
    /// fallback was used).
    pub raw_text: String,
    /// The typed attempt's text, kept for audit when the fallback ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Judgment {
    pub fn failed(raw_text: impl Into<String>, error: impl Into<String>) -> Judgment {
        Judgment {
            score: None,
            label: None,
            feedback: String::new(),
            parse_path: ParsePath::Failed,
            raw_text: raw_text.into(),
            first_raw: None,
            error: Some(error.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.parse_path == ParsePath::Failed
    }
}

struct SchemaRoles<'a> {
    score: &'a str,
    label: &'a str,
    feedback: Option<&'a str>,
}

fn schema_roles(schema: &[SchemaField]) -> Result<SchemaRoles<'_>, ParseError> {
    let score = schema
        .iter()
        .find(|f| f.kind == FieldKind::Real01)
        .ok_or(ParseError::SchemaUnsupported("score"))?;
    let label = schema
        .iter()
        .find(|f| f.kind == FieldKind::Label3)
        .ok_or(ParseError::SchemaUnsupported("label"))?;
    let feedback = schema
        .iter()
        .find(|f| f.name == "feedback")
        .or_else(|| {
            schema
                .iter()
                .rev()
                .find(|f| f.kind == FieldKind::FreeText && f.name != REASONING_FIELD)
        });
    Ok(SchemaRoles {
        score: &score.name,
        label: &label.name,
        feedback: feedback.map(|f| f.name.as_str()),
    })
}

/// The first `{...}` in `raw` that parses as a JSON object.
pub fn first_json_object(raw: &str) -> Option<Map<String, Value>> {
    raw.match_indices('{').find_map(|(pos, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

fn check_score(score: f64) -> Result<f64, ParseError> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(ParseError::ScoreOutOfRange(score))
    }
}

/// Strict parse of a typed response against `schema`.
pub fn parse_typed(raw: &str, schema: &[SchemaField]) -> Result<Judgment, ParseError> {
    let roles = schema_roles(schema)?;
    let object = first_json_object(raw).ok_or(ParseError::NoJsonFound)?;
    let mut score = None;
    let mut label = None;
    let mut feedback = String::new();
    for field in schema {
        let value = object
            .get(&field.name)
            .ok_or_else(|| ParseError::MissingField(field.name.clone()))?;
        let mismatch = |expected| ParseError::TypeMismatch {
            field: field.name.clone(),
            expected,
        };
        match field.kind {
            FieldKind::Real01 => {
                let x = match value {
                    Value::Number(n) => n.as_f64().ok_or_else(|| mismatch("a number"))?,
                    Value::String(s) => s.trim().parse::<f64>().map_err(|_| mismatch("a number"))?,
                    _ => return Err(mismatch("a number")),
                };
                let x = check_score(x)?;
                if field.name == roles.score {
                    score = Some(x);
                }
            }
            FieldKind::Label3 => {
                let l = value
                    .as_str()
                    .and_then(Label::canonicalize)
                    .ok_or_else(|| mismatch("a canonical label"))?;
                if field.name == roles.label {
                    label = Some(l);
                }
            }
            FieldKind::FreeText => {
                let text = value.as_str().ok_or_else(|| mismatch("a string"))?;
                if Some(field.name.as_str()) == roles.feedback {
                    feedback = text.to_string();
                }
            }
        }
    }
    Ok(Judgment {
        score,
        label,
        feedback,
        parse_path: ParsePath::Typed,
        raw_text: raw.to_string(),
        first_raw: None,
        error: None,
    })
}

fn field_line_regex(name: &str) -> Regex {
    let words: Vec<String> = name
        .split('_')
        .filter(|w| !w.is_empty())
        .map(regex::escape)
        .collect();
    let pattern = format!(r"(?i)^[\s>*#-]*\**{}\**\s*:[\s*]*", words.join(r"[\s_]+"));
    Regex::new(&pattern).expect("field pattern is valid")
}

/// Parse labelled `Name: value` lines. A field's value runs from its label to
/// the next recognised label line.
pub fn parse_relaxed(raw: &str, schema: &[SchemaField]) -> Result<Judgment, ParseError> {
    let roles = schema_roles(schema)?;
    let patterns: Vec<(&str, Regex)> = schema
        .iter()
        .map(|f| (f.name.as_str(), field_line_regex(&f.name)))
        .collect();

    let mut values: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for line in raw.lines() {
        if let Some((name, m)) = patterns
            .iter()
            .find_map(|(name, re)| re.find(line).map(|m| (*name, m)))
        {
            if !values.contains_key(name) {
                values.insert(name, vec![&line[m.end()..]]);
                current = Some(name);
                continue;
            }
            current = None;
            continue;
        }
        if let Some(name) = current {
            values.get_mut(name).expect("current field exists").push(line);
        }
    }
    let joined = |name: &str| values.get(name).map(|lines| lines.join("\n").trim().to_string());

    let failed = |why: String| ParseError::FallbackParseFailed(why);
    let score_text = joined(roles.score).ok_or_else(|| failed("no score line".into()))?;
    let number = Regex::new(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
        .expect("number pattern is valid");
    let score = number
        .find(score_text.trim_start_matches(['*', '"', '\'']))
        .and_then(|m| m.as_str().parse::<f64>().ok())
        .ok_or_else(|| failed(format!("score `{score_text}` is not a number")))?;
    let score = check_score(score)?;
    let label_text = joined(roles.label).ok_or_else(|| failed("no label line".into()))?;
    let label = Label::canonicalize(&label_text)
        .ok_or_else(|| failed(format!("label `{label_text}` is not canonical")))?;
    let feedback = roles.feedback.and_then(joined).unwrap_or_default();
    Ok(Judgment {
        score: Some(score),
        label: Some(label),
        feedback,
        parse_path: ParsePath::Fallback,
        raw_text: raw.to_string(),
        first_raw: None,
        error: None,
    })
}

/// Re-ask with the relaxed prompt and parse labelled lines. Returns a
/// `Failed` judgment when the response cannot be parsed; transport errors
/// propagate.
pub fn fallback_parse(
    backend: &dyn ChatBackend,
    relaxed_prompt: &CompiledPrompt,
    first_raw: &str,
) -> Result<Judgment, LlmError> {
    let completion = backend.complete(relaxed_prompt)?;
    let mut judgment = match parse_relaxed(&completion.text, &relaxed_prompt.output_schema) {
        Ok(j) => j,
        Err(e) => Judgment::failed(completion.text.clone(), e.to_string()),
    };
    judgment.first_raw = Some(first_raw.to_string());
    Ok(judgment)
}

/// Ledger key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stratum {
    pub model: String,
    pub pipeline: String,
    pub k: usize,
}

impl Stratum {
    pub fn new(model: impl Into<String>, pipeline: impl Into<String>, k: usize) -> Stratum {
        Stratum {
            model: model.into(),
            pipeline: pipeline.into(),
            k,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub total: u64,
    pub typed_failures: u64,
    pub fallback_successes: u64,
    pub hard_failures: u64,
}

impl LedgerCounts {
    pub fn typed_successes(&self) -> u64 {
        self.total - self.typed_failures
    }

    pub fn typed_failure_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.typed_failures as f64 / self.total as f64
        }
    }

    pub fn hard_failure_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hard_failures as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: &LedgerCounts) {
        self.total += other.total;
        self.typed_failures += other.typed_failures;
        self.fallback_successes += other.fallback_successes;
        self.hard_failures += other.hard_failures;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    #[serde(flatten)]
    pub stratum: Stratum,
    #[serde(flatten)]
    pub counts: LedgerCounts,
}

/// Serializable view of an [`ErrorLedger`], ordered by stratum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub rows: Vec<LedgerRow>,
}

impl LedgerSnapshot {
    pub fn totals(&self) -> LedgerCounts {
        let mut sum = LedgerCounts::default();
        for row in &self.rows {
            sum.add(&row.counts);
        }
        sum
    }

    pub fn get(&self, stratum: &Stratum) -> Option<LedgerCounts> {
        self.rows
            .iter()
            .find(|r| &r.stratum == stratum)
            .map(|r| r.counts)
    }
}

/// Thread-safe typed-predictor outcome counters.
#[derive(Debug, Default)]
pub struct ErrorLedger {
    counts: Mutex<BTreeMap<Stratum, LedgerCounts>>,
}

impl ErrorLedger {
    pub fn new() -> ErrorLedger {
        ErrorLedger::default()
    }

    pub fn record(&self, stratum: &Stratum, outcome: ParsePath) {
        let mut map = self.counts.lock().expect("ledger poisoned");
        let c = map.entry(stratum.clone()).or_default();
        c.total += 1;
        match outcome {
            ParsePath::Typed => {}
            ParsePath::Fallback => {
                c.typed_failures += 1;
                c.fallback_successes += 1;
            }
            ParsePath::Failed => {
                c.typed_failures += 1;
                c.hard_failures += 1;
            }
        }
    }

    pub fn counts(&self, stratum: &Stratum) -> LedgerCounts {
        self.counts
            .lock()
            .expect("ledger poisoned")
            .get(stratum)
            .copied()
            .unwrap_or_default()
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let map = self.counts.lock().expect("ledger poisoned");
        LedgerSnapshot {
            rows: map
                .iter()
                .map(|(stratum, counts)| LedgerRow {
                    stratum: stratum.clone(),
                    counts: *counts,
                })
                .collect(),
        }
    }
}

/// Typed predictor with fallback: render the typed prompt, parse strictly,
/// and on failure re-ask with the relaxed prompt.
pub struct Predictor<'a> {
    backend: &'a dyn ChatBackend,
    ledger: &'a ErrorLedger,
}

impl<'a> Predictor<'a> {
    pub fn new(backend: &'a dyn ChatBackend, ledger: &'a ErrorLedger) -> Predictor<'a> {
        Predictor { backend, ledger }
    }

    pub fn predict(
        &self,
        template: &PromptTemplate,
        inputs: &BTreeMap<String, String>,
        demos: &[Demo],
        stratum: &Stratum,
    ) -> Result<Judgment, PromptError> {
        let prompt = render_prompt(template, inputs, demos)?;
        let judgment = match self.backend.complete(&prompt) {
            Err(e) => Judgment::failed("", e.to_string()),
            Ok(first) => match parse_typed(&first.text, &prompt.output_schema) {
                Ok(j) => j,
                Err(typed_err) => {
                    log::debug!("typed parse failed ({typed_err}); using fallback predictor");
                    let relaxed = render_relaxed(template, inputs, demos)?;
                    match fallback_parse(self.backend, &relaxed, &first.text) {
                        Ok(j) => j,
                        Err(e) => {
                            let mut j = Judgment::failed("", e.to_string());
                            j.first_raw = Some(first.text);
                            j
                        }
                    }
                }
            },
        };
        self.ledger.record(stratum, judgment.parse_path);
        Ok(judgment)
    }
}

impl FromStr for ParsePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "typed" => Ok(ParsePath::Typed),
            "fallback" => Ok(ParsePath::Fallback),
            "failed" => Ok(ParsePath::Failed),
            other => Err(format!("unknown parse path `{other}`")),
        }
    }
}
