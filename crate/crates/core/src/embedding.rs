//! Per-token embedding matrices behind a pluggable backend.
//!
//! Two backends exist: a remote service speaking a small JSON protocol and a
//! deterministic hash-based embedder used for tests and offline runs. Both
//! return matrices whose rows are unit length, so MaxSim scores computed over
//! them are sums of cosines.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Rows whose norm is already this close to one are left untouched, so
/// re-normalizing a normalized matrix is the identity.
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("malformed embedding response: {0}")]
    Protocol(String),
    #[error("invalid embedder configuration: {0}")]
    Config(String),
    #[error("zero-norm embedding row for token `{0}`")]
    ZeroVector(String),
}

/// Lowercase, split on Unicode whitespace, and give every non-alphanumeric
/// character its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() {
                current.extend(ch.to_lowercase());
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_lowercase().collect());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Which side of a MaxSim comparison a text is encoded for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Query,
    Document,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Query => "query",
            Role::Document => "document",
        }
    }
}

/// Token-aligned embedding rows, stored row-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingMatrix {
    tokens: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl TokenEmbeddingMatrix {
    /// Build from raw rows, normalizing each to unit length.
    pub fn from_rows(
        tokens: Vec<String>,
        rows: Vec<Vec<f64>>,
        dim: usize,
    ) -> Result<TokenEmbeddingMatrix, EmbeddingError> {
        if tokens.len() != rows.len() {
            return Err(EmbeddingError::Protocol(format!(
                "{} tokens but {} vectors",
                tokens.len(),
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (token, row) in tokens.iter().zip(&rows) {
            if row.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(EmbeddingError::ZeroVector(token.clone()));
            }
            data.extend(row.iter().map(|x| (x / norm) as f32));
        }
        Ok(TokenEmbeddingMatrix { tokens, dim, data })
    }

    /// Wrap already-packed `f32` rows without touching their values, except for
    /// rows whose norm is measurably off one.
    pub fn from_packed(
        tokens: Vec<String>,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<TokenEmbeddingMatrix, EmbeddingError> {
        if data.len() != tokens.len() * dim {
            return Err(EmbeddingError::Protocol(format!(
                "{} values cannot hold {} rows of dimension {dim}",
                data.len(),
                tokens.len()
            )));
        }
        let mut matrix = TokenEmbeddingMatrix { tokens, dim, data };
        matrix.normalize()?;
        Ok(matrix)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Rescale rows whose norm differs from one by more than 1e-6.
    pub fn normalize(&mut self) -> Result<(), EmbeddingError> {
        let dim = self.dim.max(1);
        for (row, token) in self.data.chunks_exact_mut(dim).zip(&self.tokens) {
            let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(EmbeddingError::ZeroVector(token.clone()));
            }
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                for x in row.iter_mut() {
                    *x = (f64::from(*x) / norm) as f32;
                }
            }
        }
        Ok(())
    }

    /// Largest deviation of any row norm from one.
    pub fn max_norm_error(&self) -> f64 {
        self.iter_rows()
            .map(|row| {
                let n = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                (n - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// splitmix64 generator; each call advances the state and returns one draw.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw on the open interval (-1, 1). The top 53 bits are centred
    /// on half-integers so neither endpoint (nor zero) is reachable.
    pub fn next_symmetric(&mut self) -> f64 {
        let unit = ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        2.0 * unit - 1.0
    }
}

/// Hash-seeded unit vector for one token. A pure function of `(token, dim)`.
pub fn deterministic_embed(token: &str, dim: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()));
    let raw: Vec<f64> = (0..dim).map(|_| rng.next_symmetric()).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x / norm).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    #[serde(alias = "deterministic")]
    DeterministicTest,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "remote" => Ok(BackendKind::Remote),
            "deterministic_test" | "deterministic" | "test" => Ok(BackendKind::DeterministicTest),
            other => Err(format!("unknown embedding backend `{other}`")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Remote => "remote",
            BackendKind::DeterministicTest => "deterministic_test",
        })
    }
}

fn default_dimension() -> usize {
    32
}

fn default_batch_size() -> usize {
    32
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Embedding width for the deterministic backend; for the remote backend
    /// this is only checked when `expect_dimension` is set.
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub expect_dimension: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::deterministic(default_dimension())
    }
}

impl EmbedderConfig {
    pub fn deterministic(dimension: usize) -> EmbedderConfig {
        EmbedderConfig {
            backend: BackendKind::DeterministicTest,
            endpoint: None,
            dimension,
            expect_dimension: false,
            batch_size: default_batch_size(),
            concurrency: default_concurrency(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> EmbedderConfig {
        EmbedderConfig {
            backend: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            ..EmbedderConfig::deterministic(default_dimension())
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension < 2 {
            return Err(EmbeddingError::Config(format!(
                "dimension must be at least 2, got {}",
                self.dimension
            )));
        }
        if self.backend == BackendKind::Remote && self.endpoint.is_none() {
            return Err(EmbeddingError::Config("remote backend needs an endpoint".into()));
        }
        if self.batch_size == 0 || self.concurrency == 0 {
            return Err(EmbeddingError::Config(
                "batch size and concurrency must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stable hash of the settings that determine vector values. Transport
    /// knobs (batching, concurrency, timeouts) are excluded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"asasf-embedder-v1\0");
        hasher.update(self.backend.to_string().as_bytes());
        hasher.update([0]);
        match self.backend {
            BackendKind::DeterministicTest => hasher.update(self.dimension.to_le_bytes()),
            BackendKind::Remote => {
                hasher.update(self.endpoint.as_deref().unwrap_or_default().as_bytes())
            }
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

/// A source of token embedding matrices.
pub trait Embedder: Send + Sync {
    /// One matrix per input text, in input order.
    fn embed_batch(
        &self,
        texts: &[&str],
        role: Role,
    ) -> Result<Vec<TokenEmbeddingMatrix>, EmbeddingError>;

    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str, role: Role) -> Result<TokenEmbeddingMatrix, EmbeddingError> {
        self.embed_batch(&[text], role)?
            .pop()
            .ok_or_else(|| EmbeddingError::Protocol("backend returned no matrix".into()))
    }
}

/// Build the backend described by `cfg`.
pub fn embedder_from_config(cfg: &EmbedderConfig) -> Result<Box<dyn Embedder>, EmbeddingError> {
    cfg.validate()?;
    Ok(match cfg.backend {
        BackendKind::DeterministicTest => Box::new(DeterministicEmbedder::new(cfg.dimension)?),
        BackendKind::Remote => Box::new(RemoteEmbedder::new(cfg.clone())?),
    })
}

/// Context-free embedder: every token maps to [`deterministic_embed`]. Role is
/// ignored.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Result<DeterministicEmbedder, EmbeddingError> {
        if dim < 2 {
            return Err(EmbeddingError::Config(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        Ok(DeterministicEmbedder { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_text(&self, text: &str) -> TokenEmbeddingMatrix {
        let tokens = tokenize(text);
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        for token in &tokens {
            data.extend(deterministic_embed(token, self.dim).into_iter().map(|x| x as f32));
        }
        TokenEmbeddingMatrix {
            tokens,
            dim: self.dim,
            data,
        }
    }
}

impl Embedder for DeterministicEmbedder {
    fn embed_batch(
        &self,
        texts: &[&str],
        _role: Role,
    ) -> Result<Vec<TokenEmbeddingMatrix>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }

    fn fingerprint(&self) -> String {
        EmbedderConfig::deterministic(self.dim).fingerprint()
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
    role: &'static str,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<Vec<f64>>>,
    tokens: Vec<Vec<String>>,
}

/// Client for the remote embedding service.
///
/// Requests are `POST {"texts": [...], "role": "query"|"document"}` and the
/// response is `{"embeddings": [[[f, ...], ...], ...], "tokens": [[...], ...]}`.
/// The returned token lists are authoritative.
#[derive(Debug)]
pub struct RemoteEmbedder {
    cfg: EmbedderConfig,
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(cfg: EmbedderConfig) -> Result<RemoteEmbedder, EmbeddingError> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| EmbeddingError::Config("remote backend needs an endpoint".into()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
        Ok(RemoteEmbedder {
            cfg,
            endpoint,
            http,
        })
    }

    fn request(
        &self,
        texts: &[&str],
        role: Role,
    ) -> Result<Vec<(Vec<String>, Vec<Vec<f64>>)>, EmbeddingError> {
        let body = EmbedRequest {
            texts,
            role: role.as_str(),
        };
        let response = self
            .http
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbeddingError::BackendUnavailable(format!(
                "{} returned HTTP {status}",
                self.endpoint
            )));
        }
        let payload: EmbedResponse = response
            .json()
            .map_err(|e| EmbeddingError::Protocol(e.to_string()))?;
        if payload.embeddings.len() != texts.len() || payload.tokens.len() != texts.len() {
            return Err(EmbeddingError::Protocol(format!(
                "sent {} texts, received {} matrices and {} token lists",
                texts.len(),
                payload.embeddings.len(),
                payload.tokens.len()
            )));
        }
        Ok(payload.tokens.into_iter().zip(payload.embeddings).collect())
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_batch(
        &self,
        texts: &[&str],
        role: Role,
    ) -> Result<Vec<TokenEmbeddingMatrix>, EmbeddingError> {
        let chunks: Vec<&[&str]> = texts.chunks(self.cfg.batch_size).collect();
        let mut raw: Vec<Option<Result<Vec<_>, EmbeddingError>>> =
            (0..chunks.len()).map(|_| None).collect();
        // Bounded fan-out: at most `concurrency` requests in flight.
        for (group_idx, group) in chunks.chunks(self.cfg.concurrency).enumerate() {
            std::thread::scope(|scope| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|chunk| scope.spawn(move || self.request(chunk, role)))
                    .collect();
                for (offset, handle) in handles.into_iter().enumerate() {
                    let result = handle.join().unwrap_or_else(|_| {
                        Err(EmbeddingError::BackendUnavailable("worker panicked".into()))
                    });
                    raw[group_idx * self.cfg.concurrency + offset] = Some(result);
                }
            });
        }

        let mut dim: Option<usize> = self.cfg.expect_dimension.then_some(self.cfg.dimension);
        let mut out = Vec::with_capacity(texts.len());
        for chunk in raw {
            for (tokens, rows) in chunk.expect("every chunk is filled")? {
                for row in &rows {
                    match dim {
                        None => dim = Some(row.len()),
                        Some(d) if d != row.len() => {
                            return Err(EmbeddingError::DimensionMismatch {
                                expected: d,
                                actual: row.len(),
                            })
                        }
                        Some(_) => {}
                    }
                }
                let d = dim.unwrap_or(self.cfg.dimension);
                out.push(TokenEmbeddingMatrix::from_rows(tokens, rows, d)?);
            }
        }
        Ok(out)
    }

    fn fingerprint(&self) -> String {
        self.cfg.fingerprint()
    }
}
