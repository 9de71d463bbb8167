//! Prompt construction and transport for the two LLM calls: semantic
//! feature design and knowledge induction.
//!
//! Prompts are built exclusively from training-subset statistics; the audit
//! helper proves a bundle contains no validation/test fragment. Three modes
//! are supported: `fixture` replays the bundled responses with zero network
//! use (the default, so everything runs offline), `cache-first` consults the
//! on-disk response cache before the network, and `live` always calls the
//! endpoint. Every live response is written back to the cache.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datastore::Activity;
use crate::featurizer::BASE_STAT_NAMES;

/// Default chat model when none is configured.
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
/// Upper bound on completion tokens for both prompts.
pub const MAX_TOKENS: u32 = 1200;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("no fixture response bundled for prompt kind {0:?}")]
    MissingFixture(PromptKind),
    #[error("llm configuration error: {0}")]
    Config(String),
    #[error("prompt leaks non-training statistic: {0:?}")]
    Leakage(String),
    #[error("cache io error on {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which of the two pipeline prompts a bundle carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    SemanticFeatures,
    Knowledge,
}

/// A fully rendered prompt plus the decoding parameters sent with it.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub system_text: String,
    pub user_text: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl PromptBundle {
    /// Stable content hash over (system, user, model), used as cache key.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.system_text.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.user_text.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.model_name.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Renders one `LABEL: name=value, ...` line per class, labels in enum order.
fn render_class_means(names: &[String], class_means: &BTreeMap<Activity, Vec<f64>>) -> String {
    let mut out = String::new();
    for (label, means) in class_means {
        assert_eq!(means.len(), names.len(), "class mean width mismatch");
        let _ = write!(out, "{label}:");
        for (name, v) in names.iter().zip(means) {
            let _ = write!(out, " {name}={v:.4}");
        }
        out.push('\n');
    }
    out
}

/// Formatted per-class mean lines for a feature matrix, in the same format
/// the prompt builders use. Used by leakage audits: rendering these lines
/// for the validation/test matrices gives the fragments that must never
/// appear in a prompt.
pub fn class_mean_fragments(
    matrix: &crate::featurizer::FeatureMatrix,
    columns: &[String],
) -> Vec<String> {
    let means = matrix.class_means(columns);
    render_class_means(columns, &means).lines().map(|l| l.to_string()).collect()
}

/// Builds the semantic feature design prompt from train-only class means
/// over the 12 standardized base statistics.
pub fn build_semantic_prompt(
    class_means: &BTreeMap<Activity, Vec<f64>>,
    model_name: &str,
) -> PromptBundle {
    let names: Vec<String> = BASE_STAT_NAMES.iter().map(|s| s.to_string()).collect();
    let system_text = "You are a feature designer for smartphone inertial activity \
                       recognition. Respond with STRICT JSON only."
        .to_string();
    let mut user_text = String::new();
    let _ = writeln!(user_text, "Base channels (standardized): {}.", names.join(", "));
    let _ = writeln!(user_text, "Class-wise mean table (train only):");
    user_text.push_str(&render_class_means(&names, class_means));
    let _ = writeln!(
        user_text,
        "Design 6 discriminative SEMANTIC features with short lowercase names. \
         Each feature must be a LINEAR combination of the base channels with \
         weights in [-2, 2]."
    );
    let _ = writeln!(
        user_text,
        "Return JSON ONLY, shaped like: \
         {{\"features\": [{{\"name\": \"verticality\", \"weights\": {{\"acc_z_mean\": 0.8}}}}]}}"
    );
    PromptBundle {
        kind: PromptKind::SemanticFeatures,
        system_text,
        user_text,
        model_name: model_name.to_string(),
        temperature: 0.0,
        max_tokens: MAX_TOKENS,
    }
}

/// Builds the knowledge induction prompt over the given label set and
/// feature vocabulary, with train-only class means for context.
pub fn build_knowledge_prompt(
    labels: &[Activity],
    features: &[String],
    class_means: &BTreeMap<Activity, Vec<f64>>,
    model_name: &str,
) -> Result<PromptBundle, LlmError> {
    if features.is_empty() {
        return Err(LlmError::Config("knowledge prompt needs a non-empty feature list".into()));
    }
    let system_text = "You are a careful assistant for smartphone inertial activity \
                       recognition. Return a SINGLE valid JSON object and nothing else. \
                       Use only the provided labels and features; never use test-set \
                       information."
        .to_string();
    let label_names: Vec<&str> = labels.iter().map(|l| l.name()).collect();
    let mut user_text = String::new();
    let _ = writeln!(user_text, "We need domain knowledge to guide exemplar selection.");
    let _ = writeln!(user_text, "Allowed labels: {}.", label_names.join(", "));
    let _ = writeln!(user_text, "Allowed features (standardized): {}.", features.join(", "));
    let _ = writeln!(user_text, "Class-wise means over TRAIN (for context only):");
    user_text.push_str(&render_class_means(features, class_means));
    let _ = writeln!(user_text, "Return a JSON object with exactly these keys:");
    let _ = writeln!(
        user_text,
        "- \"label_feature_weights\": map label -> map feature -> weight in [-1.5, 1.5]"
    );
    let _ = writeln!(
        user_text,
        "- \"confusability\": map labelA -> map labelB -> value in [0, 1.2]"
    );
    let _ = writeln!(
        user_text,
        "- \"label_budget_multiplier\": map label -> multiplier in [0.8, 1.3]"
    );
    let _ = writeln!(
        user_text,
        "Rules: use ONLY the allowed labels and features; keep the JSON minimal with \
         no comments, trailing commas, or extra text."
    );
    Ok(PromptBundle {
        kind: PromptKind::Knowledge,
        system_text,
        user_text,
        model_name: model_name.to_string(),
        temperature: 0.0,
        max_tokens: MAX_TOKENS,
    })
}

/// Asserts none of the forbidden fragments appears in the bundle's text.
pub fn audit_no_leakage(bundle: &PromptBundle, forbidden: &[String]) -> Result<(), LlmError> {
    for fragment in forbidden {
        if fragment.is_empty() {
            continue;
        }
        if bundle.user_text.contains(fragment) || bundle.system_text.contains(fragment) {
            return Err(LlmError::Leakage(fragment.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

/// One chat-completions request, transport-agnostic.
#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub system: String,
    pub user: String,
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Minimal OpenAI-compatible `/v1/chat/completions` client.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    /// `endpoint` is the server base URL (e.g. `https://api.openai.com`).
    pub fn new(endpoint: String, api_key: Option<String>) -> Self {
        Self { endpoint, api_key, client: reqwest::blocking::Client::new() }
    }

    /// Reads the API key from the named environment variable. The variable
    /// name is configuration; the key itself never is.
    pub fn from_env(endpoint: String, api_key_env: &str) -> Result<Self, LlmError> {
        let key = std::env::var(api_key_env).map_err(|_| {
            LlmError::Config(format!("environment variable {api_key_env} is not set"))
        })?;
        Ok(Self::new(endpoint, Some(key)))
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let url = format!("{}/v1/chat/completions", self.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| LlmError::Transport { status: None, message: e.to_string() })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Transport {
                status: Some(status.as_u16()),
                message: format!("chat completion failed: {text}"),
            });
        }
        let parsed: ChatCompletionResponse = resp
            .json()
            .map_err(|e| LlmError::Transport { status: None, message: format!("bad body: {e}") })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport { status: None, message: "no choices".into() })
    }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

/// On-disk response cache keyed by prompt content hash.
///
/// Access goes through an internal mutex so concurrent callers within one
/// process serialize their reads and writes.
pub struct ResponseCache {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl ResponseCache {
    pub fn new(dir: PathBuf) -> Result<Self, LlmError> {
        fs::create_dir_all(&dir)
            .map_err(|source| LlmError::CacheIo { path: dir.display().to_string(), source })?;
        Ok(Self { dir, lock: Mutex::new(()) })
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.txt"))
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        let _guard = self.lock.lock().unwrap();
        fs::read_to_string(self.path_for(hash)).ok()
    }

    pub fn put(&self, hash: &str, response: &str) -> Result<(), LlmError> {
        let _guard = self.lock.lock().unwrap();
        let path = self.path_for(hash);
        fs::write(&path, response)
            .map_err(|source| LlmError::CacheIo { path: path.display().to_string(), source })
    }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

/// How `complete` resolves a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LlmMode {
    /// Replay the bundled fixture responses; no network, no cache.
    #[default]
    Fixture,
    /// Always call the endpoint; write every response to the cache.
    Live,
    /// Serve from cache when possible, otherwise call and cache.
    CacheFirst,
}

impl std::fmt::Display for LlmMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LlmMode::Fixture => f.write_str("fixture"),
            LlmMode::Live => f.write_str("live"),
            LlmMode::CacheFirst => f.write_str("cache-first"),
        }
    }
}

impl std::str::FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixture" => Ok(LlmMode::Fixture),
            "live" => Ok(LlmMode::Live),
            "cache-first" | "cache_first" => Ok(LlmMode::CacheFirst),
            other => Err(format!("unknown llm mode {other:?}")),
        }
    }
}

/// Resolves prompts to raw response text according to the configured mode.
pub struct LlmClient {
    mode: LlmMode,
    fixtures: BTreeMap<PromptKind, String>,
    cache: Option<ResponseCache>,
    transport: Option<Box<dyn ChatTransport>>,
}

impl LlmClient {
    /// Offline client replaying the bundled fixture responses.
    pub fn fixture() -> Self {
        let mut fixtures = BTreeMap::new();
        fixtures.insert(
            PromptKind::SemanticFeatures,
            crate::knowledge::fixture_semantic_text().to_string(),
        );
        fixtures
            .insert(PromptKind::Knowledge, crate::knowledge::fixture_knowledge_text().to_string());
        Self { mode: LlmMode::Fixture, fixtures, cache: None, transport: None }
    }

    /// Network-backed client in the given mode.
    pub fn with_transport(
        mode: LlmMode,
        transport: Box<dyn ChatTransport>,
        cache: Option<ResponseCache>,
    ) -> Self {
        Self { mode, fixtures: BTreeMap::new(), cache, transport: Some(transport) }
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    /// Resolves the bundle to raw response text.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        match self.mode {
            LlmMode::Fixture => self
                .fixtures
                .get(&bundle.kind)
                .cloned()
                .ok_or(LlmError::MissingFixture(bundle.kind)),
            LlmMode::Live => self.call_and_cache(bundle),
            LlmMode::CacheFirst => {
                let hash = bundle.content_hash();
                if let Some(cache) = &self.cache {
                    if let Some(hit) = cache.get(&hash) {
                        return Ok(hit);
                    }
                }
                self.call_and_cache(bundle)
            }
        }
    }

    fn call_and_cache(&self, bundle: &PromptBundle) -> Result<String, LlmError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| LlmError::Config("no transport configured for network mode".into()))?;
        let request = ChatRequest {
            model: bundle.model_name.clone(),
            temperature: bundle.temperature,
            max_tokens: bundle.max_tokens,
            system: bundle.system_text.clone(),
            user: bundle.user_text.clone(),
        };
        let response = transport.complete(&request)?;
        if let Some(cache) = &self.cache {
            cache.put(&bundle.content_hash(), &response)?;
        }
        Ok(response)
    }
}
