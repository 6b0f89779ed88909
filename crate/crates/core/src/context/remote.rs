//! Chat-completion and embedding backends over HTTP with an on-disk
//! response cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::embed::{HashedEmbedder, TextEmbedder};
use super::features::WindowSummaryFeatures;
use super::prompt::build_prompt;
use super::summarizer::{summarize_rule_based, ContextSummary, Summarizer, SummaryBackend};
use crate::error::{CoreError, Result};
use cgmrag_numerics::checkpoint::sha256_hex;

pub const ENV_CHAT_URL: &str = "CGMRAG_CHAT_URL";
pub const ENV_EMBED_URL: &str = "CGMRAG_EMBED_URL";
pub const ENV_TOKEN: &str = "CGMRAG_API_TOKEN";
pub const ENV_MODEL: &str = "CGMRAG_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub chat_url: Option<String>,
    pub embed_url: Option<String>,
    pub model: String,
    pub token: Option<String>,
    pub cache_dir: PathBuf,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
    pub fail_hard: bool,
    pub parallelism: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            chat_url: None,
            embed_url: None,
            model: "gpt-4".into(),
            token: None,
            cache_dir: PathBuf::from("cache"),
            attempts: 3,
            backoff_ms: 200,
            timeout_ms: 30_000,
            fail_hard: false,
            parallelism: 4,
        }
    }
}

impl RemoteConfig {
    /// Defaults overridden by `CGMRAG_CHAT_URL`, `CGMRAG_EMBED_URL`,
    /// `CGMRAG_API_TOKEN` and `CGMRAG_MODEL` when set.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mut cfg = Self::default();
        cfg.chat_url = var(ENV_CHAT_URL);
        cfg.embed_url = var(ENV_EMBED_URL);
        cfg.token = var(ENV_TOKEN);
        if let Some(m) = var(ENV_MODEL) {
            cfg.model = m;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt_hash: String,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// `<dir>/<first 16 hex chars of the key hash>.json`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{}.json", &hash[..16]))
    }

    pub fn get(&self, hash: &str) -> Option<CacheEntry> {
        let text = fs::read_to_string(self.path_for(hash)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.prompt_hash == hash).then_some(entry)
    }

    /// Write-then-rename so concurrent readers never see a partial file.
    pub fn put(&self, entry: &CacheEntry) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&entry.prompt_hash);
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            &entry.prompt_hash[..16],
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut text = serde_json::to_string_pretty(entry)?;
        text.push('\n');
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

struct Client {
    agent: ureq::Agent,
    token: Option<String>,
    attempts: u32,
    backoff_ms: u64,
}

impl Client {
    fn new(cfg: &RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Self {
            agent,
            token: cfg.token.clone(),
            attempts: cfg.attempts.max(1),
            backoff_ms: cfg.backoff_ms,
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> std::result::Result<Value, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }

    /// Retries transport errors, HTTP errors and replies `parse` rejects,
    /// doubling the pause after each failure.
    fn post<T>(&self, url: &str, body: &Value, parse: impl Fn(&Value) -> Option<T>) -> std::result::Result<T, String> {
        let mut last = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.backoff_ms << (attempt - 1)));
            }
            match self.post_once(url, body) {
                Ok(v) => match parse(&v) {
                    Some(out) => return Ok(out),
                    None => last = format!("malformed reply from {url}"),
                },
                Err(e) => last = e,
            }
            log::debug!("attempt {} to {url} failed: {last}", attempt + 1);
        }
        Err(format!("{} attempts failed: {last}", self.attempts))
    }
}

/// Summaries from a chat-completion endpoint, falling back to the rule
/// summarizer unless `fail_hard` is set.
pub struct RemoteSummarizer {
    cfg: RemoteConfig,
    client: Client,
    cache: ResponseCache,
}

impl RemoteSummarizer {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        Ok(Self {
            client: Client::new(&cfg),
            cache: ResponseCache::new(cfg.cache_dir.clone()),
            cfg,
        })
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    fn request(&self, system: &str, user: &str) -> std::result::Result<String, String> {
        let url = self.cfg.chat_url.as_deref().ok_or("no chat endpoint configured")?;
        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        self.client.post(url, &body, |v| {
            v["choices"][0]["message"]["content"]
                .as_str()
                .filter(|s| !s.trim().is_empty())
                .map(String::from)
        })
    }
}

impl Summarizer for RemoteSummarizer {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn summarize(&self, window_ref: &str, features: &WindowSummaryFeatures, x: &[f64]) -> Result<ContextSummary> {
        let prompt = build_prompt(features, x);
        let hash = sha256_hex(prompt.render().as_bytes());
        if let Some(text) = self.cache.get(&hash).and_then(|e| e.text) {
            return Ok(ContextSummary::new(window_ref, text, SummaryBackend::Remote));
        }
        match self.request(&prompt.system, &prompt.user) {
            Ok(text) => {
                self.cache.put(&CacheEntry {
                    prompt_hash: hash,
                    backend: "remote".into(),
                    text: Some(text.clone()),
                    embedding: None,
                })?;
                Ok(ContextSummary::new(window_ref, text, SummaryBackend::Remote))
            }
            Err(e) if self.cfg.fail_hard => Err(CoreError::Remote(e)),
            Err(e) => {
                log::warn!("remote summary for {window_ref} failed ({e}); using rule-based summary");
                Ok(summarize_rule_based(window_ref, features, x))
            }
        }
    }
}

/// Text vectors from an embedding endpoint, cached like summaries. Falls
/// back to the hashed embedder unless `fail_hard` is set.
pub struct RemoteEmbedder {
    cfg: RemoteConfig,
    dim: usize,
    client: Client,
    cache: ResponseCache,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteConfig, dim: usize) -> Result<Self> {
        Ok(Self {
            client: Client::new(&cfg),
            cache: ResponseCache::new(cfg.cache_dir.clone()),
            dim,
            cfg,
        })
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(CoreError::EmptyText);
        }
        let hash = sha256_hex(format!("embedding\n{text}").as_bytes());
        if let Some(v) = self.cache.get(&hash).and_then(|e| e.embedding) {
            return Ok(v);
        }
        let dim = self.dim;
        let reply = match self.cfg.embed_url.as_deref() {
            None => Err("no embedding endpoint configured".to_string()),
            Some(url) => self.client.post(url, &json!({ "input": text }), |v| {
                let arr = v["embedding"].as_array()?;
                let out: Vec<f64> = arr.iter().map(Value::as_f64).collect::<Option<_>>()?;
                (out.len() == dim && out.iter().all(|x| x.is_finite())).then_some(out)
            }),
        };
        match reply {
            Ok(v) => {
                self.cache.put(&CacheEntry {
                    prompt_hash: hash,
                    backend: "remote-embedding".into(),
                    text: None,
                    embedding: Some(v.clone()),
                })?;
                Ok(v)
            }
            Err(e) if self.cfg.fail_hard => Err(CoreError::Remote(e)),
            Err(e) => {
                log::warn!("remote embedding failed ({e}); using hashed embedding");
                HashedEmbedder::new(dim).embed(text)
            }
        }
    }
}
