use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("the {backend} completion backend cannot produce completions")]
    Unavailable { backend: String },
    #[error("no replay entry for prompt hash {hash}")]
    ReplayMiss { hash: String },
    #[error("replay file {path}: line {line}: {message}")]
    ReplayFormat { path: PathBuf, line: usize, message: String },
    #[error("environment variable {var} with the API key is not set")]
    MissingApiKey { var: String },
    #[error("request failed after {attempts} attempts: {message}")]
    Http { attempts: usize, message: String },
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that turns a prompt into a completion.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Hex SHA-256 of the prompt bytes; the replay lookup key.
pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Placeholder backend that refuses every request.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullBackend;

impl CompletionBackend for NullBackend {
    fn name(&self) -> &str {
        "null"
    }

    fn send(&self, _prompt: &str) -> Result<String, BackendError> {
        Err(BackendError::Unavailable { backend: self.name().into() })
    }
}

#[derive(Serialize, Deserialize)]
struct ReplayLine {
    prompt_hash: String,
    completion: String,
}

/// Completions recorded ahead of time, looked up by prompt hash.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: ReplayLine = serde_json::from_str(line).map_err(|e| BackendError::ReplayFormat {
                path: path.to_path_buf(),
                line: k + 1,
                message: e.to_string(),
            })?;
            entries.insert(l.prompt_hash, l.completion);
        }
        Ok(Self { entries })
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(prompt_completions: I) -> Self {
        Self {
            entries: prompt_completions.into_iter().map(|(p, c)| (prompt_hash(&p), c)).collect(),
        }
    }

    /// Write entries as JSONL sorted by hash.
    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let line = ReplayLine { prompt_hash: k.clone(), completion: self.entries[k].clone() };
            out.push_str(&serde_json::to_string(&line).expect("replay line serializes"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, prompt: &str) -> Result<String, BackendError> {
        let hash = prompt_hash(prompt);
        self.entries.get(&hash).cloned().ok_or(BackendError::ReplayMiss { hash })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Chat-completions style endpoint URL.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

/// Chat-completions client with retry and exponential backoff.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::MissingApiKey { var: config.api_key_env.clone() })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    fn attempt(&self, prompt: &str) -> Result<String, (bool, String)> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err((false, format!("HTTP {status}")));
        }
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| (false, e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| (false, format!("no completion in {v}")))
    }
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, prompt: &str) -> Result<String, BackendError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err((false, message)) => return Err(BackendError::Http { attempts: n + 1, message }),
                Err((true, message)) => {
                    log::warn!("completion attempt {} failed: {message}", n + 1);
                    last = message;
                    if n + 1 < attempts {
                        std::thread::sleep(Duration::from_millis(self.config.backoff_ms << n));
                    }
                }
            }
        }
        Err(BackendError::Http { attempts, message: last })
    }
}

/// Send prompts with at most `parallelism` requests in flight; results keep
/// input order.
pub fn complete_all(
    backend: &dyn CompletionBackend,
    prompts: &[String],
    parallelism: usize,
) -> Vec<Result<String, BackendError>> {
    if parallelism <= 1 {
        return prompts.iter().map(|p| backend.send(p)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| prompts.par_iter().map(|p| backend.send(p)).collect()),
        Err(_) => prompts.iter().map(|p| backend.send(p)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_names_itself() {
        let err = NullBackend.send("x").unwrap_err();
        assert!(err.to_string().contains("null"));
    }

    #[test]
    fn replay_round_trip() {
        let r = ReplayBackend::from_pairs([("p1".to_string(), "Yes. c1".to_string())]);
        assert_eq!(r.send("p1").unwrap(), "Yes. c1");
        assert!(matches!(r.send("p2"), Err(BackendError::ReplayMiss { .. })));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        r.save(&path).unwrap();
        let back = ReplayBackend::from_file(&path).unwrap();
        assert_eq!(back.send("p1").unwrap(), "Yes. c1");
        assert_eq!(
            prompt_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
