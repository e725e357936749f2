use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bilinear::TrainConfig;
use crate::dataset::{IngestMode, Setting, MAX_FOLDS};
use crate::prompting::{HttpConfig, DEFAULT_DEMONSTRATIONS};
use crate::retrieval::DEFAULT_K;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {message}")]
    InvalidValue { key: String, value: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Similarity retrieval.
    Rv,
    /// Bilinear classifier over fingerprint features.
    Bilinear,
    /// In-context prompting through a completion backend.
    Ic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rv => "rv",
            Method::Bilinear => "bilinear",
            Method::Ic => "ic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Null,
    Replay,
    Http,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Null => "null",
            BackendKind::Replay => "replay",
            BackendKind::Http => "http",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub setting: Setting,
    pub folds: usize,
    pub seed: u64,
    pub k: usize,
    pub method: Method,
    pub ingest: IngestMode,
    pub bilinear: TrainConfig,
    pub demonstrations: usize,
    pub backend: BackendKind,
    pub replay_path: Option<PathBuf>,
    pub http: HttpConfig,
    /// Requests in flight for the prompting backend.
    pub backend_parallelism: usize,
    pub parallel_folds: bool,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            setting: Setting::Transductive,
            folds: MAX_FOLDS,
            seed: 0,
            k: DEFAULT_K,
            method: Method::Rv,
            ingest: IngestMode::Lenient,
            bilinear: TrainConfig::default(),
            demonstrations: DEFAULT_DEMONSTRATIONS,
            backend: BackendKind::Null,
            replay_path: None,
            http: HttpConfig::default(),
            backend_parallelism: 1,
            parallel_folds: false,
            output: PathBuf::from("out"),
        }
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        message: e.to_string(),
    })
}

fn choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| ConfigError::InvalidValue {
            key: key.into(),
            value: value.into(),
            message: format!("expected one of {}", options.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")),
        })
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: k + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    /// Apply one setting; command-line overrides go through here too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "setting" => {
                self.setting = choice(key, value, &[("transductive", Setting::Transductive), ("inductive", Setting::Inductive)])?
            }
            "folds" => self.folds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "method" => {
                self.method = choice(key, value, &[("rv", Method::Rv), ("bilinear", Method::Bilinear), ("ic", Method::Ic)])?
            }
            "ingest" => self.ingest = choice(key, value, &[("lenient", IngestMode::Lenient), ("strict", IngestMode::Strict)])?,
            "bilinear.d" => self.bilinear.d = parse(key, value)?,
            "bilinear.lr" => self.bilinear.lr = parse(key, value)?,
            "bilinear.epochs" => self.bilinear.epochs = parse(key, value)?,
            "bilinear.batch_size" => self.bilinear.batch_size = parse(key, value)?,
            "bilinear.patience" => self.bilinear.patience = parse(key, value)?,
            "bilinear.threshold" => self.bilinear.threshold = parse(key, value)?,
            "demonstrations" => self.demonstrations = parse(key, value)?,
            "backend" => {
                self.backend = choice(
                    key,
                    value,
                    &[("null", BackendKind::Null), ("replay", BackendKind::Replay), ("http", BackendKind::Http)],
                )?
            }
            "backend.replay_path" => self.replay_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "backend.endpoint" => self.http.endpoint = value.into(),
            "backend.model" => self.http.model = value.into(),
            "backend.temperature" => self.http.temperature = parse(key, value)?,
            "backend.api_key_env" => self.http.api_key_env = value.into(),
            "backend.timeout_secs" => self.http.timeout_secs = parse(key, value)?,
            "backend.max_retries" => self.http.max_retries = parse(key, value)?,
            "backend.backoff_ms" => self.http.backoff_ms = parse(key, value)?,
            "backend.parallelism" => self.backend_parallelism = parse(key, value)?,
            "parallel_folds" => self.parallel_folds = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.dataset.as_os_str().is_empty() {
            return bad("dataset path is required");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.folds == 0 || self.folds > MAX_FOLDS {
            return Err(ConfigError::Invalid(format!("folds must be between 1 and {MAX_FOLDS}")));
        }
        if self.demonstrations == 0 {
            return bad("demonstrations must be at least 1");
        }
        if self.bilinear.d < 2 || self.bilinear.epochs == 0 || self.bilinear.batch_size == 0 {
            return bad("bilinear.d must be >= 2 and epochs, batch_size >= 1");
        }
        if !(self.bilinear.lr.is_finite() && self.bilinear.lr > 0.0) {
            return bad("bilinear.lr must be positive");
        }
        if self.method == Method::Ic && self.backend == BackendKind::Replay && self.replay_path.is_none() {
            return bad("backend = replay needs backend.replay_path");
        }
        Ok(())
    }

    /// Settings that determine the results, one `key = value` per line in a
    /// fixed order. Output location and parallelism are left out.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let b = &self.bilinear;
        let h = &self.http;
        let entries: Vec<(&str, String)> = vec![
            ("dataset", self.dataset.display().to_string()),
            ("setting", self.setting.as_str().into()),
            ("folds", self.folds.to_string()),
            ("seed", self.seed.to_string()),
            ("k", self.k.to_string()),
            ("method", self.method.as_str().into()),
            ("ingest", match self.ingest {
                IngestMode::Lenient => "lenient".into(),
                IngestMode::Strict => "strict".into(),
            }),
            ("bilinear.d", b.d.to_string()),
            ("bilinear.lr", b.lr.to_string()),
            ("bilinear.epochs", b.epochs.to_string()),
            ("bilinear.batch_size", b.batch_size.to_string()),
            ("bilinear.patience", b.patience.to_string()),
            ("bilinear.threshold", b.threshold.to_string()),
            ("demonstrations", self.demonstrations.to_string()),
            ("backend", self.backend.as_str().into()),
            ("backend.replay_path", self.replay_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("backend.endpoint", h.endpoint.clone()),
            ("backend.model", h.model.clone()),
            ("backend.temperature", h.temperature.to_string()),
            ("backend.api_key_env", h.api_key_env.clone()),
            ("backend.timeout_secs", h.timeout_secs.to_string()),
            ("backend.max_retries", h.max_retries.to_string()),
            ("backend.backoff_ms", h.backoff_ms.to_string()),
        ];
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.canonical_text())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.bilinear.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut cfg = RunConfig::parse("# run\ndataset = data.jsonl\nmethod = bilinear # inline\nfolds=3\n").unwrap();
        assert_eq!(cfg.method, Method::Bilinear);
        assert_eq!(cfg.folds, 3);
        assert_eq!(cfg.k, DEFAULT_K);
        cfg.validate().unwrap();
        let h = cfg.hash();
        cfg.set("output", "elsewhere").unwrap();
        assert_eq!(cfg.hash(), h);
        cfg.set("seed", "9").unwrap();
        assert_ne!(cfg.hash(), h);
        let reparsed = RunConfig::parse(&cfg.canonical_text()).unwrap();
        assert_eq!(reparsed.hash(), cfg.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("nonsense"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(RunConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RunConfig::parse("method = magic"), Err(ConfigError::InvalidValue { .. })));
        assert!(RunConfig::parse("dataset = x\nk = 0").unwrap().validate().is_err());
        assert!(RunConfig::parse("dataset = x\nfolds = 6").unwrap().validate().is_err());
        assert!(RunConfig::parse("k = 3").unwrap().validate().is_err());
    }
}
