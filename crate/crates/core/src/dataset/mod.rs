//! DDI records: ingestion, explanation preprocessing, negative sampling and
//! cross-validation splits.

mod ingest;
mod negatives;
mod split;
mod text;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest_records, parse_records, IngestIssue, IngestMode, IngestReport};
pub use negatives::{drug_pool, sample_negatives, DrugInfo};
pub use split::{split_inductive, split_transductive, Bucket, Role, Setting, SplitAssignment, MAX_FOLDS};
pub use text::{
    build_input_sequence, build_target_sequence, mask_drug_names, negative_explanation, NEGATIVE_SUFFIX,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    SchemaError { line: usize, message: String },
    #[error("empty drug definition for {0}")]
    EmptyDefinition(String),
    #[error("need {needed} negative pairs but only {available} eligible pairs exist")]
    PoolExhausted { needed: usize, available: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("fold count must be between 1 and {max}, got {got}")]
    InvalidFolds { got: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Ddinter,
    Drugbank,
    Synthetic,
}

/// Unordered drug pair, stored with the lexicographically smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey(pub String, pub String);

impl PairKey {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            PairKey(a.to_string(), b.to_string())
        } else {
            PairKey(b.to_string(), a.to_string())
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.0, self.1)
    }
}

/// One labelled drug pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdiRecord {
    pub record_id: String,
    pub drug1_id: String,
    pub drug2_id: String,
    pub smiles1: String,
    pub smiles2: String,
    /// Name plus synonyms, used for masking.
    #[serde(default)]
    pub drug1_names: Vec<String>,
    #[serde(default)]
    pub drug2_names: Vec<String>,
    #[serde(default)]
    pub drug1_def: String,
    #[serde(default)]
    pub drug2_def: String,
    pub label: Label,
    #[serde(default)]
    pub explanation: String,
    pub source: Source,
    /// Mechanism category, when the export carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl DdiRecord {
    pub fn key(&self) -> PairKey {
        PairKey::new(&self.drug1_id, &self.drug2_id)
    }
}
