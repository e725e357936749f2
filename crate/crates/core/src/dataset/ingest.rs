use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use super::{DatasetError, DdiRecord};
use crate::chem::parse_smiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    /// Bad lines are reported and skipped.
    #[default]
    Lenient,
    /// The first bad line is an error.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestIssue {
    pub line: usize,
    pub record_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub excluded: Vec<IngestIssue>,
}

/// Read a JSONL dataset. Blank lines and `{"_meta": ...}` header lines are
/// skipped.
pub fn ingest_records(path: &Path, mode: IngestMode) -> Result<(Vec<DdiRecord>, IngestReport), DatasetError> {
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(&text, mode)
}

pub fn parse_records(text: &str, mode: IngestMode) -> Result<(Vec<DdiRecord>, IngestReport), DatasetError> {
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    let mut seen_ids = HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<serde_json::Value>(raw)
            .map_err(|e| (None, format!("invalid JSON: {e}")))
            .and_then(|v| {
                if v.get("_meta").is_some() {
                    return Ok(None);
                }
                let id = v.get("record_id").and_then(|x| x.as_str()).map(str::to_string);
                let rec: DdiRecord = serde_json::from_value(v).map_err(|e| (id.clone(), e.to_string()))?;
                validate(&rec).map_err(|m| (id.clone(), m))?;
                if !seen_ids.insert(rec.record_id.clone()) {
                    return Err((id, "duplicate record_id".to_string()));
                }
                Ok(Some(rec))
            });
        match outcome {
            Ok(Some(rec)) => records.push(rec),
            Ok(None) => {}
            Err((record_id, reason)) => {
                if mode == IngestMode::Strict {
                    return Err(DatasetError::SchemaError { line, message: reason });
                }
                log::warn!("line {line}: {reason}");
                report.excluded.push(IngestIssue { line, record_id, reason });
            }
        }
    }
    report.accepted = records.len();
    Ok((records, report))
}

fn validate(r: &DdiRecord) -> Result<(), String> {
    if r.record_id.trim().is_empty() {
        return Err("empty record_id".into());
    }
    if r.drug1_id.trim().is_empty() || r.drug2_id.trim().is_empty() {
        return Err("empty drug id".into());
    }
    if r.drug1_id == r.drug2_id {
        return Err("drug1_id equals drug2_id".into());
    }
    for (field, s) in [("smiles1", &r.smiles1), ("smiles2", &r.smiles2)] {
        parse_smiles(s).map_err(|e| format!("{field}: {e}"))?;
    }
    if r.label.is_positive() && r.explanation.trim().is_empty() {
        return Err("positive record without explanation".into());
    }
    Ok(())
}
