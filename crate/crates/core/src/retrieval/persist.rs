use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexedDrug, PairEntry, RetrievalError, TrainingIndex};
use crate::dataset::{Label, PairKey};
use crate::fingerprint::{Fingerprint, FINGERPRINT_TAG};

pub const INDEX_VERSION: u32 = 1;
const INDEX_KIND: &str = "exddi-index";

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
    fingerprint: String,
    k_default: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Drug {
        id: String,
        smiles: String,
        fp: String,
        description: String,
    },
    Pair {
        drug1: String,
        drug2: String,
        label: Label,
        explanation: String,
    },
}

/// Write the index as JSONL: a header, then drugs by id, then pairs by key.
pub fn save_index(index: &TrainingIndex, path: &Path, meta: Option<serde_json::Value>) -> Result<(), RetrievalError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        kind: INDEX_KIND.into(),
        version: INDEX_VERSION,
        fingerprint: index.fingerprint_tag().into(),
        k_default: index.k_default(),
        meta,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for d in index.drugs() {
        let line = Line::Drug {
            id: d.id.clone(),
            smiles: d.smiles.clone(),
            fp: d.fingerprint.to_hex(),
            description: d.description.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("drug serializes"))?;
    }
    for (key, entry) in index.pairs_sorted() {
        let line = Line::Pair {
            drug1: key.0.clone(),
            drug2: key.1.clone(),
            label: entry.label,
            explanation: entry.explanation.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("pair serializes"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<TrainingIndex, RetrievalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let bad = |line: usize, message: String| RetrievalError::IndexFormat { line, message };

    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty index file".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| bad(1, e.to_string()))?;
    if header.kind != INDEX_KIND || header.version != INDEX_VERSION {
        return Err(bad(1, format!("unsupported index {} v{}", header.kind, header.version)));
    }
    if header.fingerprint != FINGERPRINT_TAG {
        return Err(RetrievalError::FingerprintMismatch {
            found: header.fingerprint,
            expected: FINGERPRINT_TAG.into(),
        });
    }

    let mut drugs = Vec::new();
    let mut pairs = HashMap::new();
    for (k, line) in lines {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line).map_err(|e| bad(line_no, e.to_string()))? {
            Line::Drug { id, smiles, fp, description } => {
                let fingerprint = Fingerprint::from_hex(&fp).map_err(|e| bad(line_no, e.to_string()))?;
                drugs.push(IndexedDrug { id, smiles, fingerprint, description });
            }
            Line::Pair { drug1, drug2, label, explanation } => {
                let key = PairKey::new(&drug1, &drug2);
                if key.0 != drug1 {
                    return Err(bad(line_no, "pair key not in canonical order".into()));
                }
                if pairs.insert(key, PairEntry { label, explanation }).is_some() {
                    return Err(bad(line_no, "duplicate pair".into()));
                }
            }
        }
    }
    let index = TrainingIndex::from_parts(drugs, pairs, header.k_default, header.fingerprint);
    for key in index.pairs.keys() {
        if index.drug(&key.0).is_none() || index.drug(&key.1).is_none() {
            return Err(bad(0, format!("pair {key} references an unknown drug")));
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DdiRecord, Source};

    #[test]
    fn round_trip_and_tag_check() {
        let rec = DdiRecord {
            record_id: "r".into(),
            drug1_id: "B".into(),
            drug2_id: "A".into(),
            smiles1: "CCO".into(),
            smiles2: "c1ccccc1".into(),
            drug1_names: vec![],
            drug2_names: vec![],
            drug1_def: "b".into(),
            drug2_def: "a".into(),
            label: Label::Positive,
            explanation: "DRUG1 then DRUG2".into(),
            source: Source::Synthetic,
            category: None,
        };
        let idx = TrainingIndex::build(&[rec], 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        save_index(&idx, &path, None).unwrap();
        assert_eq!(load_index(&path).unwrap(), idx);

        let text = std::fs::read_to_string(&path).unwrap().replace(FINGERPRINT_TAG, "other-v9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_index(&path), Err(RetrievalError::FingerprintMismatch { .. })));
    }
}
