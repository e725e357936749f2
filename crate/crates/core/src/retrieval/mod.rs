//! Similarity retrieval: answer a query pair with the label and explanation
//! of the most similar training pair.

mod persist;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::parse_smiles;
use crate::dataset::{mask_drug_names, negative_explanation, DdiRecord, Label, PairKey};
use crate::fingerprint::{compute_keys, tanimoto, Fingerprint, FINGERPRINT_TAG};

pub use persist::{load_index, save_index, INDEX_VERSION};

/// Neighbors retrieved per query drug unless configured otherwise.
pub const DEFAULT_K: usize = 50;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unparseable SMILES in records {record_ids:?}")]
    UnparseableSmiles { record_ids: Vec<String> },
    #[error("unparseable query SMILES for drug {which}: {message}")]
    UnparseableQuery { which: u8, message: String },
    #[error("records {record_ids:?} share pair {key} but disagree on label or explanation")]
    DuplicateConflict { key: PairKey, record_ids: Vec<String> },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index has no drugs")]
    EmptyIndex,
    #[error("index fingerprint tag {found:?} does not match {expected:?}")]
    FingerprintMismatch { found: String, expected: String },
    #[error("index file line {line}: {message}")]
    IndexFormat { line: usize, message: String },
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDrug {
    pub id: String,
    pub smiles: String,
    pub fingerprint: Fingerprint,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub label: Label,
    /// Explanation with `DRUG1` meaning the key's first drug.
    pub explanation: String,
}

/// Immutable retrieval index over the training drugs and pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingIndex {
    drugs: Vec<IndexedDrug>,
    by_id: HashMap<String, usize>,
    pairs: HashMap<PairKey, PairEntry>,
    k_default: usize,
    fingerprint_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub drug_id: String,
    pub similarity: f64,
}

/// A training pair reached through the two neighbor lists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub key: PairKey,
    pub score: f64,
    /// Member reached from query drug 1's neighbors, and its similarity.
    pub via1: String,
    pub sim1: f64,
    pub via2: String,
    pub sim2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub pair: Option<PairKey>,
    pub score: f64,
    pub sim1: f64,
    pub sim2: f64,
    pub via1: Option<String>,
    pub via2: Option<String>,
    /// Neighbor count at which a candidate was found (or the last one tried).
    pub k_used: usize,
    pub fallback: bool,
    /// The query's own pair was present in the index and skipped.
    pub excluded_query_pair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResponse {
    pub label: Label,
    pub explanation: String,
    pub provenance: Provenance,
}

/// A pair to predict. Ids, definitions and names are optional context used
/// for own-pair exclusion and the fallback explanation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Query {
    pub smiles1: String,
    pub smiles2: String,
    pub drug_ids: Option<(String, String)>,
    pub defs: Option<(String, String)>,
    pub names1: Vec<String>,
    pub names2: Vec<String>,
}

impl Query {
    pub fn new(smiles1: &str, smiles2: &str) -> Self {
        Self {
            smiles1: smiles1.to_string(),
            smiles2: smiles2.to_string(),
            ..Self::default()
        }
    }

    pub fn from_record(r: &DdiRecord) -> Self {
        Self {
            smiles1: r.smiles1.clone(),
            smiles2: r.smiles2.clone(),
            drug_ids: Some((r.drug1_id.clone(), r.drug2_id.clone())),
            defs: Some((r.drug1_def.clone(), r.drug2_def.clone())),
            names1: r.drug1_names.clone(),
            names2: r.drug2_names.clone(),
        }
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bDRUG([12])\b").expect("static regex"))
}

/// Exchange the `DRUG1` and `DRUG2` placeholders.
pub fn swap_placeholders(text: &str) -> String {
    placeholder_re()
        .replace_all(text, |c: &regex::Captures| if &c[1] == "1" { "DRUG2" } else { "DRUG1" })
        .into_owned()
}

fn by_similarity(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then_with(|| a.drug_id.cmp(&b.drug_id))
}

impl TrainingIndex {
    /// Index the drugs and pairs of `records`. The first record naming a
    /// drug supplies its SMILES and description.
    pub fn build(records: &[DdiRecord], k_default: usize) -> Result<Self, RetrievalError> {
        if k_default == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let mut first: Vec<(String, String, String)> = Vec::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        let mut bad = Vec::new();
        for r in records {
            for (id, smiles, def) in [(&r.drug1_id, &r.smiles1, &r.drug1_def), (&r.drug2_id, &r.smiles2, &r.drug2_def)] {
                if seen.insert(id, ()).is_none() {
                    first.push((id.clone(), smiles.clone(), def.clone()));
                }
            }
        }
        first.sort_by(|a, b| a.0.cmp(&b.0));
        let fps: Vec<Result<Fingerprint, String>> = first
            .par_iter()
            .map(|(id, smiles, _)| parse_smiles(smiles).map(|m| compute_keys(&m)).map_err(|_| id.clone()))
            .collect();
        let mut drugs = Vec::with_capacity(first.len());
        for ((id, smiles, description), fp) in first.into_iter().zip(fps) {
            match fp {
                Ok(fingerprint) => drugs.push(IndexedDrug { id, smiles, fingerprint, description }),
                Err(drug) => bad.extend(
                    records
                        .iter()
                        .filter(|r| r.drug1_id == drug || r.drug2_id == drug)
                        .map(|r| r.record_id.clone()),
                ),
            }
        }
        if !bad.is_empty() {
            bad.sort();
            bad.dedup();
            return Err(RetrievalError::UnparseableSmiles { record_ids: bad });
        }

        let mut pairs: HashMap<PairKey, (PairEntry, Vec<String>)> = HashMap::new();
        for r in records {
            let key = r.key();
            let explanation = if r.drug1_id == key.0 {
                r.explanation.clone()
            } else {
                swap_placeholders(&r.explanation)
            };
            let entry = PairEntry { label: r.label, explanation };
            match pairs.get_mut(&key) {
                None => {
                    pairs.insert(key, (entry, vec![r.record_id.clone()]));
                }
                Some((existing, ids)) => {
                    ids.push(r.record_id.clone());
                    if *existing != entry {
                        return Err(RetrievalError::DuplicateConflict { key, record_ids: ids.clone() });
                    }
                }
            }
        }
        let pairs = pairs.into_iter().map(|(k, (e, _))| (k, e)).collect();
        Ok(Self::from_parts(drugs, pairs, k_default, FINGERPRINT_TAG.to_string()))
    }

    pub(crate) fn from_parts(
        mut drugs: Vec<IndexedDrug>,
        pairs: HashMap<PairKey, PairEntry>,
        k_default: usize,
        fingerprint_tag: String,
    ) -> Self {
        drugs.sort_by(|a, b| a.id.cmp(&b.id));
        let by_id = drugs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        Self { drugs, by_id, pairs, k_default, fingerprint_tag }
    }

    pub fn drugs(&self) -> &[IndexedDrug] {
        &self.drugs
    }

    pub fn drug(&self, id: &str) -> Option<&IndexedDrug> {
        self.by_id.get(id).map(|&i| &self.drugs[i])
    }

    pub fn pair(&self, key: &PairKey) -> Option<&PairEntry> {
        self.pairs.get(key)
    }

    /// Pair entries sorted by key.
    pub fn pairs_sorted(&self) -> Vec<(&PairKey, &PairEntry)> {
        let mut v: Vec<_> = self.pairs.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn k_default(&self) -> usize {
        self.k_default
    }

    pub fn fingerprint_tag(&self) -> &str {
        &self.fingerprint_tag
    }

    /// The `k` drugs most similar to `query`, by descending Tanimoto then
    /// ascending id. Exact flat scan.
    pub fn top_k_similar(&self, query: &Fingerprint, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = self
            .drugs
            .iter()
            .map(|d| Neighbor {
                drug_id: d.id.clone(),
                similarity: tanimoto(query, &d.fingerprint),
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k, by_similarity);
            all.truncate(k);
        }
        all.sort_by(by_similarity);
        all
    }

    /// Cross all neighbor pairs, keep those present in the index and rank by
    /// `sim1 * sim2` (ties by key). When both orientations of a key occur,
    /// the higher score wins; on equal scores the orientation reaching the
    /// key's first drug from query drug 1 wins.
    pub fn rank_candidate_pairs(&self, nbrs1: &[Neighbor], nbrs2: &[Neighbor]) -> Vec<Candidate> {
        self.rank_excluding(nbrs1, nbrs2, None)
    }

    fn rank_excluding(&self, nbrs1: &[Neighbor], nbrs2: &[Neighbor], exclude: Option<&PairKey>) -> Vec<Candidate> {
        let mut best: HashMap<PairKey, Candidate> = HashMap::new();
        for a in nbrs1 {
            for b in nbrs2 {
                if a.drug_id == b.drug_id {
                    continue;
                }
                let key = PairKey::new(&a.drug_id, &b.drug_id);
                if exclude == Some(&key) || !self.pairs.contains_key(&key) {
                    continue;
                }
                let cand = Candidate {
                    score: a.similarity * b.similarity,
                    via1: a.drug_id.clone(),
                    sim1: a.similarity,
                    via2: b.drug_id.clone(),
                    sim2: b.similarity,
                    key,
                };
                match best.get_mut(&cand.key) {
                    None => {
                        best.insert(cand.key.clone(), cand);
                    }
                    Some(cur) => {
                        let better = cand.score > cur.score || (cand.score == cur.score && cand.via1 == cand.key.0 && cur.via1 != cur.key.0);
                        if better {
                            *cur = cand;
                        }
                    }
                }
            }
        }
        let mut out: Vec<Candidate> = best.into_values().collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.key.cmp(&b.key)));
        out
    }

    /// Ranked candidates for fingerprinted query drugs, doubling `k` until
    /// something is found or every drug has been considered.
    pub fn ranked_with_fallback(
        &self,
        fp1: &Fingerprint,
        fp2: &Fingerprint,
        k: usize,
        exclude: Option<&PairKey>,
    ) -> Result<(Vec<Candidate>, usize), RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.drugs.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let n = self.drugs.len();
        let mut k_eff = k;
        loop {
            let ranked = self.rank_excluding(&self.top_k_similar(fp1, k_eff), &self.top_k_similar(fp2, k_eff), exclude);
            if !ranked.is_empty() || k_eff >= n {
                return Ok((ranked, k_eff));
            }
            k_eff = (k_eff.saturating_mul(2)).min(n);
        }
    }

    pub fn predict(&self, query: &Query, k: usize) -> Result<PredictionResponse, RetrievalError> {
        let fp = |which: u8, s: &str| {
            parse_smiles(s)
                .map(|m| compute_keys(&m))
                .map_err(|e| RetrievalError::UnparseableQuery { which, message: e.to_string() })
        };
        let fp1 = fp(1, &query.smiles1)?;
        let fp2 = fp(2, &query.smiles2)?;
        self.predict_fingerprints(query, &fp1, &fp2, k)
    }

    pub fn predict_fingerprints(
        &self,
        query: &Query,
        fp1: &Fingerprint,
        fp2: &Fingerprint,
        k: usize,
    ) -> Result<PredictionResponse, RetrievalError> {
        let own = query.drug_ids.as_ref().map(|(a, b)| PairKey::new(a, b));
        let own = own.filter(|key| self.pairs.contains_key(key));
        if let Some(key) = &own {
            log::warn!("query pair {key} is in the training index; excluding it");
        }
        let (ranked, k_used) = self.ranked_with_fallback(fp1, fp2, k, own.as_ref())?;
        let Some(top) = ranked.into_iter().next() else {
            return Ok(self.fallback_response(query, k_used, own.is_some()));
        };
        let entry = &self.pairs[&top.key];
        let explanation = if top.via1 == top.key.0 {
            entry.explanation.clone()
        } else {
            swap_placeholders(&entry.explanation)
        };
        Ok(PredictionResponse {
            label: entry.label,
            explanation,
            provenance: Provenance {
                pair: Some(top.key),
                score: top.score,
                sim1: top.sim1,
                sim2: top.sim2,
                via1: Some(top.via1),
                via2: Some(top.via2),
                k_used,
                fallback: false,
                excluded_query_pair: own.is_some(),
            },
        })
    }

    fn fallback_response(&self, query: &Query, k_used: usize, excluded: bool) -> PredictionResponse {
        let explanation = query
            .defs
            .as_ref()
            .and_then(|(d1, d2)| negative_explanation(d1, d2).ok())
            .map(|t| mask_drug_names(&t, &query.names1, &query.names2))
            .unwrap_or_else(|| negative_explanation("DRUG1", "DRUG2").expect("non-empty placeholders"));
        PredictionResponse {
            label: Label::Negative,
            explanation,
            provenance: Provenance {
                pair: None,
                score: 0.0,
                sim1: 0.0,
                sim2: 0.0,
                via1: None,
                via2: None,
                k_used,
                fallback: true,
                excluded_query_pair: excluded,
            },
        }
    }

    /// Predict many queries in parallel; results follow input order.
    pub fn predict_batch(&self, queries: &[Query], k: usize) -> Vec<Result<PredictionResponse, RetrievalError>> {
        queries.par_iter().map(|q| self.predict(q, k)).collect()
    }
}

/// Free-function form of [`TrainingIndex::build`].
pub fn build_index(records: &[DdiRecord], k_default: usize) -> Result<TrainingIndex, RetrievalError> {
    TrainingIndex::build(records, k_default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;

    fn rec(id: &str, a: (&str, &str), b: (&str, &str), label: Label, exp: &str) -> DdiRecord {
        DdiRecord {
            record_id: id.into(),
            drug1_id: a.0.into(),
            drug2_id: b.0.into(),
            smiles1: a.1.into(),
            smiles2: b.1.into(),
            drug1_names: vec![],
            drug2_names: vec![],
            drug1_def: format!("{} def", a.0),
            drug2_def: format!("{} def", b.0),
            label,
            explanation: exp.into(),
            source: Source::Synthetic,
            category: None,
        }
    }

    const A: (&str, &str) = ("A", "CCO");
    const B: (&str, &str) = ("B", "c1ccccc1");
    const C: (&str, &str) = ("C", "CC(=O)O");
    const D: (&str, &str) = ("D", "CCN");

    fn small() -> TrainingIndex {
        TrainingIndex::build(
            &[
                rec("r1", A, B, Label::Positive, "DRUG1 raises DRUG2 levels."),
                rec("r2", C, B, Label::Positive, "DRUG1 lowers DRUG2."),
                rec("r3", C, D, Label::Negative, "none"),
            ],
            DEFAULT_K,
        )
        .unwrap()
    }

    #[test]
    fn build_counts_and_orientation() {
        let idx = small();
        assert_eq!(idx.drugs().len(), 4);
        assert_eq!(idx.pair_count(), 3);
        // r2 was written C,B; the key is (B, C) so placeholders flip
        assert_eq!(idx.pair(&PairKey::new("C", "B")).unwrap().explanation, "DRUG2 lowers DRUG1.");
    }

    #[test]
    fn duplicate_conflict() {
        let err = TrainingIndex::build(
            &[
                rec("r1", A, B, Label::Positive, "x"),
                rec("r2", B, A, Label::Negative, "x"),
            ],
            5,
        )
        .unwrap_err();
        assert!(matches!(err, RetrievalError::DuplicateConflict { .. }));
        // same content in the other orientation is fine
        assert!(TrainingIndex::build(
            &[
                rec("r1", A, B, Label::Positive, "DRUG1 x DRUG2"),
                rec("r2", B, A, Label::Positive, "DRUG2 x DRUG1"),
            ],
            5
        )
        .is_ok());
    }

    #[test]
    fn unparseable_lists_records() {
        let err = TrainingIndex::build(&[rec("r9", ("X", "C1CC"), B, Label::Positive, "x")], 5).unwrap_err();
        assert!(matches!(err, RetrievalError::UnparseableSmiles { record_ids } if record_ids == vec!["r9"]));
    }

    #[test]
    fn top_k_behaviour() {
        let idx = small();
        let fp = idx.drug("B").unwrap().fingerprint;
        let nb = idx.top_k_similar(&fp, 2);
        assert_eq!(nb[0].drug_id, "B");
        assert_eq!(nb[0].similarity, 1.0);
        assert_eq!(nb.len(), 2);
        assert_eq!(idx.top_k_similar(&fp, 99).len(), 4);
    }

    #[test]
    fn ranking_examples() {
        let idx = small();
        let n = |id: &str, s: f64| Neighbor { drug_id: id.into(), similarity: s };
        let r = idx.rank_candidate_pairs(&[n("A", 1.0)], &[n("B", 0.5)]);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].key.clone(), r[0].score), (PairKey::new("A", "B"), 0.5));
        assert!(idx.rank_candidate_pairs(&[n("A", 1.0)], &[n("D", 0.5)]).is_empty());
        assert!(idx.rank_candidate_pairs(&[n("A", 1.0)], &[n("A", 1.0)]).is_empty());
    }

    #[test]
    fn predict_exact_pair_and_orientation() {
        let idx = small();
        let r = idx.predict(&Query::new("CCO", "c1ccccc1"), 50).unwrap();
        assert_eq!(r.label, Label::Positive);
        assert_eq!(r.provenance.score, 1.0);
        assert_eq!(r.explanation, "DRUG1 raises DRUG2 levels.");
        let r = idx.predict(&Query::new("c1ccccc1", "CCO"), 50).unwrap();
        assert_eq!(r.explanation, "DRUG2 raises DRUG1 levels.");
        assert_eq!(r.provenance.score, r.provenance.sim1 * r.provenance.sim2);
    }

    #[test]
    fn own_pair_excluded_and_fallback() {
        let idx = TrainingIndex::build(&[rec("r1", A, B, Label::Positive, "x")], 1).unwrap();
        let mut q = Query::from_record(&rec("q", A, B, Label::Positive, ""));
        q.defs = Some(("Alpha is a drug".into(), "Beta is a drug".into()));
        q.names1 = vec!["Alpha".into()];
        q.names2 = vec!["Beta".into()];
        let r = idx.predict(&q, 1).unwrap();
        assert!(r.provenance.fallback);
        assert!(r.provenance.excluded_query_pair);
        assert_eq!(r.label, Label::Negative);
        assert_eq!(
            r.explanation,
            "DRUG1 is a drug. DRUG2 is a drug. There were no known direct interactions reported between them."
        );
        assert_eq!(r.provenance.k_used, 2);
    }

    #[test]
    fn swap_is_word_bounded() {
        assert_eq!(swap_placeholders("DRUG1 and DRUG2, DRUG12"), "DRUG2 and DRUG1, DRUG12");
    }
}
