//! In-context prompting: pick demonstration pairs by retrieval, assemble the
//! prompt and read the answer back out of a completion.

mod backend;

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::chem::parse_smiles;
use crate::dataset::{Label, PairKey};
use crate::eval::{Extracted, PredLabel};
use crate::fingerprint::compute_keys;
use crate::retrieval::{swap_placeholders, Query, RetrievalError, TrainingIndex};

pub use backend::{
    complete_all, prompt_hash, BackendError, CompletionBackend, HttpBackend, HttpConfig, NullBackend, ReplayBackend,
};

pub const INSTRUCTION: &str = "Analyze whether there exists a drug-drug interaction between the query molecules, and explain the reasons. Several examples have been given for reference, and you should consider the similarity of the molecular structures between the given examples and the query molecules. First, answer Yes/No, and then explain the reasons.";

pub const DEFAULT_DEMONSTRATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub smiles1: String,
    pub smiles2: String,
    pub label: Label,
    pub explanation: String,
    pub pair: PairKey,
    pub score: f64,
}

/// The `n` best-ranked training pairs for the query, oriented so that the
/// first drug is the one reached from query drug 1.
pub fn select_demonstrations(index: &TrainingIndex, query: &Query, n: usize) -> Result<Vec<Demonstration>, RetrievalError> {
    if n == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let fp = |which: u8, s: &str| {
        parse_smiles(s)
            .map(|m| compute_keys(&m))
            .map_err(|e| RetrievalError::UnparseableQuery { which, message: e.to_string() })
    };
    let fp1 = fp(1, &query.smiles1)?;
    let fp2 = fp(2, &query.smiles2)?;
    let own = query
        .drug_ids
        .as_ref()
        .map(|(a, b)| PairKey::new(a, b))
        .filter(|key| index.pair(key).is_some());
    let (ranked, _) = index.ranked_with_fallback(&fp1, &fp2, index.k_default(), own.as_ref())?;
    if ranked.len() < n {
        log::warn!("only {} of {n} demonstrations available", ranked.len());
    }
    let demos = ranked
        .into_iter()
        .take(n)
        .map(|c| {
            let entry = index.pair(&c.key).expect("ranked pairs are indexed");
            let forward = c.via1 == c.key.0;
            let smiles = |id: &str| index.drug(id).expect("indexed drug").smiles.clone();
            Demonstration {
                smiles1: smiles(&c.via1),
                smiles2: smiles(&c.via2),
                label: entry.label,
                explanation: if forward { entry.explanation.clone() } else { swap_placeholders(&entry.explanation) },
                pair: c.key,
                score: c.score,
            }
        })
        .collect();
    Ok(demos)
}

/// Answer text for a demonstration: "Yes. <explanation>" or "No. ...".
pub fn format_answer(label: Label, explanation: &str) -> String {
    let word = if label.is_positive() { "Yes" } else { "No" };
    format!("{word}. {explanation}")
}

pub fn build_prompt(smiles1: &str, smiles2: &str, demos: &[Demonstration]) -> String {
    let mut out = String::from(INSTRUCTION);
    out.push_str("\n\n");
    if !demos.is_empty() {
        out.push_str("Examples:\n");
        for (i, d) in demos.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}. Drug1: {} Drug2: {} Answer: {}",
                i + 1,
                d.smiles1,
                d.smiles2,
                format_answer(d.label, &d.explanation)
            );
        }
        out.push('\n');
    }
    let _ = write!(out, "Query:\nDrug1: {smiles1} Drug2: {smiles2} Answer:");
    out
}

fn answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)^\s*(yes|no)\b[\s\p{P}]*(.*?)\s*$").expect("valid regex"))
}

/// Leading Yes/No decides the label; the rest is the explanation.
pub fn parse_completion(text: &str) -> Extracted {
    match answer_re().captures(text) {
        Some(c) => Extracted {
            label: if c[1].eq_ignore_ascii_case("yes") { PredLabel::Positive } else { PredLabel::Negative },
            explanation: c[2].to_string(),
        },
        None => Extracted { label: PredLabel::Unparseable, explanation: text.to_string() },
    }
}
