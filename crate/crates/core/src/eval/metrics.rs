use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Lowercase, then split into alphanumeric runs; every other non-space
/// character is a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap(hyp: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let overlap = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
    (overlap, hyp.len().saturating_sub(n - 1), reference.len().saturating_sub(n - 1))
}

/// Corpus BLEU-4 with uniform weights and the standard brevity penalty.
/// Zero if any n-gram order has no clipped match.
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch { left: hypotheses.len(), right: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_case: Vec<[(usize, usize); 4]> = hypotheses
        .par_iter()
        .zip(references.par_iter())
        .map(|(h, r)| {
            let mut out = [(0, 0); 4];
            for (k, slot) in out.iter_mut().enumerate() {
                let (o, hn, _) = clipped_overlap(h, r, k + 1);
                *slot = (o, hn);
            }
            out
        })
        .collect();
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    for case in &per_case {
        for k in 0..4 {
            num[k] += case[k].0;
            den[k] += case[k].1;
        }
    }
    if num.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4).map(|k| (num[k] as f64 / den[k] as f64).ln()).sum::<f64>() / 4.0;
    let c: usize = hypotheses.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_p.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(hit: usize, hyp_total: usize, ref_total: usize) -> Self {
        let precision = if hyp_total == 0 { 0.0 } else { hit as f64 / hyp_total as f64 };
        let recall = if ref_total == 0 { 0.0 } else { hit as f64 / ref_total as f64 };
        Self { precision, recall, f1: f1(precision, recall) }
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// ROUGE-N over clipped n-gram overlap.
pub fn rouge_n(hyp: &[String], reference: &[String], n: usize) -> Prf {
    let (o, h, r) = clipped_overlap(hyp, reference, n.max(1));
    Prf::from_counts(o, h, r)
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L from the longest common subsequence.
pub fn rouge_l(hyp: &[String], reference: &[String]) -> Prf {
    Prf::from_counts(lcs_len(hyp, reference), hyp.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

/// Corpus BLEU plus per-case ROUGE F1 averaged over cases.
pub fn generation_scores(hypotheses: &[String], references: &[String]) -> Result<GenerationScores, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch { left: hypotheses.len(), right: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    let h: Vec<Vec<String>> = hypotheses.par_iter().map(|t| tokenize(t)).collect();
    let r: Vec<Vec<String>> = references.par_iter().map(|t| tokenize(t)).collect();
    let per_case: Vec<[f64; 3]> = h
        .par_iter()
        .zip(r.par_iter())
        .map(|(a, b)| [rouge_n(a, b, 1).f1, rouge_n(a, b, 2).f1, rouge_l(a, b).f1])
        .collect();
    let n = per_case.len() as f64;
    let mean = |k: usize| per_case.iter().map(|c| c[k]).sum::<f64>() / n;
    Ok(GenerationScores {
        bleu: bleu(&h, &r)?,
        rouge1: mean(0),
        rouge2: mean(1),
        rouge_l: mean(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer() {
        assert_eq!(t("DRUG1 inhibits CYP3A4."), vec!["drug1", "inhibits", "cyp3a4", "."]);
        assert!(t("").is_empty());
        assert_eq!(t("a_b  (c)"), vec!["a", "_", "b", "(", "c", ")"]);
    }

    #[test]
    fn rouge_examples() {
        let p = rouge_n(&t("a b"), &t("a c"), 1);
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        let l = rouge_l(&t("a b c"), &t("a c d"));
        assert!((l.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_l(&t("x y"), &t("x y")).f1, 1.0);
        assert_eq!(rouge_l(&t("x y"), &t("z")).f1, 0.0);
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let a = vec![t("the quick brown fox jumps")];
        assert!((bleu(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bleu(&a, &[t("nothing in common here ok")]).unwrap(), 0.0);
        assert!(bleu(&a, &[]).is_err());
    }
}
