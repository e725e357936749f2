use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::metrics::{f1, GenerationScores};
use super::EvalError;
use crate::dataset::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredLabel {
    Positive,
    Negative,
    Unparseable,
}

impl PredLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PredLabel::Positive => "positive",
            PredLabel::Negative => "negative",
            PredLabel::Unparseable => "unparseable",
        }
    }

    pub fn label(self) -> Option<Label> {
        match self {
            PredLabel::Positive => Some(Label::Positive),
            PredLabel::Negative => Some(Label::Negative),
            PredLabel::Unparseable => None,
        }
    }
}

impl From<Label> for PredLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::Positive => PredLabel::Positive,
            Label::Negative => PredLabel::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extracted {
    pub label: PredLabel,
    pub explanation: String,
}

fn strict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)^\s*<s>\s*(positive|negative)\s+Explanation:\s?(.*?)\s*</s>\s*$").expect("valid regex")
    })
}

fn leading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:<s>\s*)?(positive|negative|yes|no)\b").expect("valid regex"))
}

/// Recover (label, explanation) from generated text. The exact target
/// format is tried first; otherwise a leading positive/negative/yes/no word
/// decides the label and the whole text is kept as the explanation.
pub fn extract_prediction(generated: &str) -> Extracted {
    if let Some(c) = strict_re().captures(generated) {
        let label = if &c[1] == "positive" { PredLabel::Positive } else { PredLabel::Negative };
        return Extracted { label, explanation: c[2].to_string() };
    }
    let label = match leading_re().captures(generated) {
        Some(c) => match c[1].to_ascii_lowercase().as_str() {
            "positive" | "yes" => PredLabel::Positive,
            _ => PredLabel::Negative,
        },
        None => PredLabel::Unparseable,
    };
    Extracted { label, explanation: generated.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MulticlassReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Positive is the positive class; unparseable predictions are always wrong.
pub fn binary_report(predictions: &[PredLabel], golds: &[Label]) -> Result<BinaryReport, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch { left: predictions.len(), right: golds.len() });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0, 0, 0, 0);
    for (p, g) in predictions.iter().zip(golds) {
        if p.label() == Some(*g) {
            correct += 1;
        }
        match (p, g) {
            (PredLabel::Positive, Label::Positive) => tp += 1,
            (PredLabel::Positive, Label::Negative) => fp += 1,
            (_, Label::Positive) => fn_ += 1,
            _ => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(BinaryReport {
        accuracy: ratio(correct, golds.len()),
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

/// Macro scores over the categories present in `golds`. A `None` prediction
/// (unparseable or predicted negative) is wrong for every class.
pub fn multiclass_report(predictions: &[Option<String>], golds: &[String]) -> Result<MulticlassReport, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch { left: predictions.len(), right: golds.len() });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let classes: BTreeSet<&str> = golds.iter().map(String::as_str).collect();
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, usize> = BTreeMap::new();
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut correct = 0;
    for (p, g) in predictions.iter().zip(golds) {
        *support.entry(g).or_insert(0) += 1;
        if let Some(p) = p {
            *predicted.entry(p).or_insert(0) += 1;
            if p == g {
                *tp.entry(g).or_insert(0) += 1;
                correct += 1;
            }
        }
    }
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for c in &classes {
        let t = tp.get(c).copied().unwrap_or(0);
        let p = ratio(t, predicted.get(c).copied().unwrap_or(0));
        let r = ratio(t, support[c]);
        sp += p;
        sr += r;
        sf += f1(p, r);
    }
    let n = classes.len() as f64;
    Ok(MulticlassReport {
        accuracy: ratio(correct, golds.len()),
        macro_precision: sp / n,
        macro_recall: sr / n,
        macro_f1: sf / n,
    })
}

/// Classification section selector for [`classification_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportMode {
    Binary,
    Multiclass,
}

/// Either report section, as a flat name → value map.
pub fn classification_report(
    predictions: &[String],
    golds: &[String],
    mode: ReportMode,
) -> Result<BTreeMap<&'static str, f64>, EvalError> {
    let out = match mode {
        ReportMode::Binary => {
            let p: Vec<PredLabel> = predictions.iter().map(|s| parse_pred_label(s)).collect();
            let g = golds
                .iter()
                .map(|s| match parse_pred_label(s).label() {
                    Some(l) => Ok(l),
                    None => Err(EvalError::InvalidGold(s.clone())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let r = binary_report(&p, &g)?;
            BTreeMap::from([("accuracy", r.accuracy), ("precision", r.precision), ("recall", r.recall), ("f1", r.f1)])
        }
        ReportMode::Multiclass => {
            let p: Vec<Option<String>> = predictions.iter().map(|s| Some(s.clone())).collect();
            let r = multiclass_report(&p, golds)?;
            BTreeMap::from([
                ("accuracy", r.accuracy),
                ("macro_precision", r.macro_precision),
                ("macro_recall", r.macro_recall),
                ("macro_f1", r.macro_f1),
            ])
        }
    };
    Ok(out)
}

fn parse_pred_label(s: &str) -> PredLabel {
    match s.trim().to_ascii_lowercase().as_str() {
        "positive" | "yes" => PredLabel::Positive,
        "negative" | "no" => PredLabel::Negative,
        _ => PredLabel::Unparseable,
    }
}

/// Scores of one test set in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationScores>,
    pub binary: BinaryReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiclass: Option<MulticlassReport>,
}

impl EvalReport {
    /// Flat metric name → value, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if let Some(g) = &self.generation {
            out.extend([("bleu", g.bleu), ("rouge1", g.rouge1), ("rouge2", g.rouge2), ("rougeL", g.rouge_l)]);
        }
        let b = &self.binary;
        out.extend([
            ("accuracy", b.accuracy),
            ("precision", b.precision),
            ("recall", b.recall),
            ("f1", b.f1),
        ]);
        if let Some(m) = &self.multiclass {
            out.extend([
                ("mc_accuracy", m.accuracy),
                ("mc_precision", m.macro_precision),
                ("mc_recall", m.macro_recall),
                ("mc_f1", m.macro_f1),
            ]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 with a single fold.
    pub std: f64,
    pub per_fold: Vec<f64>,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MetricSummary { mean, std, per_fold: values.to_vec() }
}

/// Per-metric summaries across the folds of one test set. Metrics missing
/// from some folds are summarized over the folds that have them.
pub fn summarize_reports(reports: &[EvalReport]) -> BTreeMap<String, MetricSummary> {
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (name, v) in r.metrics() {
            by_metric.entry(name.to_string()).or_default().push(v);
        }
    }
    by_metric.into_iter().map(|(k, v)| (k, summarize(&v))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Two-sided paired t-test over matched fold scores. `None` with fewer than
/// two pairs or when every difference is identical (zero variance).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<Option<PairedTTest>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Ok(None);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = summarize(&diffs);
    if s.std == 0.0 || !s.std.is_finite() {
        return Ok(None);
    }
    let n = diffs.len();
    let t = s.mean / (s.std / (n as f64).sqrt());
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(Some(PairedTTest { t, df, p_value }))
}

const TABLE_COLUMNS: [(&str, &str); 8] = [
    ("bleu", "BLEU"),
    ("rouge1", "ROUGE-1"),
    ("rouge2", "ROUGE-2"),
    ("rougeL", "ROUGE-L"),
    ("accuracy", "Acc"),
    ("precision", "P"),
    ("recall", "R"),
    ("f1", "F1"),
];

/// Plain-text table with one row per (method, test set) and mean±std cells.
pub fn render_table(rows: &[(String, BTreeMap<String, MetricSummary>)]) -> String {
    let mut cols: Vec<(&str, &str)> = TABLE_COLUMNS.to_vec();
    let has_mc = rows.iter().any(|(_, m)| m.contains_key("mc_f1"));
    if has_mc {
        cols.extend([("mc_accuracy", "MC-Acc"), ("mc_precision", "MC-P"), ("mc_recall", "MC-R"), ("mc_f1", "MC-F1")]);
    }
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Setting".len());
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, m)| {
            cols.iter()
                .map(|(key, _)| match m.get(*key) {
                    Some(s) => format!("{:.4}±{:.4}", s.mean, s.std),
                    None => "-".to_string(),
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, (_, h))| cells.iter().map(|r| r[i].chars().count()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "Setting");
    for ((_, h), w) in cols.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:<label_w$}");
        for (c, w) in row.iter().zip(&widths) {
            let pad = w - c.chars().count();
            let _ = write!(out, "  {}{c}", " ".repeat(pad));
        }
        out.push('\n');
    }
    out
}
