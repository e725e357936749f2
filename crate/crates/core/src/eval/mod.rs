//! Generation metrics, prediction extraction, template mapping and
//! classification reports.

mod levenshtein;
mod metrics;
mod report;
mod templates;

use thiserror::Error;

pub use levenshtein::{levenshtein, levenshtein_bounded};
pub use metrics::{bleu, generation_scores, lcs_len, rouge_l, rouge_n, tokenize, GenerationScores, Prf};
pub use report::{
    binary_report, classification_report, extract_prediction, multiclass_report, paired_t_test, render_table,
    summarize, summarize_reports, BinaryReport, EvalReport, Extracted, MetricSummary, MulticlassReport, PairedTTest,
    PredLabel, ReportMode,
};
pub use templates::{
    build_template_table, map_explanation_to_type, normalize_template, Template, TemplateTable,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("no record carries a category label")]
    MissingCategoryColumn,
    #[error("template table is empty")]
    EmptyTemplateTable,
    #[error("gold label {0:?} is neither positive nor negative")]
    InvalidGold(String),
}
