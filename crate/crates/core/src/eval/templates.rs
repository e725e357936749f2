use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::levenshtein::levenshtein_bounded;
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: usize,
    pub text: String,
    pub category: String,
    /// Co-occurring category tallies behind the vote.
    pub counts: BTreeMap<String, usize>,
}

/// Distinct masked explanations, each mapped to a mechanism category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct TemplateTable {
    templates: Vec<Template>,
    #[serde(skip)]
    chars: Vec<Vec<char>>,
}

/// Templates are compared lowercased with surrounding whitespace trimmed.
pub fn normalize_template(text: &str) -> String {
    text.trim().to_lowercase()
}

impl TemplateTable {
    pub fn new(templates: Vec<Template>) -> Result<Self, EvalError> {
        if templates.is_empty() {
            return Err(EvalError::EmptyTemplateTable);
        }
        let chars = templates.iter().map(|t| t.text.chars().collect()).collect();
        Ok(Self { templates, chars })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Nearest template by edit distance; ties go to the lowest id.
    pub fn nearest(&self, generated: &str) -> &Template {
        let q: Vec<char> = normalize_template(generated).chars().collect();
        let mut best = 0;
        let mut best_d = usize::MAX;
        for (i, t) in self.chars.iter().enumerate() {
            if best_d == 0 {
                break;
            }
            // A later template only wins with a strictly smaller distance.
            let bound = if best_d == usize::MAX { q.len().max(t.len()) } else { best_d - 1 };
            if let Some(d) = levenshtein_bounded(&q, t, bound) {
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
        }
        &self.templates[best]
    }

    pub fn map_explanation_to_type(&self, generated: &str) -> &str {
        &self.nearest(generated).category
    }
}

#[derive(Deserialize)]
struct RawTable {
    templates: Vec<Template>,
}

impl TryFrom<RawTable> for TemplateTable {
    type Error = EvalError;

    fn try_from(raw: RawTable) -> Result<Self, EvalError> {
        Self::new(raw.templates)
    }
}

pub fn map_explanation_to_type<'a>(generated: &str, table: &'a TemplateTable) -> &'a str {
    table.map_explanation_to_type(generated)
}

/// Build the table from (masked explanation, category) pairs. Each distinct
/// normalized text becomes a template; its category is the majority label,
/// ties broken by the smallest category. Pairs without a category are
/// skipped, but at least one must carry one.
pub fn build_template_table<'a, I>(pairs: I) -> Result<TemplateTable, EvalError>
where
    I: IntoIterator<Item = (&'a str, Option<&'a str>)>,
{
    let mut tallies: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut any = false;
    for (text, category) in pairs {
        let Some(category) = category else { continue };
        any = true;
        *tallies
            .entry(normalize_template(text))
            .or_default()
            .entry(category.to_string())
            .or_insert(0) += 1;
    }
    if !any {
        return Err(EvalError::MissingCategoryColumn);
    }
    let templates = tallies
        .into_iter()
        .enumerate()
        .map(|(id, (text, counts))| {
            // BTreeMap iterates categories in ascending order, so keeping the
            // first maximum gives the lexicographic tie-break.
            let mut category = String::new();
            let mut top = 0;
            for (c, n) in &counts {
                if *n > top {
                    top = *n;
                    category = c.clone();
                }
            }
            Template { id, text, category, counts }
        })
        .collect();
    TemplateTable::new(templates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_and_ties() {
        let t = build_template_table([
            ("x", Some("A")),
            ("x", Some("B")),
            ("x", Some("A")),
            ("y", Some("B")),
            ("y", Some("A")),
            ("z", None),
        ])
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.templates()[0].category, "A");
        assert_eq!(t.templates()[1].category, "A");
        assert!(matches!(build_template_table([("x", None)]), Err(EvalError::MissingCategoryColumn)));
    }

    #[test]
    fn nearest_mapping() {
        let t = build_template_table([
            ("DRUG1 increases DRUG2 levels", Some("pk")),
            ("DRUG1 adds to DRUG2 sedation", Some("pd")),
        ])
        .unwrap();
        assert_eq!(t.map_explanation_to_type("DRUG1 adds to DRUG2 sedation"), "pd");
        assert_eq!(t.map_explanation_to_type("drug1 increase drug2 level"), "pk");
        let single = build_template_table([("only", Some("c"))]).unwrap();
        assert_eq!(single.map_explanation_to_type("anything at all"), "c");
    }
}
