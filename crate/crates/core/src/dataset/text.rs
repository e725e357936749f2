use super::{DatasetError, Label};

/// Closing sentence of every templated negative explanation.
pub const NEGATIVE_SUFFIX: &str = "There were no known direct interactions reported between them.";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Length in bytes of the prefix of `text` equal to `name` ignoring case,
/// if there is one.
fn match_ci(text: &str, name: &str) -> Option<usize> {
    let mut t = text.char_indices();
    for nc in name.chars() {
        let (_, tc) = t.next()?;
        if !tc.to_lowercase().eq(nc.to_lowercase()) {
            return None;
        }
    }
    Some(t.next().map_or(text.len(), |(i, _)| i))
}

/// Replace whole-word, case-insensitive mentions of `names1` with `DRUG1` and
/// `names2` with `DRUG2`. Longer names are tried first; on equal length the
/// first drug wins.
pub fn mask_drug_names(explanation: &str, names1: &[String], names2: &[String]) -> String {
    let mut names: Vec<(&str, &str)> = names1
        .iter()
        .map(|n| (n.trim(), "DRUG1"))
        .chain(names2.iter().map(|n| (n.trim(), "DRUG2")))
        .filter(|(n, _)| !n.is_empty() && !n.eq_ignore_ascii_case("drug1") && !n.eq_ignore_ascii_case("drug2"))
        .collect();
    // stable sort keeps names1 ahead of names2 on ties
    names.sort_by_key(|(n, _)| std::cmp::Reverse(n.chars().count()));

    let mut out = String::with_capacity(explanation.len());
    let mut i = 0;
    let mut prev: Option<char> = None;
    'scan: while i < explanation.len() {
        let rest = &explanation[i..];
        if !prev.is_some_and(is_word_char) {
            for (name, tag) in &names {
                if let Some(len) = match_ci(rest, name) {
                    let next = rest[len..].chars().next();
                    if !next.is_some_and(is_word_char) {
                        out.push_str(tag);
                        i += len;
                        prev = tag.chars().last();
                        continue 'scan;
                    }
                }
            }
        }
        let c = rest.chars().next().expect("non-empty rest");
        out.push(c);
        prev = Some(c);
        i += c.len_utf8();
    }
    out
}

/// `"<DEF1>. <DEF2>. There were no known direct interactions reported between them."`
///
/// A definition already ending in a period is not given a second one.
pub fn negative_explanation(def1: &str, def2: &str) -> Result<String, DatasetError> {
    let d1 = def1.trim();
    let d2 = def2.trim();
    if d1.is_empty() {
        return Err(DatasetError::EmptyDefinition("drug 1".into()));
    }
    if d2.is_empty() {
        return Err(DatasetError::EmptyDefinition("drug 2".into()));
    }
    let dot = |d: &str| if d.ends_with('.') { "" } else { "." };
    Ok(format!("{d1}{} {d2}{} {NEGATIVE_SUFFIX}", dot(d1), dot(d2)))
}

/// Generation target: `"<s> {label} Explanation: {explanation} </s>"`.
pub fn build_target_sequence(label: Label, explanation: &str) -> String {
    format!("<s> {label} Explanation: {explanation} </s>")
}

/// Model input: `"DRUG1 {smiles1}; DRUG2 {smiles2}"`.
pub fn build_input_sequence(smiles1: &str, smiles2: &str) -> String {
    format!("DRUG1 {smiles1}; DRUG2 {smiles2}")
}
