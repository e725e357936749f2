use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::text::{mask_drug_names, negative_explanation};
use super::{DatasetError, DdiRecord, Label, PairKey, Source};

/// Per-drug fields needed to build a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugInfo {
    pub id: String,
    pub smiles: String,
    pub names: Vec<String>,
    pub def: String,
}

/// Distinct drugs appearing in `records`, sorted by id. The first record
/// mentioning a drug supplies its fields.
pub fn drug_pool(records: &[DdiRecord]) -> Vec<DrugInfo> {
    let mut pool: BTreeMap<&str, DrugInfo> = BTreeMap::new();
    for r in records {
        for (id, smiles, names, def) in [
            (&r.drug1_id, &r.smiles1, &r.drug1_names, &r.drug1_def),
            (&r.drug2_id, &r.smiles2, &r.drug2_names, &r.drug2_def),
        ] {
            pool.entry(id).or_insert_with(|| DrugInfo {
                id: id.clone(),
                smiles: smiles.clone(),
                names: names.clone(),
                def: def.clone(),
            });
        }
    }
    pool.into_values().collect()
}

/// Draw as many negative pairs as there are positives, uniformly from the
/// drug pairs not already labelled positive.
///
/// Negatives are oriented with the smaller drug id first and get ids
/// `neg-000000`, `neg-000001`, ... in draw order.
pub fn sample_negatives(positives: &[DdiRecord], pool: &[DrugInfo], seed: u64) -> Result<Vec<DdiRecord>, DatasetError> {
    let mut pool: Vec<&DrugInfo> = pool.iter().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    pool.dedup_by(|a, b| a.id == b.id);
    let n = pool.len();
    let taken: HashSet<PairKey> = positives.iter().map(DdiRecord::key).collect();
    let in_pool = |k: &PairKey| pool.binary_search_by(|d| d.id.as_str().cmp(&k.0)).is_ok()
        && pool.binary_search_by(|d| d.id.as_str().cmp(&k.1)).is_ok();
    let blocked = taken.iter().filter(|k| in_pool(k)).count();
    let total = n * n.saturating_sub(1) / 2;
    let available = total - blocked;
    let needed = positives.len();
    if needed > available {
        return Err(DatasetError::PoolExhausted { needed, available });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(needed);
    if needed * 2 > available {
        // dense: enumerate eligible pairs and take a partial shuffle
        let mut eligible = Vec::with_capacity(available);
        for i in 0..n {
            for j in i + 1..n {
                if !taken.contains(&PairKey::new(&pool[i].id, &pool[j].id)) {
                    eligible.push((i, j));
                }
            }
        }
        let (head, _) = eligible.partial_shuffle(&mut rng, needed);
        chosen.extend_from_slice(head);
    } else {
        let mut seen = HashSet::with_capacity(needed);
        while chosen.len() < needed {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let (i, j) = (a.min(b), a.max(b));
            if taken.contains(&PairKey::new(&pool[i].id, &pool[j].id)) || !seen.insert((i, j)) {
                continue;
            }
            chosen.push((i, j));
        }
    }

    chosen
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| {
            let (d1, d2) = (pool[i], pool[j]);
            let raw = negative_explanation(&d1.def, &d2.def).map_err(|_| {
                DatasetError::EmptyDefinition(if d1.def.trim().is_empty() { d1.id.clone() } else { d2.id.clone() })
            })?;
            Ok(DdiRecord {
                record_id: format!("neg-{k:06}"),
                drug1_id: d1.id.clone(),
                drug2_id: d2.id.clone(),
                smiles1: d1.smiles.clone(),
                smiles2: d2.smiles.clone(),
                drug1_names: d1.names.clone(),
                drug2_names: d2.names.clone(),
                drug1_def: d1.def.clone(),
                drug2_def: d2.def.clone(),
                label: Label::Negative,
                explanation: mask_drug_names(&raw, &d1.names, &d2.names),
                source: positives.first().map_or(Source::Synthetic, |p| p.source),
                category: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drug(i: usize) -> DrugInfo {
        DrugInfo {
            id: format!("D{i:02}"),
            smiles: "C".repeat(i + 1),
            names: vec![format!("Drugname{i}")],
            def: format!("Drugname{i} is a test compound"),
        }
    }

    fn positive(a: usize, b: usize) -> DdiRecord {
        let (x, y) = (drug(a), drug(b));
        DdiRecord {
            record_id: format!("p{a}-{b}"),
            drug1_id: x.id,
            drug2_id: y.id,
            smiles1: x.smiles,
            smiles2: y.smiles,
            drug1_names: x.names,
            drug2_names: y.names,
            drug1_def: x.def,
            drug2_def: y.def,
            label: Label::Positive,
            explanation: "E".into(),
            source: Source::Synthetic,
            category: None,
        }
    }

    #[test]
    fn ten_positives_ten_negatives() {
        let pool: Vec<DrugInfo> = (0..8).map(drug).collect();
        let pos: Vec<DdiRecord> = (0..10).map(|k| positive(k % 8, (k + 1 + k / 8) % 8)).collect();
        let neg = sample_negatives(&pos, &pool, 3).unwrap();
        assert_eq!(neg.len(), 10);
        let pos_keys: HashSet<PairKey> = pos.iter().map(DdiRecord::key).collect();
        let neg_keys: HashSet<PairKey> = neg.iter().map(DdiRecord::key).collect();
        assert_eq!(neg_keys.len(), 10);
        assert!(neg_keys.is_disjoint(&pos_keys));
        assert_eq!(neg, sample_negatives(&pos, &pool, 3).unwrap());
        assert!(neg[0].explanation.starts_with("DRUG1 is a test compound. DRUG2 is a test compound."));
    }

    #[test]
    fn pool_exhaustion() {
        let pool: Vec<DrugInfo> = (0..3).map(drug).collect();
        let pos = vec![positive(0, 1), positive(1, 2)];
        assert!(matches!(
            sample_negatives(&pos, &pool, 1),
            Err(DatasetError::PoolExhausted { needed: 2, available: 1 })
        ));
    }
}
