use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{drug_pool, sample_negatives, DatasetError, DdiRecord, Label, PairKey, Source};

/// Fragments with an entry and an exit atom, chained into scaffolds.
const LINKERS: [&str; 20] = [
    "c1ccccc1",
    "C1CCNCC1",
    "c1ccncc1",
    "C1CCOC1",
    "c1ccsc1",
    "c1ccoc1",
    "C(=O)N",
    "S(=O)(=O)N",
    "C(F)(F)",
    "OC",
    "NC",
    "C=C",
    "C(=O)OC",
    "c1ccc2ccccc2c1",
    "C1CC1",
    "N1CCN(CC1)",
    "C(Cl)",
    "C(Br)",
    "P(=O)(O)O",
    "C#C",
];

const PREFIXES: [&str; 4] = ["", "C", "CC", "CCC"];
const CAPS: [&str; 7] = ["", "C", "O", "N", "F", "Cl", "CC"];

const SYLLABLES: [&str; 15] = ["ba", "co", "de", "fi", "ga", "lo", "mi", "ne", "pa", "ri", "so", "ta", "vu", "xe", "zo"];
const SUFFIXES: [&str; 8] = ["xin", "mab", "pril", "olol", "azole", "statin", "vir", "cillin"];

/// Explanation patterns, `{a}` and `{b}` standing for the two drug names,
/// with the mechanism category each one belongs to.
pub const FIXTURE_TEMPLATES: [(&str, &str); 8] = [
    ("{a} may increase the serum concentration of {b}.", "serum_level_increase"),
    ("{a} can decrease the metabolism of {b}.", "metabolism_decrease"),
    ("The risk or severity of bleeding can be increased when {a} is combined with {b}.", "bleeding_risk"),
    ("{a} may increase the hypotensive activities of {b}.", "hypotension"),
    ("{a} may decrease the excretion rate of {b} which could result in a higher serum level.", "serum_level_increase"),
    ("The therapeutic efficacy of {b} can be decreased when used in combination with {a}.", "efficacy_decrease"),
    ("{a} may increase the central nervous system depressant activities of {b}.", "cns_depression"),
    ("The risk of QTc prolongation can be increased when {a} is combined with {b}.", "qtc_prolongation"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDrug {
    pub id: String,
    pub smiles: String,
    pub name: String,
    pub cluster: usize,
    pub def: String,
}

fn name_for(idx: usize, cluster: usize) -> String {
    let mut s = String::new();
    let mut k = idx;
    for _ in 0..3 {
        s.push_str(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
    }
    if k > 0 {
        s.push_str(&k.to_string());
    }
    s.push_str(SUFFIXES[cluster % SUFFIXES.len()]);
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => s,
    }
}

/// Drugs grouped into structural clusters that share a scaffold.
pub fn fixture_drugs(n_drugs: usize, seed: u64) -> Vec<FixtureDrug> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_clusters = (n_drugs / 10).max(2);
    let mut scaffolds: Vec<String> = Vec::new();
    while scaffolds.len() < n_clusters {
        let parts: Vec<&str> = (0..3).map(|_| *LINKERS.choose(&mut rng).expect("non-empty")).collect();
        let s = parts.concat();
        if !scaffolds.contains(&s) {
            scaffolds.push(s);
        }
    }
    let mut seen = HashSet::new();
    let mut drugs = Vec::with_capacity(n_drugs);
    for idx in 0..n_drugs {
        let cluster = idx % n_clusters;
        // Small decorations keep members close to their scaffold; after a few
        // collisions a numbered chain makes the SMILES unique.
        let mut smiles = String::new();
        for attempt in 0.. {
            let prefix = PREFIXES.choose(&mut rng).expect("non-empty");
            let cap = CAPS.choose(&mut rng).expect("non-empty");
            smiles = if attempt < 8 {
                format!("{prefix}{}{cap}", scaffolds[cluster])
            } else {
                format!("{}{}{cap}", "C".repeat(attempt - 4), scaffolds[cluster])
            };
            if seen.insert(smiles.clone()) {
                break;
            }
        }
        let name = name_for(idx, cluster);
        drugs.push(FixtureDrug {
            id: format!("DB{idx:05}"),
            def: format!("{name} is a synthetic compound from structural family {cluster}"),
            smiles,
            name,
            cluster,
        });
    }
    drugs
}

/// Cluster pairs that interact, each with its template index.
fn interacting_clusters(n_clusters: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for c in 0..n_clusters {
        let mut partners = vec![(c + 1) % n_clusters];
        if n_clusters > 3 {
            partners.push((c + 3) % n_clusters);
        }
        for p in partners {
            out.push((c, p, (c + 2 * p) % FIXTURE_TEMPLATES.len()));
        }
    }
    out
}

fn positive_record(k: usize, a: &FixtureDrug, b: &FixtureDrug, template: usize) -> DdiRecord {
    let (pattern, category) = FIXTURE_TEMPLATES[template];
    DdiRecord {
        record_id: format!("pos-{k:06}"),
        drug1_id: a.id.clone(),
        drug2_id: b.id.clone(),
        smiles1: a.smiles.clone(),
        smiles2: b.smiles.clone(),
        drug1_names: vec![a.name.clone()],
        drug2_names: vec![b.name.clone()],
        drug1_def: a.def.clone(),
        drug2_def: b.def.clone(),
        label: Label::Positive,
        explanation: pattern.replace("{a}", &a.name).replace("{b}", &b.name),
        source: Source::Synthetic,
        category: Some(category.to_string()),
    }
}

/// A synthetic dataset: `n_positives` planted interactions between
/// structurally clustered drugs, then as many sampled negatives.
/// Explanations carry the real drug names; masking is left to the pipeline.
pub fn generate_fixture(n_drugs: usize, n_positives: usize, seed: u64) -> Result<Vec<DdiRecord>, DatasetError> {
    let drugs = fixture_drugs(n_drugs, seed);
    if drugs.len() < 2 {
        return Err(DatasetError::PoolExhausted { needed: n_positives, available: 0 });
    }
    let n_clusters = (n_drugs / 10).max(2);
    let links = interacting_clusters(n_clusters);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, d) in drugs.iter().enumerate() {
        members[d.cluster].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9));
    let mut taken: HashSet<PairKey> = HashSet::new();
    let mut positives = Vec::with_capacity(n_positives);

    let mut try_add = |rng: &mut ChaCha8Rng, anchor: Option<usize>, positives: &mut Vec<DdiRecord>| -> bool {
        let options: Vec<&(usize, usize, usize)> = match anchor {
            Some(i) => links.iter().filter(|(x, y, _)| *x == drugs[i].cluster || *y == drugs[i].cluster).collect(),
            None => links.iter().collect(),
        };
        let &&(x, y, template) = options.choose(rng).expect("every cluster has links");
        let pick = |rng: &mut ChaCha8Rng, c: usize| *members[c].choose(rng).expect("clusters are non-empty");
        let (a, b) = match anchor {
            Some(i) if drugs[i].cluster == x && (drugs[i].cluster != y || rng.random_bool(0.5)) => (i, pick(rng, y)),
            Some(i) => (pick(rng, x), i),
            None => (pick(rng, x), pick(rng, y)),
        };
        if a == b || !taken.insert(PairKey::new(&drugs[a].id, &drugs[b].id)) {
            return false;
        }
        positives.push(positive_record(positives.len(), &drugs[a], &drugs[b], template));
        true
    };

    let mut order: Vec<usize> = (0..drugs.len()).collect();
    order.shuffle(&mut rng);
    let mut covered = vec![false; drugs.len()];
    for &i in &order {
        if positives.len() >= n_positives || covered[i] {
            continue;
        }
        for _ in 0..20 {
            if try_add(&mut rng, Some(i), &mut positives) {
                let r = positives.last().expect("just pushed");
                for id in [&r.drug1_id, &r.drug2_id] {
                    let k = drugs.iter().position(|d| &d.id == id).expect("known drug");
                    covered[k] = true;
                }
                break;
            }
        }
    }
    let mut attempts = 0;
    while positives.len() < n_positives {
        attempts += 1;
        if attempts > 50 * n_positives + 1000 {
            return Err(DatasetError::PoolExhausted { needed: n_positives, available: positives.len() });
        }
        try_add(&mut rng, None, &mut positives);
    }

    let pool = drug_pool(&positives);
    let negatives = sample_negatives(&positives, &pool, seed.wrapping_add(1))?;
    positives.extend(negatives);
    Ok(positives)
}
