//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use exddi_core::bilinear::{self, logit, loss_and_grad, EmbeddingTable, Example, FeatureBag, InteractionMatrix, TrainConfig};
use exddi_core::chem::parse_smiles;
use exddi_core::dataset::{
    build_target_sequence, negative_explanation, split_inductive, split_transductive, DdiRecord, Label, Role,
};
use exddi_core::eval::{generation_scores, levenshtein, rouge_l, rouge_n, tokenize};
use exddi_core::fingerprint::{compute_keys, tanimoto, Fingerprint, KeyTable, FINGERPRINT_BITS};
use exddi_core::pipeline::{generate_fixture, run_pipeline, write_jsonl, RunConfig};
use exddi_core::retrieval::{Query, TrainingIndex};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde::Deserialize;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_path(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

// Retrieval, written out directly: score every training record in both
// orientations against plain sorted neighbor lists.

fn popcount_tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (mut both, mut either) = (0u32, 0u32);
    for bit in 0..FINGERPRINT_BITS {
        let (x, y) = (a.get(bit), b.get(bit));
        both += u32::from(x && y);
        either += u32::from(x || y);
    }
    if either == 0 {
        0.0
    } else {
        f64::from(both) / f64::from(either)
    }
}

fn swap(text: &str) -> String {
    text.replace("DRUG1", "\u{0}").replace("DRUG2", "DRUG1").replace('\u{0}', "DRUG2")
}

struct Oracle<'a> {
    ids: Vec<String>,
    fps: HashMap<String, Fingerprint>,
    records: &'a [DdiRecord],
}

struct OracleAnswer {
    label: Label,
    explanation: String,
    pair: Option<(String, String)>,
    score: f64,
    k_used: usize,
}

struct Pick<'a> {
    score: f64,
    lo: String,
    hi: String,
    via_lo: bool,
    /// Record's own drug 1 was reached from query drug 1.
    forward: bool,
    record: &'a DdiRecord,
}

impl<'a> Oracle<'a> {
    fn new(records: &'a [DdiRecord]) -> Self {
        let mut fps = HashMap::new();
        for r in records {
            for (id, s) in [(&r.drug1_id, &r.smiles1), (&r.drug2_id, &r.smiles2)] {
                fps.entry(id.clone()).or_insert_with(|| compute_keys(&parse_smiles(s).unwrap()));
            }
        }
        let mut ids: Vec<String> = fps.keys().cloned().collect();
        ids.sort();
        Self { ids, fps, records }
    }

    fn neighbors(&self, q: &Fingerprint, k: usize) -> HashMap<&str, f64> {
        let mut all: Vec<(f64, &str)> = self.ids.iter().map(|id| (popcount_tanimoto(q, &self.fps[id]), id.as_str())).collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        all.into_iter().take(k).map(|(s, id)| (id, s)).collect()
    }

    fn answer(&self, q1: &Fingerprint, q2: &Fingerprint, k: usize) -> OracleAnswer {
        let mut k = k;
        loop {
            let n1 = self.neighbors(q1, k);
            let n2 = self.neighbors(q2, k);
            let mut best: Option<Pick> = None;
            for r in self.records {
                let lo = r.drug1_id.clone().min(r.drug2_id.clone());
                let hi = r.drug1_id.clone().max(r.drug2_id.clone());
                for (first, second, forward) in [(&r.drug1_id, &r.drug2_id, true), (&r.drug2_id, &r.drug1_id, false)] {
                    let (Some(s1), Some(s2)) = (n1.get(first.as_str()), n2.get(second.as_str())) else { continue };
                    let pick = Pick { score: s1 * s2, lo: lo.clone(), hi: hi.clone(), via_lo: first == &lo, forward, record: r };
                    // Higher score, then smaller pair, then reaching the
                    // pair's smaller id from query drug 1.
                    let better = match &best {
                        None => true,
                        Some(b) if pick.score != b.score => pick.score > b.score,
                        Some(b) if (&pick.lo, &pick.hi) != (&b.lo, &b.hi) => (&pick.lo, &pick.hi) < (&b.lo, &b.hi),
                        Some(b) => pick.via_lo && !b.via_lo,
                    };
                    if better {
                        best = Some(pick);
                    }
                }
            }
            if let Some(b) = best {
                let explanation = if b.forward { b.record.explanation.clone() } else { swap(&b.record.explanation) };
                return OracleAnswer { label: b.record.label, explanation, pair: Some((b.lo, b.hi)), score: b.score, k_used: k };
            }
            if k >= self.ids.len() {
                return OracleAnswer {
                    label: Label::Negative,
                    explanation: format!("DRUG1. DRUG2. {}", "There were no known direct interactions reported between them."),
                    pair: None,
                    score: 0.0,
                    k_used: k,
                };
            }
            k = (k * 2).min(self.ids.len());
        }
    }
}

fn retrieval_oracle() -> Outcome {
    let records = generate_fixture(200, 500, 17).map_err(|e| e.to_string())?;
    ensure(records.len() == 1000, || format!("fixture has {} pairs", records.len()))?;
    let index = TrainingIndex::build(&records, 50).map_err(|e| e.to_string())?;
    let oracle = Oracle::new(&records);
    // Queries mix indexed drugs with drugs the index has never seen.
    let novel = generate_fixture(60, 80, 99).map_err(|e| e.to_string())?;
    let mut pool: Vec<String> = records.iter().flat_map(|r| [r.smiles1.clone(), r.smiles2.clone()]).collect();
    pool.extend(novel.iter().flat_map(|r| [r.smiles1.clone(), r.smiles2.clone()]));
    pool.sort();
    pool.dedup();
    let mut rng = StdRng::seed_from_u64(5);
    let queries: Vec<(Query, usize)> = (0..1000)
        .map(|_| {
            let a = pool.choose(&mut rng).unwrap();
            let b = pool.choose(&mut rng).unwrap();
            (Query::new(a, b), *[1usize, 2, 3, 5, 10, 50].choose(&mut rng).unwrap())
        })
        .collect();

    let start = Instant::now();
    let got: Vec<_> = queries.iter().map(|(q, k)| index.predict(q, *k)).collect();
    let elapsed = start.elapsed();

    let mut matched = 0;
    let mut first_mismatch = None;
    for ((q, k), res) in queries.iter().zip(got) {
        let res = res.map_err(|e| e.to_string())?;
        let f1 = compute_keys(&parse_smiles(&q.smiles1).unwrap());
        let f2 = compute_keys(&parse_smiles(&q.smiles2).unwrap());
        let want = oracle.answer(&f1, &f2, *k);
        let pair = res.provenance.pair.as_ref().map(|p| (p.0.clone(), p.1.clone()));
        let same = res.label == want.label
            && res.explanation == want.explanation
            && pair == want.pair
            && (res.provenance.score - want.score).abs() < 1e-12
            && res.provenance.k_used == want.k_used;
        if same {
            matched += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some(format!("{} + {} (k={k}): got {:?}, want {:?}", q.smiles1, q.smiles2, pair, want.pair));
        }
    }
    ensure(matched == 1000, || format!("{matched}/1000 match; first: {}", first_mismatch.unwrap_or_default()))?;
    ensure(elapsed < Duration::from_secs(10), || format!("1000 predictions took {elapsed:?}"))?;
    Ok(format!("1000/1000 queries agree, {:.2}s", elapsed.as_secs_f64()))
}

fn split_invariants() -> Outcome {
    let records = generate_fixture(200, 500, 23).map_err(|e| e.to_string())?;
    let folds = split_inductive(&records, 23, 5).map_err(|e| e.to_string())?;
    ensure(folds.len() == 5, || format!("{} inductive folds", folds.len()))?;
    let (mut s1, mut s2) = (0, 0);
    for f in &folds {
        let train: HashSet<&str> = f
            .indices(Role::Train)
            .into_iter()
            .flat_map(|i| [records[i].drug1_id.as_str(), records[i].drug2_id.as_str()])
            .collect();
        for i in f.indices(Role::TestS1) {
            let r = &records[i];
            ensure(!train.contains(r.drug1_id.as_str()) && !train.contains(r.drug2_id.as_str()), || {
                format!("fold {}: test_s1 record {} touches a training drug", f.fold, r.record_id)
            })?;
            s1 += 1;
        }
        for i in f.indices(Role::TestS2) {
            let r = &records[i];
            let seen = usize::from(train.contains(r.drug1_id.as_str())) + usize::from(train.contains(r.drug2_id.as_str()));
            ensure(seen == 1, || format!("fold {}: test_s2 record {} has {seen} training drugs", f.fold, r.record_id))?;
            s2 += 1;
        }
    }
    ensure(s1 > 0 && s2 > 0, || "inductive test sets are empty".into())?;

    let folds = split_transductive(&records, 23, 5).map_err(|e| e.to_string())?;
    let mut seen = vec![0usize; records.len()];
    for f in &folds {
        for i in f.indices(Role::Test) {
            seen[i] += 1;
        }
    }
    ensure(seen.iter().all(|&c| c == 1), || {
        let missing = seen.iter().filter(|&&c| c == 0).count();
        let repeated = seen.iter().filter(|&&c| c > 1).count();
        format!("transductive test sets: {missing} records never tested, {repeated} tested twice")
    })?;
    Ok(format!("{s1} test_s1 and {s2} test_s2 records checked; transductive folds partition {} records", records.len()))
}

#[derive(Deserialize)]
struct Prf {
    p: f64,
    r: f64,
    f: f64,
}

#[derive(Deserialize)]
struct MetricCase {
    hypothesis: String,
    reference: String,
    rouge1: Prf,
    rouge2: Prf,
    #[serde(rename = "rougeL")]
    rouge_l: Prf,
}

#[derive(Deserialize)]
struct MetricFixture {
    bleu: f64,
    rouge1: f64,
    rouge2: f64,
    #[serde(rename = "rougeL")]
    rouge_l: f64,
    cases: Vec<MetricCase>,
}

fn random_string(rng: &mut StdRng) -> String {
    let len = rng.random_range(0..12);
    (0..len).map(|_| *b"abcde".choose(rng).unwrap() as char).collect()
}

fn metric_parity() -> Outcome {
    let fx: MetricFixture = serde_json::from_str(&std::fs::read_to_string(fixture_path("metric_reference.json")).unwrap())
        .map_err(|e| e.to_string())?;
    ensure(fx.cases.len() == 20, || format!("{} cases in fixture", fx.cases.len()))?;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
    for (i, c) in fx.cases.iter().enumerate() {
        let (h, r) = (tokenize(&c.hypothesis), tokenize(&c.reference));
        for (name, got, want) in [
            ("rouge1", rouge_n(&h, &r, 1), &c.rouge1),
            ("rouge2", rouge_n(&h, &r, 2), &c.rouge2),
            ("rougeL", rouge_l(&h, &r), &c.rouge_l),
        ] {
            ensure(close(got.precision, want.p) && close(got.recall, want.r) && close(got.f1, want.f), || {
                format!("case {i} {name}: got {got:?}")
            })?;
        }
    }
    let hyps: Vec<String> = fx.cases.iter().map(|c| c.hypothesis.clone()).collect();
    let refs: Vec<String> = fx.cases.iter().map(|c| c.reference.clone()).collect();
    let s = generation_scores(&hyps, &refs).map_err(|e| e.to_string())?;
    for (name, got, want) in [("bleu", s.bleu, fx.bleu), ("rouge1", s.rouge1, fx.rouge1), ("rouge2", s.rouge2, fx.rouge2), ("rougeL", s.rouge_l, fx.rouge_l)] {
        ensure(close(got, want), || format!("corpus {name}: {got} vs {want}"))?;
    }
    ensure(levenshtein("kitten", "sitting") == 3, || "kitten/sitting".into())?;

    let mut rng = StdRng::seed_from_u64(8);
    for _ in 0..10_000 {
        let (a, b, c) = (random_string(&mut rng), random_string(&mut rng), random_string(&mut rng));
        let (ab, ba) = (levenshtein(&a, &b), levenshtein(&b, &a));
        ensure(levenshtein(&a, &a) == 0, || format!("d({a:?},{a:?}) != 0"))?;
        ensure(ab == ba, || format!("asymmetric on {a:?} {b:?}"))?;
        ensure((ab == 0) == (a == b), || format!("zero distance between {a:?} and {b:?}"))?;
        ensure(ab <= levenshtein(&a, &c) + levenshtein(&c, &b), || format!("triangle fails on {a:?} {b:?} {c:?}"))?;
    }
    Ok("20 cases within 1e-6; kitten/sitting = 3; axioms hold on 10000 pairs".into())
}

fn random_bag(rng: &mut StdRng, d: usize) -> FeatureBag {
    let n = rng.random_range(1..5);
    FeatureBag::new((0..n).map(|_| (0..d).map(|_| rng.random_range(-0.5..0.5)).collect()).collect()).unwrap()
}

fn gradient_check() -> Outcome {
    let mut rng = StdRng::seed_from_u64(31);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..7);
        let m = InteractionMatrix::from_values(d, (0..d * d).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
        let batch: Vec<Example> = (0..rng.random_range(1..6))
            .map(|_| Example { a: random_bag(&mut rng, d), b: random_bag(&mut rng, d), label: rng.random_range(0..2) })
            .collect();
        let (_, grad) = loss_and_grad(&m, &batch).map_err(|e| e.to_string())?;
        for i in 0..d {
            for j in 0..d {
                let mut plus = m.clone();
                plus.set(i, j, m.get(i, j) + h);
                let mut minus = m.clone();
                minus.set(i, j, m.get(i, j) - h);
                let numeric = (loss_and_grad(&plus, &batch).unwrap().0 - loss_and_grad(&minus, &batch).unwrap().0) / (2.0 * h);
                let analytic = grad.get(i, j);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;

    let mut max_diff: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..9);
        let m = InteractionMatrix::from_values(d, (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (a, b) = (random_bag(&mut rng, d), random_bag(&mut rng, d));
        let mut direct = 0.0;
        for ai in a.vectors() {
            for bj in b.vectors() {
                for r in 0..d {
                    for c in 0..d {
                        direct += ai[r] * m.get(r, c) * bj[c];
                    }
                }
            }
        }
        max_diff = max_diff.max((direct - logit(&m, &a, &b).unwrap()).abs());
    }
    ensure(max_diff < 1e-12, || format!("double sum differs from aggregate form by {max_diff:e}"))?;
    Ok(format!("max relative gradient error {worst:.2e}; max collapse difference {max_diff:.2e}"))
}

/// Each group owns a disjoint block of six bits; two noise bits come from a
/// pool shared by all groups. Positive pairs join groups 0 and 1, negatives
/// groups 2 and 3.
fn planted_fingerprint(rng: &mut StdRng, group: usize) -> Fingerprint {
    let core = group * 6..group * 6 + 6;
    let noise: Vec<usize> = (0..2).map(|_| rng.random_range(100..130)).collect();
    Fingerprint::from_bits(core.chain(noise)).unwrap()
}

fn planted_examples(rng: &mut StdRng, table: &EmbeddingTable, n: usize) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let (ga, gb) = if positive { (0, 1) } else { (2, 3) };
            Example {
                a: table.featurize(&planted_fingerprint(rng, ga)),
                b: table.featurize(&planted_fingerprint(rng, gb)),
                label: u8::from(positive),
            }
        })
        .collect()
}

fn bilinear_learnability() -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
    let table = EmbeddingTable::new(cfg.d, cfg.seed).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(41);
    let train = planted_examples(&mut rng, &table, 400);
    let val = planted_examples(&mut rng, &table, 100);
    let outcome = bilinear::train(&train, &val, &cfg, &|_| 0.0).map_err(|e| e.to_string())?;
    let acc = bilinear::accuracy(&outcome.matrix, &val, cfg.threshold).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(outcome.log.len() <= 50, || format!("{} epochs", outcome.log.len()))?;
    ensure(acc >= 0.95, || format!("validation accuracy {acc}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("validation accuracy {acc:.3} after {} epochs, {:.2}s", outcome.log.len(), elapsed.as_secs_f64()))
}

#[derive(Deserialize)]
struct RefDrug {
    name: String,
    smiles: String,
    bits: Vec<usize>,
}

#[derive(Deserialize)]
struct FingerprintFixture {
    drugs: Vec<RefDrug>,
}

fn fingerprint_parity() -> Outcome {
    let fx: FingerprintFixture =
        serde_json::from_str(&std::fs::read_to_string(fixture_path("maccs_reference.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure(fx.drugs.len() == 20, || format!("{} drugs in fixture", fx.drugs.len()))?;
    let skip = KeyTable::maccs().unimplemented_bits();
    for d in &fx.drugs {
        let ours: BTreeSet<usize> = compute_keys(&parse_smiles(&d.smiles).map_err(|e| e.to_string())?)
            .ones()
            .filter(|b| !skip.contains(b))
            .collect();
        let theirs: BTreeSet<usize> = d.bits.iter().copied().filter(|b| !skip.contains(b)).collect();
        ensure(ours == theirs, || format!("{} differs on keys {:?}", d.name, ours.symmetric_difference(&theirs).map(|b| b + 1).collect::<Vec<_>>()))?;
    }
    let mut rng = StdRng::seed_from_u64(3);
    let random_fp = |rng: &mut StdRng| {
        let density = rng.random_range(0.0..0.6);
        Fingerprint::from_bits((0..FINGERPRINT_BITS).filter(|_| rng.random_bool(density))).unwrap()
    };
    for _ in 0..10_000 {
        let (a, b) = (random_fp(&mut rng), random_fp(&mut rng));
        let (ab, ba) = (tanimoto(&a, &b), tanimoto(&b, &a));
        ensure(ab == ba, || "tanimoto is not symmetric".into())?;
        ensure((0.0..=1.0).contains(&ab), || format!("tanimoto {ab} out of range"))?;
        ensure(a.is_empty() || tanimoto(&a, &a) == 1.0, || "self similarity is not 1".into())?;
        ensure(ab == popcount_tanimoto(&a, &b), || "tanimoto disagrees with a bitwise count".into())?;
    }
    Ok(format!("20 drugs match on {} implemented keys; 10000 random pairs checked", FINGERPRINT_BITS - skip.len()))
}

fn template_strings() -> Outcome {
    let neg = negative_explanation("Aspirin is an NSAID", "Warfarin is an anticoagulant.").map_err(|e| e.to_string())?;
    let want = "Aspirin is an NSAID. Warfarin is an anticoagulant. There were no known direct interactions reported between them.";
    ensure(neg == want, || format!("negative explanation {neg:?}"))?;
    let target = build_target_sequence(Label::Positive, "DRUG1 may increase the activities of DRUG2.");
    let want = "<s> positive Explanation: DRUG1 may increase the activities of DRUG2. </s>";
    ensure(target == want, || format!("target sequence {target:?}"))?;
    let target = build_target_sequence(Label::Negative, "x");
    ensure(target == "<s> negative Explanation: x </s>", || format!("target sequence {target:?}"))?;
    Ok("negative explanation and target sequence byte-match".into())
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for fold in std::fs::read_dir(dir).unwrap() {
        let fold = fold.unwrap().path();
        if !fold.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&fold).unwrap() {
            let f = f.unwrap().path();
            let name = f.file_name().unwrap().to_string_lossy().to_string();
            if name.starts_with("predictions_") || name.starts_with("report_") {
                out.insert(format!("{}/{name}", fold.file_name().unwrap().to_string_lossy()), std::fs::read(&f).unwrap());
            }
        }
    }
    for top in ["summary.json", "summary.txt"] {
        out.insert(top.to_string(), std::fs::read(dir.join(top)).unwrap());
    }
    out
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data.jsonl");
    write_jsonl(&data, None, &generate_fixture(200, 500, 7).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut timings = Vec::new();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = RunConfig::default();
        cfg.dataset = data.clone();
        cfg.output = tmp.path().join(name);
        cfg.seed = 7;
        let start = Instant::now();
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        timings.push(start.elapsed());
        outputs.push(artifacts(&cfg.output));
    }
    ensure(outputs[0].keys().filter(|k| k.contains("predictions_")).count() == 5, || "expected 5 prediction files".into())?;
    let differing: Vec<&String> = outputs[0].iter().filter(|(k, v)| outputs[1].get(*k) != Some(v)).map(|(k, _)| k).collect();
    ensure(differing.is_empty() && outputs[0].len() == outputs[1].len(), || format!("files differ: {differing:?}"))?;
    ensure(timings.iter().all(|t| *t < Duration::from_secs(60)), || format!("runs took {timings:?}"))?;
    Ok(format!("{} files byte-identical; runs took {:.1}s and {:.1}s", outputs[0].len(), timings[0].as_secs_f64(), timings[1].as_secs_f64()))
}

/// Scores a transductive retrieval run should land near on the full
/// curated interaction data.
const REAL_DATA_BLEU: f64 = 0.5701;
const REAL_DATA_ROUGE_L: f64 = 0.6080;

enum Real {
    Skipped(String),
    Ran(Outcome),
}

fn real_data() -> Real {
    let Ok(path) = std::env::var("EXDDI_REAL_DATA") else {
        return Real::Skipped("set EXDDI_REAL_DATA to a prepared dataset file to run".into());
    };
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return Real::Ran(Err(e.to_string())),
    };
    let mut cfg = RunConfig::default();
    cfg.dataset = path.into();
    cfg.output = tmp.path().to_path_buf();
    Real::Ran(run_pipeline(&cfg).map_err(|e| e.to_string()).and_then(|s| {
        let test = &s.test_sets["test"];
        let (bleu, rl) = (test["bleu"].mean, test["rougeL"].mean);
        let msg = format!("BLEU {bleu:.4} (expected {REAL_DATA_BLEU}), ROUGE-L {rl:.4} (expected {REAL_DATA_ROUGE_L})");
        if (bleu - REAL_DATA_BLEU).abs() <= 0.05 && (rl - REAL_DATA_ROUGE_L).abs() <= 0.05 {
            Ok(msg)
        } else {
            Err(msg)
        }
    }))
}

fn run(name: &str, f: fn() -> Outcome) -> bool {
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    });
    match result {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            false
        }
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("retrieval-oracle-equivalence", retrieval_oracle),
        ("split-protocol-invariants", split_invariants),
        ("metric-parity", metric_parity),
        ("gradient-correctness", gradient_check),
        ("bilinear-learnability", bilinear_learnability),
        ("fingerprint-parity", fingerprint_parity),
        ("template-strings", template_strings),
        ("end-to-end-determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !run(name, f) {
            failed += 1;
        }
    }
    match real_data() {
        Real::Skipped(why) => println!("NOT RUNNABLE real-data-scores: {why}"),
        Real::Ran(Ok(d)) => println!("PASS real-data-scores: {d}"),
        Real::Ran(Err(d)) => {
            println!("FAIL real-data-scores: {d}");
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
