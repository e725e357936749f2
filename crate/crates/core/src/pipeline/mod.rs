//! End-to-end experiment runs: ingest, split, fit or index, predict and
//! evaluate every fold, then summarize across folds.

mod config;
mod fixture;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bilinear::{self, BilinearError, EmbeddingTable, Example, FeatureBag};
use crate::chem::parse_smiles;
use crate::dataset::{
    ingest_records, mask_drug_names, sample_negatives, drug_pool, split_inductive, split_transductive, DatasetError,
    DdiRecord, Label, Role, Setting, SplitAssignment,
};
use crate::eval::{
    binary_report, build_template_table, generation_scores, multiclass_report, paired_t_test, render_table,
    summarize_reports, EvalError, EvalReport, MetricSummary, PairedTTest, PredLabel, TemplateTable,
};
use crate::fingerprint::{compute_keys, Fingerprint};
use crate::prompting::{
    build_prompt, complete_all, parse_completion, prompt_hash, select_demonstrations, BackendError,
    CompletionBackend, HttpBackend, NullBackend, ReplayBackend,
};
use crate::retrieval::{save_index, Query, RetrievalError, TrainingIndex};

pub use config::{sha256_hex, BackendKind, ConfigError, Method, RunConfig};
pub use fixture::{fixture_drugs, generate_fixture, FixtureDrug, FIXTURE_TEMPLATES};

pub const TOOL_NAME: &str = "exddi";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Bilinear(#[from] BilinearError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("record {record_id}: {source}")]
    Record {
        record_id: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// 1 for configuration problems, 2 for bad data, 3 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Retrieval(
                RetrievalError::UnparseableSmiles { .. }
                | RetrievalError::DuplicateConflict { .. }
                | RetrievalError::UnparseableQuery { .. },
            ) => 2,
            PipelineError::Fold { source, .. } | PipelineError::Record { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    fn in_fold(self, fold: usize) -> Self {
        PipelineError::Fold { fold, source: Box::new(self) }
    }

    fn in_record(self, record_id: &str) -> Self {
        PipelineError::Record { record_id: record_id.into(), source: Box::new(self) }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Provenance record placed at the top of every output file.
pub fn meta_record(config_hash: &str, seed: u64) -> Value {
    json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config_hash": config_hash,
        "seed": seed,
    })
}

/// Write a `{"_meta": ...}` line followed by one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, meta: Option<&Value>, rows: &[T]) -> Result<(), PipelineError> {
    let mut out = Vec::new();
    if let Some(m) = meta {
        serde_json::to_writer(&mut out, &json!({ "_meta": m })).expect("meta serializes");
        out.push(b'\n');
    }
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Mask drug names in positive explanations and, when the data has no
/// negatives yet, sample as many as there are positives. Returns the
/// prepared records and the number of negatives sampled.
pub fn prepare_dataset(records: Vec<DdiRecord>, seed: u64) -> Result<(Vec<DdiRecord>, usize), DatasetError> {
    let mut records: Vec<DdiRecord> = records
        .into_iter()
        .map(|mut r| {
            if r.label.is_positive() {
                r.explanation = mask_drug_names(&r.explanation, &r.drug1_names, &r.drug2_names);
            }
            r
        })
        .collect();
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if records.iter().any(|r| !r.label.is_positive()) {
        return Ok((records, 0));
    }
    let negatives = sample_negatives(&records, &drug_pool(&records), seed)?;
    let n = negatives.len();
    records.extend(negatives);
    Ok((records, n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub record_id: String,
    pub label: PredLabel,
    pub explanation: String,
    pub provenance: Value,
}

#[derive(Serialize)]
struct SplitRow<'a> {
    record_id: &'a str,
    fold: usize,
    setting: Setting,
    role: Role,
}

#[derive(Serialize)]
struct PartitionRow<'a> {
    drug_id: &'a str,
    fold: usize,
    bucket: crate::dataset::Bucket,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Test set name → metric → summary across folds.
    pub test_sets: BTreeMap<String, BTreeMap<String, MetricSummary>>,
    /// Per-metric paired comparison of the two inductive test sets.
    pub paired_t_tests: BTreeMap<String, Option<PairedTTest>>,
    pub table: String,
}

struct Context<'a> {
    cfg: &'a RunConfig,
    records: &'a [DdiRecord],
    meta: Value,
    backend: Option<Box<dyn CompletionBackend>>,
}

pub fn make_backend(cfg: &RunConfig) -> Result<Box<dyn CompletionBackend>, PipelineError> {
    Ok(match cfg.backend {
        BackendKind::Null => Box::new(NullBackend),
        BackendKind::Replay => {
            let path = cfg
                .replay_path
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("backend = replay needs backend.replay_path".into()))?;
            Box::new(ReplayBackend::from_file(path)?)
        }
        BackendKind::Http => Box::new(HttpBackend::new(cfg.http.clone())?),
    })
}

pub fn make_splits(records: &[DdiRecord], setting: Setting, seed: u64, folds: usize) -> Result<Vec<SplitAssignment>, DatasetError> {
    match setting {
        Setting::Transductive => split_transductive(records, seed, folds),
        Setting::Inductive => split_inductive(records, seed, folds),
    }
}

/// Run every fold and write all artifacts under `cfg.output`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let meta = meta_record(&hash, cfg.seed);
    let out = &cfg.output;
    let (raw, ingest) = ingest_records(&cfg.dataset, cfg.ingest)?;
    log::info!("ingested {} records, excluded {}", ingest.accepted, ingest.excluded.len());
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_jsonl(&out.join("ingest_report.jsonl"), Some(&meta), &ingest.excluded)?;
    let (records, sampled) = prepare_dataset(raw, cfg.seed)?;
    write_jsonl(&out.join("dataset.jsonl"), Some(&meta), &records)?;

    let splits = make_splits(&records, cfg.setting, cfg.seed, cfg.folds)?;
    let backend = match cfg.method {
        Method::Ic => Some(make_backend(cfg)?),
        _ => None,
    };
    let ctx = Context { cfg, records: &records, meta: meta.clone(), backend };
    let per_fold: Vec<Result<BTreeMap<Role, EvalReport>, PipelineError>> = if cfg.parallel_folds {
        splits.par_iter().map(|s| run_fold(&ctx, s).map_err(|e| e.in_fold(s.fold))).collect()
    } else {
        splits.iter().map(|s| run_fold(&ctx, s).map_err(|e| e.in_fold(s.fold))).collect()
    };
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut test_sets = BTreeMap::new();
    let mut rows = Vec::new();
    let roles = splits.first().map(|s| s.test_roles()).unwrap_or(&[]);
    for role in roles {
        let reports: Vec<EvalReport> = per_fold.iter().filter_map(|m| m.get(role).cloned()).collect();
        let summary = summarize_reports(&reports);
        rows.push((format!("{} {}", cfg.method.as_str(), role.as_str()), summary.clone()));
        test_sets.insert(role.as_str().to_string(), summary);
    }
    let mut paired_t_tests = BTreeMap::new();
    if cfg.setting == Setting::Inductive {
        let both: Vec<(&EvalReport, &EvalReport)> = per_fold
            .iter()
            .filter_map(|m| Some((m.get(&Role::TestS1)?, m.get(&Role::TestS2)?)))
            .collect();
        if let Some((first, _)) = both.first() {
            for (name, _) in first.metrics() {
                let pick = |r: &EvalReport| r.metrics().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v);
                let pairs: Vec<(f64, f64)> = both.iter().filter_map(|(a, b)| Some((pick(a)?, pick(b)?))).collect();
                let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                paired_t_tests.insert(name.to_string(), paired_t_test(&a, &b)?);
            }
        }
    }
    let table = render_table(&rows);

    let config_map: BTreeMap<String, String> = cfg
        .canonical_text()
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let positives = records.iter().filter(|r| r.label.is_positive()).count();
    write_json(
        &out.join("summary.json"),
        &json!({
            "_meta": meta,
            "config": config_map,
            "dataset": {
                "records": records.len(),
                "positives": positives,
                "negatives": records.len() - positives,
                "sampled_negatives": sampled,
                "excluded_lines": ingest.excluded.len(),
            },
            "test_sets": test_sets,
            "paired_t_tests": { "test_s1_vs_test_s2": paired_t_tests },
        }),
    )?;
    let txt = out.join("summary.txt");
    let mut f = fs::File::create(&txt).map_err(io_err(&txt))?;
    writeln!(f, "# {TOOL_NAME} {TOOL_VERSION} config_hash={hash} seed={}", cfg.seed)
        .and_then(|_| f.write_all(table.as_bytes()))
        .map_err(io_err(&txt))?;

    Ok(RunSummary { test_sets, paired_t_tests, table })
}

/// Template table from the positive training records that carry a
/// category; `None` when none do.
pub fn fold_template_table(train: &[&DdiRecord]) -> Result<Option<TemplateTable>, EvalError> {
    let pairs = train
        .iter()
        .filter(|r| r.label.is_positive())
        .map(|r| (r.explanation.as_str(), r.category.as_deref()));
    match build_template_table(pairs) {
        Ok(t) => Ok(Some(t)),
        Err(EvalError::MissingCategoryColumn) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_fold(ctx: &Context, split: &SplitAssignment) -> Result<BTreeMap<Role, EvalReport>, PipelineError> {
    let cfg = ctx.cfg;
    let dir = cfg.output.join(format!("fold{}", split.fold));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let meta = Some(&ctx.meta);

    write_split(&dir, ctx.records, split, meta)?;

    let select = |role: Role| -> Vec<&DdiRecord> { split.indices(role).into_iter().map(|i| &ctx.records[i]).collect() };
    let train: Vec<&DdiRecord> = select(Role::Train);
    let val: Vec<&DdiRecord> = select(Role::Val);
    let table = fold_template_table(&train)?;
    if table.is_none() {
        log::warn!("fold {}: no category labels in training data; skipping multi-class scores", split.fold);
    }

    let model = FoldModel::fit(ctx, &dir, &train, &val)?;
    let mut reports = BTreeMap::new();
    for &role in split.test_roles() {
        let test = select(role);
        let preds = model.predict(ctx, &dir, role, &test)?;
        write_jsonl(&dir.join(format!("predictions_{}.jsonl", role.as_str())), meta, &preds)?;
        if test.is_empty() {
            log::warn!("fold {}: {} is empty; no report", split.fold, role.as_str());
            continue;
        }
        let report = evaluate_fold(&test, &preds, table.as_ref(), model.explains())?;
        write_json(
            &dir.join(format!("report_{}.json", role.as_str())),
            &json!({ "_meta": ctx.meta, "fold": split.fold, "test_set": role.as_str(), "report": report }),
        )?;
        reports.insert(role, report);
    }
    Ok(reports)
}

/// Write `split.jsonl` (and `partition.jsonl` when inductive) into `dir`.
pub fn write_split(dir: &Path, records: &[DdiRecord], split: &SplitAssignment, meta: Option<&Value>) -> Result<(), PipelineError> {
    let split_rows: Vec<SplitRow> = records
        .iter()
        .zip(&split.roles)
        .map(|(r, role)| SplitRow { record_id: &r.record_id, fold: split.fold, setting: split.setting, role: *role })
        .collect();
    write_jsonl(&dir.join("split.jsonl"), meta, &split_rows)?;
    if split.setting == Setting::Inductive {
        let rows: Vec<PartitionRow> = split
            .partition
            .iter()
            .map(|(d, b)| PartitionRow { drug_id: d, fold: split.fold, bucket: *b })
            .collect();
        write_jsonl(&dir.join("partition.jsonl"), meta, &rows)?;
    }
    Ok(())
}

/// Score predictions against gold records. Generation and multi-class
/// scores need generated explanations; multi-class also needs a table.
pub fn evaluate_fold(
    test: &[&DdiRecord],
    preds: &[PredictionRow],
    table: Option<&TemplateTable>,
    with_explanations: bool,
) -> Result<EvalReport, EvalError> {
    let golds: Vec<Label> = test.iter().map(|r| r.label).collect();
    let labels: Vec<PredLabel> = preds.iter().map(|p| p.label).collect();
    let binary = binary_report(&labels, &golds)?;
    let generation = if with_explanations {
        let hyps: Vec<String> = preds.iter().map(|p| p.explanation.clone()).collect();
        let refs: Vec<String> = test.iter().map(|r| r.explanation.clone()).collect();
        Some(generation_scores(&hyps, &refs)?)
    } else {
        None
    };
    let multiclass = match (table, with_explanations) {
        (Some(table), true) => {
            let mut gold_cats = Vec::new();
            let mut pred_cats = Vec::new();
            for (r, p) in test.iter().zip(preds) {
                if !r.label.is_positive() {
                    continue;
                }
                let gold = match &r.category {
                    Some(c) => c.clone(),
                    None => table.map_explanation_to_type(&r.explanation).to_string(),
                };
                gold_cats.push(gold);
                pred_cats.push(
                    (p.label == PredLabel::Positive).then(|| table.map_explanation_to_type(&p.explanation).to_string()),
                );
            }
            if gold_cats.is_empty() {
                None
            } else {
                Some(multiclass_report(&pred_cats, &gold_cats)?)
            }
        }
        _ => None,
    };
    Ok(EvalReport { n: test.len(), generation, binary, multiclass })
}

enum FoldModel {
    Index(TrainingIndex),
    Bilinear {
        matrix: bilinear::InteractionMatrix,
        table: EmbeddingTable,
        fps: HashMap<String, Fingerprint>,
    },
}

fn fingerprints(records: &[&DdiRecord]) -> Result<HashMap<String, Fingerprint>, PipelineError> {
    let mut smiles: BTreeMap<&str, &str> = BTreeMap::new();
    for r in records {
        smiles.entry(&r.drug1_id).or_insert(&r.smiles1);
        smiles.entry(&r.drug2_id).or_insert(&r.smiles2);
    }
    let items: Vec<(&str, &str)> = smiles.into_iter().collect();
    items
        .par_iter()
        .map(|(id, s)| {
            parse_smiles(s)
                .map(|m| (id.to_string(), compute_keys(&m)))
                .map_err(|e| {
                    PipelineError::Retrieval(RetrievalError::UnparseableQuery { which: 1, message: e.to_string() })
                        .in_record(id)
                })
        })
        .collect()
}

impl FoldModel {
    fn fit(ctx: &Context, dir: &Path, train: &[&DdiRecord], val: &[&DdiRecord]) -> Result<Self, PipelineError> {
        let cfg = ctx.cfg;
        match cfg.method {
            Method::Rv | Method::Ic => {
                let owned: Vec<DdiRecord> = train.iter().map(|r| (*r).clone()).collect();
                let index = TrainingIndex::build(&owned, cfg.k)?;
                save_index(&index, &dir.join("index.jsonl"), Some(ctx.meta.clone()))?;
                Ok(FoldModel::Index(index))
            }
            Method::Bilinear => {
                let tc = cfg.train_config();
                let table = EmbeddingTable::new(tc.d, cfg.seed)?;
                let all: Vec<&DdiRecord> = ctx.records.iter().collect();
                let fps = fingerprints(&all)?;
                let examples = |rs: &[&DdiRecord]| -> Vec<Example> {
                    rs.iter()
                        .map(|r| Example {
                            a: table.featurize(&fps[&r.drug1_id]),
                            b: table.featurize(&fps[&r.drug2_id]),
                            label: u8::from(r.label.is_positive()),
                        })
                        .collect()
                };
                let outcome = bilinear::train(&examples(train), &examples(val), &tc, &|_| 0.0)?;
                let hash = ctx.meta["config_hash"].as_str().unwrap_or_default();
                bilinear::save_matrix_tagged(
                    &outcome.matrix,
                    cfg.seed,
                    &dir.join("bilinear.txt"),
                    &[("version", TOOL_VERSION), ("config_hash", hash)],
                )?;
                write_jsonl(&dir.join("train_log.jsonl"), Some(&ctx.meta), &outcome.log)?;
                Ok(FoldModel::Bilinear { matrix: outcome.matrix, table, fps })
            }
        }
    }

    fn explains(&self) -> bool {
        matches!(self, FoldModel::Index(_))
    }

    fn predict(&self, ctx: &Context, dir: &Path, role: Role, test: &[&DdiRecord]) -> Result<Vec<PredictionRow>, PipelineError> {
        let cfg = ctx.cfg;
        match self {
            FoldModel::Index(index) if cfg.method == Method::Rv => {
                let queries: Vec<Query> = test.iter().map(|r| Query::from_record(r)).collect();
                index
                    .predict_batch(&queries, cfg.k)
                    .into_iter()
                    .zip(test)
                    .map(|(res, r)| {
                        let resp = res.map_err(|e| PipelineError::from(e).in_record(&r.record_id))?;
                        Ok(PredictionRow {
                            record_id: r.record_id.clone(),
                            label: resp.label.into(),
                            explanation: resp.explanation,
                            provenance: serde_json::to_value(&resp.provenance).expect("provenance serializes"),
                        })
                    })
                    .collect()
            }
            FoldModel::Index(index) => {
                let demos: Vec<_> = test
                    .par_iter()
                    .map(|r| {
                        select_demonstrations(index, &Query::from_record(r), cfg.demonstrations)
                            .map_err(|e| PipelineError::from(e).in_record(&r.record_id))
                    })
                    .collect::<Result<_, _>>()?;
                let prompts: Vec<String> = test
                    .iter()
                    .zip(&demos)
                    .map(|(r, d)| build_prompt(&r.smiles1, &r.smiles2, d))
                    .collect();
                let prompt_rows: Vec<Value> = test
                    .iter()
                    .zip(&prompts)
                    .map(|(r, p)| json!({ "record_id": r.record_id, "prompt_hash": prompt_hash(p), "prompt": p }))
                    .collect();
                write_jsonl(&dir.join(format!("prompts_{}.jsonl", role.as_str())), Some(&ctx.meta), &prompt_rows)?;
                let backend = ctx.backend.as_deref().expect("backend built for prompting runs");
                let completions = complete_all(backend, &prompts, cfg.backend_parallelism);
                test.iter()
                    .zip(completions)
                    .zip(&demos)
                    .zip(&prompts)
                    .map(|(((r, c), d), p)| {
                        let text = c.map_err(|e| PipelineError::from(e).in_record(&r.record_id))?;
                        let parsed = parse_completion(&text);
                        let pairs: Vec<String> = d.iter().map(|x| x.pair.to_string()).collect();
                        Ok(PredictionRow {
                            record_id: r.record_id.clone(),
                            label: parsed.label,
                            explanation: parsed.explanation,
                            provenance: json!({
                                "backend": backend.name(),
                                "prompt_hash": prompt_hash(p),
                                "demonstrations": pairs,
                            }),
                        })
                    })
                    .collect()
            }
            FoldModel::Bilinear { matrix, table, fps } => test
                .iter()
                .map(|r| {
                    let bag = |id: &str| -> FeatureBag { table.featurize(&fps[id]) };
                    let p = bilinear::score(matrix, &bag(&r.drug1_id), &bag(&r.drug2_id))
                        .map_err(|e| PipelineError::from(e).in_record(&r.record_id))?;
                    let label = if p >= cfg.bilinear.threshold { PredLabel::Positive } else { PredLabel::Negative };
                    Ok(PredictionRow {
                        record_id: r.record_id.clone(),
                        label,
                        explanation: String::new(),
                        provenance: json!({ "probability": p }),
                    })
                })
                .collect(),
        }
    }
}
