use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use exddi_core::bilinear::{self, EmbeddingTable, Example, TrainConfig};
use exddi_core::chem::parse_smiles;
use exddi_core::dataset::{ingest_records, DatasetError, DdiRecord, IngestMode, Role, Setting};
use exddi_core::eval::{render_table, summarize_reports, PredLabel};
use exddi_core::fingerprint::compute_keys;
use exddi_core::pipeline::{
    evaluate_fold, fold_template_table, generate_fixture, make_backend, make_splits, meta_record, prepare_dataset,
    run_pipeline, sha256_hex, write_json, write_jsonl, write_split, BackendKind, ConfigError, PipelineError,
    PredictionRow, RunConfig,
};
use exddi_core::prompting::{build_prompt, parse_completion, select_demonstrations, DEFAULT_DEMONSTRATIONS};
use exddi_core::retrieval::{load_index, save_index, Query, RetrievalError, TrainingIndex, DEFAULT_K};

#[derive(Parser, Debug)]
#[command(name = "exddi", version, about = "Explainable drug-drug interaction prediction and evaluation")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a dataset file and optionally write the prepared records.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset with planted structure.
    Fixture(FixtureArgs),
    /// Write cross-validation split assignments.
    Split(SplitArgs),
    /// Build a retrieval index from training records.
    Index(IndexArgs),
    /// Predict with a retrieval index.
    Predict(PredictArgs),
    /// Fit the bilinear classifier.
    TrainBilinear(TrainArgs),
    /// Build an in-context prompt and optionally send it.
    Prompt(PromptArgs),
    /// Score a predictions file against gold records.
    Evaluate(EvaluateArgs),
    /// Run the full cross-validated experiment.
    Run(RunArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SettingArg {
    Transductive,
    Inductive,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Transductive => Setting::Transductive,
            SettingArg::Inductive => Setting::Inductive,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum BackendArg {
    Null,
    Replay,
    Http,
}

#[derive(Args, Debug)]
struct IngestArgs {
    input: PathBuf,
    /// Fail on the first bad line instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Write masked records, plus sampled negatives if there are none.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long, default_value_t = 200)]
    drugs: usize,
    #[arg(long, default_value_t = 500)]
    positives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SettingArg::Transductive)]
    setting: SettingArg,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving fold<k>/split.jsonl.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct IndexArgs {
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Neighbors per query drug.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, requires = "smiles2", conflicts_with = "queries")]
    smiles1: Option<String>,
    #[arg(long, requires = "smiles1")]
    smiles2: Option<String>,
    /// Records to predict, one per line.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Predictions file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Defaults to the value stored in the index.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    input: PathBuf,
    /// Validation records for early stopping.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Per-epoch log as JSONL.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PromptArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    smiles1: String,
    #[arg(long)]
    smiles2: String,
    #[arg(long, default_value_t = DEFAULT_DEMONSTRATIONS)]
    n: usize,
    /// Send the prompt through this backend and print the parsed answer.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Records holding the gold labels and explanations.
    #[arg(long)]
    gold: PathBuf,
    /// Training records with categories, for multi-class scores.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also print the plain-text score table.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra KEY=VALUE settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Run folds concurrently.
    #[arg(long)]
    parallel_folds: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 configuration, 2 data, 3 runtime.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return p.exit_code() as u8;
        }
        if cause.downcast_ref::<DatasetError>().is_some() {
            return 2;
        }
        if let Some(r) = cause.downcast_ref::<RetrievalError>() {
            return match r {
                RetrievalError::UnparseableSmiles { .. }
                | RetrievalError::UnparseableQuery { .. }
                | RetrievalError::DuplicateConflict { .. }
                | RetrievalError::IndexFormat { .. }
                | RetrievalError::FingerprintMismatch { .. } => 2,
                _ => 3,
            };
        }
        if cause.downcast_ref::<DataProblem>().is_some() {
            return 2;
        }
    }
    3
}

/// Input that parsed as a file but does not line up with what was asked.
#[derive(Debug)]
struct DataProblem(String);

impl std::error::Error for DataProblem {}

impl std::fmt::Display for DataProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn data_problem(msg: String) -> anyhow::Error {
    anyhow!(DataProblem(msg))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Fixture(a) => fixture(a),
        Command::Split(a) => split(a),
        Command::Index(a) => index(a),
        Command::Predict(a) => predict(a),
        Command::TrainBilinear(a) => train_bilinear(a),
        Command::Prompt(a) => prompt(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
    }
}

/// Provenance header for files written by a single subcommand.
fn meta_for(args: &impl std::fmt::Debug, seed: u64) -> Value {
    meta_record(&sha256_hex(&format!("{args:?}")), seed)
}

fn read_records(path: &Path) -> Result<Vec<DdiRecord>> {
    let (records, report) = ingest_records(path, IngestMode::Strict)?;
    debug_assert!(report.excluded.is_empty());
    Ok(records)
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mode = if a.strict { IngestMode::Strict } else { IngestMode::Lenient };
    let (records, report) = ingest_records(&a.input, mode)?;
    let mut sampled = 0;
    if let Some(out) = &a.output {
        let (prepared, n) = prepare_dataset(records.clone(), a.seed)?;
        sampled = n;
        write_jsonl(out, Some(&meta_for(&a, a.seed)), &prepared)?;
    }
    print_json(&json!({
        "accepted": report.accepted,
        "excluded": report.excluded,
        "sampled_negatives": sampled,
    }))
}

fn fixture(a: FixtureArgs) -> Result<()> {
    let records = generate_fixture(a.drugs, a.positives, a.seed)?;
    write_jsonl(&a.output, Some(&meta_for(&a, a.seed)), &records)?;
    println!("wrote {} records to {}", records.len(), a.output.display());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let splits = make_splits(&records, a.setting.into(), a.seed, a.folds)?;
    let meta = meta_for(&a, a.seed);
    let mut counts = Vec::new();
    for s in &splits {
        let dir = a.output.join(format!("fold{}", s.fold));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_split(&dir, &records, s, Some(&meta))?;
        let c: serde_json::Map<String, Value> = [Role::Train, Role::Val, Role::Test, Role::TestS1, Role::TestS2, Role::Discarded]
            .into_iter()
            .filter(|r| s.count(*r) > 0)
            .map(|r| (r.as_str().to_string(), json!(s.count(r))))
            .collect();
        counts.push(json!({ "fold": s.fold, "counts": c }));
    }
    print_json(&Value::Array(counts))
}

fn index(a: IndexArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let idx = TrainingIndex::build(&records, a.k)?;
    save_index(&idx, &a.output, Some(meta_for(&a, 0)))?;
    println!("indexed {} drugs and {} pairs into {}", idx.drugs().len(), idx.pair_count(), a.output.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let idx = load_index(&a.index)?;
    let k = a.k.unwrap_or(idx.k_default());
    match (&a.smiles1, &a.smiles2, &a.queries) {
        (Some(s1), Some(s2), None) => {
            let resp = idx.predict(&Query::new(s1, s2), k)?;
            print_json(&serde_json::to_value(&resp)?)
        }
        (None, None, Some(path)) => {
            let records = read_records(path)?;
            let queries: Vec<Query> = records.iter().map(Query::from_record).collect();
            let mut rows = Vec::with_capacity(records.len());
            for (r, res) in records.iter().zip(idx.predict_batch(&queries, k)) {
                let resp = res.with_context(|| format!("record {}", r.record_id))?;
                rows.push(PredictionRow {
                    record_id: r.record_id.clone(),
                    label: resp.label.into(),
                    explanation: resp.explanation,
                    provenance: serde_json::to_value(&resp.provenance)?,
                });
            }
            match &a.output {
                Some(out) => {
                    write_jsonl(out, Some(&meta_for(&a, 0)), &rows)?;
                    println!("wrote {} predictions to {}", rows.len(), out.display());
                    Ok(())
                }
                None => {
                    let mut out = std::io::stdout().lock();
                    for r in &rows {
                        writeln!(out, "{}", serde_json::to_string(r)?)?;
                    }
                    Ok(())
                }
            }
        }
        _ => Err(anyhow!(ConfigError::Invalid("give either --smiles1/--smiles2 or --queries".into()))),
    }
}

fn examples(records: &[DdiRecord], table: &EmbeddingTable) -> Result<Vec<Example>> {
    let mut cache = HashMap::new();
    let mut bag = |smiles: &str| -> Result<_> {
        if !cache.contains_key(smiles) {
            let m = parse_smiles(smiles).map_err(|e| data_problem(format!("SMILES {smiles}: {e}")))?;
            cache.insert(smiles.to_string(), table.featurize(&compute_keys(&m)));
        }
        Ok(cache[smiles].clone())
    };
    records
        .iter()
        .map(|r| Ok(Example { a: bag(&r.smiles1)?, b: bag(&r.smiles2)?, label: u8::from(r.label.is_positive()) }))
        .collect()
}

fn train_bilinear(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        d: a.d,
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        patience: a.patience,
        threshold: a.threshold,
    };
    let table = EmbeddingTable::new(cfg.d, cfg.seed).map_err(|e| anyhow!(ConfigError::Invalid(e.to_string())))?;
    let train = examples(&read_records(&a.input)?, &table)?;
    let val = match &a.val {
        Some(p) => examples(&read_records(p)?, &table)?,
        None => Vec::new(),
    };
    let outcome = bilinear::train(&train, &val, &cfg, &|_| 0.0)?;
    let hash = sha256_hex(&format!("{a:?}"));
    bilinear::save_matrix_tagged(
        &outcome.matrix,
        cfg.seed,
        &a.output,
        &[("version", env!("CARGO_PKG_VERSION")), ("config_hash", &hash)],
    )?;
    if let Some(log) = &a.log {
        write_jsonl(log, Some(&meta_for(&a, a.seed)), &outcome.log)?;
    }
    let last = outcome.log.last().ok_or_else(|| anyhow!("training produced no epochs"))?;
    print_json(&json!({
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.log.len(),
        "last": last,
    }))
}

fn prompt(a: PromptArgs) -> Result<()> {
    let idx = load_index(&a.index)?;
    let q = Query::new(&a.smiles1, &a.smiles2);
    let demos = select_demonstrations(&idx, &q, a.n)?;
    let text = build_prompt(&a.smiles1, &a.smiles2, &demos);
    let Some(kind) = a.backend else {
        println!("{text}");
        return Ok(());
    };
    let mut cfg = RunConfig::default();
    cfg.backend = match kind {
        BackendArg::Null => BackendKind::Null,
        BackendArg::Replay => BackendKind::Replay,
        BackendArg::Http => BackendKind::Http,
    };
    cfg.replay_path = a.replay.clone();
    if let Some(e) = &a.endpoint {
        cfg.http.endpoint = e.clone();
    }
    if let Some(m) = &a.model {
        cfg.http.model = m.clone();
    }
    if let Some(v) = &a.api_key_env {
        cfg.http.api_key_env = v.clone();
    }
    let backend = make_backend(&cfg)?;
    let completion = backend.send(&text)?;
    let parsed = parse_completion(&completion);
    print_json(&json!({
        "label": parsed.label,
        "explanation": parsed.explanation,
        "completion": completion,
    }))
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| data_problem(format!("{}:{}: {e}", path.display(), k + 1)))?;
        if v.get("_meta").is_some() {
            continue;
        }
        let field = |name: &str| v.get(name).and_then(Value::as_str).map(str::to_string);
        let record_id = field("record_id").ok_or_else(|| data_problem(format!("line {}: no record_id", k + 1)))?;
        let label = match field("label").as_deref() {
            Some("positive") => PredLabel::Positive,
            Some("negative") => PredLabel::Negative,
            _ => PredLabel::Unparseable,
        };
        rows.push(PredictionRow {
            record_id,
            label,
            explanation: field("explanation").unwrap_or_default(),
            provenance: v.get("provenance").cloned().unwrap_or(Value::Null),
        });
    }
    Ok(rows)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let preds = read_predictions(&a.predictions)?;
    let gold = read_records(&a.gold)?;
    let by_id: HashMap<&str, &DdiRecord> = gold.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let test: Vec<&DdiRecord> = preds
        .iter()
        .map(|p| {
            by_id
                .get(p.record_id.as_str())
                .copied()
                .ok_or_else(|| data_problem(format!("prediction for unknown record {}", p.record_id)))
        })
        .collect::<Result<_>>()?;
    if test.is_empty() {
        bail!(data_problem("no predictions to evaluate".into()));
    }
    let table = match &a.templates {
        Some(p) => {
            let train = read_records(p)?;
            let refs: Vec<&DdiRecord> = train.iter().collect();
            fold_template_table(&refs)?
        }
        None => None,
    };
    let explains = preds.iter().any(|p| !p.explanation.is_empty());
    let report = evaluate_fold(&test, &preds, table.as_ref(), explains)?;
    let doc = json!({ "_meta": meta_for(&a, 0), "report": report });
    if let Some(out) = &a.output {
        write_json(out, &doc)?;
    }
    print_json(&serde_json::to_value(&report)?)?;
    if a.table {
        print!("{}", render_table(&[("predictions".to_string(), summarize_reports(&[report]))]));
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!(ConfigError::Invalid(format!("--set expects KEY=VALUE, got {kv:?}"))))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let flags: [(&str, Option<String>); 7] = [
        ("dataset", a.dataset.as_ref().map(|p| p.display().to_string())),
        ("output", a.output.as_ref().map(|p| p.display().to_string())),
        ("method", a.method.clone()),
        ("setting", a.setting.clone()),
        ("seed", a.seed.map(|v| v.to_string())),
        ("folds", a.folds.map(|v| v.to_string())),
        ("k", a.k.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if a.parallel_folds {
        cfg.parallel_folds = true;
    }
    let summary = run_pipeline(&cfg)?;
    print!("{}", summary.table);
    eprintln!("artifacts in {}", cfg.output.display());
    Ok(())
}
