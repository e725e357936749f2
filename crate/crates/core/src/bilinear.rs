//! Bilinear pair classifier over fingerprint-derived feature bags.
//!
//! Each set key contributes one row of a fixed random embedding table; a
//! pair is scored as `sigmoid(Σ_i Σ_j a_i · M · b_j)`, which collapses to
//! `sigmoid(agg(a) · M · agg(b))`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{Fingerprint, FINGERPRINT_BITS, FINGERPRINT_TAG};

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BilinearError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// Seeded `166 × d` table with entries uniform in `[-1/√d, 1/√d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(d: usize, seed: u64) -> Result<Self, BilinearError> {
        if d < 2 {
            return Err(BilinearError::InvalidConfig(format!("d must be at least 2, got {d}")));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..FINGERPRINT_BITS)
            .map(|_| (0..d).map(|_| rng.random_range(-bound..=bound)).collect())
            .collect();
        Ok(Self { d, rows })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, bit: usize) -> &[f64] {
        &self.rows[bit]
    }

    pub fn featurize(&self, fp: &Fingerprint) -> FeatureBag {
        let vectors: Vec<Vec<f64>> = fp.ones().map(|b| self.rows[b].clone()).collect();
        if vectors.is_empty() {
            return FeatureBag::new(vec![vec![0.0; self.d]]).expect("zero vector bag");
        }
        FeatureBag::new(vectors).expect("rows share d")
    }
}

/// Feature bag for `fp` under the table seeded with `seed`.
pub fn featurize(fp: &Fingerprint, d: usize, seed: u64) -> Result<FeatureBag, BilinearError> {
    Ok(EmbeddingTable::new(d, seed)?.featurize(fp))
}

/// Non-empty list of equal-length vectors with their element-wise sum.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    vectors: Vec<Vec<f64>>,
    aggregate: Vec<f64>,
}

impl FeatureBag {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, BilinearError> {
        let d = vectors.first().map(Vec::len).ok_or(BilinearError::EmptyBatch)?;
        let mut aggregate = vec![0.0; d];
        for v in &vectors {
            if v.len() != d {
                return Err(BilinearError::DimensionMismatch { expected: d, got: v.len() });
            }
            for (s, x) in aggregate.iter_mut().zip(v) {
                *s += x;
            }
        }
        Ok(Self { vectors, aggregate })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }

    pub fn d(&self) -> usize {
        self.aggregate.len()
    }
}

/// Square `d × d` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    d: usize,
    values: Vec<f64>,
}

impl InteractionMatrix {
    pub fn zeros(d: usize) -> Self {
        Self { d, values: vec![0.0; d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.values[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_values(d: usize, values: Vec<f64>) -> Result<Self, BilinearError> {
        if values.len() != d * d {
            return Err(BilinearError::DimensionMismatch { expected: d * d, got: values.len() });
        }
        Ok(Self { d, values })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.d + j] = v;
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// `xᵀ M y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let row = &self.values[i * self.d..(i + 1) * self.d];
            total += xi * row.iter().zip(y).map(|(m, yj)| m * yj).sum::<f64>();
        }
        total
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(m: &InteractionMatrix, a: &FeatureBag, b: &FeatureBag) -> Result<(), BilinearError> {
    for got in [a.d(), b.d()] {
        if got != m.d {
            return Err(BilinearError::DimensionMismatch { expected: m.d, got });
        }
    }
    Ok(())
}

/// Pre-sigmoid score `agg(a) · M · agg(b)`.
pub fn logit(m: &InteractionMatrix, a: &FeatureBag, b: &FeatureBag) -> Result<f64, BilinearError> {
    check_dims(m, a, b)?;
    Ok(m.bilinear(&a.aggregate, &b.aggregate))
}

/// Interaction probability of the pair.
pub fn score(m: &InteractionMatrix, a: &FeatureBag, b: &FeatureBag) -> Result<f64, BilinearError> {
    logit(m, a, b).map(sigmoid)
}

/// 1 when `score >= threshold`, else 0.
pub fn predict_label(m: &InteractionMatrix, a: &FeatureBag, b: &FeatureBag, threshold: f64) -> Result<u8, BilinearError> {
    Ok(u8::from(score(m, a, b)? >= threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub a: FeatureBag,
    pub b: FeatureBag,
    /// 0 or 1.
    pub label: u8,
}

/// Mean binary cross-entropy over `batch` and its gradient with respect to M.
pub fn loss_and_grad(m: &InteractionMatrix, batch: &[Example]) -> Result<(f64, InteractionMatrix), BilinearError> {
    if batch.is_empty() {
        return Err(BilinearError::EmptyBatch);
    }
    let d = m.d;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = InteractionMatrix::zeros(d);
    for ex in batch {
        check_dims(m, &ex.a, &ex.b)?;
        let p = sigmoid(m.bilinear(&ex.a.aggregate, &ex.b.aggregate));
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let l = f64::from(ex.label);
        loss -= l * pc.ln() + (1.0 - l) * (1.0 - pc).ln();
        let r = (p - l) / n;
        for i in 0..d {
            let ai = ex.a.aggregate[i] * r;
            let row = &mut grad.values[i * d..(i + 1) * d];
            for (g, bj) in row.iter_mut().zip(&ex.b.aggregate) {
                *g += ai * bj;
            }
        }
    }
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 16,
            lr: 0.5,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            patience: 3,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Generation loss supplied from outside; zero when absent.
    pub gen_loss: f64,
    /// `gen_loss + train_loss`.
    pub mt_loss: f64,
}

pub struct TrainOutcome {
    /// Matrix with the lowest validation loss seen.
    pub matrix: InteractionMatrix,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

pub fn accuracy(m: &InteractionMatrix, data: &[Example], threshold: f64) -> Result<f64, BilinearError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for ex in data {
        if predict_label(m, &ex.a, &ex.b, threshold)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Minibatch gradient descent from a zero matrix with early stopping on
/// validation loss. `gen_loss(epoch)` feeds the joint-loss column of the log.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    gen_loss: &dyn Fn(usize) -> f64,
) -> Result<TrainOutcome, BilinearError> {
    if train_set.is_empty() {
        return Err(BilinearError::EmptyBatch);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !cfg.lr.is_finite() || cfg.lr < 0.0 {
        return Err(BilinearError::InvalidConfig(format!("{cfg:?}")));
    }
    let eval_set = if val_set.is_empty() { train_set } else { val_set };
    let mut m = InteractionMatrix::zeros(cfg.d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, m.clone(), 0usize);
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (_, grad) = loss_and_grad(&m, &batch)?;
            for (v, g) in m.values.iter_mut().zip(&grad.values) {
                *v -= cfg.lr * g;
            }
        }
        let (train_loss, _) = loss_and_grad(&m, train_set)?;
        let (val_loss, _) = loss_and_grad(&m, eval_set)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(BilinearError::NonFiniteLoss { epoch });
        }
        let g = gen_loss(epoch);
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_acc: accuracy(&m, eval_set, cfg.threshold)?,
            gen_loss: g,
            mt_loss: g + train_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, m.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { matrix: best.1, log, best_epoch: best.2 })
}

/// Write a checkpoint: one header line, then one line of values per row.
pub fn save_matrix(m: &InteractionMatrix, seed: u64, path: &Path) -> Result<(), BilinearError> {
    save_matrix_tagged(m, seed, path, &[])
}

/// [`save_matrix`] with extra `key=value` header fields; values must not
/// contain whitespace.
pub fn save_matrix_tagged(m: &InteractionMatrix, seed: u64, path: &Path, extra: &[(&str, &str)]) -> Result<(), BilinearError> {
    let mut out = format!("# exddi-bilinear d={} seed={} fingerprint={}", m.d, seed, FINGERPRINT_TAG);
    for (k, v) in extra {
        let _ = write!(out, " {k}={v}");
    }
    out.push('\n');
    for i in 0..m.d {
        let row: Vec<String> = m.values[i * m.d..(i + 1) * m.d].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a checkpoint, returning the matrix and its seed.
pub fn load_matrix(path: &Path) -> Result<(InteractionMatrix, u64), BilinearError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| BilinearError::Checkpoint("empty file".into()))?;
    let field = |name: &str| {
        header
            .split_whitespace()
            .find_map(|t| t.strip_prefix(&format!("{name}=")))
            .ok_or_else(|| BilinearError::Checkpoint(format!("header lacks {name}")))
    };
    let d: usize = field("d")?.parse().map_err(|_| BilinearError::Checkpoint("bad d".into()))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| BilinearError::Checkpoint("bad seed".into()))?;
    if field("fingerprint")? != FINGERPRINT_TAG {
        return Err(BilinearError::Checkpoint("fingerprint tag mismatch".into()));
    }
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| BilinearError::Checkpoint(format!("bad value {t:?}"))))
        .collect::<Result<_, _>>()?;
    Ok((InteractionMatrix::from_values(d, values)?, seed))
}
