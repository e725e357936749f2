use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DdiRecord};

/// Rotating 20% test windows give at most five disjoint folds.
pub const MAX_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Transductive,
    Inductive,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Transductive => "transductive",
            Setting::Inductive => "inductive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Test,
    TestS1,
    TestS2,
    Discarded,
}

impl Role {
    pub fn is_test(self) -> bool {
        matches!(self, Role::Test | Role::TestS1 | Role::TestS2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
            Role::TestS1 => "test_s1",
            Role::TestS2 => "test_s2",
            Role::Discarded => "discarded",
        }
    }
}

/// Inductive drug buckets: M1 trains, M2 validates, M3 is held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    M1,
    M2,
    M3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub fold: usize,
    pub setting: Setting,
    /// Role of each record, aligned with the input record order.
    pub roles: Vec<Role>,
    /// Drug buckets; empty for the transductive setting.
    pub partition: BTreeMap<String, Bucket>,
}

impl SplitAssignment {
    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }

    /// Test roles present in this setting.
    pub fn test_roles(&self) -> &'static [Role] {
        match self.setting {
            Setting::Transductive => &[Role::Test],
            Setting::Inductive => &[Role::TestS1, Role::TestS2],
        }
    }
}

fn check(n: usize, folds: usize) -> Result<(), DatasetError> {
    if n == 0 {
        return Err(DatasetError::EmptyDataset);
    }
    if folds == 0 || folds > MAX_FOLDS {
        return Err(DatasetError::InvalidFolds { got: folds, max: MAX_FOLDS });
    }
    Ok(())
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Bounds of fold `k`'s 20% window over `n` shuffled items.
fn window(n: usize, k: usize) -> (usize, usize) {
    (k * n / 5, (k + 1) * n / 5)
}

/// 70/10/20 record splits. Fold `k` tests on the `k`-th fifth of one seeded
/// shuffle and validates on the following tenth (wrapping around).
pub fn split_transductive(records: &[DdiRecord], seed: u64, folds: usize) -> Result<Vec<SplitAssignment>, DatasetError> {
    let n = records.len();
    check(n, folds)?;
    let order = shuffled(n, seed);
    let val_len = (n as f64 * 0.1).round() as usize;
    Ok((0..folds)
        .map(|k| {
            let (start, end) = window(n, k);
            let mut roles = vec![Role::Train; n];
            for &r in &order[start..end] {
                roles[r] = Role::Test;
            }
            for off in 0..val_len.min(n - (end - start)) {
                roles[order[(end + off) % n]] = Role::Val;
            }
            SplitAssignment {
                fold: k,
                setting: Setting::Transductive,
                roles,
                partition: BTreeMap::new(),
            }
        })
        .collect())
}

/// Drug-level 75/5/20 splits. Pairs inside M1 train; pairs inside M2 or
/// across M1–M2 validate; pairs inside M3 form S1 and M1–M3 pairs form S2.
/// M2–M3 pairs fit no stated set and are discarded.
pub fn split_inductive(records: &[DdiRecord], seed: u64, folds: usize) -> Result<Vec<SplitAssignment>, DatasetError> {
    check(records.len(), folds)?;
    let mut drugs: Vec<&str> = records
        .iter()
        .flat_map(|r| [r.drug1_id.as_str(), r.drug2_id.as_str()])
        .collect();
    drugs.sort_unstable();
    drugs.dedup();
    let d = drugs.len();
    let order = shuffled(d, seed);
    let m2_len = (d as f64 * 0.05).round() as usize;

    Ok((0..folds)
        .map(|k| {
            let (start, end) = window(d, k);
            let mut partition: BTreeMap<String, Bucket> = drugs.iter().map(|s| (s.to_string(), Bucket::M1)).collect();
            for &i in &order[start..end] {
                partition.insert(drugs[i].to_string(), Bucket::M3);
            }
            for off in 0..m2_len.min(d - (end - start)) {
                partition.insert(drugs[order[(end + off) % d]].to_string(), Bucket::M2);
            }
            let roles = records
                .iter()
                .map(|r| {
                    let mut b = [partition[&r.drug1_id], partition[&r.drug2_id]];
                    b.sort();
                    match b {
                        [Bucket::M1, Bucket::M1] => Role::Train,
                        [Bucket::M1, Bucket::M2] | [Bucket::M2, Bucket::M2] => Role::Val,
                        [Bucket::M3, Bucket::M3] => Role::TestS1,
                        [Bucket::M1, Bucket::M3] => Role::TestS2,
                        _ => Role::Discarded,
                    }
                })
                .collect();
            SplitAssignment {
                fold: k,
                setting: Setting::Inductive,
                roles,
                partition,
            }
        })
        .collect())
}
