//! Admission-level, quadrant-balanced train/validation/test partition.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{keyed_rng, DatasetRecord, Sample};
use crate::error::{Error, Result};
use crate::quadrant::Quadrant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl From<[f64; 3]> for SplitRatios {
    fn from(r: [f64; 3]) -> Self {
        SplitRatios {
            train: r[0],
            validation: r[1],
            test: r[2],
        }
    }
}

impl From<SplitRatios> for [f64; 3] {
    fn from(r: SplitRatios) -> Self {
        [r.train, r.validation, r.test]
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!("split ratios must be non-negative: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// Admission counts (train, validation, test) for `n` admissions.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let validation = (self.validation * n as f64).round() as usize;
        let test = (self.test * n as f64).round() as usize;
        let validation = validation.min(n);
        let test = test.min(n - validation);
        (n - validation - test, validation, test)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAdmissions {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Sample ids per split. Samples trimmed to restore quadrant balance are
/// listed in `dropped`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub admissions: SplitAdmissions,
    #[serde(default)]
    pub dropped: Vec<String>,
}

type Counts = [usize; 4];

/// Anything that can be assigned to a split: in-memory samples and their
/// serialized records.
pub trait SplitItem {
    fn sample_id(&self) -> &str;
    fn admission_id(&self) -> &str;
    fn label(&self) -> Quadrant;
}

impl SplitItem for Sample {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn admission_id(&self) -> &str {
        &self.admission_id
    }
    fn label(&self) -> Quadrant {
        self.label
    }
}

impl SplitItem for DatasetRecord {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn admission_id(&self) -> &str {
        &self.admission_id
    }
    fn label(&self) -> Quadrant {
        self.label
    }
}

fn imbalance(c: &Counts) -> usize {
    c.iter().max().unwrap_or(&0) - c.iter().min().unwrap_or(&0)
}

/// Splits samples by admission, then trims each split so that every
/// quadrant has the same number of samples.
///
/// Admissions are shuffled with `seed`; the test and validation splits are
/// filled first, each step taking the admission that keeps the split's
/// quadrant counts most even.
pub fn assemble_and_split<S: SplitItem>(samples: &[S], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut order: Vec<&str> = Vec::new();
    let mut per_adm: BTreeMap<&str, Counts> = BTreeMap::new();
    for s in samples {
        let c = per_adm.entry(s.admission_id()).or_insert_with(|| {
            order.push(s.admission_id());
            [0; 4]
        });
        c[s.label().index()] += 1;
    }
    if order.len() < 4 {
        return Err(Error::Split(format!(
            "need at least 4 admissions to split, found {}",
            order.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let (_, n_val, n_test) = ratios.counts(order.len());

    let mut remaining = order;
    let mut take = |k: usize| -> Vec<&str> {
        let mut chosen = Vec::with_capacity(k);
        let mut counts = [0usize; 4];
        for _ in 0..k {
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .min_by_key(|(i, a)| {
                    let add = per_adm[**a];
                    let mut c = counts;
                    for q in 0..4 {
                        c[q] += add[q];
                    }
                    (imbalance(&c), *i)
                })
                .expect("enough admissions remain");
            let a = remaining.remove(pos);
            for q in 0..4 {
                counts[q] += per_adm[a][q];
            }
            chosen.push(a);
        }
        chosen
    };
    let test_adm = take(n_test);
    let val_adm = take(n_val);
    let train_adm = remaining;

    let mut dropped = BTreeSet::new();
    let mut pick = |name: &str, adms: &[&str]| -> Vec<String> {
        let members: BTreeSet<&str> = adms.iter().copied().collect();
        let in_split: Vec<&S> = samples
            .iter()
            .filter(|s| members.contains(s.admission_id()))
            .collect();
        let mut by_q: [Vec<&str>; 4] = Default::default();
        for s in &in_split {
            by_q[s.label().index()].push(s.sample_id());
        }
        let target = by_q.iter().map(Vec::len).min().unwrap_or(0);
        let mut split_dropped = BTreeSet::new();
        for (q, ids) in by_q.iter_mut().enumerate() {
            if ids.len() > target {
                let mut rng = keyed_rng(seed, &[name, Quadrant::ALL[q].as_str()]);
                ids.shuffle(&mut rng);
                split_dropped.extend(ids[target..].iter().map(|s| s.to_string()));
            }
        }
        let kept = in_split
            .iter()
            .filter(|s| !split_dropped.contains(s.sample_id()))
            .map(|s| s.sample_id().to_string())
            .collect();
        dropped.extend(split_dropped);
        kept
    };
    let train = pick("train", &train_adm);
    let validation = pick("validation", &val_adm);
    let test = pick("test", &test_adm);

    let in_input_order = |adms: &[&str]| -> Vec<String> {
        let set: BTreeSet<&str> = adms.iter().copied().collect();
        per_adm
            .keys()
            .filter(|a| set.contains(*a))
            .map(|a| a.to_string())
            .collect()
    };
    let admissions = SplitAdmissions {
        train: in_input_order(&train_adm),
        validation: in_input_order(&val_adm),
        test: in_input_order(&test_adm),
    };
    let dropped = samples
        .iter()
        .filter(|s| dropped.contains(s.sample_id()))
        .map(|s| s.sample_id().to_string())
        .collect();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
        ratios,
        admissions,
        dropped,
    })
}
