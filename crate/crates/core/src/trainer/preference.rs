//! Preference pairs, the margin, and the DPO objective with an asymmetric
//! quadratic penalty on negative margins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::policy::{accumulate, q1_logp_and_grad, PolicyParams};
use super::{check_finite, Example, Regime, TrainConfig, TrainLogEntry};
use crate::error::{Error, Result};
use crate::par;
use crate::quadrant::Quadrant;

/// A Q1 example preferred over a same-admission counterfactual. Indices
/// point into the example slice the pair was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferencePair {
    pub context_id: String,
    pub winner: usize,
    pub loser: usize,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: String,
    pub pairs: Vec<PreferencePair>,
}

fn stage_plan(regime: Regime) -> Vec<(&'static str, Vec<Quadrant>)> {
    use Quadrant::*;
    match regime {
        Regime::PairwiseQ2 => vec![("q2", vec![Q2])],
        Regime::PairwiseQ3 => vec![("q3", vec![Q3])],
        Regime::PairwiseQ4 => vec![("q4", vec![Q4])],
        Regime::Mixed => vec![("mixed", vec![Q2, Q3, Q4])],
        Regime::Curriculum => vec![("q2", vec![Q2]), ("q3", vec![Q3]), ("q4", vec![Q4])],
    }
}

/// Pairs every Q1 example with every same-admission example of the
/// stage's loser classes. Admissions are visited in sorted order, examples
/// in input order.
pub fn build_preference_pairs(examples: &[Example], regime: Regime) -> Result<Vec<Stage>> {
    let mut by_adm: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        by_adm.entry(&e.admission_id).or_default().push(i);
    }
    let mut stages = Vec::new();
    for (name, losers) in stage_plan(regime) {
        let mut pairs = Vec::new();
        for (adm, idx) in &by_adm {
            for &w in idx.iter().filter(|&&i| examples[i].label == Quadrant::Q1) {
                for &l in idx.iter().filter(|&&i| losers.contains(&examples[i].label)) {
                    pairs.push(PreferencePair {
                        context_id: adm.to_string(),
                        winner: w,
                        loser: l,
                        stage: name.to_string(),
                    });
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::StageEmpty(name.to_string()));
        }
        stages.push(Stage {
            name: name.to_string(),
            pairs,
        });
    }
    Ok(stages)
}

/// `beta * ((lw - rw) - (ll - rl))` from policy and reference Q1
/// log-probabilities of winner and loser.
pub fn margin_from_logps(beta: f64, winner: f64, winner_ref: f64, loser: f64, loser_ref: f64) -> f64 {
    beta * ((winner - winner_ref) - (loser - loser_ref))
}

pub fn compute_margin(
    params: &PolicyParams,
    reference: &PolicyParams,
    winner: &[f64],
    loser: &[f64],
    beta: f64,
) -> Result<f64> {
    let (lw, _) = q1_logp_and_grad(params, winner)?;
    let (ll, _) = q1_logp_and_grad(params, loser)?;
    let (rw, _) = q1_logp_and_grad(reference, winner)?;
    let (rl, _) = q1_logp_and_grad(reference, loser)?;
    Ok(margin_from_logps(beta, lw, rw, ll, rl))
}

/// `-ln sigmoid(s)`, computed without overflow.
pub fn neg_log_sigmoid(s: f64) -> f64 {
    (-s).max(0.0) + (-s.abs()).exp().ln_1p()
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Mean of `-ln sigmoid(S)` plus `lambda` times the mean of `S^2` over
/// negative margins. Zero margins carry no penalty.
pub fn corfu_loss(margins: &[f64], lambda: f64) -> f64 {
    let n = margins.len() as f64;
    let pref = margins.iter().map(|&s| neg_log_sigmoid(s)).sum::<f64>() / n;
    let penalty = margins.iter().filter(|&&s| s < 0.0).map(|s| s * s).sum::<f64>() / n;
    pref + lambda * penalty
}

/// `d corfu_loss / d S_i` for every margin.
pub fn corfu_margin_grad(margins: &[f64], lambda: f64) -> Vec<f64> {
    let n = margins.len() as f64;
    margins
        .iter()
        .map(|&s| {
            let pen = if s < 0.0 { 2.0 * lambda * s } else { 0.0 };
            (-sigmoid(-s) + pen) / n
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub margins: Vec<f64>,
}

/// Loss, flat parameter gradient and per-pair margins for one stage.
/// `reference_logp[i]` is the reference Q1 log-probability of example `i`.
pub fn corfu_objective(
    params: &PolicyParams,
    reference_logp: &[f64],
    examples: &[Example],
    pairs: &[PreferencePair],
    beta: f64,
    lambda: f64,
) -> Result<Objective> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    // Q1 log-probability and its logit gradient for every example in play.
    let mut used: Vec<usize> = pairs.iter().flat_map(|p| [p.winner, p.loser]).collect();
    used.sort_unstable();
    used.dedup();
    let evaluated = par::map(&used, |&i| q1_logp_and_grad(params, &examples[i].features));
    let mut cache: BTreeMap<usize, (f64, [f64; 4])> = BTreeMap::new();
    for (i, r) in used.iter().zip(evaluated) {
        cache.insert(*i, r?);
    }
    let margins: Vec<f64> = pairs
        .iter()
        .map(|p| {
            margin_from_logps(
                beta,
                cache[&p.winner].0,
                reference_logp[p.winner],
                cache[&p.loser].0,
                reference_logp[p.loser],
            )
        })
        .collect();
    let loss = corfu_loss(&margins, lambda);
    let dl_ds = corfu_margin_grad(&margins, lambda);

    // Per-example coefficient on d log p_1: winners +beta, losers -beta.
    let mut coef: BTreeMap<usize, f64> = BTreeMap::new();
    for (p, g) in pairs.iter().zip(&dl_ds) {
        *coef.entry(p.winner).or_default() += beta * g;
        *coef.entry(p.loser).or_default() -= beta * g;
    }
    let items: Vec<(usize, f64)> = coef.into_iter().collect();
    let dim = params.dim;
    let grad = par::chunked_reduce(
        &items,
        vec![0.0; params.len()],
        |chunk| {
            let mut g = vec![0.0; 4 * dim + 4];
            for &(i, c) in chunk {
                accumulate(&mut g, dim, &examples[i].features, &cache[&i].1, c);
            }
            g
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        },
    );
    Ok(Objective { loss, grad, margins })
}

/// Short digest of a parameter vector, for logging reference snapshots.
pub fn params_digest(params: &PolicyParams) -> String {
    let mut h = Sha256::new();
    for v in params.to_flat() {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSnapshot {
    pub stage: String,
    pub pairs: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorfuRun {
    pub params: PolicyParams,
    pub log: Vec<TrainLogEntry>,
    pub snapshots: Vec<ReferenceSnapshot>,
}

/// Full-batch gradient descent over each stage in turn. The reference is a
/// frozen copy of the parameters at the start of each stage.
pub fn train_corfu(init: &PolicyParams, examples: &[Example], stages: &[Stage], config: &TrainConfig) -> Result<CorfuRun> {
    config.validate()?;
    let mut params = init.clone();
    let mut log = Vec::new();
    let mut snapshots = Vec::new();
    for stage in stages {
        let reference = params.clone();
        snapshots.push(ReferenceSnapshot {
            stage: stage.name.clone(),
            pairs: stage.pairs.len(),
            digest: params_digest(&reference),
        });
        let ref_logp: Vec<f64> = par::map(examples, |e| q1_logp_and_grad(&reference, &e.features).map(|r| r.0))
            .into_iter()
            .collect::<Result<_>>()?;
        for epoch in 0..config.epochs {
            let obj = corfu_objective(&params, &ref_logp, examples, &stage.pairs, config.beta, config.lambda)?;
            check_finite(epoch, obj.loss, &obj.grad)?;
            let n = obj.margins.len() as f64;
            log.push(TrainLogEntry {
                stage: stage.name.clone(),
                epoch,
                loss: obj.loss,
                mean_margin: Some(obj.margins.iter().sum::<f64>() / n),
                frac_negative_margin: Some(obj.margins.iter().filter(|&&s| s < 0.0).count() as f64 / n),
            });
            params.descend(&obj.grad, config.learning_rate);
        }
    }
    Ok(CorfuRun { params, log, snapshots })
}
