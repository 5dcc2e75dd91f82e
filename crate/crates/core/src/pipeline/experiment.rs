//! Self-contained per-seed experiments on the synthetic benchmark:
//! ontology, corpus, dataset, split, then training and evaluation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{dedup_patients, SectionWhitelist};
use crate::error::Result;
use crate::forge::{assemble_and_split, generate_dataset, DatasetRecord, ForgeOptions, SplitRatios, TemplateSet};
use crate::metrics::MetricsReport;
use crate::ontology::UnmappedPolicy;
use crate::synth::{generate_synthetic_corpus, synthetic_ontology, CorpusOptions, OntologyOptions};
use crate::trainer::{
    build_preference_pairs, evaluate_params, lambda_sweep, train_corfu, train_sft, AblationRow, Example, FeatureSpec,
    Featurizer, Regime, TrainConfig,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub ontology: OntologyOptions,
    pub corpus: CorpusOptions,
    pub forge: ForgeOptions,
    pub whitelist: SectionWhitelist,
    pub ratios: SplitRatios,
    pub features: FeatureSpec,
    pub train: TrainConfig,
}

/// Featurized splits of one seed's benchmark.
#[derive(Debug, Clone)]
pub struct SeedSplits {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Builds the benchmark for `seed` and featurizes its three splits.
pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedSplits> {
    let templates = TemplateSet::standard();
    let graph = synthetic_ontology(&cfg.ontology, seed)?;
    let corpus = generate_synthetic_corpus(&graph, &templates, &cfg.corpus, seed)?;
    let admissions = dedup_patients(corpus.admissions);
    let (samples, _) = generate_dataset(
        &graph,
        &templates,
        &admissions,
        &cfg.whitelist,
        &cfg.forge,
        UnmappedPolicy::Skip,
        seed,
    )?;
    let split = assemble_and_split(&samples, cfg.ratios, seed)?;
    let records: Vec<DatasetRecord> = samples.iter().map(DatasetRecord::from).collect();
    let featurizer = Featurizer::new(cfg.features.clone(), &templates);
    let examples = featurizer.featurize_records(&records, &graph)?;
    let pick = |ids: &[String]| -> Vec<Example> {
        let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        examples
            .iter()
            .filter(|e| set.contains(e.sample_id.as_str()))
            .cloned()
            .collect()
    };
    Ok(SeedSplits {
        train: pick(&split.train),
        validation: pick(&split.validation),
        test: pick(&split.test),
    })
}

/// Test-split reports of the supervised baseline, plain DPO and the
/// risk-aware variant, all preference models starting from the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyComparison {
    pub seed: u64,
    pub sft: MetricsReport,
    pub dpo: MetricsReport,
    pub corfu: MetricsReport,
}

pub fn safety_comparison(cfg: &ExperimentConfig, seed: u64) -> Result<SafetyComparison> {
    let data = prepare_seed(cfg, seed)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let (sft, _) = train_sft(&data.train, &train_cfg)?;
    let stages = build_preference_pairs(&data.train, train_cfg.regime)?;
    let dpo = train_corfu(&sft, &data.train, &stages, &TrainConfig { lambda: 0.0, ..train_cfg.clone() })?;
    let corfu = train_corfu(&sft, &data.train, &stages, &train_cfg)?;
    Ok(SafetyComparison {
        seed,
        sft: evaluate_params(&sft, &data.test)?,
        dpo: evaluate_params(&dpo.params, &data.test)?,
        corfu: evaluate_params(&corfu.params, &data.test)?,
    })
}

/// λ sweep for one seed, scored on the validation split.
pub fn lambda_ablation(cfg: &ExperimentConfig, seed: u64, lambdas: &[f64]) -> Result<Vec<AblationRow>> {
    let data = prepare_seed(cfg, seed)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let (sft, _) = train_sft(&data.train, &train_cfg)?;
    lambda_sweep(&sft, &data.train, &data.validation, lambdas, &train_cfg)
}

/// Regime used by the directional safety comparison.
pub const SAFETY_REGIME: Regime = Regime::PairwiseQ2;
