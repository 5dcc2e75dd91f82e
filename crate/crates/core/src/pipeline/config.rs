//! TOML run configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::experiment::ExperimentConfig;
use crate::corpus::SectionWhitelist;
use crate::error::{Error, Result};
use crate::forge::{ForgeOptions, SplitRatios};
use crate::ontology::UnmappedPolicy;
use crate::synth::{CorpusOptions, OntologyOptions};
use crate::trainer::{FeatureSpec, Regime, TrainConfig};

/// Inputs and the output root. A missing `ontology` or `corpus` means the
/// synthetic generator is used for that stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding CONCEPTS.tsv, RELATIONS.tsv and MAPPINGS.tsv.
    pub ontology: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// An ADMISSIONS.jsonl file.
    pub corpus: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            ontology: None,
            templates: None,
            corpus: None,
            output: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Seeds for multi-seed training and evaluation.
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    /// Preference regimes trained by `train-eval`.
    pub regimes: Vec<Regime>,
    pub unmapped: UnmappedPolicy,
    pub paths: PathsConfig,
    pub whitelist: SectionWhitelist,
    pub ontology: OntologyOptions,
    pub corpus: CorpusOptions,
    pub forge: ForgeOptions,
    pub ratios: SplitRatios,
    pub features: FeatureSpec,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            seeds: vec![42],
            lambdas: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
            regimes: vec![Regime::PairwiseQ2],
            unmapped: UnmappedPolicy::Skip,
            paths: PathsConfig::default(),
            whitelist: SectionWhitelist::default(),
            ontology: OntologyOptions::default(),
            corpus: CorpusOptions::default(),
            forge: ForgeOptions::default(),
            ratios: SplitRatios::default(),
            features: FeatureSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative input and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.paths.ontology, &mut cfg.paths.templates, &mut cfg.paths.corpus]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut cfg.paths.output);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Structural checks; see [`Self::check_inputs`] for file existence.
    pub fn validate(&self) -> Result<()> {
        self.ratios.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config(format!("seeds contain duplicates: {:?}", self.seeds)));
        }
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambdas must not be empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Config(format!("lambda must be non-negative, got {l}")));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("regimes must not be empty".into()));
        }
        if self.forge.max_hops == 0 {
            return Err(Error::Config("forge.max_hops must be at least 1".into()));
        }
        if self.forge.min_distractor_hops <= self.forge.max_hops {
            return Err(Error::Config(format!(
                "forge.min_distractor_hops ({}) must exceed max_hops ({})",
                self.forge.min_distractor_hops, self.forge.max_hops
            )));
        }
        if self.features.hash_buckets == 0 {
            return Err(Error::Config("features.hash_buckets must be positive".into()));
        }
        if self.whitelist.patterns().is_empty() {
            return Err(Error::Config("whitelist must not be empty".into()));
        }
        Ok(())
    }

    /// Fails when a configured input file or directory is missing.
    pub fn check_inputs(&self) -> Result<()> {
        for (what, p) in [
            ("ontology", &self.paths.ontology),
            ("templates", &self.paths.templates),
            ("corpus", &self.paths.corpus),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::NotFound(format!("{what} input {}", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Hex sha256 of the canonical TOML rendering.
    pub fn digest(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            ontology: self.ontology.clone(),
            corpus: self.corpus.clone(),
            forge: self.forge.clone(),
            whitelist: self.whitelist.clone(),
            ratios: self.ratios,
            features: self.features.clone(),
            train: self.train.clone(),
        }
    }
}
