//! Fixed-length feature vectors for (context, statement) pairs.
//!
//! Oracle features read the graph directly and make the four classes
//! linearly separable. Lexical features see only words: hashed statement
//! n-grams, hashed statement words missing from the context, and a few
//! overlap statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forge::{DatasetRecord, TemplateSet};
use crate::ontology::{ConceptId, SemanticGraph, Triple, DEFAULT_MAX_HOPS};
use crate::par;
use crate::quadrant::Quadrant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Oracle,
    #[default]
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    /// Buckets for each hashed block in lexical mode.
    pub hash_buckets: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            mode: FeatureMode::Lexical,
            hash_buckets: 512,
        }
    }
}

/// A featurized sample ready for training or prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub sample_id: String,
    pub admission_id: String,
    pub label: Quadrant,
    pub features: Vec<f64>,
}

const DENSE: usize = 4;
const HOP_BUCKETS: usize = 4;

/// Turns records into vectors. Holds the relation vocabulary for oracle
/// mode and the template wording excluded from lexical overlap.
#[derive(Debug, Clone)]
pub struct Featurizer {
    spec: FeatureSpec,
    relations: Vec<String>,
    function_words: BTreeSet<String>,
}

pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain([0xff]) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl Featurizer {
    pub fn new(spec: FeatureSpec, templates: &TemplateSet) -> Self {
        let relations = templates.relations().map(str::to_string).collect();
        let function_words = templates
            .iter()
            .flat_map(|t| tokens(&t.pattern.replace("{head}", " ").replace("{tail}", " ")))
            .collect();
        Featurizer {
            spec,
            relations,
            function_words,
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match self.spec.mode {
            // head/tail attested, in closure, hop buckets, relations + other
            FeatureMode::Oracle => 3 + HOP_BUCKETS + self.relations.len() + 1,
            FeatureMode::Lexical => 3 * self.spec.hash_buckets + DENSE,
        }
    }

    /// Oracle-mode vector. `attested` are the concepts matched in the
    /// context.
    pub fn oracle(&self, fact: &Triple, attested: &BTreeSet<ConceptId>, graph: &SemanticGraph) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        x[0] = f64::from(u8::from(attested.contains(&fact.head)));
        x[1] = f64::from(u8::from(attested.contains(&fact.tail)));
        x[2] = f64::from(u8::from(graph.in_closure(&fact.head, &fact.relation, &fact.tail, DEFAULT_MAX_HOPS)?));
        let bucket = match graph.hop_distance(&fact.head, &fact.tail)? {
            Some(d) if (1..=3).contains(&d) => d - 1,
            _ => 3,
        };
        x[3 + bucket] = 1.0;
        let r = self
            .relations
            .iter()
            .position(|r| *r == fact.relation)
            .unwrap_or(self.relations.len());
        x[3 + HOP_BUCKETS + r] = 1.0;
        Ok(x)
    }

    /// Lexical-mode vector from raw text only.
    pub fn lexical(&self, context: &str, statement: &str) -> Vec<f64> {
        let b = self.spec.hash_buckets;
        let mut x = vec![0.0; self.dim()];
        let stmt = tokens(statement);
        for t in &stmt {
            x[(fnv1a(&["u", t]) % b as u64) as usize] = 1.0;
        }
        for w in stmt.windows(2) {
            x[b + (fnv1a(&["b", &w[0], &w[1]]) % b as u64) as usize] = 1.0;
        }

        let ctx_tokens: BTreeSet<String> = tokens(context).into_iter().collect();
        let content: Vec<&String> = stmt.iter().filter(|t| !self.function_words.contains(*t)).collect();
        let mut missing = 0usize;
        for t in &content {
            if !ctx_tokens.contains(*t) {
                missing += 1;
                x[2 * b + (fnv1a(&["m", t]) % b as u64) as usize] = 1.0;
            }
        }
        let dense = 3 * b;
        if !content.is_empty() {
            let n = content.len() as f64;
            x[dense] = (content.len() - missing) as f64 / n;
            let best = context
                .split(['.', '\n'])
                .map(|s| {
                    let st: BTreeSet<String> = tokens(s).into_iter().collect();
                    content.iter().filter(|t| st.contains(**t)).count()
                })
                .max()
                .unwrap_or(0);
            x[dense + 1] = best as f64 / n;
        }
        x[dense + 2] = missing.min(4) as f64 / 4.0;
        x[dense + 3] = f64::from(u8::from(missing > 0));
        x
    }

    /// Featurizes records in parallel, preserving order. Context matching
    /// is done once per distinct admission.
    pub fn featurize_records(&self, records: &[DatasetRecord], graph: &SemanticGraph) -> Result<Vec<Example>> {
        let attested: BTreeMap<&str, BTreeSet<ConceptId>> = if self.spec.mode == FeatureMode::Oracle {
            let mut contexts: BTreeMap<&str, &str> = BTreeMap::new();
            for r in records {
                contexts.entry(&r.admission_id).or_insert(&r.context);
            }
            let items: Vec<(&str, &str)> = contexts.into_iter().collect();
            let matched = par::map(&items, |(_, text)| graph.attested_concepts(text));
            items.iter().map(|(id, _)| *id).zip(matched).collect()
        } else {
            BTreeMap::new()
        };
        let rows = par::map(records, |r| -> Result<Vec<f64>> {
            match self.spec.mode {
                FeatureMode::Oracle => self.oracle(&r.fact, &attested[r.admission_id.as_str()], graph),
                FeatureMode::Lexical => Ok(self.lexical(&r.context, &r.statement)),
            }
        });
        records
            .iter()
            .zip(rows)
            .map(|(r, x)| {
                Ok(Example {
                    sample_id: r.sample_id.clone(),
                    admission_id: r.admission_id.clone(),
                    label: r.label,
                    features: x?,
                })
            })
            .collect()
    }
}
