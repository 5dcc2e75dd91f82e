//! Fact extraction and four-quadrant statement synthesis.

mod dataset;
mod plausibility;
mod quadrants;
mod split;
mod templates;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Context;
use crate::error::Result;
use crate::ontology::{ConceptId, RelationPath, SemanticGraph, Triple, DEFAULT_MAX_HOPS, MIN_DISTANT_HOPS};
use crate::quadrant::Quadrant;

pub use dataset::{
    generate_dataset, read_dataset, write_dataset, AdmissionOutcome, DatasetRecord, GenerationReport,
    DATASET_FILE, SPLIT_FILE,
};
pub use plausibility::{plausibility_check, Violation};
pub use quadrants::{generate_quadrant_set, ForgeInput, Omission, QuadrantSet};
pub use split::{assemble_and_split, DatasetSplit, SplitAdmissions, SplitItem, SplitRatios};
pub use templates::{Slot, Template, TemplateSet, TEMPLATES_FILE};

/// How a fact is grounded in the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    DirectEdge,
    MultiHop { path: RelationPath },
    /// Produced by substitution or recombination; carries no supporting path.
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub head: ConceptId,
    pub relation: String,
    pub tail: ConceptId,
    pub provenance: Provenance,
}

impl Fact {
    pub fn triple(&self) -> Triple {
        Triple::new(self.head.clone(), self.relation.clone(), self.tail.clone())
    }

    pub fn entity(&self, slot: Slot) -> &ConceptId {
        match slot {
            Slot::Head => &self.head,
            Slot::Tail => &self.tail,
        }
    }

    /// Copy with one argument swapped out.
    pub fn substituted(&self, slot: Slot, replacement: ConceptId) -> Fact {
        let mut f = self.clone();
        match slot {
            Slot::Head => f.head = replacement,
            Slot::Tail => f.tail = replacement,
        }
        f.provenance = Provenance::Counterfactual;
        f
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub text: String,
    pub fact: Fact,
    pub template_id: String,
}

/// Which context evidence counts as attesting an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attestation {
    /// Lexicon matches in the context text.
    #[default]
    Context,
    /// Lexicon matches or normalized structured codes.
    ContextOrEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Identity,
    SiblingSubstitution,
    Recombination,
    DistantSubstitution,
}

/// What was done to the source fact to obtain a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub operation: Operation,
    pub source_fact: Triple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<ConceptId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<ConceptId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_fact: Option<Triple>,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub sample_id: String,
    pub admission_id: String,
    pub context: std::sync::Arc<Context>,
    pub statement: Statement,
    pub label: Quadrant,
    pub trace: GenerationTrace,
}

/// Knobs shared by fact extraction and quadrant synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForgeOptions {
    pub max_hops: usize,
    pub min_distractor_hops: usize,
    pub attestation: Attestation,
    /// Per-quadrant on/off switches, Q1..Q4.
    pub quadrants: [bool; 4],
}

impl Default for ForgeOptions {
    fn default() -> Self {
        ForgeOptions {
            max_hops: DEFAULT_MAX_HOPS,
            min_distractor_hops: MIN_DISTANT_HOPS,
            attestation: Attestation::Context,
            quadrants: [true; 4],
        }
    }
}

/// Facts whose head and tail are both attested and related within the
/// hop bound, restricted to relations that have a template accepting the
/// entities' semantic kinds. Sorted by (head, relation, tail).
pub fn extract_supported_facts(
    graph: &SemanticGraph,
    templates: &TemplateSet,
    context: &Context,
    events: &BTreeSet<ConceptId>,
    options: &ForgeOptions,
) -> Result<Vec<Fact>> {
    let mut attested = graph.attested_concepts(&context.text);
    if options.attestation == Attestation::ContextOrEvents {
        attested.extend(events.iter().cloned());
    }
    let mut facts: BTreeMap<Triple, Fact> = BTreeMap::new();
    for head in &attested {
        let head_kind = graph.concept(head)?.kind;
        for path in graph.closure_from(head, options.max_hops)? {
            let tail = path.tail();
            if !attested.contains(tail) {
                continue;
            }
            let Ok(template) = templates.get(&path.inferred_relation) else {
                continue;
            };
            if !template.accepts(Slot::Head, head_kind) || !template.accepts(Slot::Tail, graph.concept(tail)?.kind) {
                continue;
            }
            let triple = Triple::new(head.clone(), path.inferred_relation.clone(), tail.clone());
            facts.entry(triple).or_insert_with(|| {
                let provenance = if graph.has_edge(head, &path.inferred_relation, tail) {
                    Provenance::DirectEdge
                } else {
                    Provenance::MultiHop { path: path.clone() }
                };
                Fact {
                    head: head.clone(),
                    relation: path.inferred_relation.clone(),
                    tail: tail.clone(),
                    provenance,
                }
            });
        }
    }
    Ok(facts.into_values().collect())
}

/// Fills the relation's template with the entities' preferred names.
pub fn verbalize_fact(fact: &Fact, graph: &SemanticGraph, templates: &TemplateSet) -> Result<Statement> {
    let template = templates.get(&fact.relation)?;
    let head = &graph.concept(&fact.head)?.preferred_name;
    let tail = &graph.concept(&fact.tail)?.preferred_name;
    Ok(Statement {
        text: template.fill(head, tail),
        fact: fact.clone(),
        template_id: template.relation.clone(),
    })
}

/// Stable identifier for a sample; depends on the seed.
pub fn sample_id(seed: u64, admission_id: &str, triple: &Triple, label: Quadrant) -> String {
    let mut h = Sha256::new();
    h.update(format!("{seed}\u{1f}{admission_id}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{label}", triple.head, triple.relation, triple.tail));
    hex::encode(&h.finalize()[..8])
}

/// Deterministic RNG keyed by arbitrary labels, independent of the order in
/// which work items are processed.
pub(crate) fn keyed_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
