use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    keyed_rng, plausibility_check, sample_id, verbalize_fact, Fact, ForgeOptions, GenerationTrace, Operation,
    Sample, Slot, TemplateSet,
};
use crate::corpus::Context;
use crate::error::Result;
use crate::ontology::{ConceptId, SemanticGraph};
use crate::quadrant::Quadrant;

/// Everything quadrant synthesis needs to know about one admission.
#[derive(Debug, Clone, Copy)]
pub struct ForgeInput<'a> {
    pub graph: &'a SemanticGraph,
    pub templates: &'a TemplateSet,
    pub context: &'a Arc<Context>,
    /// Concepts matched in the context text.
    pub attested: &'a BTreeSet<ConceptId>,
    /// Normalized structured codes of the admission.
    pub events: &'a BTreeSet<ConceptId>,
    /// All supported facts of this context.
    pub facts: &'a [Fact],
    pub options: &'a ForgeOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Omission {
    pub quadrant: Quadrant,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct QuadrantSet {
    pub samples: Vec<Sample>,
    pub omitted: Vec<Omission>,
}

const SLOT_ORDER: [Slot; 2] = [Slot::Tail, Slot::Head];

impl<'a> ForgeInput<'a> {
    fn kind(&self, id: &ConceptId) -> Result<crate::ontology::SemanticKind> {
        Ok(self.graph.concept(id)?.kind)
    }

    fn true_after(&self, fact: &Fact) -> Result<bool> {
        self.graph
            .in_closure(&fact.head, &fact.relation, &fact.tail, self.options.max_hops)
    }

    fn make_sample(&self, seed: u64, source: &Fact, fact: Fact, label: Quadrant, trace: GenerationTrace) -> Result<Sample> {
        let statement = verbalize_fact(&fact, self.graph, self.templates)?;
        Ok(Sample {
            sample_id: sample_id(seed, &self.context.admission_id, &source.triple(), label),
            admission_id: self.context.admission_id.clone(),
            context: Arc::clone(self.context),
            statement,
            label,
            trace,
        })
    }

    fn absent(&self, id: &ConceptId) -> bool {
        !self.attested.contains(id) && !self.events.contains(id)
    }
}

/// Builds up to four samples (one per quadrant) from a supported fact.
///
/// Quadrants without a valid candidate, or whose candidate fails the
/// plausibility check, are reported in [`QuadrantSet::omitted`].
pub fn generate_quadrant_set(input: &ForgeInput<'_>, fact: &Fact, seed: u64) -> Result<QuadrantSet> {
    let mut set = QuadrantSet::default();
    for label in Quadrant::ALL {
        if !input.options.quadrants[label.index()] {
            continue;
        }
        let built = match label {
            Quadrant::Q1 => build_q1(input, fact, seed)?,
            Quadrant::Q2 => build_q2(input, fact, seed)?,
            Quadrant::Q3 => build_q3(input, fact, seed)?,
            Quadrant::Q4 => build_q4(input, fact, seed)?,
        };
        match built {
            Ok(sample) => match plausibility_check(&sample, input.graph, input.templates, input.events, input.options) {
                Ok(()) => set.samples.push(sample),
                Err(v) => set.omitted.push(Omission {
                    quadrant: label,
                    reason: format!("plausibility: {}", v.reason),
                }),
            },
            Err(reason) => set.omitted.push(Omission {
                quadrant: label,
                reason,
            }),
        }
    }
    Ok(set)
}

type Built = std::result::Result<Sample, String>;

fn build_q1(input: &ForgeInput<'_>, fact: &Fact, seed: u64) -> Result<Built> {
    let trace = GenerationTrace {
        operation: Operation::Identity,
        source_fact: fact.triple(),
        slot: None,
        original: None,
        replacement: None,
        donor_fact: None,
        candidates: 1,
    };
    input
        .make_sample(seed, fact, fact.clone(), Quadrant::Q1, trace)
        .map(Ok)
}

/// Shuffles `candidates` with a key derived from the sample identity and
/// returns the first one passing `accept`, with the number of candidates.
fn pick<F>(
    input: &ForgeInput<'_>,
    seed: u64,
    fact: &Fact,
    label: Quadrant,
    slot: Slot,
    mut candidates: Vec<ConceptId>,
    mut accept: F,
) -> Result<Option<(ConceptId, usize)>>
where
    F: FnMut(&ConceptId) -> Result<bool>,
{
    let total = candidates.len();
    let mut rng = keyed_rng(
        seed,
        &[
            &input.context.admission_id,
            fact.head.as_str(),
            &fact.relation,
            fact.tail.as_str(),
            label.as_str(),
            if slot == Slot::Head { "head" } else { "tail" },
        ],
    );
    candidates.shuffle(&mut rng);
    for c in candidates {
        if accept(&c)? {
            return Ok(Some((c, total)));
        }
    }
    Ok(None)
}

fn build_q2(input: &ForgeInput<'_>, fact: &Fact, seed: u64) -> Result<Built> {
    for slot in SLOT_ORDER {
        let original = fact.entity(slot);
        let other = fact.entity(other_slot(slot));
        let kind = input.kind(original)?;
        let mut candidates = Vec::new();
        for c in input.graph.sibling_concepts(original)? {
            if c != *other && input.kind(&c)? == kind && input.absent(&c) {
                candidates.push(c);
            }
        }
        let chosen = pick(input, seed, fact, Quadrant::Q2, slot, candidates, |c| {
            input.true_after(&fact.substituted(slot, c.clone()))
        })?;
        if let Some((replacement, n)) = chosen {
            let trace = GenerationTrace {
                operation: Operation::SiblingSubstitution,
                source_fact: fact.triple(),
                slot: Some(slot),
                original: Some(original.clone()),
                replacement: Some(replacement.clone()),
                donor_fact: None,
                candidates: n,
            };
            let new_fact = fact.substituted(slot, replacement);
            return input.make_sample(seed, fact, new_fact, Quadrant::Q2, trace).map(Ok);
        }
    }
    Ok(Err("no absent same-kind sibling keeps the fact true".into()))
}

fn build_q3(input: &ForgeInput<'_>, fact: &Fact, seed: u64) -> Result<Built> {
    let template = input.templates.get(&fact.relation)?;
    for slot in SLOT_ORDER {
        let original = fact.entity(slot);
        let other = fact.entity(other_slot(slot));
        let mut donors: Vec<(ConceptId, &Fact)> = Vec::new();
        let mut seen = BTreeSet::new();
        for donor in input.facts {
            if (donor.head == fact.head && donor.tail == fact.tail) || donor.triple() == fact.triple() {
                continue;
            }
            for e in [&donor.head, &donor.tail] {
                if e != original
                    && e != other
                    && input.attested.contains(e)
                    && template.accepts(slot, input.kind(e)?)
                    && seen.insert(e.clone())
                {
                    donors.push((e.clone(), donor));
                }
            }
        }
        let entities: Vec<ConceptId> = donors.iter().map(|(e, _)| e.clone()).collect();
        let chosen = pick(input, seed, fact, Quadrant::Q3, slot, entities, |c| {
            input.true_after(&fact.substituted(slot, c.clone())).map(|t| !t)
        })?;
        if let Some((replacement, n)) = chosen {
            let donor = donors
                .iter()
                .find(|(e, _)| *e == replacement)
                .map(|(_, d)| d.triple());
            let trace = GenerationTrace {
                operation: Operation::Recombination,
                source_fact: fact.triple(),
                slot: Some(slot),
                original: Some(original.clone()),
                replacement: Some(replacement.clone()),
                donor_fact: donor,
                candidates: n,
            };
            let new_fact = fact.substituted(slot, replacement);
            return input.make_sample(seed, fact, new_fact, Quadrant::Q3, trace).map(Ok);
        }
    }
    Ok(Err("no recombination with another supported fact is false".into()))
}

fn build_q4(input: &ForgeInput<'_>, fact: &Fact, seed: u64) -> Result<Built> {
    let template = input.templates.get(&fact.relation)?;
    for slot in SLOT_ORDER {
        let original = fact.entity(slot);
        let other = fact.entity(other_slot(slot));
        let mut candidates = Vec::new();
        for c in input
            .graph
            .distant_concepts(original, input.options.min_distractor_hops)?
        {
            if c != *other && input.absent(&c) && template.accepts(slot, input.kind(&c)?) {
                candidates.push(c);
            }
        }
        let chosen = pick(input, seed, fact, Quadrant::Q4, slot, candidates, |c| {
            input.true_after(&fact.substituted(slot, c.clone())).map(|t| !t)
        })?;
        if let Some((replacement, n)) = chosen {
            let trace = GenerationTrace {
                operation: Operation::DistantSubstitution,
                source_fact: fact.triple(),
                slot: Some(slot),
                original: Some(original.clone()),
                replacement: Some(replacement.clone()),
                donor_fact: None,
                candidates: n,
            };
            let new_fact = fact.substituted(slot, replacement);
            return input.make_sample(seed, fact, new_fact, Quadrant::Q4, trace).map(Ok);
        }
    }
    Ok(Err("no absent distant concept fits the template slot".into()))
}

fn other_slot(slot: Slot) -> Slot {
    match slot {
        Slot::Head => Slot::Tail,
        Slot::Tail => Slot::Head,
    }
}
