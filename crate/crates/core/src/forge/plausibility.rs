use std::collections::BTreeSet;
use std::fmt;

use super::{ForgeOptions, Operation, Sample, Slot, TemplateSet};
use crate::ontology::{ConceptId, SemanticGraph};
use crate::quadrant::Quadrant;

/// Why a sample failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub quadrant: Quadrant,
    pub reason: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.quadrant, self.reason)
    }
}

impl std::error::Error for Violation {}

pub const TRUTH_VIOLATED: &str = "truth violated";
pub const SUPPORT_VIOLATED: &str = "support violated";
pub const KIND_MISMATCH: &str = "kind mismatch";
pub const DISTANCE_VIOLATED: &str = "distance violated";
pub const TEXT_MISSING_ENTITY: &str = "statement text missing entity";
pub const TRACE_INCOMPLETE: &str = "trace incomplete";
pub const UNKNOWN_ENTITY: &str = "unknown entity";

/// Re-derives the label invariants of `sample` from the graph and the
/// sample's own context.
///
/// * truth: the statement's triple is in the hop-bounded closure
/// * support (Q1, Q3): both entities are matched in the context
/// * support (Q2, Q4): the substituted entity is neither matched in the
///   context nor among the admission's normalized codes
/// * Q4 distractors lie at least `min_distractor_hops` from the entity they
///   replaced
/// * both entities fit the template's slot kinds
pub fn plausibility_check(
    sample: &Sample,
    graph: &SemanticGraph,
    templates: &TemplateSet,
    events: &BTreeSet<ConceptId>,
    options: &ForgeOptions,
) -> Result<(), Violation> {
    let label = sample.label;
    let fail = |reason| Err(Violation { quadrant: label, reason });
    let fact = &sample.statement.fact;

    let (Ok(head), Ok(tail)) = (graph.concept(&fact.head), graph.concept(&fact.tail)) else {
        return fail(UNKNOWN_ENTITY);
    };
    let Ok(template) = templates.get(&fact.relation) else {
        return fail(KIND_MISMATCH);
    };
    if !template.accepts(Slot::Head, head.kind) || !template.accepts(Slot::Tail, tail.kind) {
        return fail(KIND_MISMATCH);
    }

    let mentioned = graph.attested_concepts(&sample.statement.text);
    if !mentioned.contains(&fact.head) || !mentioned.contains(&fact.tail) {
        return fail(TEXT_MISSING_ENTITY);
    }

    let truth = graph
        .in_closure(&fact.head, &fact.relation, &fact.tail, options.max_hops)
        .unwrap_or(false);
    if truth != label.is_true() {
        return fail(TRUTH_VIOLATED);
    }

    let attested = graph.attested_concepts(&sample.context.text);
    if label.is_supported() {
        if !attested.contains(&fact.head) || !attested.contains(&fact.tail) {
            return fail(SUPPORT_VIOLATED);
        }
    } else {
        let Some(replacement) = &sample.trace.replacement else {
            return fail(TRACE_INCOMPLETE);
        };
        if replacement != &fact.head && replacement != &fact.tail {
            return fail(TRACE_INCOMPLETE);
        }
        if attested.contains(replacement) || events.contains(replacement) {
            return fail(SUPPORT_VIOLATED);
        }
    }

    if label == Quadrant::Q4 {
        let (Some(original), Some(replacement)) = (&sample.trace.original, &sample.trace.replacement) else {
            return fail(TRACE_INCOMPLETE);
        };
        if sample.trace.operation != Operation::DistantSubstitution {
            return fail(TRACE_INCOMPLETE);
        }
        match graph.hop_distance(original, replacement) {
            Ok(Some(d)) if d < options.min_distractor_hops => return fail(DISTANCE_VIOLATED),
            Err(_) => return fail(UNKNOWN_ENTITY),
            _ => {}
        }
    }
    Ok(())
}
