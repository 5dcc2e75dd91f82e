//! Semantic graph over unified concept identifiers.
//!
//! The graph is built once (from TSV tables or programmatically through
//! [`GraphBuilder`]) and is immutable afterwards, so it can be shared freely
//! between worker threads.

mod lexicon;
mod load;
mod paths;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lexicon::{fold_case, EntityMatch};
pub use load::{load_ontology, load_ontology_dir, write_ontology, CONCEPTS_FILE, MAPPINGS_FILE, RELATIONS_FILE};
pub(crate) use load::read_tsv;
pub use paths::{infer_relation, DEFAULT_MAX_HOPS};

/// Relation label treated as taxonomy when no other set is configured.
pub const IS_A: &str = "is_a";

/// Minimum undirected hop distance for a concept to count as distant.
pub const MIN_DISTANT_HOPS: usize = 4;

/// Unified concept identifier, `C` followed by digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        let mut chars = raw.chars();
        let valid = chars.next() == Some('C')
            && raw.len() > 1
            && chars.all(|c| c.is_ascii_digit());
        if valid {
            Ok(ConceptId(raw))
        } else {
            Err(Error::InvalidArgument(format!("malformed concept id `{raw}`")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ConceptId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        ConceptId::new(value)
    }
}

impl From<ConceptId> for String {
    fn from(value: ConceptId) -> Self {
        value.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticKind {
    Diagnosis,
    Procedure,
    Medication,
    DrugClass,
    Other,
}

impl SemanticKind {
    pub const ALL: [SemanticKind; 5] = [
        SemanticKind::Diagnosis,
        SemanticKind::Procedure,
        SemanticKind::Medication,
        SemanticKind::DrugClass,
        SemanticKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticKind::Diagnosis => "diagnosis",
            SemanticKind::Procedure => "procedure",
            SemanticKind::Medication => "medication",
            SemanticKind::DrugClass => "drug_class",
            SemanticKind::Other => "other",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        SemanticKind::ALL.into_iter().find(|k| k.as_str() == raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub preferred_name: String,
    pub synonyms: Vec<String>,
    pub kind: SemanticKind,
}

/// A raw code in some source vocabulary (ICD9, ICD10, NDC, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceCode {
    pub vocabulary: String,
    pub code: String,
}

impl SourceCode {
    pub fn new(vocabulary: impl Into<String>, code: impl Into<String>) -> Self {
        SourceCode {
            vocabulary: vocabulary.into(),
            code: code.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationEdge {
    pub head: ConceptId,
    pub relation: String,
    pub tail: ConceptId,
}

/// A `(head, relation, tail)` claim; unlike [`RelationEdge`] it need not be
/// stored in the graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: ConceptId,
    pub relation: String,
    pub tail: ConceptId,
}

impl Triple {
    pub fn new(head: ConceptId, relation: impl Into<String>, tail: ConceptId) -> Self {
        Triple {
            head,
            relation: relation.into(),
            tail,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// A walk through the graph supporting an (inferred) relation.
///
/// Hierarchical steps before the substantive edge follow the stored edge
/// direction; hierarchical steps after it walk stored edges backwards
/// (from the parent down to the child).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationPath {
    pub nodes: Vec<ConceptId>,
    pub edge_labels: Vec<String>,
    pub inferred_relation: String,
}

impl RelationPath {
    pub fn hops(&self) -> usize {
        self.edge_labels.len()
    }

    pub fn head(&self) -> &ConceptId {
        &self.nodes[0]
    }

    pub fn tail(&self) -> &ConceptId {
        &self.nodes[self.nodes.len() - 1]
    }

    fn sort_key(&self) -> (usize, &[ConceptId], &[String], &str) {
        (
            self.edge_labels.len(),
            &self.nodes,
            &self.edge_labels,
            &self.inferred_relation,
        )
    }
}

/// Strict or lenient handling of codes missing from the mapping table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    #[default]
    Skip,
    Strict,
}

/// Structured code lists of one admission.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuredEvents {
    #[serde(default)]
    pub diagnoses: Vec<SourceCode>,
    #[serde(default)]
    pub procedures: Vec<SourceCode>,
    #[serde(default)]
    pub medications: Vec<SourceCode>,
}

impl StructuredEvents {
    pub fn iter(&self) -> impl Iterator<Item = &SourceCode> {
        self.diagnoses
            .iter()
            .chain(&self.procedures)
            .chain(&self.medications)
    }

    pub fn is_empty(&self) -> bool {
        self.diagnoses.is_empty() && self.procedures.is_empty() && self.medications.is_empty()
    }
}

type LabelId = usize;

#[derive(Debug, Clone)]
pub struct SemanticGraph {
    concepts: Vec<Concept>,
    index: BTreeMap<ConceptId, usize>,
    labels: Vec<String>,
    label_index: BTreeMap<String, LabelId>,
    hierarchical: Vec<bool>,
    /// Per node, (label, target) sorted by target then label.
    out: Vec<Vec<(LabelId, usize)>>,
    /// Per node, (label, source) sorted by source then label.
    inc: Vec<Vec<(LabelId, usize)>>,
    edges: BTreeSet<RelationEdge>,
    code_map: BTreeMap<SourceCode, ConceptId>,
    codes_by_concept: BTreeMap<ConceptId, Vec<SourceCode>>,
    lexicon: lexicon::Lexicon,
}

/// Accumulates concepts, edges and mappings, then validates them into a
/// [`SemanticGraph`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    concepts: BTreeMap<ConceptId, Concept>,
    edges: BTreeSet<RelationEdge>,
    mappings: BTreeMap<SourceCode, ConceptId>,
    hierarchical: BTreeSet<String>,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        GraphBuilder {
            concepts: BTreeMap::new(),
            edges: BTreeSet::new(),
            mappings: BTreeMap::new(),
            hierarchical: [IS_A.to_string()].into_iter().collect(),
        }
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hierarchical_relations<I, S>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.hierarchical = labels.into_iter().map(Into::into).collect();
        self
    }

    /// Adds a concept. Synonyms are deduplicated after case-folding and
    /// synonyms equal to the preferred name are dropped.
    pub fn concept(
        &mut self,
        id: ConceptId,
        preferred_name: &str,
        kind: SemanticKind,
        synonyms: &[&str],
    ) -> Result<&mut Self> {
        let preferred_name = preferred_name.trim();
        if preferred_name.is_empty() {
            return Err(Error::Integrity(format!("concept {id} has an empty preferred name")));
        }
        if self.concepts.contains_key(&id) {
            return Err(Error::Integrity(format!("duplicate concept {id}")));
        }
        let mut seen: BTreeSet<String> = BTreeSet::new();
        seen.insert(fold_case(preferred_name));
        let synonyms = synonyms
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty() && seen.insert(fold_case(s)))
            .map(str::to_string)
            .collect();
        self.concepts.insert(
            id.clone(),
            Concept {
                id,
                preferred_name: preferred_name.to_string(),
                synonyms,
                kind,
            },
        );
        Ok(self)
    }

    /// Adds an edge; duplicate triples collapse.
    pub fn edge(&mut self, head: ConceptId, relation: &str, tail: ConceptId) -> Result<&mut Self> {
        let relation = relation.trim();
        if relation.is_empty() {
            return Err(Error::Integrity(format!("empty relation label on {head} -> {tail}")));
        }
        if head == tail {
            return Err(Error::Integrity(format!("self-loop {head} {relation} {tail}")));
        }
        self.edges.insert(RelationEdge {
            head,
            relation: relation.to_string(),
            tail,
        });
        Ok(self)
    }

    pub fn mapping(&mut self, code: SourceCode, concept: ConceptId) -> Result<&mut Self> {
        match self.mappings.get(&code) {
            Some(existing) if *existing != concept => Err(Error::Integrity(format!(
                "code {}:{} maps to both {existing} and {concept}",
                code.vocabulary, code.code
            ))),
            _ => {
                self.mappings.insert(code, concept);
                Ok(self)
            }
        }
    }

    pub fn build(self) -> Result<SemanticGraph> {
        for edge in &self.edges {
            for end in [&edge.head, &edge.tail] {
                if !self.concepts.contains_key(end) {
                    return Err(Error::Integrity(format!(
                        "edge {} {} {} references unknown concept {end}",
                        edge.head, edge.relation, edge.tail
                    )));
                }
            }
        }
        for (code, cui) in &self.mappings {
            if !self.concepts.contains_key(cui) {
                return Err(Error::Integrity(format!(
                    "mapping {}:{} targets unknown concept {cui}",
                    code.vocabulary, code.code
                )));
            }
        }

        let concepts: Vec<Concept> = self.concepts.into_values().collect();
        let index: BTreeMap<ConceptId, usize> = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i))
            .collect();

        let mut label_set: BTreeSet<String> = self.edges.iter().map(|e| e.relation.clone()).collect();
        label_set.extend(self.hierarchical.iter().cloned());
        let labels: Vec<String> = label_set.into_iter().collect();
        let label_index: BTreeMap<String, LabelId> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let hierarchical = labels.iter().map(|l| self.hierarchical.contains(l)).collect();

        let mut out = vec![Vec::new(); concepts.len()];
        let mut inc = vec![Vec::new(); concepts.len()];
        for edge in &self.edges {
            let h = index[&edge.head];
            let t = index[&edge.tail];
            let l = label_index[&edge.relation];
            out[h].push((l, t));
            inc[t].push((l, h));
        }
        for list in out.iter_mut().chain(inc.iter_mut()) {
            list.sort_by_key(|&(l, n)| (n, l));
        }

        let mut codes_by_concept: BTreeMap<ConceptId, Vec<SourceCode>> = BTreeMap::new();
        for (code, cui) in &self.mappings {
            codes_by_concept.entry(cui.clone()).or_default().push(code.clone());
        }

        let lexicon = lexicon::Lexicon::build(&concepts);
        Ok(SemanticGraph {
            concepts,
            index,
            labels,
            label_index,
            hierarchical,
            out,
            inc,
            edges: self.edges,
            code_map: self.mappings,
            codes_by_concept,
            lexicon,
        })
    }
}

impl SemanticGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.iter()
    }

    pub fn concept(&self, id: &ConceptId) -> Result<&Concept> {
        self.idx(id).map(|i| &self.concepts[i])
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.index.contains_key(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &RelationEdge> {
        self.edges.iter()
    }

    pub fn has_edge(&self, head: &ConceptId, relation: &str, tail: &ConceptId) -> bool {
        self.edges.contains(&RelationEdge {
            head: head.clone(),
            relation: relation.to_string(),
            tail: tail.clone(),
        })
    }

    pub fn mappings(&self) -> impl Iterator<Item = (&SourceCode, &ConceptId)> {
        self.code_map.iter()
    }

    /// Source codes mapping onto `id`, in (vocabulary, code) order.
    pub fn codes_for(&self, id: &ConceptId) -> &[SourceCode] {
        self.codes_by_concept.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_hierarchical(&self, relation: &str) -> bool {
        self.label_index
            .get(relation)
            .is_some_and(|&l| self.hierarchical[l])
    }

    pub fn hierarchical_relations(&self) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .zip(&self.hierarchical)
            .filter(|(_, &h)| h)
            .map(|(l, _)| l.as_str())
    }

    /// Relation label histogram over stored edges.
    pub fn relation_histogram(&self) -> BTreeMap<String, usize> {
        let mut hist = BTreeMap::new();
        for edge in &self.edges {
            *hist.entry(edge.relation.clone()).or_insert(0) += 1;
        }
        hist
    }

    /// Maps a raw code onto its concept.
    pub fn normalize_code(&self, code: &SourceCode) -> Result<&ConceptId> {
        self.code_map
            .get(code)
            .ok_or_else(|| Error::UnmappedCode(code.clone()))
    }

    /// Union of mapped concepts over all code lists of an admission.
    ///
    /// Under [`UnmappedPolicy::Skip`] unmapped codes are logged and ignored;
    /// under [`UnmappedPolicy::Strict`] they abort with the full list.
    pub fn normalize_admission(
        &self,
        events: &StructuredEvents,
        policy: UnmappedPolicy,
    ) -> Result<BTreeSet<ConceptId>> {
        let mut concepts = BTreeSet::new();
        let mut failures = Vec::new();
        for code in events.iter() {
            match self.code_map.get(code) {
                Some(cui) => {
                    concepts.insert(cui.clone());
                }
                None => failures.push(code.clone()),
            }
        }
        if !failures.is_empty() {
            match policy {
                UnmappedPolicy::Strict => return Err(Error::UnmappedCodes(failures)),
                UnmappedPolicy::Skip => {
                    for code in &failures {
                        log::warn!("skipping unmapped code {}:{}", code.vocabulary, code.code);
                    }
                }
            }
        }
        Ok(concepts)
    }

    /// Concepts sharing at least one hierarchical parent with `id`.
    pub fn sibling_concepts(&self, id: &ConceptId) -> Result<BTreeSet<ConceptId>> {
        let me = self.idx(id)?;
        let mut out = BTreeSet::new();
        for &(l, parent) in &self.out[me] {
            if !self.hierarchical[l] {
                continue;
            }
            for &(l2, child) in &self.inc[parent] {
                if self.hierarchical[l2] && child != me {
                    out.insert(self.concepts[child].id.clone());
                }
            }
        }
        Ok(out)
    }

    /// Concepts at undirected hop distance `>= min_hops` from `anchor`, or
    /// unreachable from it. `min_hops` must be at least
    /// [`MIN_DISTANT_HOPS`].
    pub fn distant_concepts(&self, anchor: &ConceptId, min_hops: usize) -> Result<BTreeSet<ConceptId>> {
        if min_hops < MIN_DISTANT_HOPS {
            return Err(Error::InvalidArgument(format!(
                "min_hops must be at least {MIN_DISTANT_HOPS}, got {min_hops}"
            )));
        }
        let dist = self.undirected_distances(self.idx(anchor)?, min_hops);
        Ok(dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none_or(|d| d >= min_hops))
            .map(|(i, _)| self.concepts[i].id.clone())
            .collect())
    }

    /// Undirected hop distance, `None` when unreachable.
    pub fn hop_distance(&self, a: &ConceptId, b: &ConceptId) -> Result<Option<usize>> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let dist = self.undirected_distances(ai, usize::MAX);
        Ok(dist[bi])
    }

    /// BFS distances, exploring no further than `limit` hops.
    fn undirected_distances(&self, start: usize, limit: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.concepts.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            if d >= limit {
                continue;
            }
            for &(_, v) in self.out[u].iter().chain(&self.inc[u]) {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// All occurrences of lexicon surface forms in `text`.
    pub fn match_entities(&self, text: &str) -> Vec<EntityMatch> {
        self.lexicon.find(text)
    }

    /// Concepts mentioned anywhere in `text`.
    pub fn attested_concepts(&self, text: &str) -> BTreeSet<ConceptId> {
        self.match_entities(text)
            .into_iter()
            .map(|m| m.concept)
            .collect()
    }

    /// Case-folded surface forms and the concepts they denote.
    pub fn lexicon(&self) -> &BTreeMap<String, BTreeSet<ConceptId>> {
        self.lexicon.entries()
    }

    pub(crate) fn idx(&self, id: &ConceptId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("concept {id}")))
    }
}
