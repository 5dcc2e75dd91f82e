//! Bounded multi-hop relation inference.
//!
//! An admissible path climbs zero or more hierarchical edges from the head,
//! crosses exactly one substantive edge, then descends zero or more
//! hierarchical edges (walked child-ward) to the tail. The substantive
//! edge's label is the inferred relation. Paths never revisit a node.

use std::collections::BTreeSet;

use super::{ConceptId, LabelId, RelationPath, SemanticGraph};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_HOPS: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ascending,
    Descending,
}

struct Walk {
    nodes: Vec<usize>,
    labels: Vec<LabelId>,
    substantive: Option<LabelId>,
}

impl SemanticGraph {
    /// Direct edges from `head` to `tail` plus every relation inferred from
    /// an admissible path of at most `max_hops` edges.
    ///
    /// Results are sorted by path length, then node ids, then labels.
    pub fn relations_within_hops(
        &self,
        head: &ConceptId,
        tail: &ConceptId,
        max_hops: usize,
    ) -> Result<Vec<RelationPath>> {
        let t = self.idx(tail)?;
        let mut paths = self.closure_from_idx(self.idx(head)?, max_hops)?;
        paths.retain(|p| p.tail() == &self.concepts[t].id);
        Ok(paths)
    }

    /// Every closure path starting at `head`, sorted like
    /// [`SemanticGraph::relations_within_hops`].
    pub fn closure_from(&self, head: &ConceptId, max_hops: usize) -> Result<Vec<RelationPath>> {
        self.closure_from_idx(self.idx(head)?, max_hops)
    }

    /// Whether `(head, relation, tail)` is a direct edge or inferable within
    /// `max_hops`.
    pub fn in_closure(
        &self,
        head: &ConceptId,
        relation: &str,
        tail: &ConceptId,
        max_hops: usize,
    ) -> Result<bool> {
        Ok(self
            .relations_within_hops(head, tail, max_hops)?
            .iter()
            .any(|p| p.inferred_relation == relation))
    }

    /// Distinct relation labels holding between `head` and `tail`.
    pub fn relation_labels(
        &self,
        head: &ConceptId,
        tail: &ConceptId,
        max_hops: usize,
    ) -> Result<BTreeSet<String>> {
        Ok(self
            .relations_within_hops(head, tail, max_hops)?
            .into_iter()
            .map(|p| p.inferred_relation)
            .collect())
    }

    fn closure_from_idx(&self, head: usize, max_hops: usize) -> Result<Vec<RelationPath>> {
        if !(1..=DEFAULT_MAX_HOPS).contains(&max_hops) {
            return Err(Error::InvalidArgument(format!(
                "max_hops must lie in 1..={DEFAULT_MAX_HOPS}, got {max_hops}"
            )));
        }
        let mut found: BTreeSet<RelationPath> = BTreeSet::new();

        // direct edges of any label, hierarchical included
        for &(l, t) in &self.out[head] {
            found.insert(self.materialize(&[head, t], &[l], l));
        }

        let mut walk = Walk {
            nodes: vec![head],
            labels: Vec::new(),
            substantive: None,
        };
        self.extend(&mut walk, Phase::Ascending, max_hops, &mut found);

        let mut paths: Vec<RelationPath> = found.into_iter().collect();
        paths.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(paths)
    }

    fn extend(&self, walk: &mut Walk, phase: Phase, max_hops: usize, found: &mut BTreeSet<RelationPath>) {
        if walk.labels.len() == max_hops {
            return;
        }
        let here = *walk.nodes.last().expect("walk is never empty");
        match phase {
            Phase::Ascending => {
                for &(l, next) in &self.out[here] {
                    if walk.nodes.contains(&next) {
                        continue;
                    }
                    walk.nodes.push(next);
                    walk.labels.push(l);
                    if self.hierarchical[l] {
                        // climbing only makes sense with room left for the substantive edge
                        if walk.labels.len() < max_hops {
                            self.extend(walk, Phase::Ascending, max_hops, found);
                        }
                    } else {
                        walk.substantive = Some(l);
                        found.insert(self.materialize(&walk.nodes, &walk.labels, l));
                        self.extend(walk, Phase::Descending, max_hops, found);
                        walk.substantive = None;
                    }
                    walk.nodes.pop();
                    walk.labels.pop();
                }
            }
            Phase::Descending => {
                let relation = walk.substantive.expect("descending after substantive edge");
                for &(l, child) in &self.inc[here] {
                    if !self.hierarchical[l] || walk.nodes.contains(&child) {
                        continue;
                    }
                    walk.nodes.push(child);
                    walk.labels.push(l);
                    found.insert(self.materialize(&walk.nodes, &walk.labels, relation));
                    self.extend(walk, Phase::Descending, max_hops, found);
                    walk.nodes.pop();
                    walk.labels.pop();
                }
            }
        }
    }

    fn materialize(&self, nodes: &[usize], labels: &[LabelId], relation: LabelId) -> RelationPath {
        RelationPath {
            nodes: nodes.iter().map(|&n| self.concepts[n].id.clone()).collect(),
            edge_labels: labels.iter().map(|&l| self.labels[l].clone()).collect(),
            inferred_relation: self.labels[relation].clone(),
        }
    }
}

/// Label inferred by `path`, or `None` when the path is not admissible in
/// `graph` (wrong shape, missing edge, repeated node, too long).
pub fn infer_relation(path: &RelationPath, graph: &SemanticGraph) -> Option<String> {
    let hops = path.edge_labels.len();
    if path.nodes.len() != hops + 1 || !(1..=DEFAULT_MAX_HOPS).contains(&hops) {
        return None;
    }
    let distinct: BTreeSet<&ConceptId> = path.nodes.iter().collect();
    if distinct.len() != path.nodes.len() {
        return None;
    }
    let substantive: Vec<usize> = path
        .edge_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| !graph.is_hierarchical(l))
        .map(|(i, _)| i)
        .collect();
    let [pivot] = substantive[..] else {
        return None;
    };
    for (i, label) in path.edge_labels.iter().enumerate() {
        let (a, b) = (&path.nodes[i], &path.nodes[i + 1]);
        let present = if i <= pivot {
            graph.has_edge(a, label, b)
        } else {
            graph.has_edge(b, label, a)
        };
        if !present {
            return None;
        }
    }
    Some(path.edge_labels[pivot].clone())
}
