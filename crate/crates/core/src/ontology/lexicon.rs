use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Concept, ConceptId};

/// Lower-cases and collapses internal whitespace runs to single spaces.
pub fn fold_case(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// One occurrence of a lexicon surface form; `start..end` are byte offsets
/// into the original text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityMatch {
    pub start: usize,
    pub end: usize,
    pub concept: ConceptId,
}

#[derive(Debug, Clone, Default)]
pub(super) struct Lexicon {
    entries: BTreeMap<String, BTreeSet<ConceptId>>,
    /// Surfaces keyed by their leading alphanumeric run (or first char),
    /// longest first.
    by_lead: HashMap<String, Vec<String>>,
}

fn lead_key(s: &str) -> String {
    let run: String = s.chars().take_while(|c| c.is_alphanumeric()).collect();
    if run.is_empty() {
        s.chars().next().map(String::from).unwrap_or_default()
    } else {
        run
    }
}

impl Lexicon {
    pub(super) fn build(concepts: &[Concept]) -> Self {
        let mut entries: BTreeMap<String, BTreeSet<ConceptId>> = BTreeMap::new();
        for c in concepts {
            for surface in std::iter::once(&c.preferred_name).chain(&c.synonyms) {
                let key = fold_case(surface);
                if !key.is_empty() {
                    entries.entry(key).or_default().insert(c.id.clone());
                }
            }
        }
        let mut by_lead: HashMap<String, Vec<String>> = HashMap::new();
        for surface in entries.keys() {
            by_lead.entry(lead_key(surface)).or_default().push(surface.clone());
        }
        for list in by_lead.values_mut() {
            list.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Lexicon { entries, by_lead }
    }

    pub(super) fn entries(&self) -> &BTreeMap<String, BTreeSet<ConceptId>> {
        &self.entries
    }

    /// Leftmost-longest scan respecting word boundaries.
    pub(super) fn find(&self, text: &str) -> Vec<EntityMatch> {
        let folded = Folded::new(text);
        let lower = folded.text.as_str();
        let chars: Vec<(usize, char)> = lower.char_indices().collect();
        let mut out = Vec::new();
        let mut ci = 0;
        while ci < chars.len() {
            let (start, c) = chars[ci];
            let at_boundary = ci == 0 || !chars[ci - 1].1.is_alphanumeric();
            if !at_boundary {
                ci += 1;
                continue;
            }
            let rest = &lower[start..];
            let key = lead_key(rest);
            let hit = self.by_lead.get(&key).and_then(|cands| {
                cands.iter().find(|s| {
                    rest.starts_with(s.as_str())
                        && rest[s.len()..]
                            .chars()
                            .next()
                            .is_none_or(|n| !n.is_alphanumeric())
                })
            });
            match hit {
                Some(surface) => {
                    let end = start + surface.len();
                    for concept in &self.entries[surface] {
                        out.push(EntityMatch {
                            start: folded.original_offset(start),
                            end: folded.original_offset(end),
                            concept: concept.clone(),
                        });
                    }
                    while ci < chars.len() && chars[ci].0 < end {
                        ci += 1;
                    }
                }
                None => {
                    // skip the rest of this word
                    ci += 1;
                    if c.is_alphanumeric() {
                        while ci < chars.len() && chars[ci].1.is_alphanumeric() {
                            ci += 1;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Case-folded text with a map back to original byte offsets. Whitespace
/// runs collapse to one space so that multi-word surfaces match across line
/// breaks.
struct Folded {
    text: String,
    /// `offsets[i]` = original byte offset of folded byte `i`; one extra
    /// trailing entry for the end.
    offsets: Vec<usize>,
}

impl Folded {
    fn new(original: &str) -> Self {
        let mut text = String::with_capacity(original.len());
        let mut offsets = Vec::with_capacity(original.len() + 1);
        let mut prev_space = false;
        for (pos, ch) in original.char_indices() {
            if ch.is_whitespace() {
                if prev_space {
                    continue;
                }
                prev_space = true;
                text.push(' ');
                offsets.push(pos);
                continue;
            }
            prev_space = false;
            for lc in ch.to_lowercase() {
                let before = text.len();
                text.push(lc);
                offsets.extend(std::iter::repeat_n(pos, text.len() - before));
            }
        }
        offsets.push(original.len());
        Folded { text, offsets }
    }

    fn original_offset(&self, folded: usize) -> usize {
        if folded == self.text.len() {
            return *self.offsets.last().unwrap_or(&0);
        }
        // end offsets point past the last matched char in the original
        self.offsets[folded]
    }
}
