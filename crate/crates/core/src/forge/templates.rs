//! One affirmative statement template per relation label.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{read_tsv, SemanticKind};

pub const TEMPLATES_FILE: &str = "TEMPLATES.tsv";

const STANDARD: &str = include_str!("TEMPLATES.tsv");
const HEADER: &str = "relation\ttemplate\thead_kinds\ttail_kinds";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub relation: String,
    /// Sentence with `{head}` and `{tail}` placeholders.
    pub pattern: String,
    pub head_kinds: BTreeSet<SemanticKind>,
    pub tail_kinds: BTreeSet<SemanticKind>,
}

impl Template {
    pub fn fill(&self, head: &str, tail: &str) -> String {
        let filled = self.pattern.replace("{head}", head).replace("{tail}", tail);
        let mut chars = filled.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => filled,
        }
    }

    pub fn accepts(&self, slot: Slot, kind: SemanticKind) -> bool {
        match slot {
            Slot::Head => self.head_kinds.contains(&kind),
            Slot::Tail => self.tail_kinds.contains(&kind),
        }
    }
}

/// Argument position inside a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Head,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    by_relation: BTreeMap<String, Template>,
}

fn parse_kinds(raw: &str) -> Option<BTreeSet<SemanticKind>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(SemanticKind::parse)
        .collect()
}

impl TemplateSet {
    /// The template table shipped with the crate.
    pub fn standard() -> Self {
        Self::parse(STANDARD, TEMPLATES_FILE).expect("bundled templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rows = read_tsv(path, 4, 4)?;
        Self::from_rows(rows, TEMPLATES_FILE)
    }

    fn parse(text: &str, file: &str) -> Result<Self> {
        let rows = text
            .lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.split('\t').map(|f| f.trim().to_string()).collect()))
            .collect();
        Self::from_rows(rows, file)
    }

    fn from_rows(rows: Vec<(usize, Vec<String>)>, file: &str) -> Result<Self> {
        let mut by_relation = BTreeMap::new();
        for (line, f) in rows {
            let err = |message: &str| Error::Parse {
                file: file.to_string(),
                line,
                message: message.to_string(),
            };
            if f.len() != 4 {
                return Err(err("expected 4 tab-separated fields"));
            }
            if !f[1].contains("{head}") || !f[1].contains("{tail}") {
                return Err(err("template must contain {head} and {tail}"));
            }
            let head_kinds = parse_kinds(&f[2]).ok_or_else(|| err("unknown head kind"))?;
            let tail_kinds = parse_kinds(&f[3]).ok_or_else(|| err("unknown tail kind"))?;
            let t = Template {
                relation: f[0].clone(),
                pattern: f[1].clone(),
                head_kinds,
                tail_kinds,
            };
            if by_relation.insert(f[0].clone(), t).is_some() {
                return Err(err("duplicate relation"));
            }
        }
        Ok(TemplateSet { by_relation })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from(HEADER);
        out.push('\n');
        for t in self.by_relation.values() {
            let kinds = |k: &BTreeSet<SemanticKind>| {
                k.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                t.relation,
                t.pattern,
                kinds(&t.head_kinds),
                kinds(&t.tail_kinds)
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, relation: &str) -> Result<&Template> {
        self.by_relation
            .get(relation)
            .ok_or_else(|| Error::MissingTemplate(relation.to_string()))
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.by_relation.contains_key(relation)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.by_relation.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.by_relation.values()
    }

    pub fn len(&self) -> usize {
        self.by_relation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_relation.is_empty()
    }

    /// Keeps only the given relations.
    pub fn restricted_to<'a>(&self, relations: impl IntoIterator<Item = &'a str>) -> Self {
        let keep: BTreeSet<&str> = relations.into_iter().collect();
        TemplateSet {
            by_relation: self
                .by_relation
                .iter()
                .filter(|(r, _)| keep.contains(r.as_str()))
                .map(|(r, t)| (r.clone(), t.clone()))
                .collect(),
        }
    }
}
