//! TSV ingestion and export of the vocabulary tables.
//!
//! ```text
//! CONCEPTS.tsv   cui  preferred_name  semantic_kind  synonym1|synonym2|...
//! RELATIONS.tsv  head_cui  relation  tail_cui
//! MAPPINGS.tsv   vocabulary  code  cui
//! ```
//!
//! Each file is UTF-8 with LF line endings and a header row.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ConceptId, GraphBuilder, SemanticGraph, SemanticKind, SourceCode};
use crate::error::{Error, Result};

pub const CONCEPTS_FILE: &str = "CONCEPTS.tsv";
pub const RELATIONS_FILE: &str = "RELATIONS.tsv";
pub const MAPPINGS_FILE: &str = "MAPPINGS.tsv";

const CONCEPTS_HEADER: &str = "cui\tpreferred_name\tsemantic_kind\tsynonyms";
const RELATIONS_HEADER: &str = "head_cui\trelation\ttail_cui";
const MAPPINGS_HEADER: &str = "vocabulary\tcode\tcui";

/// Reads a TSV file, skipping the header and blank lines, and yields
/// `(line_number, fields)`.
pub(crate) fn read_tsv(path: &Path, columns: usize, min_columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(|f| f.trim().to_string()).collect();
        if fields.len() < min_columns || fields.len() > columns {
            return Err(Error::Parse {
                file,
                line: line_no,
                message: format!(
                    "expected {min_columns}..={columns} tab-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn parse_cui(file: &str, line: usize, raw: &str) -> Result<ConceptId> {
    ConceptId::new(raw).map_err(|e| Error::Parse {
        file: file.to_string(),
        line,
        message: e.to_string(),
    })
}

/// Loads the three vocabulary tables into a validated graph.
pub fn load_ontology(concepts: &Path, relations: &Path, mappings: &Path) -> Result<SemanticGraph> {
    let mut builder = GraphBuilder::new();

    for (line, f) in read_tsv(concepts, 4, 3)? {
        let cui = parse_cui(CONCEPTS_FILE, line, &f[0])?;
        let kind = SemanticKind::parse(&f[2]).ok_or_else(|| Error::Parse {
            file: CONCEPTS_FILE.into(),
            line,
            message: format!("unknown semantic kind `{}`", f[2]),
        })?;
        if f[1].is_empty() {
            return Err(Error::Parse {
                file: CONCEPTS_FILE.into(),
                line,
                message: "empty preferred name".into(),
            });
        }
        let synonyms: Vec<&str> = f
            .get(3)
            .map(|s| s.split('|').filter(|s| !s.trim().is_empty()).collect())
            .unwrap_or_default();
        builder
            .concept(cui, &f[1], kind, &synonyms)
            .map_err(|e| Error::Parse {
                file: CONCEPTS_FILE.into(),
                line,
                message: e.to_string(),
            })?;
    }

    for (line, f) in read_tsv(relations, 3, 3)? {
        let head = parse_cui(RELATIONS_FILE, line, &f[0])?;
        let tail = parse_cui(RELATIONS_FILE, line, &f[2])?;
        builder.edge(head, &f[1], tail).map_err(|e| Error::Parse {
            file: RELATIONS_FILE.into(),
            line,
            message: e.to_string(),
        })?;
    }

    for (line, f) in read_tsv(mappings, 3, 3)? {
        let cui = parse_cui(MAPPINGS_FILE, line, &f[2])?;
        builder
            .mapping(SourceCode::new(&f[0], &f[1]), cui)
            .map_err(|e| Error::Parse {
                file: MAPPINGS_FILE.into(),
                line,
                message: e.to_string(),
            })?;
    }

    builder.build()
}

/// Writes the graph as the three canonical tables (sorted, deduplicated)
/// into `dir`.
pub fn write_ontology(graph: &SemanticGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut concepts = String::from(CONCEPTS_HEADER);
    concepts.push('\n');
    for c in graph.concepts() {
        concepts.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            c.id,
            c.preferred_name,
            c.kind.as_str(),
            c.synonyms.join("|")
        ));
    }

    let mut relations = String::from(RELATIONS_HEADER);
    relations.push('\n');
    for e in graph.edges() {
        relations.push_str(&format!("{}\t{}\t{}\n", e.head, e.relation, e.tail));
    }

    let mut mappings = String::from(MAPPINGS_HEADER);
    mappings.push('\n');
    for (code, cui) in graph.mappings() {
        mappings.push_str(&format!("{}\t{}\t{}\n", code.vocabulary, code.code, cui));
    }

    for (name, body) in [
        (CONCEPTS_FILE, concepts),
        (RELATIONS_FILE, relations),
        (MAPPINGS_FILE, mappings),
    ] {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Loads `CONCEPTS.tsv`, `RELATIONS.tsv` and `MAPPINGS.tsv` from `dir`.
pub fn load_ontology_dir(dir: &Path) -> Result<SemanticGraph> {
    load_ontology(
        &dir.join(CONCEPTS_FILE),
        &dir.join(RELATIONS_FILE),
        &dir.join(MAPPINGS_FILE),
    )
}
