//! Admissions: structured code lists plus sectioned discharge text.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::fold_case;
pub use crate::ontology::StructuredEvents;
pub use crate::synth::{generate_synthetic_corpus, CorpusOptions, SyntheticCorpus};

pub const ADMISSIONS_FILE: &str = "ADMISSIONS.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admission {
    pub admission_id: String,
    pub patient_id: String,
    #[serde(flatten)]
    pub events: StructuredEvents,
    #[serde(default)]
    pub sections: Vec<Section>,
}

/// The evaluation context: whitelisted sections of one admission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub admission_id: String,
    pub text: String,
    pub included_titles: Vec<String>,
    pub token_count: usize,
}

impl Context {
    pub fn from_text(admission_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Context {
            admission_id: admission_id.into(),
            token_count: text.split_whitespace().count(),
            text,
            included_titles: Vec::new(),
        }
    }
}

/// Section-title patterns. Matching ignores case and collapses whitespace;
/// `*` matches any run of characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionWhitelist {
    patterns: Vec<String>,
}

impl Default for SectionWhitelist {
    fn default() -> Self {
        SectionWhitelist::new([
            "History of Present Illness",
            "Past Medical History",
            "Brief Hospital Course",
            "Major Surgical or Invasive Procedure*",
            "Discharge Diagnos*",
            "Medications on Admission",
            "Discharge Medications",
        ])
    }
}

impl SectionWhitelist {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SectionWhitelist {
            patterns: patterns.into_iter().map(Into::into).collect(),
        }
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn matches(&self, title: &str) -> bool {
        let title = fold_case(title);
        self.patterns
            .iter()
            .any(|p| wildcard_match(fold_case(p).as_bytes(), title.as_bytes()))
    }
}

fn wildcard_match(pattern: &[u8], text: &[u8]) -> bool {
    match pattern.split_first() {
        None => text.is_empty(),
        Some((b'*', rest)) => (0..=text.len()).any(|i| wildcard_match(rest, &text[i..])),
        Some((&c, rest)) => text.first() == Some(&c) && wildcard_match(rest, &text[1..]),
    }
}

fn render_section(out: &mut String, section: &Section) {
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str("== ");
    out.push_str(section.title.trim());
    out.push_str(" ==\n");
    out.push_str(section.body.trim_end());
}

/// Renders every section of an admission the way contexts are rendered.
pub fn render_all_sections(admission: &Admission) -> String {
    let mut out = String::new();
    for s in &admission.sections {
        render_section(&mut out, s);
    }
    out
}

/// Concatenates whitelisted sections, in admission order.
pub fn extract_context(admission: &Admission, whitelist: &SectionWhitelist) -> Result<Context> {
    if whitelist.patterns.is_empty() {
        return Err(Error::InvalidArgument("section whitelist is empty".into()));
    }
    let mut text = String::new();
    let mut included_titles = Vec::new();
    for section in admission.sections.iter().filter(|s| whitelist.matches(&s.title)) {
        render_section(&mut text, section);
        included_titles.push(section.title.clone());
    }
    if included_titles.is_empty() {
        return Err(Error::EmptyContext(admission.admission_id.clone()));
    }
    Ok(Context {
        admission_id: admission.admission_id.clone(),
        token_count: text.split_whitespace().count(),
        text,
        included_titles,
    })
}

/// Keeps the first admission of every patient, preserving input order.
pub fn dedup_patients(admissions: Vec<Admission>) -> Vec<Admission> {
    let mut seen = BTreeSet::new();
    admissions
        .into_iter()
        .filter(|a| seen.insert(a.patient_id.clone()))
        .collect()
}

fn validate(adm: &Admission) -> std::result::Result<(), String> {
    if adm.admission_id.trim().is_empty() {
        return Err("empty admission_id".into());
    }
    if adm.patient_id.trim().is_empty() {
        return Err("empty patient_id".into());
    }
    if let Some(s) = adm.sections.iter().find(|s| s.title.trim().is_empty()) {
        return Err(format!("section with empty title (body starts {:?})", s.body.chars().take(20).collect::<String>()));
    }
    Ok(())
}

/// Parses line-delimited admissions from an in-memory string.
pub fn parse_admissions_str(text: &str, file: &str) -> Result<Vec<Admission>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            file: file.to_string(),
            line: i + 1,
            message,
        };
        let adm: Admission = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        validate(&adm).map_err(parse_err)?;
        if !ids.insert(adm.admission_id.clone()) {
            return Err(Error::Integrity(format!(
                "duplicate admission_id {} at {file}:{}",
                adm.admission_id,
                i + 1
            )));
        }
        out.push(adm);
    }
    Ok(out)
}

pub fn parse_admissions(path: &Path) -> Result<Vec<Admission>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| ADMISSIONS_FILE.into());
    parse_admissions_str(&text, &name)
}

pub fn write_admissions(path: &Path, admissions: &[Admission]) -> Result<()> {
    let mut buf = Vec::new();
    for adm in admissions {
        serde_json::to_writer(&mut buf, adm)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
