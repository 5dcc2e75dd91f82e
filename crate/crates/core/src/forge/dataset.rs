use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    extract_supported_facts, generate_quadrant_set, ForgeInput, ForgeOptions, GenerationTrace, Omission, Sample,
    Statement, TemplateSet,
};
use crate::corpus::{extract_context, Admission, Context, SectionWhitelist};
use crate::error::{Error, Result};
use crate::ontology::{SemanticGraph, Triple, UnmappedPolicy};
use crate::par;
use crate::quadrant::Quadrant;

pub const DATASET_FILE: &str = "DATASET.jsonl";
pub const SPLIT_FILE: &str = "SPLIT.json";

/// One line of DATASET.jsonl.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub sample_id: String,
    pub admission_id: String,
    pub context: String,
    pub statement: String,
    pub label: Quadrant,
    pub fact: Triple,
    pub template_id: String,
    pub trace: GenerationTrace,
}

impl From<&Sample> for DatasetRecord {
    fn from(s: &Sample) -> Self {
        DatasetRecord {
            sample_id: s.sample_id.clone(),
            admission_id: s.admission_id.clone(),
            context: s.context.text.clone(),
            statement: s.statement.text.clone(),
            label: s.label,
            fact: s.statement.fact.triple(),
            template_id: s.statement.template_id.clone(),
            trace: s.trace.clone(),
        }
    }
}

/// What happened to one admission during generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionOutcome {
    pub admission_id: String,
    pub facts: usize,
    pub samples: usize,
    pub duplicates_dropped: usize,
    /// Set when the admission contributed no samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unusable: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub admissions: usize,
    pub usable_admissions: usize,
    pub supported_facts: usize,
    pub samples: usize,
    pub per_quadrant: BTreeMap<Quadrant, usize>,
    /// Relation label to per-quadrant counts.
    pub per_relation: BTreeMap<String, BTreeMap<Quadrant, usize>>,
    /// Quadrant to omission reason to count.
    pub omissions: BTreeMap<Quadrant, BTreeMap<String, usize>>,
    pub duplicates_dropped: usize,
    pub unusable: Vec<AdmissionOutcome>,
}

struct PerAdmission {
    samples: Vec<Sample>,
    omitted: Vec<Omission>,
    outcome: AdmissionOutcome,
}

fn forge_admission(
    graph: &SemanticGraph,
    templates: &TemplateSet,
    admission: &Admission,
    whitelist: &SectionWhitelist,
    options: &ForgeOptions,
    policy: UnmappedPolicy,
    seed: u64,
) -> Result<PerAdmission> {
    let mut outcome = AdmissionOutcome {
        admission_id: admission.admission_id.clone(),
        facts: 0,
        samples: 0,
        duplicates_dropped: 0,
        unusable: None,
    };
    let context = match extract_context(admission, whitelist) {
        Ok(c) => Arc::new(c),
        Err(Error::EmptyContext(_)) => {
            outcome.unusable = Some("no whitelisted section".into());
            return Ok(PerAdmission {
                samples: Vec::new(),
                omitted: Vec::new(),
                outcome,
            });
        }
        Err(e) => return Err(e),
    };
    let events = graph.normalize_admission(&admission.events, policy)?;
    let facts = extract_supported_facts(graph, templates, &context, &events, options)?;
    outcome.facts = facts.len();
    let attested = graph.attested_concepts(&context.text);
    let input = ForgeInput {
        graph,
        templates,
        context: &context,
        attested: &attested,
        events: &events,
        facts: &facts,
        options,
    };

    let mut samples = Vec::new();
    let mut omitted = Vec::new();
    let mut texts = BTreeSet::new();
    for fact in &facts {
        let set = generate_quadrant_set(&input, fact, seed)?;
        omitted.extend(set.omitted);
        for s in set.samples {
            if texts.insert(s.statement.text.clone()) {
                samples.push(s);
            } else {
                outcome.duplicates_dropped += 1;
            }
        }
    }
    outcome.samples = samples.len();
    if samples.is_empty() {
        outcome.unusable = Some(if facts.is_empty() {
            "no supported fact".into()
        } else {
            "no sample passed generation".into()
        });
    }
    Ok(PerAdmission {
        samples,
        omitted,
        outcome,
    })
}

/// Extracts contexts and facts for every admission and synthesizes their
/// quadrant samples. Work is spread over admissions; output order follows
/// the input order.
///
/// Samples whose statement text repeats an earlier one of the same
/// admission are dropped. Fails when no admission yields a supported fact.
pub fn generate_dataset(
    graph: &SemanticGraph,
    templates: &TemplateSet,
    admissions: &[Admission],
    whitelist: &SectionWhitelist,
    options: &ForgeOptions,
    policy: UnmappedPolicy,
    seed: u64,
) -> Result<(Vec<Sample>, GenerationReport)> {
    let results = par::map(admissions, |a| forge_admission(graph, templates, a, whitelist, options, policy, seed));
    let mut report = GenerationReport {
        admissions: admissions.len(),
        ..Default::default()
    };
    for q in Quadrant::ALL {
        report.per_quadrant.insert(q, 0);
    }
    let mut samples = Vec::new();
    for r in results {
        let r = r?;
        report.supported_facts += r.outcome.facts;
        report.duplicates_dropped += r.outcome.duplicates_dropped;
        for o in r.omitted {
            *report
                .omissions
                .entry(o.quadrant)
                .or_default()
                .entry(o.reason)
                .or_default() += 1;
        }
        for s in &r.samples {
            *report.per_quadrant.entry(s.label).or_default() += 1;
            *report
                .per_relation
                .entry(s.statement.fact.relation.clone())
                .or_default()
                .entry(s.label)
                .or_default() += 1;
        }
        if r.outcome.unusable.is_some() {
            report.unusable.push(r.outcome);
        } else {
            report.usable_admissions += 1;
        }
        samples.extend(r.samples);
    }
    report.samples = samples.len();
    if report.supported_facts == 0 {
        let first: Vec<String> = report
            .unusable
            .iter()
            .take(5)
            .map(|o| format!("{} ({})", o.admission_id, o.unusable.as_deref().unwrap_or("")))
            .collect();
        return Err(Error::Generation(format!(
            "no supported facts in {} admission(s); first unusable: {}",
            admissions.len(),
            if first.is_empty() { "none".to_string() } else { first.join(", ") }
        )));
    }
    Ok((samples, report))
}

pub fn write_dataset(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut buf = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut buf, &DatasetRecord::from(s))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(rec.sample_id.clone()) {
            return Err(Error::Integrity(format!("duplicate sample_id {}", rec.sample_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

impl Sample {
    /// Rebuilds a sample from its serialized record. The context keeps only
    /// its text; section titles are not stored in the dataset file.
    pub fn from_record(rec: &DatasetRecord, fact: super::Fact) -> Sample {
        Sample {
            sample_id: rec.sample_id.clone(),
            admission_id: rec.admission_id.clone(),
            context: Arc::new(Context::from_text(rec.admission_id.clone(), rec.context.clone())),
            statement: Statement {
                text: rec.statement.clone(),
                fact,
                template_id: rec.template_id.clone(),
            },
            label: rec.label,
            trace: rec.trace.clone(),
        }
    }
}
