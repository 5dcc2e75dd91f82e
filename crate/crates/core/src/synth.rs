//! Synthetic ontology and admission corpus with planted facts.
//!
//! The ontology is a set of disconnected-ish clusters, each holding a
//! diagnosis hierarchy, two drug classes with member medications and a
//! procedure hierarchy. Sibling diagnoses and procedures share root tokens,
//! so word-overlap alone cannot tell a sibling substitution from the
//! original mention.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Admission, Section};
use crate::error::{Error, Result};
use crate::forge::{keyed_rng, Slot, TemplateSet};
use crate::ontology::{ConceptId, SemanticGraph, SemanticKind, SourceCode, StructuredEvents, Triple, IS_A};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OntologyOptions {
    pub clusters: usize,
}

impl Default for OntologyOptions {
    fn default() -> Self {
        OntologyOptions { clusters: 10 }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "ve", "mi", "ra", "tu", "ne", "so", "di", "pa", "ze", "ro", "li", "ba", "fe", "go", "xi", "mu", "te",
    "vo", "qua", "dra", "phe", "sil", "tor", "ven", "zar", "bel", "cor", "nix",
];
const DIAG_NOUNS: &[&str] = &["syndrome", "disease", "disorder"];
const DIAG_MODIFIERS: &[&str] = &["acute", "chronic", "recurrent", "severe", "early"];
const CLASS_NOUNS: &[&str] = &["inhibitors", "blockers", "agonists", "antagonists"];
const DRUG_SUFFIXES: &[&str] = &["mazine", "tran", "dipine", "cort", "xaban", "prazole", "lukast", "setron"];
const PROC_NOUNS: &[&str] = &["biopsy", "resection", "imaging"];

struct Namer {
    rng: rand_chacha::ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Namer {
    fn root(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let mut s: String = (0..n)
                .map(|_| *SYLLABLES.choose(&mut self.rng).expect("non-empty"))
                .collect();
            if let Some(f) = s.get_mut(0..1) {
                f.make_ascii_uppercase();
            }
            if self.used.insert(s.to_lowercase()) {
                return s;
            }
        }
    }
}

struct ConceptSpec {
    id: ConceptId,
    name: String,
    kind: SemanticKind,
    synonyms: Vec<String>,
    code: SourceCode,
}

/// Builds the synthetic ontology. Every concept carries one source code.
pub fn synthetic_ontology(options: &OntologyOptions, seed: u64) -> Result<SemanticGraph> {
    if options.clusters == 0 {
        return Err(Error::InvalidArgument("synthetic ontology needs at least one cluster".into()));
    }
    let mut namer = Namer {
        rng: keyed_rng(seed, &["ontology"]),
        used: BTreeSet::new(),
    };
    let mut next = 9_000_001u64;
    let mut make = |name: String, kind: SemanticKind, synonyms: Vec<String>, vocab: &str, code: String| {
        let id = ConceptId::new(format!("C{next}")).expect("valid id");
        next += 1;
        ConceptSpec {
            id,
            name,
            kind,
            synonyms,
            code: SourceCode::new(vocab, code),
        }
    };

    let mut specs = Vec::new();
    let mut edges: Vec<(usize, &str, usize)> = Vec::new();
    // Index of each cluster's leading concepts, for cross-cluster links.
    let mut first_child = Vec::new();
    let mut last_child = Vec::new();
    let mut first_class = Vec::new();
    let mut third_proc = Vec::new();

    for k in 0..options.clusters {
        let root = namer.root();
        let noun = DIAG_NOUNS[k % DIAG_NOUNS.len()];
        let parent_name = format!("{root} {noun}");
        let lower = root.to_lowercase();
        let parent = specs.len();
        specs.push(make(
            parent_name.clone(),
            SemanticKind::Diagnosis,
            vec![format!("{lower}osis")],
            "ICD10",
            format!("S{:02}", k),
        ));
        let mut children = Vec::new();
        for (i, m) in DIAG_MODIFIERS.iter().enumerate() {
            children.push(specs.len());
            specs.push(make(
                format!("{m} {parent_name}"),
                SemanticKind::Diagnosis,
                vec![format!("{m} {lower}osis")],
                "ICD10",
                format!("S{:02}.{i}", k),
            ));
            edges.push((specs.len() - 1, IS_A, parent));
        }

        let mut classes = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for c in 0..2 {
            let stem = namer.root().to_lowercase();
            let class_noun = CLASS_NOUNS[(k + c) % CLASS_NOUNS.len()];
            let mut cap = stem.clone();
            cap[..1].make_ascii_uppercase();
            let ci = specs.len();
            classes.push(ci);
            specs.push(make(
                format!("{cap} {class_noun}"),
                SemanticKind::DrugClass,
                vec![format!("{cap} agents")],
                "ATC",
                format!("X{:02}{}", k, c),
            ));
            let mut ms = Vec::new();
            let offset = (k * 2 + c) % DRUG_SUFFIXES.len();
            for j in 0..4 {
                let suffix = DRUG_SUFFIXES[(offset + j * 2) % DRUG_SUFFIXES.len()];
                let brand = namer.root();
                ms.push(specs.len());
                specs.push(make(
                    format!("{stem}{suffix}"),
                    SemanticKind::Medication,
                    vec![brand],
                    "RXNORM",
                    format!("{}", 700_000 + k * 100 + c * 10 + j),
                ));
                edges.push((specs.len() - 1, IS_A, ci));
            }
            members.push(ms);
        }

        let proc_root = namer.root();
        let proc_parent = specs.len();
        specs.push(make(
            format!("{proc_root} evaluation"),
            SemanticKind::Procedure,
            Vec::new(),
            "ICD10PCS",
            format!("P{:02}", k),
        ));
        let mut procs = Vec::new();
        for (i, n) in PROC_NOUNS.iter().enumerate() {
            procs.push(specs.len());
            specs.push(make(
                format!("{proc_root} {n}"),
                SemanticKind::Procedure,
                vec![format!("{} {n} procedure", proc_root.to_lowercase())],
                "ICD10PCS",
                format!("P{:02}.{i}", k),
            ));
            edges.push((specs.len() - 1, IS_A, proc_parent));
        }

        edges.push((classes[0], "treats", children[0]));
        edges.push((classes[0], "treats", children[1]));
        edges.push((classes[1], "treats", children[2]));
        edges.push((members[1][0], "treats", children[3]));
        edges.push((classes[0], "prevents", children[4]));
        edges.push((parent, "may_be_treated_by", classes[1]));
        edges.push((children[0], "has_associated_procedure", procs[0]));
        edges.push((children[1], "may_be_diagnosed_by", proc_parent));
        edges.push((procs[1], "treats", children[2]));

        first_child.push(children[0]);
        last_child.push(children[4]);
        first_class.push(classes[0]);
        third_proc.push(procs[2]);
    }
    let n = options.clusters;
    if n > 1 {
        for k in 0..n {
            edges.push((last_child[k], "has_associated_procedure", third_proc[(k + 1) % n]));
            if n > 3 {
                edges.push((first_class[k], "contraindicated_class_of", first_child[(k + 3) % n]));
            }
        }
    }

    let mut b = SemanticGraph::builder();
    for s in &specs {
        let syn: Vec<&str> = s.synonyms.iter().map(String::as_str).collect();
        b.concept(s.id.clone(), &s.name, s.kind, &syn)?;
        b.mapping(s.code.clone(), s.id.clone())?;
    }
    for (h, r, t) in edges {
        b.edge(specs[h].id.clone(), r, specs[t].id.clone())?;
    }
    b.build()
}

/// Knobs for the synthetic admission corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusOptions {
    /// Admissions with distinct patients.
    pub admissions: usize,
    /// Inclusive range of planted facts per admission.
    pub facts_per_admission: (usize, usize),
    /// Inclusive range of whitespace tokens in the narrative sections.
    pub target_tokens: (usize, usize),
    /// Extra admissions reusing an earlier patient, as a fraction of
    /// `admissions`. They are appended after the first-seen admissions.
    pub repeat_patient_rate: f64,
    /// Probability that a planted fact is stated in a single sentence.
    pub comention_rate: f64,
    /// Probability that a mention uses a synonym instead of the preferred name.
    pub synonym_rate: f64,
    /// Probability that an admission also mentions unrelated concepts.
    pub distractor_rate: f64,
    /// Probability that a mentioned entity's code is listed in the
    /// structured events.
    pub code_rate: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            admissions: 500,
            facts_per_admission: (2, 4),
            target_tokens: (120, 240),
            repeat_patient_rate: 0.05,
            comention_rate: 0.6,
            synonym_rate: 0.35,
            distractor_rate: 0.5,
            code_rate: 0.8,
        }
    }
}

impl CorpusOptions {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.facts_per_admission;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("facts_per_admission must be 1 <= lo <= hi, got {lo}..{hi}")));
        }
        if self.target_tokens.0 > self.target_tokens.1 {
            return Err(Error::Config("target_tokens range is inverted".into()));
        }
        for (name, p) in [
            ("repeat_patient_rate", self.repeat_patient_rate),
            ("comention_rate", self.comention_rate),
            ("synonym_rate", self.synonym_rate),
            ("distractor_rate", self.distractor_rate),
            ("code_rate", self.code_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// A fact written into an admission by the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFact {
    pub admission_id: String,
    pub fact: Triple,
    pub comentioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub admissions: Vec<Admission>,
    pub planted: Vec<PlantedFact>,
}

pub const PLANTED_FILE: &str = "PLANTED.jsonl";

const FILLER: &[&str] = &[
    "The patient was seen by the admitting team.",
    "No acute events overnight.",
    "Vital signs remained stable throughout the stay.",
    "Tolerated a regular diet without difficulty.",
    "Ambulating independently at the time of discharge.",
    "Family was updated at the bedside.",
    "Pain was controlled and the patient slept well.",
    "Labs were trended daily and remained within expected limits.",
    "Physical therapy evaluated the patient and cleared for home.",
    "Denies fevers, chills, or night sweats.",
    "Follow up was arranged with the primary care clinic.",
    "Reports mild fatigue over the past week.",
    "Symptoms were recurrent over several months before presentation.",
    "The course was otherwise unremarkable.",
    "Early mobilization was encouraged by nursing staff.",
    "Severe discomfort resolved by the second hospital day.",
    "Chronic issues were reviewed and stable.",
    "Discharge planning began on the day of admission.",
    "Presented to the emergency department with worsening symptoms.",
    "Hydration was maintained with oral intake.",
];

const SOCIAL: &[&str] = &[
    "Lives at home with a partner.",
    "Former smoker, quit ten years ago.",
    "Drinks alcohol socially.",
    "Works as a teacher.",
];

const COMENTION_MED: &[&str] = &[
    "Started on {a} for {b}.",
    "{b} was managed with {a}.",
    "For {b}, {a} was continued.",
    "{a} was given in the setting of {b}.",
];
const COMENTION_PROC: &[&str] = &[
    "Underwent {a} for {b}.",
    "{b} was evaluated with {a}.",
    "{a} was performed given {b}.",
];
const COMENTION_OTHER: &[&str] = &["History notable for {a} and {b}.", "{a} was discussed along with {b}."];

const MED_LIST: &[&str] = &["{x} daily", "{x} twice daily", "{x} as needed", "{x} at bedtime"];

/// Every templated triple that holds in the closure and whose entity kinds
/// fit the template. Sorted.
pub fn plantable_facts(graph: &SemanticGraph, templates: &TemplateSet, max_hops: usize) -> Result<Vec<Triple>> {
    let mut out = BTreeSet::new();
    for c in graph.concepts() {
        for path in graph.closure_from(&c.id, max_hops)? {
            let Ok(t) = templates.get(&path.inferred_relation) else {
                continue;
            };
            let tail_kind = graph.concept(path.tail())?.kind;
            if t.accepts(Slot::Head, c.kind) && t.accepts(Slot::Tail, tail_kind) {
                out.insert(Triple::new(c.id.clone(), path.inferred_relation.clone(), path.tail().clone()));
            }
        }
    }
    Ok(out.into_iter().collect())
}

fn surface(graph: &SemanticGraph, id: &ConceptId, rng: &mut impl Rng, synonym_rate: f64) -> Result<String> {
    let c = graph.concept(id)?;
    if !c.synonyms.is_empty() && rng.gen_bool(synonym_rate) {
        Ok(c.synonyms.choose(rng).expect("non-empty").clone())
    } else {
        Ok(c.preferred_name.clone())
    }
}

fn sentence(pattern: &str, a: &str, b: &str) -> String {
    let mut s = pattern.replace("{a}", a).replace("{b}", b);
    if let Some(f) = s.get_mut(0..1) {
        f.make_ascii_uppercase();
    }
    s
}

fn is_drug(kind: SemanticKind) -> bool {
    matches!(kind, SemanticKind::Medication | SemanticKind::DrugClass)
}

/// One co-mention sentence for two concepts, phrased by their kinds.
fn comention(
    graph: &SemanticGraph,
    x: &ConceptId,
    y: &ConceptId,
    rng: &mut impl Rng,
    synonym_rate: f64,
) -> Result<String> {
    let (kx, ky) = (graph.concept(x)?.kind, graph.concept(y)?.kind);
    // `a` is the intervention, `b` the diagnosis, when the kinds allow it.
    let (a, b, pool) = if ky == SemanticKind::Diagnosis && is_drug(kx) {
        (x, y, COMENTION_MED)
    } else if kx == SemanticKind::Diagnosis && is_drug(ky) {
        (y, x, COMENTION_MED)
    } else if ky == SemanticKind::Diagnosis && kx == SemanticKind::Procedure {
        (x, y, COMENTION_PROC)
    } else if kx == SemanticKind::Diagnosis && ky == SemanticKind::Procedure {
        (y, x, COMENTION_PROC)
    } else {
        (x, y, COMENTION_OTHER)
    };
    let pattern = pool.choose(rng).expect("non-empty");
    Ok(sentence(
        pattern,
        &surface(graph, a, rng, synonym_rate)?,
        &surface(graph, b, rng, synonym_rate)?,
    ))
}

#[derive(Default)]
struct Draft {
    narrative: Vec<String>,
    diagnoses: Vec<String>,
    medications: Vec<String>,
    procedures: Vec<String>,
    mentioned: BTreeSet<ConceptId>,
}

impl Draft {
    fn list_mention(&mut self, graph: &SemanticGraph, id: &ConceptId, rng: &mut impl Rng, synonym_rate: f64) -> Result<()> {
        let name = surface(graph, id, rng, synonym_rate)?;
        match graph.concept(id)?.kind {
            SemanticKind::Diagnosis => self.diagnoses.push(name),
            SemanticKind::Medication | SemanticKind::DrugClass => {
                self.medications.push(MED_LIST.choose(rng).expect("non-empty").replace("{x}", &name))
            }
            SemanticKind::Procedure => self.procedures.push(name),
            SemanticKind::Other => self.narrative.push(format!("Noted {name}.")),
        }
        self.mentioned.insert(id.clone());
        Ok(())
    }
}

/// Generates admissions whose narrative states a few plantable facts.
///
/// Each planted fact is either stated in one sentence or its two entities
/// are listed in separate sections. Distractor concepts, unrelated to the
/// planted ones, are sometimes mentioned, occasionally together in one
/// sentence.
pub fn generate_synthetic_corpus(
    graph: &SemanticGraph,
    templates: &TemplateSet,
    options: &CorpusOptions,
    seed: u64,
) -> Result<SyntheticCorpus> {
    options.validate()?;
    let facts = plantable_facts(graph, templates, crate::ontology::DEFAULT_MAX_HOPS)?;
    if facts.len() < options.facts_per_admission.1 {
        return Err(Error::Capacity(format!(
            "graph supports {} templated facts, need at least {}",
            facts.len(),
            options.facts_per_admission.1
        )));
    }
    let concepts: Vec<ConceptId> = graph.concepts().map(|c| c.id.clone()).collect();

    let mut admissions = Vec::with_capacity(options.admissions);
    let mut planted = Vec::new();
    for n in 0..options.admissions {
        let admission_id = format!("A{:06}", n + 1);
        let mut rng = keyed_rng(seed, &["admission", &admission_id]);
        let k = rng.gen_range(options.facts_per_admission.0..=options.facts_per_admission.1);
        let chosen: Vec<&Triple> = facts.choose_multiple(&mut rng, k).collect();
        let mut draft = Draft::default();
        for f in &chosen {
            let together = rng.gen_bool(options.comention_rate);
            if together {
                draft
                    .narrative
                    .push(comention(graph, &f.head, &f.tail, &mut rng, options.synonym_rate)?);
                draft.mentioned.insert(f.head.clone());
                draft.mentioned.insert(f.tail.clone());
            } else {
                for e in [&f.head, &f.tail] {
                    if !draft.mentioned.contains(e) {
                        draft.list_mention(graph, e, &mut rng, options.synonym_rate)?;
                    }
                }
            }
            planted.push(PlantedFact {
                admission_id: admission_id.clone(),
                fact: (*f).clone(),
                comentioned: together,
            });
        }
        if rng.gen_bool(options.distractor_rate) {
            let d1 = concepts.choose(&mut rng).expect("non-empty").clone();
            let d2 = concepts.choose(&mut rng).expect("non-empty").clone();
            if rng.gen_bool(0.5) && d1 != d2 {
                draft.narrative.push(comention(graph, &d1, &d2, &mut rng, options.synonym_rate)?);
                draft.mentioned.insert(d1);
                draft.mentioned.insert(d2);
            } else if !draft.mentioned.contains(&d1) {
                draft.list_mention(graph, &d1, &mut rng, options.synonym_rate)?;
            }
        }
        admissions.push(render_admission(graph, admission_id, format!("P{:06}", n + 1), draft, options, &mut rng)?);
    }

    let repeats = (options.repeat_patient_rate * options.admissions as f64).round() as usize;
    if options.admissions > 0 {
        let mut rng = keyed_rng(seed, &["repeats"]);
        for r in 0..repeats {
            let src = rng.gen_range(0..options.admissions);
            let mut copy = admissions[src].clone();
            copy.admission_id = format!("A{:06}", options.admissions + r + 1);
            admissions.push(copy);
        }
    }
    Ok(SyntheticCorpus { admissions, planted })
}

fn render_admission(
    graph: &SemanticGraph,
    admission_id: String,
    patient_id: String,
    mut draft: Draft,
    options: &CorpusOptions,
    rng: &mut impl Rng,
) -> Result<Admission> {
    let target = rng.gen_range(options.target_tokens.0..=options.target_tokens.1);
    let mut hpi = vec![FILLER[18].to_string()];
    let mut course = Vec::new();
    draft.narrative.shuffle(rng);
    for (i, s) in draft.narrative.into_iter().enumerate() {
        if i % 2 == 0 { course.push(s) } else { hpi.push(s) }
    }
    let body_len = |parts: &[&Vec<String>]| parts.iter().flat_map(|v| v.iter()).map(|s| s.split_whitespace().count()).sum::<usize>();
    while body_len(&[&hpi, &course, &draft.diagnoses, &draft.medications, &draft.procedures]) < target {
        let f = FILLER.choose(rng).expect("non-empty").to_string();
        let at = rng.gen_range(0..=course.len());
        if rng.gen_bool(0.5) {
            course.insert(at, f);
        } else {
            let at = rng.gen_range(1..=hpi.len());
            hpi.insert(at, f);
        }
    }

    let mut sections = vec![
        Section {
            title: "Chief Complaint".into(),
            body: "Worsening symptoms.".into(),
        },
        Section {
            title: "History of Present Illness".into(),
            body: hpi.join(" "),
        },
    ];
    if !draft.diagnoses.is_empty() {
        sections.push(Section {
            title: "Past Medical History".into(),
            body: draft.diagnoses.iter().map(|d| format!("- {d}")).collect::<Vec<_>>().join("\n"),
        });
    }
    sections.push(Section {
        title: "Social History".into(),
        body: SOCIAL.choose(rng).expect("non-empty").to_string(),
    });
    if !draft.procedures.is_empty() {
        sections.push(Section {
            title: "Major Surgical or Invasive Procedure".into(),
            body: draft.procedures.join("\n"),
        });
    }
    sections.push(Section {
        title: "Brief Hospital Course".into(),
        body: if course.is_empty() { FILLER[13].to_string() } else { course.join(" ") },
    });
    if !draft.medications.is_empty() {
        sections.push(Section {
            title: "Discharge Medications".into(),
            body: draft
                .medications
                .iter()
                .enumerate()
                .map(|(i, m)| format!("{}. {m}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"),
        });
    }

    let mut events = StructuredEvents::default();
    let mut by_kind: BTreeMap<SemanticKind, Vec<SourceCode>> = BTreeMap::new();
    for id in &draft.mentioned {
        if !rng.gen_bool(options.code_rate) {
            continue;
        }
        let c = graph.concept(id)?;
        if let Some(code) = graph.codes_for(id).first() {
            by_kind.entry(c.kind).or_default().push(code.clone());
        }
    }
    for (kind, codes) in by_kind {
        match kind {
            SemanticKind::Diagnosis | SemanticKind::Other => events.diagnoses.extend(codes),
            SemanticKind::Procedure => events.procedures.extend(codes),
            SemanticKind::Medication | SemanticKind::DrugClass => events.medications.extend(codes),
        }
    }
    Ok(Admission {
        admission_id,
        patient_id,
        events,
        sections,
    })
}

/// Filler vocabulary, for checks that it never collides with the lexicon.
pub fn filler_sentences() -> impl Iterator<Item = &'static str> {
    FILLER
        .iter()
        .chain(SOCIAL)
        .copied()
        .chain(["Worsening symptoms."])
}
