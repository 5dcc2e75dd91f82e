//! Small hand-built clinical graphs used by tests, examples and the CLI's
//! smoke runs.

use crate::corpus::{Admission, Section};
use crate::error::Result;
use crate::ontology::{ConceptId, SemanticGraph, SemanticKind, SourceCode, StructuredEvents, IS_A};

pub const LISINOPRIL: &str = "C0023861";
pub const ACE_INHIBITORS: &str = "C0003028";
pub const HYPERTENSION: &str = "C0020538";

pub const GERD: &str = "C0017168";
pub const OMEPRAZOLE: &str = "C0028978";
pub const ALUMINUM_HYDROXIDE: &str = "C0002374";
pub const GI_AGENTS: &str = "C0017173";
pub const ATENOLOL: &str = "C0004147";
pub const DIABETES: &str = "C0011849";
pub const INSULIN: &str = "C0021641";

pub fn cui(raw: &str) -> ConceptId {
    ConceptId::new(raw).expect("fixture ids are valid")
}

/// Lisinopril is an ACE inhibitor; the class treats hypertension. There is
/// no direct drug-disease edge.
pub fn lisinopril_chain() -> Result<SemanticGraph> {
    let mut b = SemanticGraph::builder();
    b.concept(cui(LISINOPRIL), "lisinopril", SemanticKind::Medication, &["Zestril", "Prinivil"])?
        .concept(
            cui(ACE_INHIBITORS),
            "Angiotensin-converting enzyme inhibitors",
            SemanticKind::DrugClass,
            &["ACE inhibitors"],
        )?
        .concept(
            cui(HYPERTENSION),
            "Hypertensive disease",
            SemanticKind::Diagnosis,
            &["hypertension", "HTN", "high blood pressure"],
        )?
        .edge(cui(LISINOPRIL), IS_A, cui(ACE_INHIBITORS))?
        .edge(cui(ACE_INHIBITORS), "treats", cui(HYPERTENSION))?
        .mapping(SourceCode::new("RXNORM", "29046"), cui(LISINOPRIL))?
        .mapping(SourceCode::new("ICD10", "I10"), cui(HYPERTENSION))?;
    b.build()
}

/// Reflux, hypertension and diabetes components, disconnected from each
/// other.
pub fn gerd_graph() -> Result<SemanticGraph> {
    let mut b = SemanticGraph::builder();
    b.concept(
        cui(GERD),
        "Gastroesophageal reflux disease",
        SemanticKind::Diagnosis,
        &["GERD", "acid reflux"],
    )?
    .concept(cui(OMEPRAZOLE), "omeprazole", SemanticKind::Medication, &["Prilosec"])?
    .concept(cui(ALUMINUM_HYDROXIDE), "aluminum hydroxide", SemanticKind::Medication, &[])?
    .concept(cui(GI_AGENTS), "Gastrointestinal agents", SemanticKind::DrugClass, &[])?
    .concept(cui(HYPERTENSION), "Hypertensive disease", SemanticKind::Diagnosis, &["hypertension"])?
    .concept(cui(ATENOLOL), "atenolol", SemanticKind::Medication, &["Tenormin"])?
    .concept(cui(DIABETES), "Diabetes mellitus", SemanticKind::Diagnosis, &["diabetes"])?
    .concept(cui(INSULIN), "insulin", SemanticKind::Medication, &["Humalog"])?
    .edge(cui(GERD), "may_be_treated_by", cui(OMEPRAZOLE))?
    .edge(cui(GERD), "may_be_treated_by", cui(GI_AGENTS))?
    .edge(cui(OMEPRAZOLE), IS_A, cui(GI_AGENTS))?
    .edge(cui(ALUMINUM_HYDROXIDE), IS_A, cui(GI_AGENTS))?
    .edge(cui(ATENOLOL), "treats", cui(HYPERTENSION))?
    .edge(cui(INSULIN), "treats", cui(DIABETES))?
    .mapping(SourceCode::new("ICD10", "K21.9"), cui(GERD))?
    .mapping(SourceCode::new("ICD10", "I10"), cui(HYPERTENSION))?
    .mapping(SourceCode::new("ICD10", "E11.9"), cui(DIABETES))?
    .mapping(SourceCode::new("RXNORM", "7646"), cui(OMEPRAZOLE))?
    .mapping(SourceCode::new("RXNORM", "612"), cui(ALUMINUM_HYDROXIDE))?
    .mapping(SourceCode::new("RXNORM", "1202"), cui(ATENOLOL))?
    .mapping(SourceCode::new("RXNORM", "5856"), cui(INSULIN))?;
    b.build()
}

/// An admission mentioning reflux on omeprazole and hypertension on
/// atenolol, with insulin and aluminum hydroxide absent.
pub fn gerd_admission() -> Admission {
    Admission {
        admission_id: "GERD-1".into(),
        patient_id: "P-GERD".into(),
        events: StructuredEvents {
            diagnoses: vec![SourceCode::new("ICD10", "K21.9"), SourceCode::new("ICD10", "I10")],
            procedures: Vec::new(),
            medications: vec![SourceCode::new("RXNORM", "7646"), SourceCode::new("RXNORM", "1202")],
        },
        sections: vec![
            Section {
                title: "History of Present Illness".into(),
                body: "She has a history of GERD, treated with omeprazole, with recurrence of epigastric pain."
                    .into(),
            },
            Section {
                title: "Past Medical History".into(),
                body: "- Hypertension, on atenolol".into(),
            },
            Section {
                title: "Social History".into(),
                body: "Lives with her husband.".into(),
            },
        ],
    }
}
