mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use clinfact::fixtures::{self, cui, ACE_INHIBITORS, HYPERTENSION, LISINOPRIL};
use clinfact::ontology::{
    infer_relation, load_ontology, ConceptId, RelationPath, SemanticGraph, SemanticKind, SourceCode, StructuredEvents,
    UnmappedPolicy, IS_A,
};
use clinfact::Error;
use common::{cid, floyd_warshall, library_closure, oracle_closure, oracle_matches, random_graph};
use proptest::prelude::*;

fn write_tables(dir: &std::path::Path, concepts: &str, relations: &str, mappings: &str) -> [std::path::PathBuf; 3] {
    let paths = [dir.join("c.tsv"), dir.join("r.tsv"), dir.join("m.tsv")];
    fs::write(&paths[0], concepts).unwrap();
    fs::write(&paths[1], relations).unwrap();
    fs::write(&paths[2], mappings).unwrap();
    paths
}

const CONCEPTS: &str = "cui\tpreferred_name\tsemantic_kind\tsynonyms\n\
C0023861\tlisinopril\tmedication\tZestril\n\
C0003028\tACE inhibitors\tdrug_class\t\n\
C0020538\tHypertensive disease\tdiagnosis\thypertension|HTN\n";

#[test]
fn three_row_tables_load() {
    let dir = tempfile::tempdir().unwrap();
    let [c, r, m] = write_tables(
        dir.path(),
        CONCEPTS,
        "head_cui\trelation\ttail_cui\nC0023861\tis_a\tC0003028\nC0003028\ttreats\tC0020538\n",
        "vocabulary\tcode\tcui\nRXNORM\t29046\tC0023861\n",
    );
    let g = load_ontology(&c, &r, &m).unwrap();
    assert_eq!((g.concept_count(), g.edge_count(), g.mappings().count()), (3, 2, 1));
    assert_eq!(g.normalize_code(&SourceCode::new("RXNORM", "29046")).unwrap(), &cui(LISINOPRIL));
}

#[test]
fn edge_to_absent_concept_is_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let [c, r, m] = write_tables(
        dir.path(),
        CONCEPTS,
        "head_cui\trelation\ttail_cui\nC0023861\tis_a\tC9999999\n",
        "vocabulary\tcode\tcui\n",
    );
    let err = load_ontology(&c, &r, &m).unwrap_err();
    assert!(matches!(err, Error::Integrity(ref s) if s.contains("C9999999")), "{err}");
}

#[test]
fn duplicate_edge_rows_collapse() {
    let rows = [
        ("C0023861", "is_a", "C0003028"),
        ("C0003028", "treats", "C0020538"),
        ("C0023861", "is_a", "C0003028"),
        ("C0003028", "treats", "C0020538"),
        ("C0023861", "treats", "C0020538"),
    ];
    let mut text = String::from("head_cui\trelation\ttail_cui\n");
    for (h, r, t) in rows {
        text.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    let dir = tempfile::tempdir().unwrap();
    let [c, r, m] = write_tables(dir.path(), CONCEPTS, &text, "vocabulary\tcode\tcui\n");
    let g = load_ontology(&c, &r, &m).unwrap();
    let distinct: BTreeSet<_> = rows.iter().collect();
    assert_eq!(g.edge_count(), distinct.len());
}

#[test]
fn load_is_row_order_independent() {
    let dir = tempfile::tempdir().unwrap();
    let concepts_rev: String = {
        let mut lines: Vec<&str> = CONCEPTS.lines().collect();
        lines[1..].reverse();
        lines.join("\n") + "\n"
    };
    let rel = "head_cui\trelation\ttail_cui\nC0023861\tis_a\tC0003028\nC0003028\ttreats\tC0020538\n";
    let rel_rev = "head_cui\trelation\ttail_cui\nC0003028\ttreats\tC0020538\nC0023861\tis_a\tC0003028\n";
    let [c1, r1, m1] = write_tables(dir.path(), CONCEPTS, rel, "vocabulary\tcode\tcui\n");
    let a = load_ontology(&c1, &r1, &m1).unwrap();
    let sub = dir.path().join("b");
    fs::create_dir(&sub).unwrap();
    let [c2, r2, m2] = write_tables(&sub, &concepts_rev, rel_rev, "vocabulary\tcode\tcui\n");
    let b = load_ontology(&c2, &r2, &m2).unwrap();
    assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
    assert_eq!(a.concepts().collect::<Vec<_>>(), b.concepts().collect::<Vec<_>>());
}

#[test]
fn normalization_examples() {
    let g = fixtures::lisinopril_chain().unwrap();
    assert_eq!(g.normalize_code(&SourceCode::new("RXNORM", "29046")).unwrap().as_str(), "C0023861");
    let typo = SourceCode::new("VOOCAB_TYPO", "Z1");
    assert!(matches!(g.normalize_code(&typo), Err(Error::UnmappedCode(c)) if c == typo));

    assert!(g
        .normalize_admission(&StructuredEvents::default(), UnmappedPolicy::Strict)
        .unwrap()
        .is_empty());
    let dup = StructuredEvents {
        diagnoses: vec![SourceCode::new("ICD10", "I10"), SourceCode::new("ICD10", "I10")],
        procedures: vec![],
        medications: vec![SourceCode::new("RXNORM", "29046")],
    };
    assert_eq!(g.normalize_admission(&dup, UnmappedPolicy::Strict).unwrap().len(), 2);
}

#[test]
fn two_diagnoses_and_one_medication_map_to_three_concepts() {
    let g = fixtures::gerd_graph().unwrap();
    let events = StructuredEvents {
        diagnoses: vec![SourceCode::new("ICD10", "K21.9"), SourceCode::new("ICD10", "E11.9")],
        procedures: vec![],
        medications: vec![SourceCode::new("RXNORM", "5856")],
    };
    let oracle: BTreeSet<ConceptId> = events
        .diagnoses
        .iter()
        .chain(&events.medications)
        .map(|c| g.mappings().find(|(k, _)| *k == c).unwrap().1.clone())
        .collect();
    let got = g.normalize_admission(&events, UnmappedPolicy::Strict).unwrap();
    assert_eq!(got, oracle);
    assert_eq!(got.len(), 3);
}

#[test]
fn lisinopril_reaches_hypertension_in_two_hops() {
    let g = fixtures::lisinopril_chain().unwrap();
    let paths = g.relations_within_hops(&cui(LISINOPRIL), &cui(HYPERTENSION), 3).unwrap();
    assert_eq!(paths.len(), 1);
    let p = &paths[0];
    assert_eq!(p.inferred_relation, "treats");
    assert_eq!(p.hops(), 2);
    assert_eq!(p.nodes, vec![cui(LISINOPRIL), cui(ACE_INHIBITORS), cui(HYPERTENSION)]);
    assert_eq!(p.edge_labels, vec![IS_A.to_string(), "treats".to_string()]);
    assert_eq!(infer_relation(p, &g).as_deref(), Some("treats"));
    assert!(g.relations_within_hops(&cui(HYPERTENSION), &cui(LISINOPRIL), 3).unwrap().is_empty());
}

#[test]
fn infer_relation_examples() {
    let g = fixtures::lisinopril_chain().unwrap();
    let path = |nodes: &[&str], labels: &[&str]| RelationPath {
        nodes: nodes.iter().map(|n| cui(n)).collect(),
        edge_labels: labels.iter().map(|l| l.to_string()).collect(),
        inferred_relation: String::new(),
    };
    assert_eq!(
        infer_relation(&path(&[ACE_INHIBITORS, HYPERTENSION], &["treats"]), &g).as_deref(),
        Some("treats")
    );
    let mut b = SemanticGraph::builder();
    for i in 0..4 {
        b.concept(cid(i), &format!("n{i}"), SemanticKind::Diagnosis, &[]).unwrap();
    }
    for i in 0..3 {
        b.edge(cid(i), IS_A, cid(i + 1)).unwrap();
    }
    let chain = b.build().unwrap();
    let p = RelationPath {
        nodes: (0..4).map(cid).collect(),
        edge_labels: vec![IS_A.into(); 3],
        inferred_relation: String::new(),
    };
    assert_eq!(infer_relation(&p, &chain), None);
}

/// 6-node chain 0 -> 1 -> ... -> 5 with `treats` edges.
fn chain6() -> SemanticGraph {
    let mut b = SemanticGraph::builder();
    for i in 0..6 {
        b.concept(cid(i), &format!("n{i}"), SemanticKind::Diagnosis, &[]).unwrap();
    }
    for i in 0..5 {
        b.edge(cid(i), "treats", cid(i + 1)).unwrap();
    }
    b.build().unwrap()
}

#[test]
fn distance_four_is_out_of_reach() {
    let g = chain6();
    let d = floyd_warshall(&g);
    assert_eq!(d[&(cid(0), cid(4))], 4);
    assert!(g.relations_within_hops(&cid(0), &cid(4), 3).unwrap().is_empty());
    assert!(g.relations_within_hops(&cid(5), &cid(0), 3).unwrap().is_empty());
}

#[test]
fn distant_concepts_on_a_path_graph() {
    let g = chain6();
    let d = floyd_warshall(&g);
    let oracle: BTreeSet<ConceptId> = (0..6)
        .map(cid)
        .filter(|c| d.get(&(cid(0), c.clone())).is_none_or(|&x| x >= 4))
        .collect();
    let got = g.distant_concepts(&cid(0), 4).unwrap();
    assert_eq!(got, oracle);
    assert_eq!(got, [cid(4), cid(5)].into_iter().collect());
}

#[test]
fn distant_concepts_small_cases() {
    let mut b = SemanticGraph::builder();
    for i in 0..3 {
        b.concept(cid(i), &format!("n{i}"), SemanticKind::Diagnosis, &[]).unwrap();
    }
    b.edge(cid(0), "treats", cid(1)).unwrap();
    b.edge(cid(1), "treats", cid(2)).unwrap();
    b.edge(cid(0), "treats", cid(2)).unwrap();
    let tri = b.build().unwrap();
    assert!(tri.distant_concepts(&cid(0), 4).unwrap().is_empty());

    let g = fixtures::gerd_graph().unwrap();
    let far = g.distant_concepts(&cui(fixtures::GERD), 4).unwrap();
    for other in [fixtures::ATENOLOL, fixtures::HYPERTENSION, fixtures::INSULIN, fixtures::DIABETES] {
        assert!(far.contains(&cui(other)));
    }
    assert!(!far.contains(&cui(fixtures::OMEPRAZOLE)));
    assert!(matches!(g.distant_concepts(&cid(999), 4), Err(Error::NotFound(_))));
}

#[test]
fn siblings_match_parent_index_oracle() {
    for seed in 0..20 {
        let g = random_graph(seed, 30, 60);
        let mut parents: BTreeMap<ConceptId, BTreeSet<ConceptId>> = BTreeMap::new();
        for e in g.edges().filter(|e| e.relation == IS_A) {
            parents.entry(e.head.clone()).or_default().insert(e.tail.clone());
        }
        for c in g.concepts() {
            let mine = parents.get(&c.id).cloned().unwrap_or_default();
            let oracle: BTreeSet<ConceptId> = parents
                .iter()
                .filter(|(other, ps)| **other != c.id && !ps.is_disjoint(&mine))
                .map(|(o, _)| o.clone())
                .collect();
            assert_eq!(g.sibling_concepts(&c.id).unwrap(), oracle, "seed {seed} concept {}", c.id);
        }
    }
}

#[test]
fn closure_matches_exhaustive_enumeration() {
    for seed in 0..25 {
        let g = random_graph(1000 + seed, 20, 45);
        for k in 1..=3 {
            assert_eq!(library_closure(&g, k), oracle_closure(&g, k), "seed {seed} k {k}");
        }
    }
}

#[test]
fn match_entities_examples() {
    let g = fixtures::gerd_graph().unwrap();
    let text = "treated with omeprazole";
    let m = g.match_entities(text);
    assert_eq!(m.len(), 1);
    assert_eq!(&text[m[0].start..m[0].end], "omeprazole");
    assert_eq!(m[0].concept, cui(fixtures::OMEPRAZOLE));
    assert!(g.match_entities("no concepts here at all").is_empty());

    let mut b = SemanticGraph::builder();
    b.concept(cid(0), "gastroesophageal reflux disease", SemanticKind::Diagnosis, &[])
        .unwrap()
        .concept(cid(1), "reflux", SemanticKind::Diagnosis, &[])
        .unwrap();
    let g = b.build().unwrap();
    let text = "Known Gastroesophageal Reflux Disease; reflux today.";
    let got: Vec<(usize, usize, ConceptId)> =
        g.match_entities(text).into_iter().map(|m| (m.start, m.end, m.concept)).collect();
    assert_eq!(got, oracle_matches(&g, text));
    assert_eq!(got[0], (6, 37, cid(0)));
    assert_eq!(got.len(), 2);
}

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "alphabeta", "x", "beta gamma", "delta alpha beta"];

fn lexicon_graph(names: &[usize]) -> SemanticGraph {
    let mut b = SemanticGraph::builder();
    for (i, &w) in names.iter().enumerate() {
        b.concept(cid(i), WORDS[w], SemanticKind::Diagnosis, &[]).unwrap();
    }
    b.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_agree_with_brute_force(
        names in proptest::sample::subsequence((0..WORDS.len()).collect::<Vec<_>>(), 1..WORDS.len()),
        tokens in proptest::collection::vec((0usize..10, any::<bool>()), 0..30),
    ) {
        let g = lexicon_graph(&names);
        let vocab = ["alpha", "beta", "gamma", "delta", "alphabeta", "x", "other", "alph", "betas", "and"];
        let text = tokens
            .iter()
            .map(|&(i, up)| if up { vocab[i].to_uppercase() } else { vocab[i].to_string() })
            .collect::<Vec<_>>()
            .join(" ");
        let got: Vec<(usize, usize, ConceptId)> =
            g.match_entities(&text).into_iter().map(|m| (m.start, m.end, m.concept)).collect();
        prop_assert_eq!(&got, &oracle_matches(&g, &text));
        for w in got.windows(2) {
            prop_assert!(w[0].1 <= w[1].0 || (w[0].0, w[0].1) == (w[1].0, w[1].1));
        }
        for (s, e, _) in &got {
            prop_assert!(g.lexicon().contains_key(&text[*s..*e].to_lowercase()));
        }
    }

    #[test]
    fn closure_is_monotone_in_hops(seed in 0u64..10_000, n in 2usize..25, m in 0usize..60) {
        let g = random_graph(seed, n, m);
        let ids: Vec<ConceptId> = g.concepts().map(|c| c.id.clone()).collect();
        for h in &ids {
            for t in &ids {
                let mut prev = BTreeSet::new();
                for k in 1..=3 {
                    let cur: BTreeSet<_> = g.relations_within_hops(h, t, k).unwrap().into_iter().collect();
                    prop_assert!(prev.is_subset(&cur));
                    for p in &cur {
                        prop_assert!(p.hops() <= k);
                        if p.edge_labels.iter().all(|l| g.is_hierarchical(l)) {
                            prop_assert_eq!(p.hops(), 1);
                        } else {
                            prop_assert_eq!(infer_relation(p, &g), Some(p.inferred_relation.clone()));
                        }
                    }
                    prev = cur;
                }
            }
        }
    }

    #[test]
    fn siblings_are_symmetric(seed in 0u64..10_000, n in 2usize..30, m in 0usize..80) {
        let g = random_graph(seed, n, m);
        for a in g.concepts() {
            for b in g.sibling_concepts(&a.id).unwrap() {
                prop_assert!(g.sibling_concepts(&b).unwrap().contains(&a.id));
            }
        }
    }

    #[test]
    fn distances_agree_with_floyd_warshall(seed in 0u64..10_000, n in 2usize..25, m in 0usize..50) {
        let g = random_graph(seed, n, m);
        let d = floyd_warshall(&g);
        for a in g.concepts() {
            let far = g.distant_concepts(&a.id, 4).unwrap();
            for b in g.concepts() {
                let want = d.get(&(a.id.clone(), b.id.clone())).copied();
                prop_assert_eq!(g.hop_distance(&a.id, &b.id).unwrap(), want);
                prop_assert_eq!(far.contains(&b.id), want.is_none_or(|x| x >= 4));
            }
        }
    }

    #[test]
    fn normalization_distributes_over_union(split in proptest::collection::vec(any::<bool>(), 7)) {
        let g = fixtures::gerd_graph().unwrap();
        let codes: Vec<SourceCode> = g.mappings().map(|(c, _)| c.clone()).collect();
        let (mut u, mut v) = (StructuredEvents::default(), StructuredEvents::default());
        for (code, left) in codes.iter().zip(&split) {
            if *left { u.diagnoses.push(code.clone()) } else { v.medications.push(code.clone()) }
        }
        let mut both = u.clone();
        both.medications.extend(v.medications.clone());
        let n = |e: &StructuredEvents| g.normalize_admission(e, UnmappedPolicy::Strict).unwrap();
        let union: BTreeSet<ConceptId> = n(&u).union(&n(&v)).cloned().collect();
        prop_assert_eq!(n(&both), union);
    }
}
