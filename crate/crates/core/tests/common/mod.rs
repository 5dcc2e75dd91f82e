//! Random graph generators and brute-force reference implementations shared
//! by the integration suites.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use clinfact::forge::{Sample, SplitRatios};
use clinfact::ontology::{ConceptId, SemanticGraph, SemanticKind, StructuredEvents, IS_A};
use clinfact::Quadrant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LABELS: [&str; 4] = [IS_A, "treats", "may_prevent", "has_associated_procedure"];

pub fn cid(n: usize) -> ConceptId {
    ConceptId::new(format!("C{:07}", n + 1)).unwrap()
}

/// Random multigraph over `n` nodes with up to `m` distinct edges, no
/// self-loops. Roughly one edge in three is hierarchical.
pub fn random_graph(seed: u64, n: usize, m: usize) -> SemanticGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = SemanticGraph::builder();
    for i in 0..n {
        b.concept(cid(i), &format!("node {i}"), SemanticKind::Diagnosis, &[]).unwrap();
    }
    if n >= 2 {
        for _ in 0..m {
            let h = rng.gen_range(0..n);
            let mut t = rng.gen_range(0..n - 1);
            if t >= h {
                t += 1;
            }
            let label = if rng.gen_bool(0.35) { IS_A } else { LABELS[rng.gen_range(1..LABELS.len())] };
            b.edge(cid(h), label, cid(t)).unwrap();
        }
    }
    b.build().unwrap()
}

/// `(nodes, edge labels, inferred relation)` as produced by the graph.
pub type PathKey = (Vec<ConceptId>, Vec<String>, String);

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Up,
    Sub,
    Down,
}

/// Enumerates every simple walk of 1..=`max_hops` steps, where a step
/// follows any stored edge forward or a hierarchical edge backward, and
/// keeps the single direct edges plus walks shaped `Up* Sub Down*`.
pub fn oracle_closure(graph: &SemanticGraph, max_hops: usize) -> BTreeMap<(ConceptId, ConceptId), BTreeSet<PathKey>> {
    let edges: Vec<(ConceptId, String, ConceptId)> = graph
        .edges()
        .map(|e| (e.head.clone(), e.relation.clone(), e.tail.clone()))
        .collect();
    let mut out: BTreeMap<(ConceptId, ConceptId), BTreeSet<PathKey>> = BTreeMap::new();

    fn admissible(steps: &[Step]) -> bool {
        let subs = steps.iter().filter(|s| **s == Step::Sub).count();
        if subs != 1 {
            return false;
        }
        let pivot = steps.iter().position(|s| *s == Step::Sub).unwrap();
        steps[..pivot].iter().all(|s| *s == Step::Up) && steps[pivot + 1..].iter().all(|s| *s == Step::Down)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        edges: &[(ConceptId, String, ConceptId)],
        max_hops: usize,
        nodes: &mut Vec<ConceptId>,
        labels: &mut Vec<String>,
        steps: &mut Vec<Step>,
        out: &mut BTreeMap<(ConceptId, ConceptId), BTreeSet<PathKey>>,
    ) {
        if !steps.is_empty() {
            let head = nodes[0].clone();
            let tail = nodes.last().unwrap().clone();
            let direct = steps.len() == 1 && steps[0] != Step::Down;
            if direct || admissible(steps) {
                let inferred = if direct {
                    labels[0].clone()
                } else {
                    labels[steps.iter().position(|s| *s == Step::Sub).unwrap()].clone()
                };
                out.entry((head, tail))
                    .or_default()
                    .insert((nodes.clone(), labels.clone(), inferred));
            }
        }
        if steps.len() == max_hops {
            return;
        }
        let here = nodes.last().unwrap().clone();
        for (h, l, t) in edges {
            let hier = l == IS_A;
            let mut candidates = Vec::new();
            if *h == here {
                candidates.push((t.clone(), if hier { Step::Up } else { Step::Sub }));
            }
            if hier && *t == here {
                candidates.push((h.clone(), Step::Down));
            }
            for (next, step) in candidates {
                if nodes.contains(&next) {
                    continue;
                }
                nodes.push(next);
                labels.push(l.clone());
                steps.push(step);
                walk(edges, max_hops, nodes, labels, steps, out);
                nodes.pop();
                labels.pop();
                steps.pop();
            }
        }
    }

    for c in graph.concepts() {
        walk(&edges, max_hops, &mut vec![c.id.clone()], &mut Vec::new(), &mut Vec::new(), &mut out);
    }
    out
}

/// Closure of the graph under test in the same shape as [`oracle_closure`].
pub fn library_closure(graph: &SemanticGraph, max_hops: usize) -> BTreeMap<(ConceptId, ConceptId), BTreeSet<PathKey>> {
    let ids: Vec<ConceptId> = graph.concepts().map(|c| c.id.clone()).collect();
    let mut out = BTreeMap::new();
    for h in &ids {
        for t in &ids {
            let paths = graph.relations_within_hops(h, t, max_hops).unwrap();
            if !paths.is_empty() {
                let set: BTreeSet<PathKey> = paths
                    .into_iter()
                    .map(|p| (p.nodes, p.edge_labels, p.inferred_relation))
                    .collect();
                out.insert((h.clone(), t.clone()), set);
            }
        }
    }
    out
}

/// All-pairs undirected hop distances by Floyd-Warshall.
pub fn floyd_warshall(graph: &SemanticGraph) -> BTreeMap<(ConceptId, ConceptId), usize> {
    let ids: Vec<ConceptId> = graph.concepts().map(|c| c.id.clone()).collect();
    let n = ids.len();
    let pos: BTreeMap<&ConceptId, usize> = ids.iter().enumerate().map(|(i, c)| (c, i)).collect();
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in graph.edges() {
        let (a, b) = (pos[&e.head], pos[&e.tail]);
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if d[i][j] < INF {
                out.insert((ids[i].clone(), ids[j].clone()), d[i][j]);
            }
        }
    }
    out
}

/// Leftmost-longest matching by trying every lexicon surface at every word
/// start. Assumes single-space-separated ASCII text.
pub fn oracle_matches(graph: &SemanticGraph, text: &str) -> Vec<(usize, usize, ConceptId)> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let is_word = |i: usize| bytes[i].is_ascii_alphanumeric();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if i > 0 && is_word(i - 1) {
            i += 1;
            continue;
        }
        let mut best: Option<&str> = None;
        for surface in graph.lexicon().keys() {
            let end = i + surface.len();
            if end <= bytes.len()
                && &lower[i..end] == surface
                && (end == bytes.len() || !is_word(end))
                && best.is_none_or(|b| surface.len() > b.len())
            {
                best = Some(surface);
            }
        }
        match best {
            Some(s) => {
                for c in &graph.lexicon()[s] {
                    out.push((i, i + s.len(), c.clone()));
                }
                i += s.len();
            }
            None => i += 1,
        }
    }
    out
}

/// Concepts attested in arbitrary text: whitespace runs are collapsed first
/// so [`oracle_matches`] sees single-spaced text.
pub fn oracle_attested(graph: &SemanticGraph, text: &str) -> BTreeSet<ConceptId> {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    oracle_matches(graph, &flat).into_iter().map(|(_, _, c)| c).collect()
}

/// Whether `relation(head, tail)` is in the closure according to
/// [`oracle_closure`] output.
pub fn oracle_holds(
    closure: &BTreeMap<(ConceptId, ConceptId), BTreeSet<PathKey>>,
    head: &ConceptId,
    relation: &str,
    tail: &ConceptId,
) -> bool {
    closure
        .get(&(head.clone(), tail.clone()))
        .is_some_and(|paths| paths.iter().any(|(_, _, r)| r == relation))
}

/// Concepts of structured codes by linear scan of the mapping table.
pub fn oracle_events(graph: &SemanticGraph, events: &StructuredEvents) -> BTreeSet<ConceptId> {
    let table: Vec<_> = graph.mappings().collect();
    events
        .diagnoses
        .iter()
        .chain(&events.procedures)
        .chain(&events.medications)
        .filter_map(|code| table.iter().find(|(c, _)| *c == code).map(|(_, id)| (*id).clone()))
        .collect()
}

/// Re-derives a sample's label invariants from exhaustive closure and
/// distance tables. `context_attested` comes from [`oracle_attested`] on
/// the sample's context. Returns a description of the first violation.
pub fn oracle_violation(
    sample: &Sample,
    closure: &BTreeMap<(ConceptId, ConceptId), BTreeSet<PathKey>>,
    distances: &BTreeMap<(ConceptId, ConceptId), usize>,
    graph: &SemanticGraph,
    context_attested: &BTreeSet<ConceptId>,
    events: &BTreeSet<ConceptId>,
    min_distractor_hops: usize,
) -> Option<String> {
    let fact = &sample.statement.fact;
    let label = sample.label;
    let truth = oracle_holds(closure, &fact.head, &fact.relation, &fact.tail);
    if truth != label.is_true() {
        return Some(format!("{label}: truth is {truth}"));
    }
    let spoken = oracle_attested(graph, &sample.statement.text);
    if !spoken.contains(&fact.head) || !spoken.contains(&fact.tail) {
        return Some(format!("{label}: statement does not name both entities"));
    }
    let attested = context_attested;
    if label.is_supported() {
        if !attested.contains(&fact.head) || !attested.contains(&fact.tail) {
            return Some(format!("{label}: entity not in context"));
        }
    } else {
        let Some(r) = &sample.trace.replacement else {
            return Some(format!("{label}: no replacement recorded"));
        };
        if r != &fact.head && r != &fact.tail {
            return Some(format!("{label}: replacement not in statement"));
        }
        if attested.contains(r) || events.contains(r) {
            return Some(format!("{label}: replacement {r} present in admission"));
        }
    }
    if label == Quadrant::Q4 {
        let (Some(o), Some(r)) = (&sample.trace.original, &sample.trace.replacement) else {
            return Some("Q4: trace incomplete".into());
        };
        if distances.get(&(o.clone(), r.clone())).is_some_and(|d| *d < min_distractor_hops) {
            return Some(format!("Q4: {r} within {min_distractor_hops} hops of {o}"));
        }
    }
    None
}

/// `(sample_id, admission_id, label, patient_id)` of one split input.
pub type SplitRow = (String, String, Quadrant, String);

/// Checks split constraints by direct recount: patients unique per
/// admission set, admission-disjoint splits, admission counts within 1 of
/// the ratios, exact per-split quadrant balance, and full coverage of the
/// input minus the trimmed samples.
pub fn check_split(rows: &[SplitRow], split: &clinfact::forge::DatasetSplit, ratios: SplitRatios) -> Result<(), String> {
    let by_id: BTreeMap<&str, &SplitRow> = rows.iter().map(|r| (r.0.as_str(), r)).collect();
    let mut adm_patient: BTreeMap<&str, &str> = BTreeMap::new();
    for r in rows {
        adm_patient.insert(&r.1, &r.3);
    }
    let patients: BTreeSet<&str> = adm_patient.values().copied().collect();
    if patients.len() != adm_patient.len() {
        return Err("several admissions share a patient".into());
    }
    let n = adm_patient.len() as f64;
    let parts = [
        ("train", &split.train, &split.admissions.train, ratios.train),
        ("validation", &split.validation, &split.admissions.validation, ratios.validation),
        ("test", &split.test, &split.admissions.test, ratios.test),
    ];
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    let mut covered = 0;
    for (name, ids, adms, ratio) in parts {
        if (adms.len() as f64 - ratio * n).abs() > 1.0 + 1e-9 {
            return Err(format!("{name}: {} admissions for ratio {ratio} of {n}", adms.len()));
        }
        let adm_set: BTreeSet<&str> = adms.iter().map(String::as_str).collect();
        let mut counts = [0usize; 4];
        for id in ids.iter() {
            let row = by_id.get(id.as_str()).ok_or(format!("{name}: unknown sample {id}"))?;
            if !adm_set.contains(row.1.as_str()) {
                return Err(format!("{name}: sample {id} from foreign admission {}", row.1));
            }
            counts[row.2.index()] += 1;
        }
        for a in &adm_set {
            if let Some(prev) = owner.insert(a, name) {
                return Err(format!("admission {a} in both {prev} and {name}"));
            }
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(format!("{name}: quadrant counts {counts:?}"));
        }
        covered += ids.len();
    }
    if owner.len() != adm_patient.len() {
        return Err(format!("{} of {} admissions assigned", owner.len(), adm_patient.len()));
    }
    if covered + split.dropped.len() != rows.len() {
        return Err(format!("{covered} kept + {} dropped != {}", split.dropped.len(), rows.len()));
    }
    Ok(())
}

/// Metrics recounted straight from `(gold, predicted)` pairs, with F1 as
/// the harmonic mean of precision and recall.
#[derive(Debug, Clone, PartialEq)]
pub struct RecountedMetrics {
    pub total: usize,
    pub accuracy: f64,
    pub precision: [f64; 4],
    pub recall: [f64; 4],
    pub f1: [f64; 4],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub hsr: Option<f64>,
    pub tir: Option<f64>,
}

pub fn recount_metrics(pairs: &[(Quadrant, Quadrant)]) -> RecountedMetrics {
    let count = |f: &dyn Fn(&(Quadrant, Quadrant)) -> bool| pairs.iter().filter(|p| f(p)).count() as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let mut precision = [0.0; 4];
    let mut recall = [0.0; 4];
    let mut f1 = [0.0; 4];
    for q in Quadrant::ALL {
        let tp = count(&|p| p.0 == q && p.1 == q);
        let p = div(tp, count(&|p| p.1 == q));
        let r = div(tp, count(&|p| p.0 == q));
        precision[q.index()] = p;
        recall[q.index()] = r;
        f1[q.index()] = div(2.0 * p * r, p + r);
    }
    let rate = |gold: Quadrant| {
        let den = count(&|p| p.0 == gold);
        (den > 0.0).then(|| count(&|p| p.0 == gold && p.1 == Quadrant::Q1) / den)
    };
    RecountedMetrics {
        total: pairs.len(),
        accuracy: count(&|p| p.0 == p.1) / pairs.len() as f64,
        macro_precision: precision.iter().sum::<f64>() / 4.0,
        macro_recall: recall.iter().sum::<f64>() / 4.0,
        macro_f1: f1.iter().sum::<f64>() / 4.0,
        precision,
        recall,
        f1,
        hsr: rate(Quadrant::Q2),
        tir: rate(Quadrant::Q3),
    }
}

/// Largest absolute difference between a library report and the recount,
/// or `None` when a rate is defined on one side only.
pub fn report_gap(r: &clinfact::metrics::MetricsReport, o: &RecountedMetrics) -> Option<f64> {
    let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => Some(0.0),
        (Some(x), Some(y)) => Some((x - y).abs()),
        _ => None,
    };
    if r.total as usize != o.total {
        return None;
    }
    let mut gap = opt(r.hsr, o.hsr)?.max(opt(r.tir, o.tir)?);
    for (a, b) in [
        (r.accuracy, o.accuracy),
        (r.macro_precision, o.macro_precision),
        (r.macro_recall, o.macro_recall),
        (r.macro_f1, o.macro_f1),
    ] {
        gap = gap.max((a - b).abs());
    }
    for i in 0..4 {
        gap = gap
            .max((r.per_quadrant_precision[i] - o.precision[i]).abs())
            .max((r.per_quadrant_recall[i] - o.recall[i]).abs())
            .max((r.per_quadrant_f1[i] - o.f1[i]).abs());
    }
    Some(gap)
}

/// The hand-worked confusion example: Q1 3 right and 1 as Q3, Q2 2 right
/// and 1 as Q1, Q3 2 right and 1 as Q1, Q4 4 right.
pub fn hand_example() -> Vec<(Quadrant, Quadrant)> {
    use Quadrant::*;
    let rows: [(Quadrant, Quadrant, usize); 7] =
        [(Q1, Q1, 3), (Q1, Q3, 1), (Q2, Q2, 2), (Q2, Q1, 1), (Q3, Q3, 2), (Q3, Q1, 1), (Q4, Q4, 4)];
    rows.iter().flat_map(|&(g, p, n)| std::iter::repeat_n((g, p), n)).collect()
}

pub fn predictions(pairs: &[(Quadrant, Quadrant)]) -> Vec<clinfact::metrics::Prediction> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(gold, predicted))| clinfact::metrics::Prediction {
            sample_id: format!("p{i}"),
            gold,
            predicted,
        })
        .collect()
}

/// Random examples over `admissions` admissions, one per quadrant each,
/// with Gaussian-ish features of width `dim`.
pub fn random_examples(seed: u64, admissions: usize, dim: usize) -> Vec<clinfact::trainer::Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..admissions)
        .flat_map(|a| Quadrant::ALL.map(|q| (a, q)))
        .map(|(a, q)| clinfact::trainer::Example {
            sample_id: format!("s{a}-{q}"),
            admission_id: format!("A{a:03}"),
            label: q,
            features: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect()
}

pub fn random_flat(seed: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `log p(Q1 | x)` by direct summation, with `flat` laid out as four
/// weight rows followed by four biases.
pub fn direct_q1_logp(flat: &[f64], dim: usize, x: &[f64]) -> f64 {
    let z: Vec<f64> = (0..4)
        .map(|k| flat[4 * dim + k] + (0..dim).map(|j| flat[k * dim + j] * x[j]).sum::<f64>())
        .collect();
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    z[0] - m - z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Risk-aware preference loss written out from its definition.
pub fn direct_pref_loss(
    flat: &[f64],
    reference: &[f64],
    dim: usize,
    examples: &[clinfact::trainer::Example],
    pairs: &[(usize, usize)],
    beta: f64,
    lambda: f64,
) -> f64 {
    let mut total = 0.0;
    for &(w, l) in pairs {
        let lw = direct_q1_logp(flat, dim, &examples[w].features);
        let ll = direct_q1_logp(flat, dim, &examples[l].features);
        let rw = direct_q1_logp(reference, dim, &examples[w].features);
        let rl = direct_q1_logp(reference, dim, &examples[l].features);
        let s = beta * ((lw - rw) - (ll - rl));
        total += (1.0 + (-s).exp()).ln();
        if s < 0.0 {
            total += lambda * s * s;
        }
    }
    total / pairs.len() as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
}

/// Plain DPO by full-batch gradient descent, written independently of the
/// library trainer. Returns the flat parameters after `epochs` steps.
pub fn independent_dpo(
    init: &[f64],
    dim: usize,
    examples: &[clinfact::trainer::Example],
    pairs: &[(usize, usize)],
    beta: f64,
    lr: f64,
    epochs: usize,
) -> Vec<f64> {
    let reference = init.to_vec();
    let mut theta = init.to_vec();
    let probs = |flat: &[f64], x: &[f64]| -> [f64; 4] {
        let mut z = [0.0; 4];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = flat[4 * dim + k] + (0..dim).map(|j| flat[k * dim + j] * x[j]).sum::<f64>();
        }
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let e = z.map(|v| (v - m).exp());
        let s: f64 = e.iter().sum();
        e.map(|v| v / s)
    };
    for _ in 0..epochs {
        let mut grad = vec![0.0; theta.len()];
        for &(w, l) in pairs {
            let (xw, xl) = (&examples[w].features, &examples[l].features);
            let s = beta
                * ((direct_q1_logp(&theta, dim, xw) - direct_q1_logp(&reference, dim, xw))
                    - (direct_q1_logp(&theta, dim, xl) - direct_q1_logp(&reference, dim, xl)));
            // d/dS of ln(1 + e^-S) is -1 / (1 + e^S).
            let coef = -1.0 / (1.0 + s.exp()) * beta / pairs.len() as f64;
            for (x, sign) in [(xw, 1.0), (xl, -1.0)] {
                let p = probs(&theta, x);
                for k in 0..4 {
                    let d = (if k == 0 { 1.0 } else { 0.0 }) - p[k];
                    for j in 0..dim {
                        grad[k * dim + j] += coef * sign * d * x[j];
                    }
                    grad[4 * dim + k] += coef * sign * d;
                }
            }
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= lr * g;
        }
    }
    theta
}

/// Pipeline config small enough for a few seconds per run.
pub fn small_pipeline_config(output: &std::path::Path) -> clinfact::pipeline::PipelineConfig {
    let mut cfg = clinfact::pipeline::PipelineConfig::default();
    cfg.paths.output = output.to_path_buf();
    cfg.ontology.clusters = 4;
    cfg.corpus.admissions = 80;
    cfg.seeds = vec![42];
    cfg.lambdas = vec![0.0, 0.5, 2.0];
    cfg.train.epochs = 40;
    cfg.train.sft_epochs = 60;
    cfg.features.hash_buckets = 64;
    cfg
}
