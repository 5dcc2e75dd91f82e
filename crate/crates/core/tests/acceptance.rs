//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines reach the terminal under `cargo test`; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clinfact::corpus::{dedup_patients, generate_synthetic_corpus, SectionWhitelist};
use clinfact::fixtures::{self, cui, HYPERTENSION, LISINOPRIL};
use clinfact::forge::{assemble_and_split, generate_dataset, ForgeOptions, SplitRatios, TemplateSet};
use clinfact::metrics::evaluate;
use clinfact::ontology::{UnmappedPolicy, IS_A};
use clinfact::pipeline::experiment::{lambda_ablation, safety_comparison, ExperimentConfig, SAFETY_REGIME};
use clinfact::pipeline::{digest_tree, run_all, PipelineConfig};
use clinfact::synth::synthetic_ontology;
use clinfact::trainer::{
    build_preference_pairs, class_log_probabilities, corfu_loss, corfu_objective, PolicyParams, Regime,
};
use clinfact::Quadrant;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn multi_hop_fixture() -> Outcome {
    let g = fixtures::lisinopril_chain().map_err(|e| e.to_string())?;
    let paths = g
        .relations_within_hops(&cui(LISINOPRIL), &cui(HYPERTENSION), 3)
        .map_err(|e| e.to_string())?;
    let ok = paths.len() == 1
        && paths[0].inferred_relation == "treats"
        && paths[0].hops() == 2
        && paths[0].edge_labels == [IS_A.to_string(), "treats".to_string()];
    ensure(ok, || format!("got {paths:?}"))?;
    Ok("treats via [is_a, treats]".into())
}

fn closure_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs = 0;
    for i in 0..200 {
        let n = rng.gen_range(2..=50);
        let m = rng.gen_range(0..=150);
        let g = random_graph(rng.gen(), n, m);
        let (lib, oracle) = (library_closure(&g, 3), oracle_closure(&g, 3));
        ensure(lib == oracle, || format!("graph {i} ({n} nodes, {m} edges) differs"))?;
        pairs += oracle.len();
    }
    Ok(format!("200 graphs, {pairs} related pairs, exact equality"))
}

fn standard_dataset(seed: u64) -> Result<(clinfact::ontology::SemanticGraph, Vec<clinfact::corpus::Admission>, Vec<clinfact::forge::Sample>), String> {
    let cfg = ExperimentConfig::default();
    let templates = TemplateSet::standard();
    let graph = synthetic_ontology(&cfg.ontology, seed).map_err(|e| e.to_string())?;
    let corpus = generate_synthetic_corpus(&graph, &templates, &cfg.corpus, seed).map_err(|e| e.to_string())?;
    let admissions = dedup_patients(corpus.admissions);
    let (samples, _) = generate_dataset(
        &graph,
        &templates,
        &admissions,
        &SectionWhitelist::default(),
        &ForgeOptions::default(),
        UnmappedPolicy::Skip,
        seed,
    )
    .map_err(|e| e.to_string())?;
    Ok((graph, admissions, samples))
}

fn quadrant_invariants() -> Outcome {
    let mut checked = 0usize;
    let mut per_q = [0usize; 4];
    let mut seed = 42;
    while checked < 10_000 {
        let (graph, admissions, samples) = standard_dataset(seed)?;
        let closure = oracle_closure(&graph, 3);
        let dist = floyd_warshall(&graph);
        let events: BTreeMap<&str, _> = admissions
            .iter()
            .map(|a| (a.admission_id.as_str(), oracle_events(&graph, &a.events)))
            .collect();
        let mut ctx_cache: BTreeMap<&str, _> = BTreeMap::new();
        for s in &samples {
            let ctx = ctx_cache
                .entry(s.admission_id.as_str())
                .or_insert_with(|| oracle_attested(&graph, &s.context.text));
            if let Some(v) = oracle_violation(s, &closure, &dist, &graph, ctx, &events[s.admission_id.as_str()], 4) {
                return Err(format!("seed {seed} sample {}: {v}", s.sample_id));
            }
            per_q[s.label.index()] += 1;
        }
        checked += samples.len();
        seed += 1;
    }
    Ok(format!("{checked} samples over {} fixture seed(s), per quadrant {per_q:?}, 0 violations", seed - 42))
}

fn split_properties() -> Outcome {
    let (_, admissions, samples) = standard_dataset(42)?;
    let patient: BTreeMap<&str, &str> = admissions
        .iter()
        .map(|a| (a.admission_id.as_str(), a.patient_id.as_str()))
        .collect();
    let rows: Vec<SplitRow> = samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.admission_id.clone(), s.label, patient[s.admission_id.as_str()].to_string()))
        .collect();
    let ratios = SplitRatios::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let seed: u64 = rng.gen();
        let split = assemble_and_split(&samples, ratios, seed).map_err(|e| e.to_string())?;
        check_split(&rows, &split, ratios).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("20 seeds over {} samples / {} admissions", samples.len(), admissions.len()))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let q = |r: &mut ChaCha8Rng| Quadrant::from_index(r.gen_range(0..4)).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.gen_range(1..300);
        let pairs: Vec<(Quadrant, Quadrant)> = (0..n).map(|_| (q(&mut rng), q(&mut rng))).collect();
        let r = evaluate(&predictions(&pairs)).map_err(|e| e.to_string())?;
        let gap = report_gap(&r, &recount_metrics(&pairs)).ok_or(format!("set {i}: definedness differs"))?;
        ensure(gap <= 1e-12, || format!("set {i}: gap {gap:e}"))?;
        worst = worst.max(gap);
    }
    let r = evaluate(&predictions(&hand_example())).map_err(|e| e.to_string())?;
    let ok = r.hsr == Some(1.0 / 3.0) && r.tir == Some(1.0 / 3.0) && r.accuracy == 11.0 / 14.0;
    ensure(ok, || format!("hand example gave hsr {:?} tir {:?} acc {}", r.hsr, r.tir, r.accuracy))?;
    Ok(format!("1000 sets, max gap {worst:.1e}; hand example HSR=1/3 TIR=1/3 acc=11/14"))
}

fn loss_identities() -> Outcome {
    let zero = corfu_loss(&[0.0; 16], 0.5);
    ensure((zero - std::f64::consts::LN_2).abs() <= 1e-12, || format!("S=0 loss {zero}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let n = rng.gen_range(1..64);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let dpo = s.iter().map(|v| (1.0 + (-v).exp()).ln()).sum::<f64>() / n as f64;
        let got = corfu_loss(&s, 0.0);
        ensure((got - dpo).abs() <= 1e-12, || format!("batch {i}: {got} vs {dpo}"))?;
    }
    let one = corfu_loss(&[-1.0], 0.5);
    ensure((one - 1.813262).abs() <= 1e-6, || format!("S=-1 loss {one}"))?;
    Ok(format!("ln2 gap {:.1e}, 100 DPO batches, S=-1 -> {one:.6}", (zero - std::f64::consts::LN_2).abs()))
}

fn gradient_check() -> Outcome {
    let dim = 6;
    let mut worst: f64 = 0.0;
    for draw in 0..100u64 {
        let examples = random_examples(500 + draw, 5, dim);
        let stage = build_preference_pairs(&examples, Regime::Mixed).map_err(|e| e.to_string())?.remove(0);
        let pairs: Vec<(usize, usize)> = stage.pairs.iter().map(|p| (p.winner, p.loser)).collect();
        let theta = random_flat(draw, 4 * dim + 4, 1.5);
        let reference = random_flat(10_000 + draw, 4 * dim + 4, 1.5);
        let ref_params = PolicyParams::from_flat(dim, &reference).map_err(|e| e.to_string())?;
        let ref_logp: Vec<f64> = examples
            .iter()
            .map(|e| class_log_probabilities(&ref_params, &e.features).map(|lp| lp[0]))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let (beta, lambda) = (0.1 + draw as f64 * 0.02, [0.0, 0.25, 0.5, 1.0, 4.0][draw as usize % 5]);
        let obj = corfu_objective(
            &PolicyParams::from_flat(dim, &theta).map_err(|e| e.to_string())?,
            &ref_logp,
            &examples,
            &stage.pairs,
            beta,
            lambda,
        )
        .map_err(|e| e.to_string())?;
        let fd = finite_difference(
            |t| direct_pref_loss(t, &reference, dim, &examples, &pairs, beta, lambda),
            &theta,
            1e-6,
        );
        let err = relative_error(&obj.grad, &fd);
        ensure(err < 1e-6, || format!("draw {draw}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("100 draws, max relative error {worst:.1e}"))
}

fn safety_direction() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.train.regime = SAFETY_REGIME;
    let seeds = [42u64, 43, 44];
    let mut sums = [[0.0f64; 2]; 3];
    for &seed in &seeds {
        let c = safety_comparison(&cfg, seed).map_err(|e| e.to_string())?;
        for (k, r) in [&c.sft, &c.dpo, &c.corfu].into_iter().enumerate() {
            sums[k][0] += r.hsr.ok_or("no gold Q2 in test")?;
            sums[k][1] += r.tir.ok_or("no gold Q3 in test")?;
        }
    }
    let mean = sums.map(|v| v.map(|x| x / seeds.len() as f64));
    let [sft, dpo, corfu] = mean;
    let line = format!(
        "mean HSR sft {:.4} dpo {:.4} corfu {:.4}; mean TIR sft {:.4} dpo {:.4} corfu {:.4}",
        sft[0], dpo[0], corfu[0], sft[1], dpo[1], corfu[1]
    );
    let ok = corfu[0] < sft[0] && corfu[0] < dpo[0] && corfu[1] < sft[1] && corfu[1] < dpo[1];
    if ok { Ok(line) } else { Err(line) }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

fn ablation_shape() -> Outcome {
    let cfg = ExperimentConfig::default();
    let lambdas = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];
    let seeds = [42u64, 43, 44, 45, 46];
    let mut rows = Vec::new();
    for &seed in &seeds {
        rows.push(lambda_ablation(&cfg, seed, &lambdas).map_err(|e| e.to_string())?);
    }
    let med = |f: &dyn Fn(&clinfact::trainer::AblationRow) -> Option<f64>, i: usize| -> Result<f64, String> {
        rows.iter()
            .map(|r| f(&r[i]).ok_or_else(|| "undefined rate".to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map(median)
    };
    let mut hsr = Vec::new();
    let mut tir = Vec::new();
    let mut f1 = Vec::new();
    for i in 0..lambdas.len() {
        hsr.push(med(&|r| r.hsr, i)?);
        tir.push(med(&|r| r.tir, i)?);
        f1.push(med(&|r| Some(r.macro_f1), i)?);
    }
    let mid = |l: f64| (0.25..=1.0).contains(&l);
    let min_in_mid = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        lambdas.iter().zip(v).any(|(l, x)| mid(*l) && *x == lo)
    };
    let best_mid_f1 = lambdas
        .iter()
        .zip(&f1)
        .filter(|(l, _)| mid(**l))
        .map(|(_, f)| *f)
        .fold(f64::NEG_INFINITY, f64::max);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let line = format!(
        "lambda {lambdas:?}: median HSR [{}] TIR [{}] macro-F1 [{}]",
        fmt(&hsr),
        fmt(&tir),
        fmt(&f1)
    );
    let ok = min_in_mid(&hsr) && min_in_mid(&tir) && f1[5] <= best_mid_f1;
    if ok { Ok(line) } else { Err(line) }
}

fn end_to_end_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let cfg = |p: &std::path::Path| {
        let mut c = PipelineConfig::default();
        c.paths.output = p.to_path_buf();
        c
    };
    run_all(&cfg(a.path())).map_err(|e| e.to_string())?;
    run_all(&cfg(b.path())).map_err(|e| e.to_string())?;
    let (da, db) = (digest_tree(a.path()).map_err(|e| e.to_string())?, digest_tree(b.path()).map_err(|e| e.to_string())?);
    let differing: Vec<&String> = da.keys().filter(|k| db.get(*k) != da.get(*k)).collect();
    ensure(da.len() == db.len() && differing.is_empty(), || format!("differing artifacts {differing:?}"))?;
    Ok(format!("{} artifacts identical across two default-config runs", da.len()))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "multi-hop fixture", limit: Some(Duration::from_secs(1)), run: multi_hop_fixture },
        Criterion { id: 2, name: "closure oracle", limit: Some(Duration::from_secs(60)), run: closure_oracle },
        Criterion { id: 3, name: "quadrant invariants", limit: Some(Duration::from_secs(120)), run: quadrant_invariants },
        Criterion { id: 4, name: "split properties", limit: None, run: split_properties },
        Criterion { id: 5, name: "metric oracle", limit: None, run: metric_oracle },
        Criterion { id: 6, name: "loss identities", limit: None, run: loss_identities },
        Criterion { id: 7, name: "gradient check", limit: Some(Duration::from_secs(30)), run: gradient_check },
        Criterion { id: 8, name: "directional safety", limit: Some(Duration::from_secs(300)), run: safety_direction },
        Criterion { id: 9, name: "lambda ablation shape", limit: Some(Duration::from_secs(900)), run: ablation_shape },
        Criterion { id: 10, name: "end-to-end determinism", limit: None, run: end_to_end_determinism },
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if took > limit => Err(format!("took {took:.1?}, limit {limit:?}")),
            (o, _) => o,
        };
        match &outcome {
            Ok(detail) => println!("PASS {:>2} {:<24} {:>8.2?}  {detail}", c.id, c.name, took),
            Err(detail) => {
                println!("FAIL {:>2} {:<24} {:>8.2?}  {detail}", c.id, c.name, took);
                failed.push(c.id);
            }
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
