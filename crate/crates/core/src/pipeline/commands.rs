//! One function per CLI subcommand. Each reads its inputs from the output
//! root, writes its artifacts there and refreshes the run manifest.
//!
//! Layout under the output root:
//!
//! ```text
//! graph/     CONCEPTS.tsv RELATIONS.tsv MAPPINGS.tsv TEMPLATES.tsv stats.json
//! corpus/    ADMISSIONS.jsonl PLANTED.jsonl
//! dataset/   DATASET.jsonl SPLIT.json generation_report.json
//! train/     seed-<s>/<variant>/{MODEL.json,TRAINLOG.jsonl,REPORT.json,PREDICTIONS.jsonl}
//!            summary.json
//! ablation/  seed-<s>/{ABLATION.tsv,ablation_plot.json} ABLATION.tsv ablation_plot.json
//! MANIFEST.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::update_manifest;
use crate::corpus::{dedup_patients, parse_admissions, write_admissions, ADMISSIONS_FILE};
use crate::error::{Error, Result};
use crate::forge::{
    assemble_and_split, generate_dataset, read_dataset, write_dataset, DatasetRecord, DatasetSplit,
    GenerationReport, TemplateSet, DATASET_FILE, SPLIT_FILE, TEMPLATES_FILE,
};
use crate::metrics::{
    read_report, render_report, write_predictions, write_report, MetricsReport, PREDICTIONS_FILE, REPORT_FILE,
};
use crate::ontology::{load_ontology_dir, write_ontology, SemanticGraph};
use crate::quadrant::Quadrant;
use crate::synth::{generate_synthetic_corpus, synthetic_ontology, PLANTED_FILE};
use crate::trainer::{
    build_preference_pairs, lambda_sweep, predict_examples, read_ablation, read_model, train_corfu, train_sft,
    write_ablation, write_model, write_trainlog, AblationRow, Example, Featurizer, ModelFile, PolicyParams,
    ReferenceSnapshot, TrainConfig, TrainLogEntry, ABLATION_FILE, ABLATION_PLOT_FILE, MODEL_FILE, TRAINLOG_FILE,
};

pub const GRAPH_DIR: &str = "graph";
pub const CORPUS_DIR: &str = "corpus";
pub const DATASET_DIR: &str = "dataset";
pub const TRAIN_DIR: &str = "train";
pub const ABLATION_DIR: &str = "ablation";
pub const STATS_FILE: &str = "stats.json";
pub const GENERATION_REPORT_FILE: &str = "generation_report.json";
pub const SUMMARY_FILE: &str = "summary.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::NotFound(format!("{} (run `{produced_by}` first)", path.display())))
    }
}

/// Runs `body`, then records its timing in the manifest.
fn timed<T>(cfg: &PipelineConfig, command: &str, body: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    cfg.validate()?;
    cfg.check_inputs()?;
    let root = cfg.paths.output.as_path();
    ensure_dir(root)?;
    let start = Instant::now();
    let out = body(root)?;
    update_manifest(root, &cfg.digest()?, command, start.elapsed().as_secs_f64())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub source: String,
    pub concepts: usize,
    pub edges: usize,
    pub mappings: usize,
    pub relation_histogram: BTreeMap<String, usize>,
    pub templates: usize,
}

fn load_templates(cfg: &PipelineConfig) -> Result<TemplateSet> {
    match &cfg.paths.templates {
        Some(p) => TemplateSet::load(p),
        None => Ok(TemplateSet::standard()),
    }
}

/// Loads or synthesizes the ontology and writes the canonical tables,
/// the template table and `stats.json`.
pub fn build_graph(cfg: &PipelineConfig) -> Result<GraphStats> {
    timed(cfg, "build-graph", |root| {
        let (graph, source) = match &cfg.paths.ontology {
            Some(dir) => (load_ontology_dir(dir)?, "tables"),
            None => (synthetic_ontology(&cfg.ontology, cfg.seed)?, "synthetic"),
        };
        let templates = load_templates(cfg)?;
        let dir = root.join(GRAPH_DIR);
        write_ontology(&graph, &dir)?;
        templates.write(&dir.join(TEMPLATES_FILE))?;
        let stats = GraphStats {
            source: source.into(),
            concepts: graph.concept_count(),
            edges: graph.edge_count(),
            mappings: graph.mappings().count(),
            relation_histogram: graph.relation_histogram(),
            templates: templates.len(),
        };
        write_json(&dir.join(STATS_FILE), &stats)?;
        Ok(stats)
    })
}

fn load_graph_artifact(root: &Path) -> Result<(SemanticGraph, TemplateSet)> {
    let dir = root.join(GRAPH_DIR);
    require(&dir.join(STATS_FILE), "build-graph")?;
    Ok((load_ontology_dir(&dir)?, TemplateSet::load(&dir.join(TEMPLATES_FILE))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub admissions: usize,
    pub patients: usize,
    pub planted_facts: usize,
}

/// Writes a synthetic admission corpus grounded in the graph artifact.
pub fn synth_corpus(cfg: &PipelineConfig) -> Result<CorpusStats> {
    timed(cfg, "synth-corpus", |root| {
        let (graph, templates) = load_graph_artifact(root)?;
        let corpus = generate_synthetic_corpus(&graph, &templates, &cfg.corpus, cfg.seed)?;
        let dir = root.join(CORPUS_DIR);
        ensure_dir(&dir)?;
        write_admissions(&dir.join(ADMISSIONS_FILE), &corpus.admissions)?;
        let mut planted = String::new();
        for p in &corpus.planted {
            planted.push_str(&serde_json::to_string(p)?);
            planted.push('\n');
        }
        let path = dir.join(PLANTED_FILE);
        fs::write(&path, planted).map_err(|e| Error::io(&path, e))?;
        Ok(CorpusStats {
            admissions: corpus.admissions.len(),
            patients: corpus
                .admissions
                .iter()
                .map(|a| a.patient_id.as_str())
                .collect::<BTreeSet<_>>()
                .len(),
            planted_facts: corpus.planted.len(),
        })
    })
}

fn corpus_path(cfg: &PipelineConfig, root: &Path) -> PathBuf {
    cfg.paths
        .corpus
        .clone()
        .unwrap_or_else(|| root.join(CORPUS_DIR).join(ADMISSIONS_FILE))
}

/// Per-quadrant sample counts of each split.
pub type SplitCounts = BTreeMap<String, BTreeMap<Quadrant, usize>>;

/// Contents of `generation_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub generation: GenerationReport,
    /// Admissions dropped because their patient appeared earlier.
    pub repeat_admissions_dropped: usize,
    pub split_admissions: BTreeMap<String, usize>,
    pub split_counts: SplitCounts,
    pub balance_dropped: usize,
}

fn split_counts<'a>(split: &DatasetSplit, label_of: impl Fn(&str) -> Option<Quadrant> + 'a) -> SplitCounts {
    let mut out = SplitCounts::new();
    for (name, ids) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let mut c: BTreeMap<Quadrant, usize> = Quadrant::ALL.iter().map(|&q| (q, 0)).collect();
        for id in ids {
            if let Some(q) = label_of(id) {
                *c.entry(q).or_default() += 1;
            }
        }
        out.insert(name.to_string(), c);
    }
    out
}

/// Generates the four-quadrant dataset and its admission-level split.
pub fn generate(cfg: &PipelineConfig) -> Result<GenerateSummary> {
    timed(cfg, "generate", |root| {
        let (graph, templates) = load_graph_artifact(root)?;
        let corpus = corpus_path(cfg, root);
        require(&corpus, "synth-corpus")?;
        let all = parse_admissions(&corpus)?;
        let total = all.len();
        let admissions = dedup_patients(all);
        let repeat_admissions_dropped = total - admissions.len();
        let (samples, report) = generate_dataset(
            &graph,
            &templates,
            &admissions,
            &cfg.whitelist,
            &cfg.forge,
            cfg.unmapped,
            cfg.seed,
        )?;
        let split = assemble_and_split(&samples, cfg.ratios, cfg.seed)?;
        let dir = root.join(DATASET_DIR);
        ensure_dir(&dir)?;
        write_dataset(&dir.join(DATASET_FILE), &samples)?;
        write_json(&dir.join(SPLIT_FILE), &split)?;
        let labels: BTreeMap<&str, Quadrant> = samples.iter().map(|s| (s.sample_id.as_str(), s.label)).collect();
        let summary = GenerateSummary {
            generation: report,
            repeat_admissions_dropped,
            split_admissions: BTreeMap::from([
                ("train".to_string(), split.admissions.train.len()),
                ("validation".to_string(), split.admissions.validation.len()),
                ("test".to_string(), split.admissions.test.len()),
            ]),
            split_counts: split_counts(&split, |id| labels.get(id).copied()),
            balance_dropped: split.dropped.len(),
        };
        write_json(&dir.join(GENERATION_REPORT_FILE), &summary)?;
        Ok(summary)
    })
}

/// Featurized splits for one seed, read from the dataset artifact.
struct SeedData {
    train: Vec<Example>,
    validation: Vec<Example>,
    test: Vec<Example>,
    dim: usize,
}

struct DatasetArtifact {
    featurizer: Featurizer,
    records: Vec<DatasetRecord>,
    examples: Vec<Example>,
    stored_split: DatasetSplit,
}

fn load_dataset_artifact(cfg: &PipelineConfig, root: &Path) -> Result<DatasetArtifact> {
    let (graph, templates) = load_graph_artifact(root)?;
    let dir = root.join(DATASET_DIR);
    require(&dir.join(DATASET_FILE), "generate")?;
    require(&dir.join(SPLIT_FILE), "generate")?;
    let records = read_dataset(&dir.join(DATASET_FILE))?;
    let stored_split: DatasetSplit = read_json(&dir.join(SPLIT_FILE))?;
    let known: BTreeSet<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
    if let Some(id) = stored_split
        .train
        .iter()
        .chain(&stored_split.validation)
        .chain(&stored_split.test)
        .find(|id| !known.contains(id.as_str()))
    {
        return Err(Error::Integrity(format!("{SPLIT_FILE} names unknown sample {id}")));
    }
    let featurizer = Featurizer::new(cfg.features.clone(), &templates);
    let examples = featurizer.featurize_records(&records, &graph)?;
    Ok(DatasetArtifact {
        featurizer,
        records,
        examples,
        stored_split,
    })
}

impl DatasetArtifact {
    /// The stored split when it was made with `seed`, otherwise a fresh
    /// split of the same records.
    fn seed_data(&self, cfg: &PipelineConfig, seed: u64) -> Result<SeedData> {
        let split = if seed == self.stored_split.seed && cfg.ratios == self.stored_split.ratios {
            self.stored_split.clone()
        } else {
            assemble_and_split(&self.records, cfg.ratios, seed)?
        };
        let pick = |ids: &[String]| -> Vec<Example> {
            let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            self.examples
                .iter()
                .filter(|e| set.contains(e.sample_id.as_str()))
                .cloned()
                .collect()
        };
        Ok(SeedData {
            train: pick(&split.train),
            validation: pick(&split.validation),
            test: pick(&split.test),
            dim: self.featurizer.dim(),
        })
    }
}

fn seed_dir(root: &Path, base: &str, seed: u64) -> PathBuf {
    root.join(base).join(format!("seed-{seed}"))
}

/// Metrics of one trained variant on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    pub seed: u64,
    pub final_loss: f64,
    pub report: MetricsReport,
}

/// Mean over seeds of the headline metrics of one variant. Safety rates
/// average only the seeds where they are defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMean {
    pub variant: String,
    pub seeds: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub hsr: Option<f64>,
    pub tir: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEvalSummary {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<VariantResult>,
    pub mean: Vec<VariantMean>,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn save_variant(
    dir: &Path,
    cfg: &PipelineConfig,
    variant: &str,
    train_cfg: &TrainConfig,
    params: &PolicyParams,
    log: &[TrainLogEntry],
    snapshots: Vec<ReferenceSnapshot>,
    test: &[Example],
) -> Result<VariantResult> {
    ensure_dir(dir)?;
    let predictions = predict_examples(params, test)?;
    let report = crate::metrics::evaluate(&predictions)?;
    write_model(
        &dir.join(MODEL_FILE),
        &ModelFile {
            variant: variant.to_string(),
            feature_mode: cfg.features.mode,
            feature_spec: cfg.features.clone(),
            feature_dim: params.dim,
            weights: params.weights.clone(),
            bias: params.bias,
            training_config: train_cfg.clone(),
            seed: train_cfg.seed,
            reference_snapshots: snapshots,
        },
    )?;
    write_trainlog(&dir.join(TRAINLOG_FILE), log)?;
    write_predictions(&dir.join(PREDICTIONS_FILE), &predictions)?;
    write_report(&dir.join(REPORT_FILE), &report)?;
    Ok(VariantResult {
        variant: variant.to_string(),
        seed: train_cfg.seed,
        final_loss: log.last().map_or(f64::NAN, |e| e.loss),
        report,
    })
}

/// Trains the supervised baseline, then plain DPO (`lambda = 0`) and the
/// risk-aware variant for every configured regime, all from the baseline,
/// for every seed. Reports are on the test split.
pub fn train_eval(cfg: &PipelineConfig) -> Result<TrainEvalSummary> {
    timed(cfg, "train-eval", |root| {
        let data = load_dataset_artifact(cfg, root)?;
        let mut per_seed = Vec::new();
        for &seed in &cfg.seeds {
            let split = data.seed_data(cfg, seed)?;
            let dir = seed_dir(root, TRAIN_DIR, seed);
            let base_cfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (sft, sft_log) = train_sft(&split.train, &base_cfg)?;
            per_seed.push(save_variant(&dir.join("sft"), cfg, "sft", &base_cfg, &sft, &sft_log, Vec::new(), &split.test)?);
            for &regime in &cfg.regimes {
                let stages = build_preference_pairs(&split.train, regime)?;
                for (prefix, lambda) in [("dpo", 0.0), ("corfu", base_cfg.lambda)] {
                    let variant = format!("{prefix}_{}", regime.as_str());
                    let vcfg = TrainConfig {
                        regime,
                        lambda,
                        ..base_cfg.clone()
                    };
                    let run = train_corfu(&sft, &split.train, &stages, &vcfg)?;
                    per_seed.push(save_variant(
                        &dir.join(&variant),
                        cfg,
                        &variant,
                        &vcfg,
                        &run.params,
                        &run.log,
                        run.snapshots,
                        &split.test,
                    )?);
                }
            }
        }
        let mut names: Vec<&str> = Vec::new();
        for r in &per_seed {
            if !names.contains(&r.variant.as_str()) {
                names.push(&r.variant);
            }
        }
        let mean = names
            .iter()
            .map(|name| {
                let rows: Vec<&VariantResult> = per_seed.iter().filter(|r| r.variant == *name).collect();
                let n = rows.len() as f64;
                VariantMean {
                    variant: name.to_string(),
                    seeds: rows.len(),
                    accuracy: rows.iter().map(|r| r.report.accuracy).sum::<f64>() / n,
                    macro_f1: rows.iter().map(|r| r.report.macro_f1).sum::<f64>() / n,
                    hsr: mean_opt(rows.iter().map(|r| r.report.hsr)),
                    tir: mean_opt(rows.iter().map(|r| r.report.tir)),
                }
            })
            .collect();
        let summary = TrainEvalSummary {
            seeds: cfg.seeds.clone(),
            per_seed,
            mean,
        };
        write_json(&root.join(TRAIN_DIR).join(SUMMARY_FILE), &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub per_seed: BTreeMap<u64, Vec<AblationRow>>,
    pub mean: Vec<AblationRow>,
}

/// λ sweep of the first configured regime from each seed's trained
/// baseline, scored on the validation split. The top-level table is the mean
/// over seeds.
pub fn ablate(cfg: &PipelineConfig) -> Result<AblationSummary> {
    timed(cfg, "ablate", |root| {
        let data = load_dataset_artifact(cfg, root)?;
        let regime = cfg.regimes[0];
        let mut per_seed = BTreeMap::new();
        for &seed in &cfg.seeds {
            let model_path = seed_dir(root, TRAIN_DIR, seed).join("sft").join(MODEL_FILE);
            require(&model_path, "train-eval")?;
            let model = read_model(&model_path)?;
            if model.feature_spec != cfg.features {
                return Err(Error::Config(format!(
                    "{} was trained with different feature settings",
                    model_path.display()
                )));
            }
            let sft = model.params()?;
            let split = data.seed_data(cfg, seed)?;
            if sft.dim != split.dim {
                return Err(Error::Dimension {
                    expected: split.dim,
                    got: sft.dim,
                });
            }
            let train_cfg = TrainConfig {
                seed,
                regime,
                ..cfg.train.clone()
            };
            let rows = lambda_sweep(&sft, &split.train, &split.validation, &cfg.lambdas, &train_cfg)?;
            let dir = seed_dir(root, ABLATION_DIR, seed);
            ensure_dir(&dir)?;
            write_ablation(&dir.join(ABLATION_FILE), &dir.join(ABLATION_PLOT_FILE), &rows)?;
            per_seed.insert(seed, rows);
        }
        let n = per_seed.len() as f64;
        let mean = cfg
            .lambdas
            .iter()
            .enumerate()
            .map(|(i, &lambda)| AblationRow {
                lambda,
                macro_f1: per_seed.values().map(|rows| rows[i].macro_f1).sum::<f64>() / n,
                hsr: mean_opt(per_seed.values().map(|rows| rows[i].hsr)),
                tir: mean_opt(per_seed.values().map(|rows| rows[i].tir)),
            })
            .collect::<Vec<_>>();
        let dir = root.join(ABLATION_DIR);
        write_ablation(&dir.join(ABLATION_FILE), &dir.join(ABLATION_PLOT_FILE), &mean)?;
        Ok(AblationSummary { per_seed, mean })
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{:.2}%", 100.0 * x))
}

/// Plain-text digest of whatever artifacts exist under the output root.
pub fn report(cfg: &PipelineConfig) -> Result<String> {
    let root = cfg.paths.output.as_path();
    let mut out = String::new();
    let stats_path = root.join(GRAPH_DIR).join(STATS_FILE);
    if stats_path.exists() {
        let s: GraphStats = read_json(&stats_path)?;
        let _ = writeln!(out, "graph: {} concepts, {} edges ({})", s.concepts, s.edges, s.source);
    }
    let gen_path = root.join(DATASET_DIR).join(GENERATION_REPORT_FILE);
    if gen_path.exists() {
        let g: GenerateSummary = read_json(&gen_path)?;
        let _ = writeln!(
            out,
            "dataset: {} samples from {} usable admissions",
            g.generation.samples, g.generation.usable_admissions
        );
        for (name, counts) in &g.split_counts {
            let c: Vec<String> = counts.iter().map(|(q, n)| format!("{q}={n}")).collect();
            let _ = writeln!(out, "  {name}: {}", c.join(" "));
        }
    }
    let summary_path = root.join(TRAIN_DIR).join(SUMMARY_FILE);
    if summary_path.exists() {
        let s: TrainEvalSummary = read_json(&summary_path)?;
        for r in &s.per_seed {
            let path = seed_dir(root, TRAIN_DIR, r.seed).join(&r.variant).join(REPORT_FILE);
            let rep = read_report(&path)?;
            out.push_str(&render_report(&format!("{} (seed {})", r.variant, r.seed), &rep));
            out.push('\n');
        }
        let _ = writeln!(out, "mean over seeds {:?}:", s.seeds);
        let _ = writeln!(out, "  {:<24} {:>9} {:>9} {:>9} {:>9}", "variant", "accuracy", "macro_f1", "HSR", "TIR");
        for m in &s.mean {
            let _ = writeln!(
                out,
                "  {:<24} {:>9} {:>9} {:>9} {:>9}",
                m.variant,
                pct(Some(m.accuracy)),
                pct(Some(m.macro_f1)),
                pct(m.hsr),
                pct(m.tir)
            );
        }
    }
    let ablation_path = root.join(ABLATION_DIR).join(ABLATION_FILE);
    if ablation_path.exists() {
        let _ = writeln!(out, "lambda ablation:");
        for r in read_ablation(&ablation_path)? {
            let _ = writeln!(
                out,
                "  lambda={:<5} macro_f1={} HSR={} TIR={}",
                r.lambda,
                pct(Some(r.macro_f1)),
                pct(r.hsr),
                pct(r.tir)
            );
        }
    }
    if out.is_empty() {
        return Err(Error::NotFound(format!("no artifacts under {}", root.display())));
    }
    Ok(out)
}

/// build-graph, synth-corpus (unless a corpus file is configured),
/// generate, train-eval and ablate in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<()> {
    build_graph(cfg)?;
    if cfg.paths.corpus.is_none() {
        synth_corpus(cfg)?;
    }
    generate(cfg)?;
    train_eval(cfg)?;
    ablate(cfg)?;
    Ok(())
}
