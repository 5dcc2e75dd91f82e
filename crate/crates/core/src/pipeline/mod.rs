//! End-to-end orchestration driven by one TOML config.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod manifest;

pub use commands::{
    ablate, build_graph, generate, report, run_all, synth_corpus, train_eval, AblationSummary, CorpusStats,
    GenerateSummary, GraphStats, TrainEvalSummary, VariantMean, VariantResult,
};
pub use config::{PathsConfig, PipelineConfig};
pub use manifest::{digest_tree, RunManifest, MANIFEST_FILE};
