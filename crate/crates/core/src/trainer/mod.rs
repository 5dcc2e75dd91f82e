//! Desk-scale verifier: a four-class log-linear policy trained with
//! weighted cross-entropy, then refined on preference pairs with DPO or
//! its risk-aware variant.

mod features;
mod policy;
mod preference;
mod sft;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport, Prediction};
use crate::par;

pub use features::{Example, FeatureMode, FeatureSpec, Featurizer};
pub use policy::{argmax_quadrant, class_log_probabilities, logits, predict_quadrant, PolicyParams};
pub use preference::{
    build_preference_pairs, compute_margin, corfu_loss, corfu_margin_grad, corfu_objective, margin_from_logps,
    neg_log_sigmoid, params_digest, train_corfu, CorfuRun, Objective, PreferencePair, ReferenceSnapshot, Stage,
};
pub use sft::{class_weights, sft_loss_and_grad, train_sft};

pub const MODEL_FILE: &str = "MODEL.json";
pub const TRAINLOG_FILE: &str = "TRAINLOG.jsonl";
pub const ABLATION_FILE: &str = "ABLATION.tsv";
pub const ABLATION_PLOT_FILE: &str = "ablation_plot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PairwiseQ2,
    PairwiseQ3,
    PairwiseQ4,
    Mixed,
    Curriculum,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::PairwiseQ2,
        Regime::PairwiseQ3,
        Regime::PairwiseQ4,
        Regime::Mixed,
        Regime::Curriculum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::PairwiseQ2 => "pairwise_q2",
            Regime::PairwiseQ3 => "pairwise_q3",
            Regime::PairwiseQ4 => "pairwise_q4",
            Regime::Mixed => "mixed",
            Regime::Curriculum => "curriculum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta: f64,
    pub lambda: f64,
    pub regime: Regime,
    pub learning_rate: f64,
    /// Gradient steps per preference stage.
    pub epochs: usize,
    pub sft_epochs: usize,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.1,
            lambda: 0.5,
            regime: Regime::PairwiseQ2,
            learning_rate: 0.1,
            epochs: 200,
            sft_epochs: 200,
            init_scale: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// One line of TRAINLOG.jsonl. Margin fields are null for supervised
/// training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub stage: String,
    pub epoch: usize,
    pub loss: f64,
    pub mean_margin: Option<f64>,
    pub frac_negative_margin: Option<f64>,
}

pub(crate) fn check_finite(epoch: usize, loss: f64, grad: &[f64]) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence {
            epoch,
            detail: format!("loss is {loss}"),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            epoch,
            detail: format!("gradient component {i} is {}", grad[i]),
        });
    }
    Ok(())
}

pub fn predict_examples(params: &PolicyParams, examples: &[Example]) -> Result<Vec<Prediction>> {
    par::map(examples, |e| {
        Ok(Prediction {
            sample_id: e.sample_id.clone(),
            gold: e.label,
            predicted: predict_quadrant(params, &e.features)?,
        })
    })
    .into_iter()
    .collect()
}

pub fn evaluate_params(params: &PolicyParams, examples: &[Example]) -> Result<MetricsReport> {
    evaluate(&predict_examples(params, examples)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub lambda: f64,
    pub macro_f1: f64,
    pub hsr: Option<f64>,
    pub tir: Option<f64>,
}

/// Trains one risk-aware model per `lambda` from `base` and scores it on
/// `eval`. Rows follow the order of `lambdas`.
pub fn lambda_sweep(
    base: &PolicyParams,
    train: &[Example],
    eval: &[Example],
    lambdas: &[f64],
    config: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("lambda list is empty".into()));
    }
    let stages = build_preference_pairs(train, config.regime)?;
    par::map(lambdas, |&lambda| {
        let cfg = TrainConfig {
            lambda,
            ..config.clone()
        };
        let run = train_corfu(base, train, &stages, &cfg)?;
        let r = evaluate_params(&run.params, eval)?;
        Ok(AblationRow {
            lambda,
            macro_f1: r.macro_f1,
            hsr: r.hsr,
            tir: r.tir,
        })
    })
    .into_iter()
    .collect()
}

/// Contents of MODEL.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: String,
    pub feature_mode: FeatureMode,
    pub feature_spec: FeatureSpec,
    pub feature_dim: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; 4],
    pub training_config: TrainConfig,
    pub seed: u64,
    #[serde(default)]
    pub reference_snapshots: Vec<ReferenceSnapshot>,
}

impl ModelFile {
    pub fn params(&self) -> Result<PolicyParams> {
        if self.weights.len() != 4 * self.feature_dim {
            return Err(Error::Dimension {
                expected: 4 * self.feature_dim,
                got: self.weights.len(),
            });
        }
        Ok(PolicyParams {
            dim: self.feature_dim,
            weights: self.weights.clone(),
            bias: self.bias,
        })
    }
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_text(path, serde_json::to_string_pretty(model)? + "\n")
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_trainlog(path: &Path, log: &[TrainLogEntry]) -> Result<()> {
    let mut out = String::new();
    for e in log {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    write_text(path, out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

pub fn write_ablation(tsv: &Path, plot: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut out = String::from("lambda\tmacro_f1\thsr\ttir\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.lambda, r.macro_f1, fmt_opt(r.hsr), fmt_opt(r.tir)));
    }
    write_text(tsv, out)?;
    let series = serde_json::json!({
        "x": "lambda",
        "lambda": rows.iter().map(|r| r.lambda).collect::<Vec<_>>(),
        "macro_f1": rows.iter().map(|r| r.macro_f1).collect::<Vec<_>>(),
        "hsr": rows.iter().map(|r| r.hsr).collect::<Vec<_>>(),
        "tir": rows.iter().map(|r| r.tir).collect::<Vec<_>>(),
    });
    write_text(plot, serde_json::to_string_pretty(&series)? + "\n")
}

pub fn read_ablation(path: &Path) -> Result<Vec<AblationRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        file: path.display().to_string(),
        line,
        message,
    };
    let num = |s: &str, line: usize| s.parse::<f64>().map_err(|e| parse_err(line, format!("{s:?}: {e}")));
    let mut rows = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 4 {
            return Err(parse_err(i + 1, format!("expected 4 columns, found {}", f.len())));
        }
        let opt = |s: &str| if s == "NA" { Ok(None) } else { num(s, i + 1).map(Some) };
        rows.push(AblationRow {
            lambda: num(f[0], i + 1)?,
            macro_f1: num(f[1], i + 1)?,
            hsr: opt(f[2])?,
            tir: opt(f[3])?,
        });
    }
    Ok(rows)
}
