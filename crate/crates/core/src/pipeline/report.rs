use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate_accuracy, evaluate_transfer, majority_class_baseline, Evaluation};
use super::runs::{run_repeated, RunResult};
use super::{finetune, train_from_scratch, TrainConfig, TrainingData};
use crate::corpus::{Dataset, SentenceEmbeddingTable, WordVectorTable};
use crate::error::{Error, Result};
use crate::models::{Architecture, Classifier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Always predict the most frequent target training label.
    Majority,
    /// Fresh model trained on the target corpus only.
    Scratch,
    /// Source model applied unchanged, labels mapped by tag.
    NoFinetune,
    /// Source model with a new head, trained on the target corpus.
    Finetune,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Majority,
        Condition::Scratch,
        Condition::NoFinetune,
        Condition::Finetune,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Condition::Majority => "majority",
            Condition::Scratch => "scratch",
            Condition::NoFinetune => "no_finetune",
            Condition::Finetune => "finetune",
        }
    }

    fn needs_source(self) -> bool {
        matches!(self, Condition::NoFinetune | Condition::Finetune)
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown condition `{s}` (majority, scratch, no_finetune, finetune)"
                ))
            })
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub conditions: Vec<Condition>,
    pub runs: usize,
    pub seed: u64,
    /// Architecture of the scratch model.
    pub architecture: Architecture,
    pub scratch: TrainConfig,
    pub finetune: TrainConfig,
}

#[derive(Clone, Copy)]
pub struct SuiteData<'a> {
    /// Initial-phase model, required by the transfer conditions.
    pub source_model: Option<&'a Classifier>,
    pub target_train: &'a Dataset,
    pub target_test: &'a Dataset,
    pub embeddings: &'a SentenceEmbeddingTable,
    pub word_vectors: Option<&'a WordVectorTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub runs: usize,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub result: RunResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: SuiteConfig,
    pub conditions: Vec<ConditionResult>,
}

/// Runs every requested condition `runs` times (seeds `seed..seed+runs`) and
/// collects one report.
pub fn run_condition_suite(cfg: &SuiteConfig, data: SuiteData<'_>) -> Result<ExperimentReport> {
    if cfg.conditions.is_empty() {
        return Err(Error::config("no conditions requested"));
    }
    for (i, c) in cfg.conditions.iter().enumerate() {
        if cfg.conditions[..i].contains(c) {
            return Err(Error::config(format!("condition `{c}` requested twice")));
        }
        if c.needs_source() && data.source_model.is_none() {
            return Err(Error::config(format!(
                "condition `{c}` needs a source model"
            )));
        }
    }
    cfg.scratch.validate()?;
    cfg.finetune.validate()?;
    let test = data.target_test;
    let mut conditions = Vec::with_capacity(cfg.conditions.len());
    for &condition in &cfg.conditions {
        let started = Instant::now();
        let (result, epochs, lr) = match condition {
            Condition::Majority => {
                let mc = majority_class_baseline(data.target_train, test)?;
                let guess = test.labels.index_of(&mc.label);
                let predicted = vec![guess; test.len()];
                let eval =
                    Evaluation::from_predictions(&test.labels, &test.label_indices(), &predicted)?;
                (
                    run_repeated(cfg.runs, cfg.seed, |_| Ok(eval.clone()))?,
                    None,
                    None,
                )
            }
            Condition::Scratch => {
                let train = TrainingData {
                    dataset: data.target_train,
                    embeddings: data.embeddings,
                    word_vectors: data.word_vectors,
                };
                let result = run_repeated(cfg.runs, cfg.seed, |seed| {
                    let trained =
                        train_from_scratch(train, &cfg.architecture, &cfg.scratch.with_seed(seed))?;
                    evaluate_accuracy(&trained.model, test, data.embeddings)
                })?;
                (
                    result,
                    Some(cfg.scratch.epochs),
                    Some(cfg.scratch.learning_rate),
                )
            }
            Condition::NoFinetune => {
                let source = data.source_model.expect("checked above");
                let eval = evaluate_transfer(source, test, data.embeddings)?;
                (
                    run_repeated(cfg.runs, cfg.seed, |_| Ok(eval.clone()))?,
                    None,
                    None,
                )
            }
            Condition::Finetune => {
                let source = data.source_model.expect("checked above");
                let result = run_repeated(cfg.runs, cfg.seed, |seed| {
                    let tuned = finetune(
                        source,
                        data.target_train,
                        data.embeddings,
                        &cfg.finetune.with_seed(seed),
                    )?;
                    evaluate_accuracy(&tuned.model, test, data.embeddings)
                })?;
                (
                    result,
                    Some(cfg.finetune.epochs),
                    Some(cfg.finetune.learning_rate),
                )
            }
        };
        conditions.push(ConditionResult {
            condition,
            runs: cfg.runs,
            epochs,
            learning_rate: lr,
            result,
            wall_clock_secs: Some(started.elapsed().as_secs_f64()),
        });
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        conditions,
    })
}

impl ExperimentReport {
    /// Copy without wall-clock times, so reruns render byte-identically.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for c in &mut r.conditions {
            c.wall_clock_secs = None;
        }
        r
    }

    pub fn condition(&self, c: Condition) -> Option<&ConditionResult> {
        self.conditions.iter().find(|r| r.condition == c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: "report".into(),
            message: e.to_string(),
        })
    }

    /// Plain-text rendering: one block per condition. Floats are printed in
    /// their shortest round-trip form.
    pub fn render_text(&self) -> String {
        let cfg = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "experiment report");
        let _ = writeln!(out, "model: {}", cfg.architecture.kind());
        let _ = writeln!(out, "seed: {}", cfg.seed);
        let _ = writeln!(out, "runs: {}", cfg.runs);
        let tags: Vec<&str> = cfg.conditions.iter().map(|c| c.tag()).collect();
        let _ = writeln!(out, "conditions: {}", tags.join(" "));
        for (name, t) in [("scratch", &cfg.scratch), ("finetune", &cfg.finetune)] {
            let _ = writeln!(
                out,
                "{name}: epochs={} learning_rate={} batch_size={} freeze={}",
                t.epochs, t.learning_rate, t.batch_size, t.freeze
            );
        }
        for c in &self.conditions {
            let _ = writeln!(out, "\n[{}]", c.condition);
            let _ = writeln!(out, "runs: {}", c.runs);
            let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "epochs: {}", opt(c.epochs.map(|e| e.to_string())));
            let _ = writeln!(
                out,
                "learning_rate: {}",
                opt(c.learning_rate.map(|l| l.to_string()))
            );
            let accs: Vec<String> = c.result.accuracies.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "accuracies: {}", accs.join(" "));
            let _ = writeln!(out, "mean: {}", c.result.mean);
            let flag = if c.result.single_run {
                " (single run)"
            } else {
                ""
            };
            let _ = writeln!(out, "std: {}{flag}", c.result.std);
            if let Some(t) = c.wall_clock_secs {
                let _ = writeln!(out, "wall_clock_secs: {t:.3}");
            }
            if let Some(m) = &c.result.confusion {
                let _ = writeln!(out, "confusion (last run):");
                out.push_str(&m.render());
            }
        }
        out
    }
}
