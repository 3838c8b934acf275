//! Two-phase transfer protocol: initial training on a source corpus, head
//! replacement and fine-tuning on a small target corpus, plus the baselines
//! and evaluation harness around it.

mod eval;
mod report;
mod runs;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocab, encode_window, pair_with_previous, Dataset, SentenceEmbeddingTable, TextField,
    Turn, Vocabulary, WordVectorTable, ORIGINAL_PREFIX, PAD, TRANSLATED_PREFIX,
};
use crate::error::{Error, Result};
use crate::models::{is_head_param, Architecture, Classifier, Mode, ModelInput, ModelKind};
use crate::nn::{seeded_rng, Adam, Graph};

pub use eval::{
    evaluate_accuracy, evaluate_examples, evaluate_transfer, majority_class_baseline,
    ConfusionMatrix, Evaluation, MajorityBaseline, UNMAPPED,
};
pub use report::{
    run_condition_suite, Condition, ConditionResult, ExperimentReport, SuiteConfig, SuiteData,
};
pub use runs::{cross_validate, run_repeated, CvResult, RunResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    /// Only `head.*` tensors are updated.
    HeadOnly,
    All,
}

impl std::str::FromStr for FreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head_only" => Ok(FreezePolicy::HeadOnly),
            "all" => Ok(FreezePolicy::All),
            other => Err(Error::config(format!(
                "unknown freeze policy `{other}` (head_only, all)"
            ))),
        }
    }
}

impl std::fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FreezePolicy::HeadOnly => "head_only",
            FreezePolicy::All => "all",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub freeze: FreezePolicy,
}

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_RUNS: usize = 10;

impl TrainConfig {
    /// Initial-phase defaults: 200 epochs at learning rate 0.002.
    pub fn initial(seed: u64) -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.002,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            freeze: FreezePolicy::All,
        }
    }

    /// Fine-tuning defaults: head only at learning rate 0.001, for 15 (CNN),
    /// 25 (MLP) or 50 (MH-SAtt) epochs.
    pub fn finetune(kind: ModelKind, seed: u64) -> Self {
        Self {
            epochs: match kind {
                ModelKind::Cnn => 15,
                ModelKind::Mlp => 25,
                ModelKind::MhSatt => 50,
            },
            learning_rate: 0.001,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            freeze: FreezePolicy::HeadOnly,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// A featurised turn with its gold label index.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub label: usize,
}

/// Vocabulary a token model of `kind` would use over `turns`.
pub fn build_model_vocab<'a>(
    kind: ModelKind,
    turns: impl IntoIterator<Item = &'a Turn>,
) -> Option<Vocabulary> {
    match kind {
        ModelKind::Mlp => None,
        ModelKind::Cnn => Some(build_vocab(turns, TextField::Preferred, 1)),
        ModelKind::MhSatt => Some(build_vocab(turns, TextField::Bilingual, 1)),
    }
}

/// Model input for one turn. Every architecture reads the previous turn's
/// sentence vector; token models encode the translated text when present.
pub fn featurize<T: crate::nn::Scalar>(
    model: &Classifier<T>,
    turn: &Turn,
    embeddings: &SentenceEmbeddingTable,
) -> Result<ModelInput> {
    let prev = pair_with_previous(turn, embeddings)?;
    let vocab = || {
        model
            .vocab()
            .ok_or_else(|| Error::State(format!("{} model without vocabulary", model.kind())))
    };
    Ok(match model.architecture() {
        Architecture::Mlp(_) => ModelInput::Vectors {
            prev,
            current: embeddings.current(turn)?.to_vec(),
        },
        Architecture::Cnn(c) => ModelInput::Tokens {
            ids: encode_window(turn.preferred_text(), vocab()?, "", c.window),
            prev,
        },
        Architecture::MhSatt(c) => {
            let translated =
                encode_window(turn.preferred_text(), vocab()?, TRANSLATED_PREFIX, c.window);
            if c.stacked {
                let original = if turn.has_translation() {
                    encode_window(&turn.text_original, vocab()?, ORIGINAL_PREFIX, c.window)
                } else {
                    vec![PAD; c.window]
                };
                ModelInput::Stacked {
                    translated,
                    original,
                    prev,
                }
            } else {
                ModelInput::Tokens {
                    ids: translated,
                    prev,
                }
            }
        }
    })
}

/// Featurises a dataset against the model's label set (by tag).
pub fn prepare_examples<T: crate::nn::Scalar>(
    model: &Classifier<T>,
    dataset: &Dataset,
    embeddings: &SentenceEmbeddingTable,
) -> Result<Vec<Example>> {
    dataset
        .turns
        .iter()
        .map(|t| {
            let label = model.labels().index_of(&t.label).ok_or_else(|| {
                Error::config(format!(
                    "label `{}` is not in the model's label set",
                    t.label
                ))
            })?;
            Ok(Example {
                input: featurize(model, t, embeddings)?,
                label,
            })
        })
        .collect()
}

/// A trained model with its per-epoch mean training loss.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Classifier,
    pub losses: Vec<f64>,
}

/// Mini-batch Adam on softmax cross-entropy. Samples are reshuffled every
/// epoch; gradients are averaged over each batch.
pub fn train_examples(
    model: &mut Classifier,
    examples: &[Example],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::config("no training examples"));
    }
    let adam = Adam::new(cfg.learning_rate)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    model.params_mut().zero_grads();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let ex = &examples[i];
                let mut g = Graph::new();
                let logits = model.forward(&mut g, &ex.input, Mode::Train(&mut rng))?;
                let loss = g.softmax_cross_entropy(logits, ex.label)?;
                total += f64::from(g.value(loss).data()[0]);
                g.backward(loss, model.params_mut())?;
            }
            let store = model.params_mut();
            store.scale_grads(1.0 / batch.len() as f32);
            match cfg.freeze {
                FreezePolicy::All => adam.step(store),
                FreezePolicy::HeadOnly => adam.step_filtered(store, is_head_param),
            }
            store.zero_grads();
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::State("training loss diverged".into()));
        }
        losses.push(mean);
    }
    Ok(losses)
}

/// Everything a fresh model needs besides its architecture.
#[derive(Clone, Copy)]
pub struct TrainingData<'a> {
    pub dataset: &'a Dataset,
    pub embeddings: &'a SentenceEmbeddingTable,
    /// Pretrained word vectors for a CNN.
    pub word_vectors: Option<&'a WordVectorTable>,
}

/// Initial phase: a fresh model trained on the source corpus. The token
/// vocabulary also covers `vocab_extra`, so tokens of later target corpora get
/// embedding rows (left at their random init until fine-tuning).
pub fn train_initial(
    data: TrainingData<'_>,
    architecture: &Architecture,
    vocab_extra: &[&Dataset],
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if data.dataset.is_empty() {
        return Err(Error::config("source corpus is empty"));
    }
    let turns = data
        .dataset
        .turns
        .iter()
        .chain(vocab_extra.iter().flat_map(|d| d.turns.iter()));
    let vocab = build_model_vocab(architecture.kind(), turns);
    let mut model = Classifier::new(
        architecture.clone(),
        data.dataset.labels.clone(),
        vocab,
        data.word_vectors,
        cfg.seed,
    )?;
    let examples = prepare_examples(&model, data.dataset, data.embeddings)?;
    let losses = train_examples(&mut model, &examples, cfg)?;
    Ok(Trained { model, losses })
}

/// Baseline without transfer: a fresh model trained on the target corpus only.
pub fn train_from_scratch(
    data: TrainingData<'_>,
    architecture: &Architecture,
    cfg: &TrainConfig,
) -> Result<Trained> {
    train_initial(data, architecture, &[], cfg)
}

/// Second phase: replaces the head for the target label set, then trains on
/// the target corpus under `cfg.freeze`.
pub fn finetune(
    model: &Classifier,
    target: &Dataset,
    embeddings: &SentenceEmbeddingTable,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::config("target corpus has no training examples"));
    }
    let mut model = model.clone();
    model.replace_head(target.labels.clone(), cfg.seed)?;
    let examples = prepare_examples(&model, target, embeddings)?;
    let losses = train_examples(&mut model, &examples, cfg)?;
    Ok(Trained { model, losses })
}

/// Fraction of `examples` the model classifies correctly.
pub fn training_accuracy(model: &Classifier, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::config("no examples"));
    }
    let mut correct = 0;
    for ex in examples {
        if model.predict(&ex.input)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}
