use serde::{Deserialize, Serialize};

use super::{featurize, prepare_examples, Example};
use crate::corpus::{Dataset, LabelSet, SentenceEmbeddingTable};
use crate::error::{Error, Result};
use crate::models::Classifier;

/// Column header for predictions whose tag has no counterpart among the gold
/// labels.
pub const UNMAPPED: &str = "(unmapped)";

/// Rows are gold labels, columns predicted labels. A trailing `(unmapped)`
/// column appears when some predictions could not be mapped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.gold.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Labelled grid, one row per gold label.
    pub fn render(&self) -> String {
        let width = self
            .gold
            .iter()
            .chain(&self.predicted)
            .map(String::len)
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        let mut out = format!("{:<width$}", "gold\\pred");
        for p in &self.predicted {
            out.push_str(&format!(" {p:>width$}"));
        }
        out.push('\n');
        for (g, row) in self.gold.iter().zip(&self.counts) {
            out.push_str(&format!("{g:<width$}"));
            for c in row {
                out.push_str(&format!(" {c:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl Evaluation {
    /// Scores predictions against gold indices into `labels`; `None` marks a
    /// prediction with no gold-side label.
    pub fn from_predictions(
        labels: &LabelSet,
        gold: &[usize],
        predicted: &[Option<usize>],
    ) -> Result<Self> {
        if gold.is_empty() {
            return Err(Error::config("empty test set"));
        }
        if gold.len() != predicted.len() {
            return Err(Error::config(format!(
                "{} gold labels for {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let k = labels.len();
        let any_unmapped = predicted.iter().any(Option::is_none);
        let cols = k + usize::from(any_unmapped);
        let mut counts = vec![vec![0; cols]; k];
        let mut correct = 0;
        for (&g, p) in gold.iter().zip(predicted) {
            let col = p.unwrap_or(k);
            counts[g][col] += 1;
            if *p == Some(g) {
                correct += 1;
            }
        }
        let mut predicted_tags = labels.tags().to_vec();
        if any_unmapped {
            predicted_tags.push(UNMAPPED.to_string());
        }
        Ok(Self {
            correct,
            total: gold.len(),
            accuracy: correct as f64 / gold.len() as f64,
            confusion: ConfusionMatrix {
                gold: labels.tags().to_vec(),
                predicted: predicted_tags,
                counts,
            },
        })
    }
}

/// Accuracy and confusion matrix on already featurised examples.
pub fn evaluate_examples(model: &Classifier, examples: &[Example]) -> Result<Evaluation> {
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let predicted = examples
        .iter()
        .map(|e| model.predict(&e.input).map(Some))
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_predictions(model.labels(), &gold, &predicted)
}

/// Accuracy of a model on a test set labelled with the model's own tags.
pub fn evaluate_accuracy(
    model: &Classifier,
    test: &Dataset,
    embeddings: &SentenceEmbeddingTable,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::config("empty test set"));
    }
    evaluate_examples(model, &prepare_examples(model, test, embeddings)?)
}

/// Accuracy of a model trained on other labels, with no further training.
/// Predicted tags map to test labels by identical strings; predictions with
/// no counterpart count as errors.
pub fn evaluate_transfer(
    model: &Classifier,
    test: &Dataset,
    embeddings: &SentenceEmbeddingTable,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::config("empty test set"));
    }
    let mapping: Vec<Option<usize>> = model
        .labels()
        .tags()
        .iter()
        .map(|t| test.labels.index_of(t))
        .collect();
    if mapping.iter().all(Option::is_none) {
        return Err(Error::config(
            "model and test labels share no tags, so untuned transfer cannot be scored",
        ));
    }
    let mut predicted = Vec::with_capacity(test.len());
    for turn in &test.turns {
        let input = featurize(model, turn, embeddings)?;
        predicted.push(mapping[model.predict(&input)?]);
    }
    Evaluation::from_predictions(&test.labels, &test.label_indices(), &predicted)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    pub label: String,
    pub accuracy: f64,
}

/// Always predicts the most frequent training label (the earliest in label
/// order on ties) and scores it on `test` by tag.
pub fn majority_class_baseline(train: &Dataset, test: &Dataset) -> Result<MajorityBaseline> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::config(
            "majority baseline needs non-empty train and test sets",
        ));
    }
    let counts = train.label_counts();
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    let label = train.labels.tag(best).to_string();
    let hits = test.turns.iter().filter(|t| t.label == label).count();
    Ok(MajorityBaseline {
        accuracy: hits as f64 / test.len() as f64,
        label,
    })
}
