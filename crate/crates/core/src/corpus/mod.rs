//! Dialogue corpora: data model, file formats, tokenisation, sampling and
//! splitting.

mod embeddings;
mod io;
mod sampling;
mod tokens;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use embeddings::{pair_with_previous, SentenceEmbeddingTable, TurnKey, WordVectorTable};
pub use io::{
    load_corpus, load_sentence_embeddings, load_word_vectors, parse_corpus,
    parse_sentence_embeddings, parse_word_vectors, write_corpus, write_sentence_embeddings,
    write_word_vectors,
};
pub use sampling::{kfold_split, largest_remainder, sample_with_quotas, stratified_sample, Folds};
pub use tokens::{
    build_vocab, encode_turn_tokens, encode_window, tokenize, TextField, Vocabulary,
    ORIGINAL_PREFIX, PAD, PAD_TOKEN, TRANSLATED_PREFIX, UNK, UNK_TOKEN, WINDOW,
};

/// One speaker turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Turn {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub speaker: String,
    pub label: String,
    pub text_original: String,
    pub text_translated: Option<String>,
}

impl Turn {
    pub fn key(&self) -> TurnKey {
        TurnKey::new(&self.dialogue_id, self.turn_index)
    }

    /// The text the classifiers read: the English translation when there is
    /// one, the original text otherwise.
    pub fn preferred_text(&self) -> &str {
        match &self.text_translated {
            Some(t) if !t.trim().is_empty() => t,
            _ => &self.text_original,
        }
    }

    pub fn has_translation(&self) -> bool {
        self.text_translated
            .as_deref()
            .is_some_and(|t| !t.trim().is_empty())
    }
}

/// Ordered set of dialogue-act tags.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LabelSet {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I, S>(tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = Self::default();
        for tag in tags {
            let tag = tag.into();
            if tag.is_empty() {
                return Err(Error::config("empty label tag"));
            }
            if set.index.contains_key(&tag) {
                return Err(Error::config(format!("duplicate label `{tag}`")));
            }
            set.push(tag);
        }
        Ok(set)
    }

    fn push(&mut self, tag: String) -> usize {
        let idx = self.tags.len();
        self.index.insert(tag.clone(), idx);
        self.tags.push(tag);
        idx
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, index: usize) -> &str {
        &self.tags[index]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

/// A loaded corpus file: dialogues in file order, each with consecutive turns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub labels: LabelSet,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.dialogues.iter().flat_map(|d| d.turns.iter())
    }

    pub fn len(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dataset(&self) -> Dataset {
        Dataset {
            labels: self.labels.clone(),
            turns: self.turns().cloned().collect(),
        }
    }
}

/// A flat list of labelled turns, e.g. a sample or one side of a split.
/// Turns keep their dialogue coordinates so context can still be looked up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub labels: LabelSet,
    pub turns: Vec<Turn>,
}

impl Dataset {
    /// Fails if a turn's label is outside `labels`.
    pub fn new(labels: LabelSet, turns: Vec<Turn>) -> Result<Self> {
        for t in &turns {
            if labels.index_of(&t.label).is_none() {
                return Err(Error::config(format!(
                    "turn {}#{} has label `{}` outside the label set",
                    t.dialogue_id, t.turn_index, t.label
                )));
            }
        }
        Ok(Self { labels, turns })
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn label_index(&self, turn: &Turn) -> usize {
        self.labels
            .index_of(&turn.label)
            .expect("dataset turns carry labels from their label set")
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.turns.iter().map(|t| self.label_index(t)).collect()
    }

    /// Turn count per label, in label-set order.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for t in &self.turns {
            counts[self.label_index(t)] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            labels: self.labels.clone(),
            turns: indices.iter().map(|&i| self.turns[i].clone()).collect(),
        }
    }
}
