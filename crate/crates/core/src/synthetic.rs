//! Generated corpora with known structure, for tests and desk-scale
//! experiments.
//!
//! Each latent class owns a few keywords and a prototype sentence vector. A
//! turn mixes one or two class keywords into filler words, and its sentence
//! vector is the class prototype plus Gaussian noise.

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::WINDOW;
use crate::corpus::{stratified_sample, Dataset, LabelSet, SentenceEmbeddingTable, Turn, TurnKey};
use crate::error::{Error, Result};
use crate::models::{Architecture, CnnConfig, MhSattConfig, MlpConfig, ModelKind};
use crate::nn::{seeded_rng, SeededRng};

const FILLER_WORDS: usize = 40;
const TURNS_PER_DIALOGUE: usize = 5;

/// Prefix marking the foreign rendering of a word.
pub const FOREIGN_PREFIX: &str = "f_";

fn keyword(class: usize, j: usize) -> String {
    format!("k{class}x{j}")
}

fn filler(rng: &mut SeededRng) -> String {
    format!("w{}", rng.random_range(0..FILLER_WORDS))
}

struct Generator {
    keywords: usize,
    prototypes: Vec<Vec<f32>>,
    noise: Normal<f32>,
    rng: SeededRng,
}

impl Generator {
    fn new(
        classes: usize,
        keywords: usize,
        dim: usize,
        scale: f32,
        noise: f32,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let unit = Normal::new(0.0f32, scale / (dim as f32).sqrt())
            .map_err(|e| Error::config(e.to_string()))?;
        let prototypes = (0..classes)
            .map(|_| (0..dim).map(|_| unit.sample(&mut rng)).collect())
            .collect();
        let noise = Normal::new(0.0f32, noise).map_err(|e| Error::config(e.to_string()))?;
        Ok(Self {
            keywords,
            prototypes,
            noise,
            rng,
        })
    }

    /// English text of a turn of latent class `class`.
    fn text(&mut self, class: usize) -> Vec<String> {
        let len = self.rng.random_range(4..=10);
        let mut words: Vec<String> = (0..len).map(|_| filler(&mut self.rng)).collect();
        let keywords = self.rng.random_range(1..=2);
        for _ in 0..keywords {
            let pos = self.rng.random_range(0..len);
            words[pos] = keyword(class, self.rng.random_range(0..self.keywords));
        }
        words
    }

    fn vector(&mut self, class: usize) -> Vec<f32> {
        let proto = &self.prototypes[class];
        proto
            .iter()
            .map(|&p| p + self.noise.sample(&mut self.rng))
            .collect()
    }
}

/// Small versions of the three architectures for sentence vectors of width
/// `context_dim`.
pub fn desk_architecture(kind: ModelKind, context_dim: usize) -> Architecture {
    match kind {
        ModelKind::Mlp => Architecture::Mlp(MlpConfig {
            embedding_dim: context_dim,
            hidden: 64,
            dropout: 0.5,
        }),
        ModelKind::Cnn => Architecture::Cnn(CnnConfig {
            context_dim,
            word_dim: 16,
            filters: 32,
            kernel_width: 3,
            window: WINDOW,
            dropout: 0.5,
        }),
        ModelKind::MhSatt => Architecture::MhSatt(MhSattConfig {
            context_dim,
            d_model: 16,
            heads: 4,
            window: WINDOW,
            stacked: true,
            dropout: 0.5,
        }),
    }
}

/// A dataset with a sentence vector for every turn.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub embeddings: SentenceEmbeddingTable,
}

/// `turns` English turns over `classes` labels (`C0`, `C1`, …), separable by
/// both keyword and sentence vector.
pub fn separable_corpus(
    classes: usize,
    turns: usize,
    dim: usize,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if classes == 0 || turns == 0 || dim == 0 {
        return Err(Error::config(
            "synthetic corpus needs classes, turns and a dimension",
        ));
    }
    let labels = LabelSet::new((0..classes).map(|c| format!("C{c}")))?;
    let mut gen = Generator::new(classes, 4, dim, 3.0, 0.05, seed)?;
    let mut embeddings = SentenceEmbeddingTable::new(dim)?;
    let mut out = Vec::with_capacity(turns);
    for i in 0..turns {
        let class = i % classes;
        let turn = Turn {
            dialogue_id: format!("s{}", i / TURNS_PER_DIALOGUE),
            turn_index: i % TURNS_PER_DIALOGUE,
            speaker: if i % 2 == 0 { "A" } else { "B" }.into(),
            label: labels.tag(class).to_string(),
            text_original: gen.text(class).join(" "),
            text_translated: None,
        };
        embeddings.insert(turn.key(), gen.vector(class))?;
        out.push(turn);
    }
    Ok(SyntheticCorpus {
        dataset: Dataset::new(labels, out)?,
        embeddings,
    })
}

/// Shape of the generated transfer task.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferSpec {
    pub source_turns: usize,
    /// Target turns the training sample is stratified from.
    pub target_pool: usize,
    pub target_train: usize,
    pub target_test: usize,
    pub dim: usize,
    /// Distinct keywords of each latent class.
    pub keywords_per_class: usize,
    /// Per-coordinate standard deviation of sentence-vector noise.
    pub vector_noise: f32,
    /// Chance that translation loses a keyword of a target turn.
    pub translation_noise: f64,
    pub seed: u64,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            source_turns: 2000,
            target_pool: 1000,
            target_train: 100,
            target_test: 1000,
            dim: 64,
            keywords_per_class: 12,
            vector_noise: 0.5,
            translation_noise: 0.2,
            seed: 0,
        }
    }
}

/// Source tags, one per latent class.
pub const SOURCE_TAGS: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];
/// Target tags: the first four latent classes keep their tag, the last four
/// merge pairwise.
pub const TARGET_TAGS: [&str; 6] = ["A", "B", "C", "D", "EF", "GH"];
/// Target label weights; the majority label holds 28 %.
pub const TARGET_WEIGHTS: [f64; 6] = [0.28, 0.19, 0.18, 0.13, 0.12, 0.10];

/// An 8-class English source task and a related 6-class foreign target task
/// drawn from the same input distribution.
#[derive(Clone, Debug)]
pub struct TransferTask {
    pub source: Dataset,
    /// Whole target dialogues the training sample is drawn from.
    pub target_pool: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
    /// Sentence vectors for every source and target turn.
    pub embeddings: SentenceEmbeddingTable,
}

pub fn transfer_task(spec: &TransferSpec) -> Result<TransferTask> {
    let mut gen = Generator::new(
        SOURCE_TAGS.len(),
        spec.keywords_per_class,
        spec.dim,
        1.0,
        spec.vector_noise,
        spec.seed,
    )?;
    let mut embeddings = SentenceEmbeddingTable::new(spec.dim)?;

    let source_labels = LabelSet::new(SOURCE_TAGS)?;
    let mut source = Vec::with_capacity(spec.source_turns);
    for i in 0..spec.source_turns {
        let class = gen.rng.random_range(0..SOURCE_TAGS.len());
        let turn = Turn {
            dialogue_id: format!("src{}", i / TURNS_PER_DIALOGUE),
            turn_index: i % TURNS_PER_DIALOGUE,
            speaker: if i % 2 == 0 { "A" } else { "B" }.into(),
            label: SOURCE_TAGS[class].to_string(),
            text_original: gen.text(class).join(" "),
            text_translated: None,
        };
        embeddings.insert(turn.key(), gen.vector(class))?;
        source.push(turn);
    }

    let target_labels = LabelSet::new(TARGET_TAGS)?;
    let weights = WeightedIndex::new(TARGET_WEIGHTS).map_err(|e| Error::config(e.to_string()))?;
    let mut target = |prefix: &str, n: usize, gen: &mut Generator| -> Result<Vec<Turn>> {
        let mut turns = Vec::with_capacity(n);
        for i in 0..n {
            let label = weights.sample(&mut gen.rng);
            let class = if label < 4 {
                label
            } else {
                4 + 2 * (label - 4) + gen.rng.random_range(0..2)
            };
            let english = gen.text(class);
            let original: Vec<String> = english
                .iter()
                .map(|w| format!("{FOREIGN_PREFIX}{w}"))
                .collect();
            let translated: Vec<String> = english
                .iter()
                .map(|w| {
                    if w.starts_with('k') && gen.rng.random_bool(spec.translation_noise) {
                        filler(&mut gen.rng)
                    } else {
                        w.clone()
                    }
                })
                .collect();
            let turn = Turn {
                dialogue_id: format!("{prefix}{}", i / TURNS_PER_DIALOGUE),
                turn_index: i % TURNS_PER_DIALOGUE,
                speaker: if i % 2 == 0 { "A" } else { "B" }.into(),
                label: TARGET_TAGS[label].to_string(),
                text_original: original.join(" "),
                text_translated: Some(translated.join(" ")),
            };
            embeddings.insert(
                TurnKey::new(&turn.dialogue_id, turn.turn_index),
                gen.vector(class),
            )?;
            turns.push(turn);
        }
        Ok(turns)
    };
    let pool = target("tgt", spec.target_pool, &mut gen)?;
    let test = target("test", spec.target_test, &mut gen)?;
    let pool = Dataset::new(target_labels.clone(), pool)?;
    let target_train = stratified_sample(&pool, spec.target_train, spec.seed)?;
    Ok(TransferTask {
        source: Dataset::new(source_labels, source)?,
        target_pool: pool,
        target_train,
        target_test: Dataset::new(target_labels, test)?,
        embeddings,
    })
}

/// Shuffled copy of `items`, for tests that need a seeded permutation.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut seeded_rng(seed));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_shape() {
        let c = separable_corpus(4, 100, 8, 1).unwrap();
        assert_eq!(c.dataset.len(), 100);
        assert_eq!(c.dataset.label_counts(), vec![25; 4]);
        assert_eq!(c.embeddings.len(), 100);
    }

    #[test]
    fn transfer_shape() {
        let t = transfer_task(&TransferSpec {
            source_turns: 200,
            target_pool: 300,
            target_test: 50,
            ..TransferSpec::default()
        })
        .unwrap();
        assert_eq!(t.source.labels.len(), 8);
        assert_eq!(t.target_train.len(), 100);
        assert_eq!(t.target_train.labels.len(), 6);
        assert!(t
            .target_train
            .turns
            .iter()
            .all(|t| t.text_original.starts_with(FOREIGN_PREFIX)));
        assert_eq!(t.embeddings.len(), 200 + 300 + 50);
    }
}
