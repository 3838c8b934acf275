use std::collections::{BTreeMap, HashMap};

use super::Turn;
use crate::error::{Error, Result};

/// `(dialogue_id, turn_index)` coordinates of a turn.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TurnKey {
    pub dialogue_id: String,
    pub turn_index: usize,
}

impl TurnKey {
    pub fn new(dialogue_id: &str, turn_index: usize) -> Self {
        Self {
            dialogue_id: dialogue_id.to_string(),
            turn_index,
        }
    }
}

impl std::fmt::Display for TurnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.dialogue_id, self.turn_index)
    }
}

/// Precomputed sentence vectors, one per turn.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEmbeddingTable {
    dim: usize,
    vectors: BTreeMap<TurnKey, Vec<f32>>,
    duplicates: usize,
}

impl SentenceEmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        Ok(Self {
            dim,
            vectors: BTreeMap::new(),
            duplicates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Number of keys that were overwritten by a later insert.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn insert(&mut self, key: TurnKey, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Parse {
                location: format!("row {key}"),
                message: format!("expected {} values, found {}", self.dim, vector.len()),
            });
        }
        if self.vectors.insert(key, vector).is_some() {
            self.duplicates += 1;
        }
        Ok(())
    }

    pub fn get(&self, dialogue_id: &str, turn_index: usize) -> Option<&[f32]> {
        self.vectors
            .get(&TurnKey::new(dialogue_id, turn_index))
            .map(Vec::as_slice)
    }

    /// Vector of `turn` itself.
    pub fn current(&self, turn: &Turn) -> Result<&[f32]> {
        self.get(&turn.dialogue_id, turn.turn_index)
            .ok_or_else(|| Error::MissingEmbedding {
                dialogue_id: turn.dialogue_id.clone(),
                turn_index: turn.turn_index,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TurnKey, &[f32])> {
        self.vectors.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Adds every row of `other`; dimensions must agree. Later rows win.
    pub fn merge(&mut self, other: &SentenceEmbeddingTable) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::config(format!(
                "cannot merge embedding tables of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        for (k, v) in &other.vectors {
            if self.vectors.insert(k.clone(), v.clone()).is_some() {
                self.duplicates += 1;
            }
        }
        Ok(())
    }
}

/// Vector of the turn preceding `turn` in its dialogue, or zeros for the first
/// turn.
pub fn pair_with_previous(turn: &Turn, embeddings: &SentenceEmbeddingTable) -> Result<Vec<f32>> {
    if turn.turn_index == 0 {
        return Ok(vec![0.0; embeddings.dim()]);
    }
    let prev = turn.turn_index - 1;
    embeddings
        .get(&turn.dialogue_id, prev)
        .map(<[f32]>::to_vec)
        .ok_or_else(|| Error::MissingEmbedding {
            dialogue_id: turn.dialogue_id.clone(),
            turn_index: prev,
        })
}

/// Pretrained word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("word vector dimension must be positive"));
        }
        Ok(Self {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Returns false (and keeps the existing vector) for a repeated word.
    pub fn insert(&mut self, word: String, vector: Vec<f32>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Parse {
                location: format!("word `{word}`"),
                message: format!("expected {} values, found {}", self.dim, vector.len()),
            });
        }
        if self.index.contains_key(&word) {
            return Ok(false);
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.push(vector);
        Ok(true)
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.words
            .iter()
            .zip(&self.vectors)
            .map(|(w, v)| (w.as_str(), v.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(index: usize) -> Turn {
        Turn {
            dialogue_id: "d1".into(),
            turn_index: index,
            speaker: "A".into(),
            label: "X".into(),
            text_original: "hi".into(),
            text_translated: None,
        }
    }

    #[test]
    fn previous_vector_lookup() {
        let mut table = SentenceEmbeddingTable::new(3).unwrap();
        table
            .insert(TurnKey::new("d1", 2), vec![1.0, 2.0, 3.0])
            .unwrap();
        assert_eq!(pair_with_previous(&turn(0), &table).unwrap(), vec![0.0; 3]);
        assert_eq!(
            pair_with_previous(&turn(3), &table).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let err = pair_with_previous(&turn(5), &table).unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding { turn_index: 4, .. }));
        assert!(err.to_string().contains("d1#4"));
    }

    #[test]
    fn duplicates_counted_last_wins() {
        let mut table = SentenceEmbeddingTable::new(1).unwrap();
        table.insert(TurnKey::new("a", 0), vec![1.0]).unwrap();
        table.insert(TurnKey::new("a", 0), vec![2.0]).unwrap();
        assert_eq!(table.duplicates(), 1);
        assert_eq!(table.get("a", 0), Some(&[2.0f32][..]));
        assert!(table.insert(TurnKey::new("a", 1), vec![1.0, 2.0]).is_err());
    }
}
