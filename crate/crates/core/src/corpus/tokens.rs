use std::collections::HashMap;

use super::Turn;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token window length fed to the convolutional and attention encoders.
pub const WINDOW: usize = 15;

/// Stream tags of a bilingual vocabulary.
pub const TRANSLATED_PREFIX: &str = "en:";
pub const ORIGINAL_PREFIX: &str = "xx:";

/// Which text of a turn feeds a vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextField {
    Original,
    Translated,
    /// Translation when present, original otherwise.
    Preferred,
    /// `en:`-tagged preferred text plus `xx:`-tagged original text for turns
    /// that carry a translation.
    Bilingual,
}

/// Lowercased whitespace tokenisation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Dense token ids with `<pad>` = 0 and `<unk>` = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Builds a vocabulary whose first two entries are always the reserved
    /// tokens; reserved or repeated entries in `tokens` are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.add(PAD_TOKEN.to_string());
        v.add(UNK_TOKEN.to_string());
        for t in tokens {
            v.add(t.into());
        }
        v
    }

    fn add(&mut self, token: String) -> usize {
        if let Some(&id) = self.index.get(&token) {
            return id;
        }
        let id = self.tokens.len();
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

fn tagged(prefix: &str, tokens: Vec<String>) -> impl Iterator<Item = String> + '_ {
    tokens.into_iter().map(move |t| format!("{prefix}{t}"))
}

fn field_tokens(turn: &Turn, field: TextField) -> Vec<String> {
    match field {
        TextField::Original => tokenize(&turn.text_original),
        TextField::Translated => tokenize(turn.text_translated.as_deref().unwrap_or("")),
        TextField::Preferred => tokenize(turn.preferred_text()),
        TextField::Bilingual => {
            let mut out: Vec<String> =
                tagged(TRANSLATED_PREFIX, tokenize(turn.preferred_text())).collect();
            if turn.has_translation() {
                out.extend(tagged(ORIGINAL_PREFIX, tokenize(&turn.text_original)));
            }
            out
        }
    }
}

/// Vocabulary over the given turns: tokens seen at least `min_count` times,
/// in order of first occurrence.
pub fn build_vocab<'a>(
    turns: impl IntoIterator<Item = &'a Turn>,
    field: TextField,
    min_count: usize,
) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut order = Vec::new();
    for turn in turns {
        for tok in field_tokens(turn, field) {
            let c = counts.entry(tok.clone()).or_insert(0);
            if *c == 0 {
                order.push(tok);
            }
            *c += 1;
        }
    }
    Vocabulary::from_tokens(order.into_iter().filter(|t| counts[t] >= min_count.max(1)))
}

/// Fixed-length id window: over-long texts keep their first `len - 2` and
/// last 2 tokens, short ones are right-padded with `<pad>`. Tokens are looked
/// up as `prefix + token`; unknown ones map to `<unk>`.
pub fn encode_window(text: &str, vocab: &Vocabulary, prefix: &str, len: usize) -> Vec<usize> {
    assert!(len >= 2, "window must hold at least the last two tokens");
    let ids: Vec<usize> = tokenize(text)
        .into_iter()
        .map(|t| vocab.id(&format!("{prefix}{t}")))
        .collect();
    let mut out = if ids.len() > len {
        let mut head = ids[..len - 2].to_vec();
        head.extend_from_slice(&ids[ids.len() - 2..]);
        head
    } else {
        ids
    };
    out.resize(len, PAD);
    out
}

/// [`encode_window`] with the standard 15-token window and no stream tag.
pub fn encode_turn_tokens(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    encode_window(text, vocab, "", WINDOW)
}
