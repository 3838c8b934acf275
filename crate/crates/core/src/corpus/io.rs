//! Text formats.
//!
//! Corpus: one turn per line, tab-separated
//! `dialogue_id  turn_index  speaker  label  text_original  text_translated`
//! (the last field may be empty or absent). Lines starting with `#` are
//! comments, except a `#labels` line whose remaining tab-separated fields
//! declare the label set.
//!
//! Sentence embeddings: first line `dim=<D>`, then
//! `dialogue_id  turn_index  v1 … vD` (any whitespace between fields).
//!
//! Word vectors: first line `count dim`, then `word v1 … v_dim`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::embeddings::{SentenceEmbeddingTable, TurnKey, WordVectorTable};
use super::{Corpus, Dialogue, LabelSet, Turn};
use crate::error::{Error, Result};

const LABELS_DIRECTIVE: &str = "#labels";

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

/// Loads a corpus file. `labels`, when given, takes precedence over a
/// `#labels` declaration in the file; with neither, the label set is the tags
/// in order of first occurrence.
pub fn load_corpus(path: impl AsRef<Path>, labels: Option<&LabelSet>) -> Result<Corpus> {
    parse_corpus(&read(path.as_ref())?, labels)
}

pub fn parse_corpus(text: &str, labels: Option<&LabelSet>) -> Result<Corpus> {
    let mut declared = labels.cloned();
    let mut discovered = LabelSet::default();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(usize, Turn)>> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(LABELS_DIRECTIVE) {
            if labels.is_none() && (rest.is_empty() || rest.starts_with('\t')) {
                let tags = rest.split('\t').map(str::trim).filter(|t| !t.is_empty());
                declared =
                    Some(LabelSet::new(tags).map_err(|e| parse_err(line_no, e.to_string()))?);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(5..=6).contains(&fields.len()) {
            return Err(parse_err(
                line_no,
                format!("expected 6 tab-separated fields, found {}", fields.len()),
            ));
        }
        let dialogue_id = fields[0].trim();
        if dialogue_id.is_empty() {
            return Err(parse_err(line_no, "empty dialogue id"));
        }
        let turn_index: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid turn index `{}`", fields[1])))?;
        let label = fields[3].trim();
        if label.is_empty() {
            return Err(parse_err(line_no, "empty label"));
        }
        match &declared {
            Some(set) if set.index_of(label).is_none() => {
                return Err(Error::UnknownLabel {
                    label: label.to_string(),
                    line: line_no,
                })
            }
            Some(_) => {}
            None => {
                if discovered.index_of(label).is_none() {
                    discovered.push(label.to_string());
                }
            }
        }
        let translated = fields.get(5).map(|s| s.trim()).filter(|s| !s.is_empty());
        let turn = Turn {
            dialogue_id: dialogue_id.to_string(),
            turn_index,
            speaker: fields[2].trim().to_string(),
            label: label.to_string(),
            text_original: fields[4].trim().to_string(),
            text_translated: translated.map(str::to_string),
        };
        if !groups.contains_key(dialogue_id) {
            order.push(dialogue_id.to_string());
        }
        groups
            .entry(dialogue_id.to_string())
            .or_default()
            .push((line_no, turn));
    }

    let mut dialogues = Vec::with_capacity(order.len());
    for id in order {
        let mut turns = groups.remove(&id).unwrap_or_default();
        turns.sort_by_key(|(_, t)| t.turn_index);
        for (expected, (line, t)) in turns.iter().enumerate() {
            if t.turn_index != expected {
                return Err(Error::Structure(format!(
                    "dialogue `{id}`: turn index {} at line {line} where {expected} was expected \
                     (indices must be consecutive from 0)",
                    t.turn_index
                )));
            }
        }
        dialogues.push(Dialogue {
            id,
            turns: turns.into_iter().map(|(_, t)| t).collect(),
        });
    }
    Ok(Corpus {
        labels: declared.unwrap_or(discovered),
        dialogues,
    })
}

fn clean(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::from(LABELS_DIRECTIVE);
    for tag in corpus.labels.tags() {
        out.push('\t');
        out.push_str(&clean(tag));
    }
    out.push('\n');
    for t in corpus.turns() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            clean(&t.dialogue_id),
            t.turn_index,
            clean(&t.speaker),
            clean(&t.label),
            clean(&t.text_original),
            t.text_translated.as_deref().map(clean).unwrap_or_default()
        );
    }
    out
}

pub fn load_sentence_embeddings(path: impl AsRef<Path>) -> Result<SentenceEmbeddingTable> {
    parse_sentence_embeddings(&read(path.as_ref())?)
}

pub fn parse_sentence_embeddings(text: &str) -> Result<SentenceEmbeddingTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `dim=<D>` header"))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| {
            parse_err(
                1,
                format!("expected `dim=<D>` header, found `{}`", header.trim()),
            )
        })?;
    let mut table = SentenceEmbeddingTable::new(dim).map_err(|e| parse_err(1, e.to_string()))?;
    for (i, line) in lines {
        let mut fields = line.split_whitespace();
        let (Some(dialogue_id), Some(index)) = (fields.next(), fields.next()) else {
            return Err(parse_err(i + 1, "row needs a dialogue id and a turn index"));
        };
        let turn_index: usize = index
            .parse()
            .map_err(|_| parse_err(i + 1, format!("invalid turn index `{index}`")))?;
        let key = TurnKey::new(dialogue_id, turn_index);
        let values = fields
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::Parse {
                location: format!("row {key}"),
                message: e.to_string(),
            })?;
        table.insert(key, values)?;
    }
    Ok(table)
}

pub fn write_sentence_embeddings(table: &SentenceEmbeddingTable) -> String {
    let mut out = format!("dim={}\n", table.dim());
    for (key, v) in table.iter() {
        let _ = write!(out, "{}\t{}\t", key.dialogue_id, key.turn_index);
        join_floats(&mut out, v);
        out.push('\n');
    }
    out
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectorTable> {
    parse_word_vectors(&read(path.as_ref())?)
}

pub fn parse_word_vectors(text: &str) -> Result<WordVectorTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `count dim` header"))?;
    let parts: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(1, format!("invalid header `{header}`")))?;
    let [count, dim] = parts[..] else {
        return Err(parse_err(
            1,
            format!("header must be `count dim`, found `{header}`"),
        ));
    };
    let mut table = WordVectorTable::new(dim).map_err(|e| parse_err(1, e.to_string()))?;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line");
        let values = fields
            .map(str::parse::<f32>)
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| parse_err(i + 1, e.to_string()))?;
        if values.len() != dim {
            return Err(parse_err(
                i + 1,
                format!("word `{word}` has {} values, expected {dim}", values.len()),
            ));
        }
        if !table.insert(word.to_string(), values)? {
            return Err(parse_err(i + 1, format!("duplicate word `{word}`")));
        }
    }
    if table.len() != count {
        return Err(parse_err(
            1,
            format!("header declares {count} words, file holds {}", table.len()),
        ));
    }
    Ok(table)
}

pub fn write_word_vectors(table: &WordVectorTable) -> String {
    let mut out = format!("{} {}\n", table.len(), table.dim());
    for (word, v) in table.iter() {
        out.push_str(word);
        out.push(' ');
        join_floats(&mut out, v);
        out.push('\n');
    }
    out
}

fn join_floats(out: &mut String, values: &[f32]) {
    for (i, x) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_corpus() {
        let text = "d1\t0\tA\tA\thello there\t\nd1\t1\tB\tB\thi\t\n";
        let c = parse_corpus(text, None).unwrap();
        assert_eq!(c.dialogues.len(), 1);
        assert_eq!(c.dialogues[0].turns.len(), 2);
        assert_eq!(c.labels.tags(), ["A", "B"]);
        assert_eq!(c.dialogues[0].turns[0].text_translated, None);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = parse_corpus("", None).unwrap();
        assert!(c.is_empty());
        assert!(parse_corpus("# only a comment\n\n", None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unknown_label_names_label_and_line() {
        let labels = LabelSet::new(["A", "B"]).unwrap();
        let text = "d1\t0\tA\tA\tx\t\n# note\nd1\t1\tB\tC\ty\t\n";
        let err = parse_corpus(text, Some(&labels)).unwrap_err();
        assert!(
            matches!(&err, Error::UnknownLabel { label, line: 3 } if label == "C"),
            "{err}"
        );
        // same via the in-file declaration
        let text = format!("#labels\tA\tB\n{text}");
        assert!(matches!(
            parse_corpus(&text, None),
            Err(Error::UnknownLabel { line: 4, .. })
        ));
    }

    #[test]
    fn turns_sorted_and_checked() {
        let text = "d\t1\tA\tX\tb\td\t0\tB\tX\ta\t\n";
        assert!(parse_corpus(text, None).is_err());
        let text = "d\t1\tA\tX\tb\t\nd\t0\tB\tX\ta\t\n";
        let c = parse_corpus(text, None).unwrap();
        assert_eq!(c.dialogues[0].turns[0].text_original, "a");
        let gap = "d\t0\tA\tX\ta\t\nd\t2\tB\tX\tb\t\n";
        assert!(matches!(parse_corpus(gap, None), Err(Error::Structure(_))));
        let dup = "d\t0\tA\tX\ta\t\nd\t0\tB\tX\tb\t\n";
        assert!(matches!(parse_corpus(dup, None), Err(Error::Structure(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_corpus("d\t0\tA\tX\ta\t\nbroken line\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_corpus("d\tzero\tA\tX\ta\t\n", None).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn embedding_format() {
        let t = parse_sentence_embeddings("dim=4\nd1 0 1.0 2.0 3.0 4.0\n").unwrap();
        assert_eq!(t.get("d1", 0), Some(&[1.0f32, 2.0, 3.0, 4.0][..]));
        let empty = parse_sentence_embeddings("dim=4\n").unwrap();
        assert_eq!((empty.dim(), empty.len()), (4, 0));
        let err = parse_sentence_embeddings("dim=4\nd1 0 1.0 2.0 3.0\n").unwrap_err();
        assert!(err.to_string().contains("(d1, 0)"), "{err}");
        assert!(parse_sentence_embeddings("4\n").is_err());
        let tabbed = parse_sentence_embeddings("dim=2\nd9\t3\t0.5 -1\n").unwrap();
        assert_eq!(tabbed.get("d9", 3), Some(&[0.5f32, -1.0][..]));
    }

    #[test]
    fn word_vector_format() {
        let t = parse_word_vectors("2 3\na 1 2 3\nb 0 0 1").unwrap();
        assert_eq!(t.get("a"), Some(&[1.0f32, 2.0, 3.0][..]));
        assert_eq!(t.get("b"), Some(&[0.0f32, 0.0, 1.0][..]));
        let empty = parse_word_vectors("0 300").unwrap();
        assert_eq!((empty.len(), empty.dim()), (0, 300));
        assert!(parse_word_vectors("2 3\na 1 2 3\n").is_err());
        assert!(parse_word_vectors("1 3\na 1 2\n").is_err());
        assert!(parse_word_vectors("2 1\na 1\na 2\n").is_err());
    }
}
