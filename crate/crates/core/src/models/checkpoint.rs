//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "DIALACT\0"
//! u32       format version
//! u64       metadata length M
//! M bytes   JSON metadata: architecture, labels, vocabulary
//! u32       tensor count N
//! N times:  u32 name length, name, u32 rank, rank × u64 dims, f32 values
//! 32 bytes  SHA-256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Architecture, Classifier, ModelKind};
use crate::corpus::{LabelSet, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"DIALACT\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Metadata {
    architecture: Architecture,
    labels: Vec<String>,
    vocabulary: Option<Vec<String>>,
}

pub fn write_checkpoint(model: &Classifier<f32>) -> Result<Vec<u8>> {
    let meta = Metadata {
        architecture: model.architecture().clone(),
        labels: model.labels().tags().to_vec(),
        vocabulary: model.vocab().map(|v| v.tokens().to_vec()),
    };
    let json =
        serde_json::to_vec(&meta).map_err(|e| Error::State(format!("metadata encoding: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, value) in model.params().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.rank() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated while reading {what}"
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?)
            .map_err(|_| Error::CorruptCheckpoint(format!("{what} overflows")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Classifier<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic").ok() != Some(MAGIC.as_slice()) {
        return Err(Error::CorruptCheckpoint("not a checkpoint file".into()));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < r.pos + DIGEST_LEN {
        return Err(Error::CorruptCheckpoint("truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    let mut r = Reader {
        bytes: body,
        pos: r.pos,
    };

    let meta_len = r.len("metadata length")?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::CorruptCheckpoint(format!("metadata: {e}")))?;
    let labels =
        LabelSet::new(meta.labels).map_err(|e| Error::CorruptCheckpoint(format!("labels: {e}")))?;
    let vocab = meta.vocabulary.map(Vocabulary::from_tokens);
    let vocab_len = vocab.as_ref().map_or(0, Vocabulary::len);
    let expected = meta.architecture.param_shapes(labels.len(), vocab_len);

    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{count} tensors, architecture `{}` needs {}",
            meta.architecture.kind(),
            expected.len()
        )));
    }
    let mut params = ParamStore::new();
    for (want_name, want_shape) in &expected {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32("tensor rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.len("tensor dims"))
            .collect::<Result<Vec<_>>>()?;
        if name != want_name || &shape != want_shape {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor `{name}` {shape:?} does not match `{want_name}` {want_shape:?} of architecture `{}`",
                meta.architecture.kind()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "tensor values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint(
            "trailing bytes after tensors".into(),
        ));
    }
    Ok(Classifier::from_parts(
        meta.architecture,
        labels,
        vocab,
        params,
    ))
}

pub fn save_checkpoint(model: &Classifier<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Classifier<f32>> {
    let path = path.as_ref();
    read_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// [`load_checkpoint`] that also insists on the model kind.
pub fn load_checkpoint_as(path: impl AsRef<Path>, kind: ModelKind) -> Result<Classifier<f32>> {
    let model = load_checkpoint(path)?;
    if model.kind() != kind {
        return Err(Error::ArchitectureMismatch {
            found: model.kind().to_string(),
            expected: kind.to_string(),
        });
    }
    Ok(model)
}
