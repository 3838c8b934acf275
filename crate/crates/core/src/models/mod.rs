//! The three turn classifiers. Each maps (previous-turn vector, current-turn
//! representation) to logits over a label set through a detachable
//! classification head (`head.weight`, `head.bias`).

mod checkpoint;
mod cnn;
mod mhsatt;
mod mlp;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, Vocabulary, WordVectorTable, PAD, WINDOW};
use crate::error::{Error, Result};
use crate::nn::{
    init_bias, init_weight, seeded_rng, Graph, ParamStore, Scalar, SeededRng, Tensor, Var,
};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_as, read_checkpoint, save_checkpoint, write_checkpoint,
    FORMAT_VERSION,
};
pub use cnn::cnn_forward;
pub use mhsatt::mhsatt_forward;
pub use mlp::mlp_forward;

pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

pub fn is_head_param(name: &str) -> bool {
    name.starts_with("head.")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Cnn,
    MhSatt,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
            ModelKind::MhSatt => "mhsatt",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "cnn" => Ok(ModelKind::Cnn),
            "mhsatt" | "mh-satt" => Ok(ModelKind::MhSatt),
            other => Err(Error::config(format!(
                "unknown model kind `{other}` (mlp, cnn, mhsatt)"
            ))),
        }
    }
}

/// Sentence-vector MLP: `[prev ⧺ current] → dense(hidden) → ReLU → dropout → head`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 1024,
            hidden: 512,
            dropout: 0.5,
        }
    }
}

/// Convolutional turn encoder over a token window, joined with the
/// previous-turn vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub context_dim: usize,
    /// Word embedding width; taken from the word vectors when those are used.
    pub word_dim: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub window: usize,
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            context_dim: 1024,
            word_dim: 128,
            filters: 256,
            kernel_width: 3,
            window: WINDOW,
            dropout: 0.5,
        }
    }
}

/// Self-attention turn encoder over one token window, or over the translated
/// and original windows joined along the position axis when `stacked`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MhSattConfig {
    pub context_dim: usize,
    pub d_model: usize,
    pub heads: usize,
    pub window: usize,
    pub stacked: bool,
    pub dropout: f64,
}

impl Default for MhSattConfig {
    fn default() -> Self {
        Self {
            context_dim: 1024,
            d_model: 128,
            heads: 4,
            window: WINDOW,
            stacked: true,
            dropout: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Mlp(MlpConfig),
    Cnn(CnnConfig),
    MhSatt(MhSattConfig),
}

impl Architecture {
    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Mlp(_) => ModelKind::Mlp,
            Architecture::Cnn(_) => ModelKind::Cnn,
            Architecture::MhSatt(_) => ModelKind::MhSatt,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mlp => Architecture::Mlp(MlpConfig::default()),
            ModelKind::Cnn => Architecture::Cnn(CnnConfig::default()),
            ModelKind::MhSatt => Architecture::MhSatt(MhSattConfig::default()),
        }
    }

    /// Width of the sentence vectors the model consumes.
    pub fn context_dim(&self) -> usize {
        match self {
            Architecture::Mlp(c) => c.embedding_dim,
            Architecture::Cnn(c) => c.context_dim,
            Architecture::MhSatt(c) => c.context_dim,
        }
    }

    /// Width of the features the head reads.
    pub fn feature_dim(&self) -> usize {
        match self {
            Architecture::Mlp(c) => c.hidden,
            Architecture::Cnn(c) => c.filters + c.context_dim,
            Architecture::MhSatt(c) => c.d_model + c.context_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::config(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        let dropout = |p: f64| {
            if (0.0..1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(format!("dropout {p} outside [0, 1)")))
            }
        };
        match self {
            Architecture::Mlp(c) => {
                positive("embedding_dim", c.embedding_dim)?;
                positive("hidden", c.hidden)?;
                dropout(c.dropout)
            }
            Architecture::Cnn(c) => {
                positive("context_dim", c.context_dim)?;
                positive("word_dim", c.word_dim)?;
                positive("filters", c.filters)?;
                positive("kernel_width", c.kernel_width)?;
                if c.window < c.kernel_width.max(2) {
                    return Err(Error::config(format!(
                        "window {} shorter than kernel width {}",
                        c.window, c.kernel_width
                    )));
                }
                dropout(c.dropout)
            }
            Architecture::MhSatt(c) => {
                positive("context_dim", c.context_dim)?;
                positive("d_model", c.d_model)?;
                positive("heads", c.heads)?;
                if c.d_model % c.heads != 0 {
                    return Err(Error::config(format!(
                        "d_model {} is not divisible by {} heads",
                        c.d_model, c.heads
                    )));
                }
                if c.window < 2 {
                    return Err(Error::config("window must hold at least two tokens"));
                }
                dropout(c.dropout)
            }
        }
    }

    /// Parameter names and shapes in store order.
    pub fn param_shapes(&self, labels: usize, vocab: usize) -> Vec<(String, Vec<usize>)> {
        let mut shapes: Vec<(&str, Vec<usize>)> = match self {
            Architecture::Mlp(c) => vec![
                ("hidden.weight", vec![c.hidden, 2 * c.embedding_dim]),
                ("hidden.bias", vec![c.hidden]),
            ],
            Architecture::Cnn(c) => vec![
                ("embedding", vec![vocab, c.word_dim]),
                ("conv.kernels", vec![c.filters, c.kernel_width, c.word_dim]),
                ("conv.bias", vec![c.filters]),
            ],
            Architecture::MhSatt(c) => vec![
                ("embedding", vec![vocab, c.d_model]),
                ("attention.query", vec![c.d_model, c.d_model]),
                ("attention.key", vec![c.d_model, c.d_model]),
                ("attention.value", vec![c.d_model, c.d_model]),
                ("attention.output", vec![c.d_model, c.d_model]),
            ],
        };
        shapes.push((HEAD_WEIGHT, vec![labels, self.feature_dim()]));
        shapes.push((HEAD_BIAS, vec![labels]));
        shapes
            .into_iter()
            .map(|(n, s)| (n.to_string(), s))
            .collect()
    }
}

/// Inputs of one turn, already featurised.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput {
    /// Sentence vectors of the previous and current turn.
    Vectors { prev: Vec<f32>, current: Vec<f32> },
    /// One token window plus the previous-turn vector.
    Tokens { ids: Vec<usize>, prev: Vec<f32> },
    /// Translated and original-language windows plus the previous-turn vector.
    Stacked {
        translated: Vec<usize>,
        original: Vec<usize>,
        prev: Vec<f32>,
    },
}

/// Dropout is only active in `Train`.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeededRng),
}

impl Mode<'_> {
    pub(crate) fn dropout<T: Scalar>(
        &mut self,
        g: &mut Graph<T>,
        x: Var,
        rate: f64,
    ) -> Result<Var> {
        match self {
            Mode::Train(rng) if rate > 0.0 => g.dropout(x, rate, *rng),
            _ => Ok(x),
        }
    }
}

pub(crate) fn vector_input<T: Scalar>(
    g: &mut Graph<T>,
    v: &[f32],
    expected: usize,
    what: &str,
) -> Result<Var> {
    if v.len() != expected {
        return Err(Error::dim(
            "classifier input",
            format!("{what} has width {}, expected {expected}", v.len()),
        ));
    }
    let data = v.iter().map(|&x| T::lit(f64::from(x))).collect();
    Ok(g.input(Tensor::vector(data)))
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict<T: Scalar>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

fn head_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}

const INIT_HEAD_STREAM: u64 = 1;
const REPLACE_HEAD_STREAM: u64 = 2;

/// A classifier: architecture, label set, vocabulary (token models) and
/// parameters.
#[derive(Clone, Debug)]
pub struct Classifier<T: Scalar = f32> {
    architecture: Architecture,
    labels: LabelSet,
    vocab: Option<Vocabulary>,
    params: ParamStore<T>,
}

impl<T: Scalar> Classifier<T> {
    /// Fresh model: Glorot-uniform weights, zero biases, a zero `<pad>`
    /// embedding row. A CNN copies rows of `word_vectors` for the tokens it
    /// knows, and takes its word width from them.
    pub fn new(
        architecture: Architecture,
        labels: LabelSet,
        vocab: Option<Vocabulary>,
        word_vectors: Option<&WordVectorTable>,
        seed: u64,
    ) -> Result<Self> {
        let mut architecture = architecture;
        if let (Architecture::Cnn(c), Some(wv)) = (&mut architecture, word_vectors) {
            c.word_dim = wv.dim();
        }
        architecture.validate()?;
        if labels.is_empty() {
            return Err(Error::config("label set is empty"));
        }
        let vocab_len = match (&architecture, &vocab) {
            (Architecture::Mlp(_), _) => 0,
            (_, Some(v)) => v.len(),
            (_, None) => {
                return Err(Error::config(format!(
                    "{} model needs a vocabulary",
                    architecture.kind()
                )))
            }
        };
        let mut rng = seeded_rng(seed);
        let mut head = head_rng(seed, INIT_HEAD_STREAM);
        let mut params = ParamStore::new();
        for (name, shape) in architecture.param_shapes(labels.len(), vocab_len) {
            let rng: &mut ChaCha8Rng = if is_head_param(&name) {
                &mut head
            } else {
                &mut rng
            };
            let value = init_tensor(&name, &shape, rng);
            params.insert(name, value)?;
        }
        let mut model = Self {
            architecture,
            labels,
            vocab,
            params,
        };
        if let Some(id) = model.params.id("embedding") {
            let table = model.params.value_mut(id);
            let d = table.shape()[1];
            table.data_mut()[PAD * d..(PAD + 1) * d].fill(T::zero());
            if let (Some(wv), Some(vocab)) = (word_vectors, &model.vocab) {
                for (tok_id, tok) in vocab.tokens().iter().enumerate().skip(2) {
                    if let Some(v) = wv.get(tok) {
                        for (dst, &src) in table.data_mut()[tok_id * d..(tok_id + 1) * d]
                            .iter_mut()
                            .zip(v)
                        {
                            *dst = T::lit(f64::from(src));
                        }
                    }
                }
            }
        }
        Ok(model)
    }

    pub(crate) fn from_parts(
        architecture: Architecture,
        labels: LabelSet,
        vocab: Option<Vocabulary>,
        params: ParamStore<T>,
    ) -> Self {
        Self {
            architecture,
            labels,
            vocab,
            params,
        }
    }

    /// Same model with another parameter store of identical names and shapes.
    pub fn with_params(&self, params: ParamStore<T>) -> Result<Self> {
        let same = params.len() == self.params.len()
            && self
                .params
                .iter()
                .zip(params.iter())
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same {
            return Err(Error::config(
                "parameter store does not match the architecture",
            ));
        }
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn kind(&self) -> ModelKind {
        self.architecture.kind()
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn vocab(&self) -> Option<&Vocabulary> {
        self.vocab.as_ref()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Switches an attention model between one-window and two-window input.
    /// Parameters do not depend on it.
    pub fn set_stacked(&mut self, stacked: bool) -> Result<()> {
        match &mut self.architecture {
            Architecture::MhSatt(c) => {
                c.stacked = stacked;
                Ok(())
            }
            other => Err(Error::config(format!(
                "{} model has no stacked mode",
                other.kind()
            ))),
        }
    }

    /// Records the forward pass on `g` and returns the logits node.
    pub fn forward(&self, g: &mut Graph<T>, input: &ModelInput, mode: Mode<'_>) -> Result<Var> {
        match &self.architecture {
            Architecture::Mlp(cfg) => match input {
                ModelInput::Vectors { prev, current } => {
                    mlp_forward(g, &self.params, cfg, prev, current, mode)
                }
                _ => Err(Error::config("mlp model expects sentence-vector input")),
            },
            Architecture::Cnn(cfg) => match input {
                ModelInput::Tokens { ids, prev } => {
                    cnn_forward(g, &self.params, cfg, ids, prev, mode)
                }
                _ => Err(Error::config("cnn model expects a single token window")),
            },
            Architecture::MhSatt(cfg) => match input {
                ModelInput::Tokens { ids, prev } => {
                    mhsatt_forward(g, &self.params, cfg, ids, None, prev, mode)
                }
                ModelInput::Stacked {
                    translated,
                    original,
                    prev,
                } => mhsatt_forward(g, &self.params, cfg, translated, Some(original), prev, mode),
                _ => Err(Error::config("mhsatt model expects token-window input")),
            },
        }
    }

    /// Inference-mode logits.
    pub fn logits(&self, input: &ModelInput) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, Mode::Eval)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn predict(&self, input: &ModelInput) -> Result<usize> {
        Ok(predict(&self.logits(input)?))
    }

    /// Discards the classification head and draws a fresh one sized for
    /// `labels`. Every other tensor is left untouched.
    pub fn replace_head(&mut self, labels: LabelSet, seed: u64) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::config("replacement label set is empty"));
        }
        let mut rng = head_rng(seed, REPLACE_HEAD_STREAM);
        let shapes = self.architecture.param_shapes(labels.len(), 0);
        for (name, shape) in shapes.into_iter().filter(|(n, _)| is_head_param(n)) {
            let value = init_tensor(&name, &shape, &mut rng);
            self.params.replace(&name, value)?;
        }
        self.labels = labels;
        Ok(())
    }

    /// `(name, checksum)` of every non-head tensor.
    pub fn body_checksums(&self) -> Vec<(String, String)> {
        self.params
            .checksums()
            .into_iter()
            .filter(|(n, _)| !is_head_param(n))
            .collect()
    }

    /// Copy at another precision (optimizer state is not carried over).
    pub fn cast<U: Scalar>(&self) -> Classifier<U> {
        Classifier {
            architecture: self.architecture.clone(),
            labels: self.labels.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
        }
    }
}

fn init_tensor<T: Scalar, R: Rng + ?Sized>(name: &str, shape: &[usize], rng: &mut R) -> Tensor<T> {
    if name.ends_with(".bias") {
        init_bias(shape[0])
    } else {
        init_weight(shape, rng)
    }
}
