//! Optional settings file: `key = value` lines, `#` comments, and the
//! sections `[initial]`, `[finetune]` and `[model]`. Keys before the first
//! section header are global. Every problem in a file is collected and
//! reported together.

use std::path::Path;
use std::str::FromStr;

use dialact::models::{Architecture, ModelKind};
use dialact::pipeline::{Condition, FreezePolicy, TrainConfig, DEFAULT_RUNS};

pub const DEFAULT_FOLDS: usize = 10;

/// Values one training phase may override.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub freeze: Option<FreezePolicy>,
}

impl PhaseOverrides {
    /// `self` where set, `other` elsewhere.
    pub fn or(&self, other: &PhaseOverrides) -> PhaseOverrides {
        PhaseOverrides {
            epochs: self.epochs.or(other.epochs),
            learning_rate: self.learning_rate.or(other.learning_rate),
            batch_size: self.batch_size.or(other.batch_size),
            freeze: self.freeze.or(other.freeze),
        }
    }

    pub fn apply(&self, mut cfg: TrainConfig) -> Result<TrainConfig, String> {
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(f) = self.freeze {
            cfg.freeze = f;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelOverrides {
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub word_dim: Option<usize>,
    pub filters: Option<usize>,
    pub kernel_width: Option<usize>,
    pub window: Option<usize>,
    pub d_model: Option<usize>,
    pub heads: Option<usize>,
    pub stacked: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub runs: Option<usize>,
    pub folds: Option<usize>,
    pub sample: Option<usize>,
    pub conditions: Option<Vec<Condition>>,
    pub initial: PhaseOverrides,
    pub finetune: PhaseOverrides,
    pub arch: ModelOverrides,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Global,
    Initial,
    Finetune,
    Model,
}

impl Section {
    fn label(self) -> &'static str {
        match self {
            Section::Global => "global section",
            Section::Initial => "[initial]",
            Section::Finetune => "[finetune]",
            Section::Model => "[model]",
        }
    }
}

fn number<T>(value: &str, min: T, what: &str) -> Result<T, String>
where
    T: FromStr + PartialOrd + std::fmt::Display,
{
    let v: T = value
        .parse()
        .map_err(|_| format!("`{what}` expects an integer, got `{value}`"))?;
    if v < min {
        return Err(format!("`{what}` must be at least {min}, got {value}"));
    }
    Ok(v)
}

fn positive_real(value: &str, what: &str) -> Result<f64, String> {
    let v: f64 = value
        .parse()
        .map_err(|_| format!("`{what}` expects a number, got `{value}`"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("`{what}` must be a positive number, got {value}"));
    }
    Ok(v)
}

fn probability(value: &str, what: &str) -> Result<f64, String> {
    let v: f64 = value
        .parse()
        .map_err(|_| format!("`{what}` expects a number, got `{value}`"))?;
    if !(0.0..1.0).contains(&v) {
        return Err(format!("`{what}` must lie in [0, 1), got {value}"));
    }
    Ok(v)
}

fn boolean(value: &str, what: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{what}` expects true or false, got `{value}`")),
    }
}

pub fn parse_conditions(value: &str) -> Result<Vec<Condition>, String> {
    let mut out: Vec<Condition> = Vec::new();
    for part in value.split(',').map(str::trim) {
        let c: Condition = part.parse().map_err(|e: dialact::Error| e.to_string())?;
        if out.contains(&c) {
            return Err(format!("condition `{c}` listed twice"));
        }
        out.push(c);
    }
    Ok(out)
}

fn set<T>(slot: &mut Option<T>, value: Result<T, String>, key: &str) -> Result<(), String> {
    if slot.is_some() {
        return Err(format!("duplicate key `{key}`"));
    }
    *slot = Some(value?);
    Ok(())
}

fn phase_key(p: &mut PhaseOverrides, key: &str, value: &str) -> Option<Result<(), String>> {
    Some(match key {
        "epochs" => set(&mut p.epochs, number(value, 1usize, key), key),
        "learning_rate" => set(&mut p.learning_rate, positive_real(value, key), key),
        "batch_size" => set(&mut p.batch_size, number(value, 1usize, key), key),
        "freeze" => set(
            &mut p.freeze,
            value.parse().map_err(|e: dialact::Error| e.to_string()),
            key,
        ),
        _ => return None,
    })
}

fn model_key(m: &mut ModelOverrides, key: &str, value: &str) -> Option<Result<(), String>> {
    Some(match key {
        "hidden" => set(&mut m.hidden, number(value, 1usize, key), key),
        "dropout" => set(&mut m.dropout, probability(value, key), key),
        "word_dim" => set(&mut m.word_dim, number(value, 1usize, key), key),
        "filters" => set(&mut m.filters, number(value, 1usize, key), key),
        "kernel_width" => set(&mut m.kernel_width, number(value, 1usize, key), key),
        "window" => set(&mut m.window, number(value, 2usize, key), key),
        "d_model" => set(&mut m.d_model, number(value, 1usize, key), key),
        "heads" => set(&mut m.heads, number(value, 1usize, key), key),
        "stacked" => set(&mut m.stacked, boolean(value, key), key),
        _ => return None,
    })
}

fn global_key(c: &mut FileConfig, key: &str, value: &str) -> Option<Result<(), String>> {
    Some(match key {
        "seed" => set(&mut c.seed, number(value, 0u64, key), key),
        "model" => set(
            &mut c.model,
            value.parse().map_err(|e: dialact::Error| e.to_string()),
            key,
        ),
        "runs" => set(&mut c.runs, number(value, 1usize, key), key),
        "folds" => set(&mut c.folds, number(value, 2usize, key), key),
        "sample" => set(&mut c.sample, number(value, 1usize, key), key),
        "conditions" => set(&mut c.conditions, parse_conditions(value), key),
        _ => return None,
    })
}

/// Parses settings text; `origin` prefixes every error.
pub fn parse_config(text: &str, origin: &str) -> Result<FileConfig, Vec<String>> {
    let mut cfg = FileConfig::default();
    let mut errors = Vec::new();
    let mut section = Section::Global;
    for (i, raw) in text.lines().enumerate() {
        let at = |msg: String| format!("{origin}:{}: {msg}", i + 1);
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name.trim() {
                "initial" => Section::Initial,
                "finetune" => Section::Finetune,
                "model" => Section::Model,
                other => {
                    errors.push(at(format!(
                        "unknown section `[{other}]` (initial, finetune, model)"
                    )));
                    continue;
                }
            };
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(at(format!("expected `key = value`, found `{line}`")));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let outcome = match section {
            Section::Global => global_key(&mut cfg, key, value),
            Section::Initial => phase_key(&mut cfg.initial, key, value),
            Section::Finetune => phase_key(&mut cfg.finetune, key, value),
            Section::Model => model_key(&mut cfg.arch, key, value),
        };
        match outcome {
            None => errors.push(at(format!("unknown key `{key}` in {}", section.label()))),
            Some(Err(e)) => errors.push(at(e)),
            Some(Ok(())) => {}
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

pub fn load_config(path: &Path) -> Result<FileConfig, Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    parse_config(&text, &path.display().to_string())
}

impl FileConfig {
    /// Architecture of `kind` reading sentence vectors of width
    /// `context_dim`: built-in sizes, then `[model]` overrides.
    pub fn architecture(
        &self,
        kind: ModelKind,
        context_dim: usize,
    ) -> Result<Architecture, String> {
        let m = &self.arch;
        let mut unused = Vec::new();
        let mut arch = Architecture::default_for(kind);
        match &mut arch {
            Architecture::Mlp(c) => {
                c.embedding_dim = context_dim;
                c.hidden = m.hidden.unwrap_or(c.hidden);
                c.dropout = m.dropout.unwrap_or(c.dropout);
                let other = [
                    ("word_dim", m.word_dim.is_some()),
                    ("filters", m.filters.is_some()),
                    ("kernel_width", m.kernel_width.is_some()),
                    ("window", m.window.is_some()),
                    ("d_model", m.d_model.is_some()),
                    ("heads", m.heads.is_some()),
                    ("stacked", m.stacked.is_some()),
                ];
                unused.extend(other.iter().filter(|(_, s)| *s).map(|(k, _)| *k));
            }
            Architecture::Cnn(c) => {
                c.context_dim = context_dim;
                c.word_dim = m.word_dim.unwrap_or(c.word_dim);
                c.filters = m.filters.unwrap_or(c.filters);
                c.kernel_width = m.kernel_width.unwrap_or(c.kernel_width);
                c.window = m.window.unwrap_or(c.window);
                c.dropout = m.dropout.unwrap_or(c.dropout);
                let other = [
                    ("hidden", m.hidden.is_some()),
                    ("d_model", m.d_model.is_some()),
                    ("heads", m.heads.is_some()),
                    ("stacked", m.stacked.is_some()),
                ];
                unused.extend(other.iter().filter(|(_, s)| *s).map(|(k, _)| *k));
            }
            Architecture::MhSatt(c) => {
                c.context_dim = context_dim;
                c.d_model = m.d_model.unwrap_or(c.d_model);
                c.heads = m.heads.unwrap_or(c.heads);
                c.window = m.window.unwrap_or(c.window);
                c.stacked = m.stacked.unwrap_or(c.stacked);
                c.dropout = m.dropout.unwrap_or(c.dropout);
                let other = [
                    ("hidden", m.hidden.is_some()),
                    ("word_dim", m.word_dim.is_some()),
                    ("filters", m.filters.is_some()),
                    ("kernel_width", m.kernel_width.is_some()),
                ];
                unused.extend(other.iter().filter(|(_, s)| *s).map(|(k, _)| *k));
            }
        }
        if !unused.is_empty() {
            return Err(format!(
                "[model] keys {} do not apply to {kind} models",
                unused
                    .iter()
                    .map(|k| format!("`{k}`"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        arch.validate().map_err(|e| e.to_string())?;
        Ok(arch)
    }

    /// Initial-phase settings: flags, then the file, then 200 epochs at 0.002.
    pub fn initial(&self, flags: &PhaseOverrides, seed: u64) -> Result<TrainConfig, String> {
        flags.or(&self.initial).apply(TrainConfig::initial(seed))
    }

    /// Fine-tuning settings: flags, then the file, then the per-kind defaults.
    pub fn finetune(
        &self,
        kind: ModelKind,
        flags: &PhaseOverrides,
        seed: u64,
    ) -> Result<TrainConfig, String> {
        flags
            .or(&self.finetune)
            .apply(TrainConfig::finetune(kind, seed))
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    pub fn runs(&self, flag: Option<usize>) -> usize {
        flag.or(self.runs).unwrap_or(DEFAULT_RUNS)
    }

    pub fn folds(&self, flag: Option<usize>) -> usize {
        flag.or(self.folds).unwrap_or(DEFAULT_FOLDS)
    }
}
