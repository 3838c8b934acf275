use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dialact::corpus::{
    load_corpus, load_sentence_embeddings, load_word_vectors, stratified_sample, Dataset, LabelSet,
    SentenceEmbeddingTable, WordVectorTable,
};
use dialact::models::{
    load_checkpoint, load_checkpoint_as, save_checkpoint, Classifier, ModelKind,
};
use dialact::pipeline::{
    cross_validate, evaluate_accuracy, evaluate_transfer, finetune as finetune_model,
    majority_class_baseline, prepare_examples, run_condition_suite, train_from_scratch,
    train_initial, training_accuracy, Condition, CvResult, Evaluation, SuiteConfig, SuiteData,
    TrainConfig, TrainingData,
};
use serde::Serialize;

use crate::config::{load_config, parse_conditions, FileConfig, PhaseOverrides};
use crate::table::distribution_table;
use crate::{
    BaselineArgs, Common, CvArgs, EvalArgs, Failure, FinetuneArgs, InspectArgs, SuiteArgs,
    TrainArgs,
};

type Outcome = Result<(), Failure>;

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Outcome {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::run(format!(
                "input file not found: {}",
                p.display()
            )));
        }
    }
    Ok(())
}

fn settings(common: &Common) -> Result<FileConfig, Failure> {
    match &common.config {
        None => Ok(FileConfig::default()),
        Some(path) => load_config(path)
            .map_err(|errors| Failure::run(format!("invalid config: {}", errors.join("; ")))),
    }
}

fn invalid(msg: String) -> Failure {
    Failure::run(format!("invalid config: {msg}"))
}

fn dataset(path: &Path) -> Result<Dataset, Failure> {
    let corpus =
        load_corpus(path, None).map_err(|e| Failure::run(format!("{}: {e}", path.display())))?;
    Ok(corpus.dataset())
}

fn embeddings(paths: &[PathBuf]) -> Result<SentenceEmbeddingTable, Failure> {
    let mut merged: Option<SentenceEmbeddingTable> = None;
    for p in paths {
        let table = load_sentence_embeddings(p)
            .map_err(|e| Failure::run(format!("{}: {e}", p.display())))?;
        match &mut merged {
            None => merged = Some(table),
            Some(m) => m.merge(&table)?,
        }
    }
    merged.ok_or_else(|| Failure::usage("at least one --embeddings file is required"))
}

fn word_vectors(
    path: Option<&PathBuf>,
    kind: ModelKind,
) -> Result<Option<WordVectorTable>, Failure> {
    match path {
        None => Ok(None),
        Some(_) if kind != ModelKind::Cnn => Err(Failure::usage(format!(
            "--word-vectors only applies to cnn models, not {kind}"
        ))),
        Some(p) => load_word_vectors(p)
            .map(Some)
            .map_err(|e| Failure::run(format!("{}: {e}", p.display()))),
    }
}

fn checkpoint(path: &Path, kind: Option<ModelKind>) -> Result<Classifier, Failure> {
    let loaded = match kind {
        Some(k) => load_checkpoint_as(path, k),
        None => load_checkpoint(path),
    };
    loaded.map_err(|e| Failure::run(format!("{}: {e}", path.display())))
}

/// Train and test sets over one label set: the training tags, then any tags
/// seen only in the test set.
fn shared_labels(train: Dataset, test: Dataset) -> Result<(Dataset, Dataset), Failure> {
    let mut tags = train.labels.tags().to_vec();
    for t in test.labels.tags() {
        if !tags.contains(t) {
            tags.push(t.clone());
        }
    }
    let labels = LabelSet::new(tags)?;
    Ok((
        Dataset::new(labels.clone(), train.turns)?,
        Dataset::new(labels, test.turns)?,
    ))
}

/// The whole corpus, or a stratified sample when one is requested.
fn training_set(path: &Path, sample: Option<usize>, seed: u64) -> Result<Dataset, Failure> {
    let data = dataset(path)?;
    match sample {
        None => Ok(data),
        Some(n) => Ok(stratified_sample(&data, n, seed)?),
    }
}

fn describe(kind: ModelKind, cfg: &TrainConfig) -> String {
    format!(
        "config: model={kind} epochs={} learning_rate={} batch_size={} freeze={} seed={}",
        cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.freeze, cfg.seed
    )
}

fn write(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text)
        .map_err(|e| Failure::run(format!("cannot write {}: {e}", path.display())))
}

fn json_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `text` to `path` and `json` next to it as `PATH.json`.
fn write_report(path: &Path, text: &str, json: &impl Serialize) -> Outcome {
    write(path, text)?;
    let body = serde_json::to_string_pretty(json).map_err(|e| Failure::run(e.to_string()))?;
    write(&json_path(path), &(body + "\n"))
}

fn model_kind(flag: Option<ModelKind>, file: &FileConfig) -> Result<ModelKind, Failure> {
    flag.or(file.model).ok_or_else(|| {
        Failure::usage("no model kind: pass --model or set `model` in the config file")
    })
}

pub fn train(a: &TrainArgs) -> Outcome {
    check_inputs(
        [&a.corpus]
            .into_iter()
            .chain(&a.embeddings)
            .chain(&a.word_vectors)
            .chain(&a.vocab_from)
            .chain(&a.common.config),
    )?;
    let file = settings(&a.common)?;
    let kind = model_kind(a.model, &file)?;
    let cfg = file
        .initial(&a.train.overrides(), file.seed(a.common.seed))
        .map_err(invalid)?;
    let data = dataset(&a.corpus)?;
    let table = embeddings(&a.embeddings)?;
    let wv = word_vectors(a.word_vectors.as_ref(), kind)?;
    let arch = file.architecture(kind, table.dim()).map_err(invalid)?;
    let extra = a
        .vocab_from
        .iter()
        .map(|p| dataset(p))
        .collect::<Result<Vec<_>, _>>()?;
    let extra: Vec<&Dataset> = extra.iter().collect();

    println!("{}", describe(kind, &cfg));
    let training = TrainingData {
        dataset: &data,
        embeddings: &table,
        word_vectors: wv.as_ref(),
    };
    let trained = train_initial(training, &arch, &extra, &cfg)?;
    let accuracy = training_accuracy(
        &trained.model,
        &prepare_examples(&trained.model, &data, &table)?,
    )?;
    save_checkpoint(&trained.model, &a.out)?;
    println!(
        "trained {kind} on {} turns, {} labels",
        data.len(),
        data.labels.len()
    );
    println!(
        "final loss: {}",
        trained.losses.last().copied().unwrap_or(f64::NAN)
    );
    println!("training accuracy: {accuracy}");
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

pub fn finetune(a: &FinetuneArgs) -> Outcome {
    check_inputs(
        [&a.from, &a.corpus]
            .into_iter()
            .chain(&a.embeddings)
            .chain(&a.common.config),
    )?;
    let file = settings(&a.common)?;
    let source = checkpoint(&a.from, a.model)?;
    let kind = source.kind();
    let cfg = file
        .finetune(kind, &a.train.overrides(), file.seed(a.common.seed))
        .map_err(invalid)?;
    let data = training_set(&a.corpus, a.sample.or(file.sample), cfg.seed)?;
    let table = embeddings(&a.embeddings)?;

    println!("{}", describe(kind, &cfg));
    let tuned = finetune_model(&source, &data, &table, &cfg)?;
    let accuracy = training_accuracy(
        &tuned.model,
        &prepare_examples(&tuned.model, &data, &table)?,
    )?;
    save_checkpoint(&tuned.model, &a.out)?;
    println!(
        "fine-tuned {kind} on {} turns, {} labels",
        data.len(),
        data.labels.len()
    );
    println!(
        "final loss: {}",
        tuned.losses.last().copied().unwrap_or(f64::NAN)
    );
    println!("training accuracy: {accuracy}");
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport<'a> {
    checkpoint: String,
    corpus: String,
    model: ModelKind,
    /// `model` when the corpus uses the model's tags, `by_tag` otherwise.
    label_mapping: &'a str,
    evaluation: &'a Evaluation,
}

pub fn eval(a: &EvalArgs) -> Outcome {
    check_inputs([&a.model, &a.corpus].into_iter().chain(&a.embeddings))?;
    let model = checkpoint(&a.model, None)?;
    let data = dataset(&a.corpus)?;
    let table = embeddings(&a.embeddings)?;
    let own_labels = data
        .labels
        .tags()
        .iter()
        .all(|t| model.labels().index_of(t).is_some());
    let (evaluation, mapping) = if own_labels {
        (evaluate_accuracy(&model, &data, &table)?, "model")
    } else {
        (evaluate_transfer(&model, &data, &table)?, "by_tag")
    };
    println!(
        "accuracy: {} ({}/{})",
        evaluation.accuracy, evaluation.correct, evaluation.total
    );

    let report = EvalReport {
        checkpoint: a.model.display().to_string(),
        corpus: a.corpus.display().to_string(),
        model: model.kind(),
        label_mapping: mapping,
        evaluation: &evaluation,
    };
    let mut text = String::from("evaluation report\n");
    let _ = writeln!(text, "checkpoint: {}", report.checkpoint);
    let _ = writeln!(text, "corpus: {}", report.corpus);
    let _ = writeln!(text, "model: {}", report.model);
    let _ = writeln!(text, "label_mapping: {mapping}");
    let _ = writeln!(text, "accuracy: {}", evaluation.accuracy);
    let _ = writeln!(text, "correct: {}", evaluation.correct);
    let _ = writeln!(text, "total: {}", evaluation.total);
    let _ = writeln!(text, "confusion:");
    text.push_str(&evaluation.confusion.render());
    let path = a
        .report
        .clone()
        .unwrap_or_else(|| a.model.with_extension("eval.txt"));
    write_report(&path, &text, &report)?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct CvReport<'a> {
    model: ModelKind,
    mode: &'a str,
    folds: usize,
    seed: u64,
    training: &'a TrainConfig,
    result: &'a CvResult,
}

pub fn cv(a: &CvArgs) -> Outcome {
    check_inputs(
        [&a.corpus]
            .into_iter()
            .chain(&a.embeddings)
            .chain(&a.from)
            .chain(&a.word_vectors)
            .chain(&a.common.config),
    )?;
    let file = settings(&a.common)?;
    let seed = file.seed(a.common.seed);
    let k = file.folds(a.folds);
    let data = dataset(&a.corpus)?;
    let table = embeddings(&a.embeddings)?;
    let source = a.from.as_ref().map(|p| checkpoint(p, None)).transpose()?;
    let kind = match &source {
        Some(m) => m.kind(),
        None => model_kind(a.model, &file)?,
    };
    let wv = word_vectors(a.word_vectors.as_ref(), kind)?;
    if source.is_some() && wv.is_some() {
        return Err(Failure::usage(
            "--word-vectors cannot be combined with --from",
        ));
    }
    let (cfg, mode) = match &source {
        Some(_) => (file.finetune(kind, &a.train.overrides(), seed), "finetune"),
        None => (file.initial(&a.train.overrides(), seed), "scratch"),
    };
    let cfg = cfg.map_err(invalid)?;
    let arch = file.architecture(kind, table.dim()).map_err(invalid)?;

    println!("{}", describe(kind, &cfg));
    let result = cross_validate(data.len(), k, seed, |fold, train_idx, test_idx| {
        let train = data.subset(train_idx);
        let test = data.subset(test_idx);
        let fold_cfg = cfg.with_seed(seed + fold as u64);
        let model = match &source {
            Some(m) => finetune_model(m, &train, &table, &fold_cfg)?.model,
            None => {
                let training = TrainingData {
                    dataset: &train,
                    embeddings: &table,
                    word_vectors: wv.as_ref(),
                };
                train_from_scratch(training, &arch, &fold_cfg)?.model
            }
        };
        evaluate_accuracy(&model, &test, &table)
    })?;

    let mut text = String::from("cross-validation report\n");
    let _ = writeln!(text, "model: {kind}");
    let _ = writeln!(text, "mode: {mode}");
    let _ = writeln!(text, "folds: {k}");
    let _ = writeln!(text, "seed: {seed}");
    let _ = writeln!(
        text,
        "training: epochs={} learning_rate={} batch_size={} freeze={}",
        cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.freeze
    );
    let accs: Vec<String> = result.folds.accuracies.iter().map(f64::to_string).collect();
    let _ = writeln!(text, "fold accuracies: {}", accs.join(" "));
    let _ = writeln!(text, "mean: {}", result.folds.mean);
    let _ = writeln!(text, "std: {}", result.folds.std);
    let _ = writeln!(
        text,
        "pooled accuracy: {} ({}/{})",
        result.pooled_accuracy, result.correct, result.total
    );
    if let Some(m) = &result.folds.confusion {
        let _ = writeln!(text, "confusion (last fold):");
        text.push_str(&m.render());
    }
    print!("{text}");
    if let Some(path) = &a.report {
        let json = CvReport {
            model: kind,
            mode,
            folds: k,
            seed,
            training: &cfg,
            result: &result,
        };
        write_report(path, &text, &json)?;
    }
    Ok(())
}

pub fn suite(a: &SuiteArgs) -> Outcome {
    check_inputs(
        [&a.corpus, &a.test]
            .into_iter()
            .chain(&a.embeddings)
            .chain(&a.from)
            .chain(&a.word_vectors)
            .chain(&a.common.config),
    )?;
    let file = settings(&a.common)?;
    let seed = file.seed(a.common.seed);
    let conditions = match &a.conditions {
        Some(list) => parse_conditions(list).map_err(Failure::usage)?,
        None => file.conditions.clone().unwrap_or_else(|| {
            if a.from.is_some() {
                Condition::ALL.to_vec()
            } else {
                vec![Condition::Majority, Condition::Scratch]
            }
        }),
    };
    let source = a.from.as_ref().map(|p| checkpoint(p, None)).transpose()?;
    let kind = match (a.model.or(file.model), &source) {
        (Some(k), _) => k,
        (None, Some(m)) => m.kind(),
        (None, None) if conditions.contains(&Condition::Scratch) => {
            return Err(model_kind(None, &file).unwrap_err())
        }
        (None, None) => ModelKind::Mlp,
    };
    let finetune_kind = source.as_ref().map_or(kind, Classifier::kind);
    let scratch = file
        .initial(&PhaseOverrides::default(), seed)
        .map_err(invalid)?;
    let finetune = file
        .finetune(finetune_kind, &a.train.overrides(), seed)
        .map_err(invalid)?;
    let (train, test) = shared_labels(
        training_set(&a.corpus, a.sample.or(file.sample), seed)?,
        dataset(&a.test)?,
    )?;
    let table = embeddings(&a.embeddings)?;
    let wv = word_vectors(a.word_vectors.as_ref(), kind)?;
    let cfg = SuiteConfig {
        conditions,
        runs: file.runs(a.runs),
        seed,
        architecture: file.architecture(kind, table.dim()).map_err(invalid)?,
        scratch,
        finetune,
    };
    let data = SuiteData {
        source_model: source.as_ref(),
        target_train: &train,
        target_test: &test,
        embeddings: &table,
        word_vectors: wv.as_ref(),
    };
    let report = run_condition_suite(&cfg, data)?;
    let report = if a.timing {
        report
    } else {
        report.without_timing()
    };
    let text = report.render_text();
    print!("{text}");
    if let Some(path) = &a.report {
        write_report(path, &text, &report)?;
    }
    Ok(())
}

pub fn baseline(a: &BaselineArgs) -> Outcome {
    check_inputs([&a.corpus, &a.test])?;
    let (train, test) = shared_labels(dataset(&a.corpus)?, dataset(&a.test)?)?;
    let mc = majority_class_baseline(&train, &test)?;
    let hits = test.turns.iter().filter(|t| t.label == mc.label).count();
    println!("majority label: {}", mc.label);
    println!("accuracy: {} ({hits}/{})", mc.accuracy, test.len());
    Ok(())
}

pub fn inspect(a: &InspectArgs) -> Outcome {
    check_inputs([&a.corpus])?;
    let corpus = load_corpus(&a.corpus, None)
        .map_err(|e| Failure::run(format!("{}: {e}", a.corpus.display())))?;
    let data = corpus.dataset();
    if data.is_empty() {
        return Err(Failure::run(format!(
            "{}: corpus holds no turns",
            a.corpus.display()
        )));
    }
    print!("{}", distribution_table(&data));
    println!(
        "\n{} turns in {} dialogues, {} labels",
        data.len(),
        corpus.dialogues.len(),
        data.labels.len()
    );
    Ok(())
}
