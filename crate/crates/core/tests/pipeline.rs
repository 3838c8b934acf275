use dialact::corpus::{Dataset, LabelSet, SentenceEmbeddingTable, Turn};
use dialact::models::{Architecture, ModelKind};
use dialact::nn::seeded_rng;
use dialact::pipeline::{
    cross_validate, evaluate_accuracy, finetune, run_condition_suite, train_initial, Condition,
    FreezePolicy, SuiteConfig, SuiteData, TrainConfig, TrainingData,
};
use dialact::synthetic::{
    desk_architecture, separable_corpus, transfer_task, SyntheticCorpus, TransferSpec,
};
use dialact::Error;
use rand::Rng;

const KINDS: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::Cnn, ModelKind::MhSatt];

fn corpus() -> SyntheticCorpus {
    separable_corpus(4, 100, 16, 5).unwrap()
}

fn data(c: &SyntheticCorpus) -> TrainingData<'_> {
    TrainingData {
        dataset: &c.dataset,
        embeddings: &c.embeddings,
        word_vectors: None,
    }
}

fn config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::initial(seed)
    }
}

/// The corpus with every sentence vector scaled to unit length, the scale
/// of normalised encoder output.
fn unit_norm(table: &SentenceEmbeddingTable) -> SentenceEmbeddingTable {
    let mut out = SentenceEmbeddingTable::new(table.dim()).unwrap();
    for (key, v) in table.iter() {
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        out.insert(key.clone(), v.iter().map(|x| x / norm).collect())
            .unwrap();
    }
    out
}

#[test]
fn first_epoch_loss_is_near_uniform() {
    // Averaged over seeds: a single random head can favour or oppose the
    // gold classes by chance.
    let c = corpus();
    let embeddings = unit_norm(&c.embeddings);
    let ln_k = 4f64.ln();
    for kind in KINDS {
        let arch = desk_architecture(kind, 16);
        let losses: Vec<f64> = (0..10)
            .map(|seed| {
                let data = TrainingData {
                    embeddings: &embeddings,
                    ..data(&c)
                };
                train_initial(data, &arch, &[], &config(1, seed))
                    .unwrap()
                    .losses[0]
            })
            .collect();
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        assert!(
            (mean - ln_k).abs() <= 0.1 * ln_k,
            "{kind}: epoch-0 losses {losses:?}, ln 4 = {ln_k}"
        );
    }
}

#[test]
fn same_seed_same_loss_curve() {
    let c = corpus();
    for kind in KINDS {
        let arch = desk_architecture(kind, 16);
        let a = train_initial(data(&c), &arch, &[], &config(5, 9)).unwrap();
        let b = train_initial(data(&c), &arch, &[], &config(5, 9)).unwrap();
        assert_eq!(a.losses, b.losses, "{kind}");
        let other = train_initial(data(&c), &arch, &[], &config(5, 10)).unwrap();
        assert_ne!(a.losses, other.losses, "{kind}");
    }
}

fn small_transfer() -> dialact::synthetic::TransferTask {
    transfer_task(&TransferSpec {
        source_turns: 200,
        target_pool: 300,
        target_test: 100,
        dim: 16,
        ..TransferSpec::default()
    })
    .unwrap()
}

#[test]
fn head_only_finetuning_leaves_body_untouched() {
    let task = small_transfer();
    for kind in KINDS {
        let arch = desk_architecture(kind, 16);
        let source = train_initial(
            TrainingData {
                dataset: &task.source,
                embeddings: &task.embeddings,
                word_vectors: None,
            },
            &arch,
            &[&task.target_train],
            &config(2, 1),
        )
        .unwrap()
        .model;
        let before = source.body_checksums();
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::finetune(kind, 4)
        };
        assert_eq!(cfg.freeze, FreezePolicy::HeadOnly);
        let tuned = finetune(&source, &task.target_train, &task.embeddings, &cfg).unwrap();
        assert_eq!(tuned.model.body_checksums(), before, "{kind}");
        assert_eq!(tuned.model.labels(), &task.target_train.labels);

        let all = TrainConfig {
            epochs: 2,
            freeze: FreezePolicy::All,
            ..cfg
        };
        let tuned = finetune(&source, &task.target_train, &task.embeddings, &all).unwrap();
        assert_ne!(tuned.model.body_checksums(), before, "{kind}");
    }
}

#[test]
fn finetuning_without_examples_is_a_config_error() {
    let task = small_transfer();
    let source = train_initial(
        TrainingData {
            dataset: &task.source,
            embeddings: &task.embeddings,
            word_vectors: None,
        },
        &desk_architecture(ModelKind::Mlp, 16),
        &[],
        &config(1, 0),
    )
    .unwrap()
    .model;
    let empty = Dataset::new(task.target_train.labels.clone(), Vec::new()).unwrap();
    let err = finetune(
        &source,
        &empty,
        &task.embeddings,
        &TrainConfig::finetune(ModelKind::Mlp, 0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn training_on_missing_embeddings_fails() {
    let c = corpus();
    let empty = SentenceEmbeddingTable::new(16).unwrap();
    let err = train_initial(
        TrainingData {
            dataset: &c.dataset,
            embeddings: &empty,
            word_vectors: None,
        },
        &desk_architecture(ModelKind::Mlp, 16),
        &[],
        &config(1, 0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingEmbedding { .. }), "{err}");
}

/// Smallest and largest success counts of Binomial(n, p) that keep at least
/// 99 % of the mass between them, from the exact pmf.
fn binomial_bounds_99(n: usize, p: f64) -> (usize, usize) {
    let mut pmf = vec![0.0f64; n + 1];
    let log_choose = |k: usize| -> f64 {
        (1..=k)
            .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
            .sum()
    };
    for (k, v) in pmf.iter_mut().enumerate() {
        *v = (log_choose(k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
    }
    let (mut lo, mut tail) = (0, 0.0);
    while tail + pmf[lo] <= 0.005 {
        tail += pmf[lo];
        lo += 1;
    }
    let (mut hi, mut tail) = (n, 0.0);
    while tail + pmf[hi] <= 0.005 {
        tail += pmf[hi];
        hi -= 1;
    }
    (lo, hi)
}

#[test]
fn cross_validation_on_random_labels_stays_at_chance() {
    // Labels are independent of the inputs, so any fold that could see its
    // own test turns during training would score far above chance.
    let n = 200;
    let labels = LabelSet::new(["A", "B"]).unwrap();
    let mut rng = seeded_rng(77);
    let mut embeddings = SentenceEmbeddingTable::new(8).unwrap();
    let mut turns = Vec::new();
    for i in 0..n {
        let turn = Turn {
            dialogue_id: format!("d{i}"),
            turn_index: 0,
            speaker: "s".into(),
            label: if rng.random_bool(0.5) { "A" } else { "B" }.into(),
            text_original: String::new(),
            text_translated: None,
        };
        embeddings
            .insert(
                turn.key(),
                (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
        turns.push(turn);
    }
    let dataset = Dataset::new(labels, turns).unwrap();
    let arch = Architecture::Mlp(dialact::models::MlpConfig {
        embedding_dim: 8,
        hidden: 128,
        dropout: 0.0,
    });
    let memorize = TrainConfig {
        epochs: 300,
        learning_rate: 0.01,
        ..TrainConfig::initial(0)
    };
    let train_acc = {
        let trained = train_initial(
            TrainingData {
                dataset: &dataset,
                embeddings: &embeddings,
                word_vectors: None,
            },
            &arch,
            &[],
            &memorize,
        )
        .unwrap();
        evaluate_accuracy(&trained.model, &dataset, &embeddings)
            .unwrap()
            .accuracy
    };
    assert!(
        train_acc >= 0.95,
        "model should memorise its training data, got {train_acc}"
    );

    let cv = cross_validate(n, 2, 3, |fold, train, test| {
        let train = dataset.subset(train);
        let trained = train_initial(
            TrainingData {
                dataset: &train,
                embeddings: &embeddings,
                word_vectors: None,
            },
            &arch,
            &[],
            &memorize.with_seed(fold as u64),
        )?;
        evaluate_accuracy(&trained.model, &dataset.subset(test), &embeddings)
    })
    .unwrap();
    assert_eq!(cv.total, n);
    let counts = dataset.label_counts();
    let chance = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).powi(2))
        .sum::<f64>();
    let (lo, hi) = binomial_bounds_99(n, chance);
    assert!(
        (lo..=hi).contains(&cv.correct),
        "pooled {} of {n} outside [{lo}, {hi}] (chance {chance})",
        cv.correct
    );
}

fn suite_fixture() -> (
    dialact::synthetic::TransferTask,
    dialact::models::Classifier,
) {
    let task = small_transfer();
    let source = train_initial(
        TrainingData {
            dataset: &task.source,
            embeddings: &task.embeddings,
            word_vectors: None,
        },
        &desk_architecture(ModelKind::Mlp, 16),
        &[],
        &config(3, 0),
    )
    .unwrap()
    .model;
    (task, source)
}

fn suite_config(conditions: Vec<Condition>) -> SuiteConfig {
    SuiteConfig {
        conditions,
        runs: 3,
        seed: 20,
        architecture: desk_architecture(ModelKind::Mlp, 16),
        scratch: config(3, 0),
        finetune: TrainConfig {
            epochs: 3,
            ..TrainConfig::finetune(ModelKind::Mlp, 0)
        },
    }
}

#[test]
fn suite_reports_exactly_the_requested_conditions() {
    let (task, source) = suite_fixture();
    let data = SuiteData {
        source_model: Some(&source),
        target_train: &task.target_train,
        target_test: &task.target_test,
        embeddings: &task.embeddings,
        word_vectors: None,
    };
    let requested = vec![
        Condition::Finetune,
        Condition::Majority,
        Condition::NoFinetune,
    ];
    let report = run_condition_suite(&suite_config(requested.clone()), data).unwrap();
    let got: Vec<Condition> = report.conditions.iter().map(|c| c.condition).collect();
    assert_eq!(got, requested);
    for c in &report.conditions {
        assert_eq!(c.runs, 3);
        assert_eq!(c.result.accuracies.len(), 3);
        assert!(c.result.accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(c.result.mean.is_finite() && c.result.std >= 0.0);
        assert_eq!(
            c.result.confusion.as_ref().unwrap().total(),
            task.target_test.len()
        );
    }
    assert!(report.condition(Condition::Scratch).is_none());
    let text = report.render_text();
    for c in &requested {
        assert!(text.contains(&format!("[{c}]")));
    }
    let parsed = dialact::pipeline::ExperimentReport::from_json(&report.to_json()).unwrap();
    assert_eq!(parsed, report);

    let no_source = SuiteData {
        source_model: None,
        ..data
    };
    assert!(run_condition_suite(&suite_config(vec![Condition::Finetune]), no_source).is_err());
    assert!(run_condition_suite(
        &suite_config(vec![Condition::Majority, Condition::Majority]),
        data
    )
    .is_err());
}

#[test]
fn untuned_transfer_needs_shared_tags() {
    let (task, source) = suite_fixture();
    let rename = |d: &Dataset| {
        let labels = LabelSet::new(d.labels.tags().iter().map(|t| format!("x{t}"))).unwrap();
        let turns = d
            .turns
            .iter()
            .map(|t| Turn {
                label: format!("x{}", t.label),
                ..t.clone()
            })
            .collect();
        Dataset::new(labels, turns).unwrap()
    };
    let (train, test) = (rename(&task.target_train), rename(&task.target_test));
    let data = SuiteData {
        source_model: Some(&source),
        target_train: &train,
        target_test: &test,
        embeddings: &task.embeddings,
        word_vectors: None,
    };
    let err = run_condition_suite(&suite_config(vec![Condition::NoFinetune]), data).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    // Fine-tuning does not depend on shared tags.
    run_condition_suite(&suite_config(vec![Condition::Finetune]), data).unwrap();
}
