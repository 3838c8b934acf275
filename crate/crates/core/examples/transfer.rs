//! Runs the four transfer conditions on a generated source/target task and
//! prints the report. Usage: `cargo run --release --example transfer [mlp|cnn|mh-satt]`.

use dialact::models::ModelKind;
use dialact::pipeline::{
    run_condition_suite, train_initial, Condition, SuiteConfig, SuiteData, TrainConfig,
    TrainingData, DEFAULT_RUNS,
};
use dialact::synthetic::{desk_architecture, transfer_task, TransferSpec};

fn main() -> dialact::Result<()> {
    let kind: ModelKind = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("mlp")
        .parse()?;
    let spec = TransferSpec::default();
    let task = transfer_task(&spec)?;
    let arch = desk_architecture(kind, spec.dim);

    let source = train_initial(
        TrainingData {
            dataset: &task.source,
            embeddings: &task.embeddings,
            word_vectors: None,
        },
        &arch,
        &[&task.target_train, &task.target_test],
        &TrainConfig {
            epochs: 30,
            ..TrainConfig::initial(0)
        },
    )?
    .model;

    let cfg = SuiteConfig {
        conditions: Condition::ALL.to_vec(),
        runs: DEFAULT_RUNS,
        seed: 100,
        architecture: arch,
        scratch: TrainConfig::initial(0),
        finetune: TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::finetune(kind, 0)
        },
    };
    let report = run_condition_suite(
        &cfg,
        SuiteData {
            source_model: Some(&source),
            target_train: &task.target_train,
            target_test: &task.target_test,
            embeddings: &task.embeddings,
            word_vectors: None,
        },
    )?;
    print!("{}", report.render_text());
    Ok(())
}
