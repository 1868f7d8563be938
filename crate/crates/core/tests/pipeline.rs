use kpix::corpus::io::{annotations_to_string, parse_annotations};
use kpix::corpus::{generate_synthetic_corpus, split_corpus, GeneratorConfig, Splits};
use kpix::evaluation::evaluate;
use kpix::relations::output::{parse_predictions, predictions_to_string};
use kpix::training::search::{grid_search, SearchSpace};
use kpix::training::trainer::{predict_all, prepare_all};
use kpix::training::{train, JointModel, TrainConfig};
use std::path::Path;

fn small_splits(documents: usize, seed: u64) -> Splits {
    let cfg = GeneratorConfig {
        documents,
        ..GeneratorConfig::default()
    };
    split_corpus(generate_synthetic_corpus(&cfg, seed).unwrap(), [0.7, 0.15, 0.15], seed).unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn annotations_survive_a_text_round_trip() {
    let docs = generate_synthetic_corpus(&GeneratorConfig::default(), 3).unwrap();
    let text = annotations_to_string(&docs, "round trip");
    let back = parse_annotations(Path::new("mem.jsonl"), &text).unwrap();
    let kept: Vec<_> = docs.into_iter().filter(|d| !d.sentences.is_empty()).collect();
    assert_eq!(back, kept);
}

#[test]
fn short_training_learns_and_checkpoint_reloads() {
    let splits = small_splits(30, 1);
    let run = train(&quick_config(), &splits, |_| {}).unwrap();
    let first = run.epochs.first().unwrap().ner_loss;
    let last = run.epochs.last().unwrap().ner_loss;
    assert!(last < first, "ner loss {first} -> {last}");

    let dir = tempfile::tempdir().unwrap();
    run.model.save(dir.path(), run.steps).unwrap();
    let loaded = JointModel::load(dir.path()).unwrap();
    let a = predict_all(&run.model, &prepare_all(&run.model, &splits.test).unwrap()).unwrap();
    let b = predict_all(&loaded, &prepare_all(&loaded, &splits.test).unwrap()).unwrap();
    assert_eq!(a, b);

    // predictions serialize, parse back and score like the in-memory report
    let text = predictions_to_string(&a, "predictions");
    let parsed = parse_predictions(Path::new("p.jsonl"), &text).unwrap();
    let report = evaluate(&parsed, &splits.test).unwrap();
    assert_eq!(&report, run.test.as_ref().unwrap());
}

#[test]
fn singleton_grid_matches_direct_training() {
    let splits = small_splits(16, 2);
    let base = TrainConfig {
        epochs: 2,
        ..quick_config()
    };
    let space = SearchSpace::new().axis("dropout", &["0.2"]);
    let results = grid_search(&base, &space, &splits, |_| {}).unwrap();
    let direct = train(
        &TrainConfig {
            dropout: 0.2,
            ..base
        },
        &splits,
        |_| {},
    )
    .unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].best_epoch, direct.best_epoch);
    assert_eq!(Some(results[0].validation), direct.best_validation());
}

#[test]
fn seed_changes_the_run() {
    let splits = small_splits(16, 4);
    let cfg = TrainConfig {
        epochs: 1,
        ..quick_config()
    };
    let a = train(&cfg, &splits, |_| {}).unwrap().metrics_log();
    let b = train(&TrainConfig { seed: cfg.seed + 1, ..cfg }, &splits, |_| {}).unwrap().metrics_log();
    assert_ne!(a, b);
}
