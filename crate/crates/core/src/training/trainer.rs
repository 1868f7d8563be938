use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{JointModel, Prepared};
use crate::corpus::{Document, Splits, Vocab, VocabConfig};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, MetricReport, RunScores};
use crate::numerics::rng::{stream, Stream};
use crate::numerics::{clip_grad_norm, AdamW, Dropout, LinearSchedule, Tape, Tensor};
use crate::relations::SentencePrediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ner_loss: f64,
    pub rel_loss: f64,
    /// `None` when there is no validation split.
    pub validation: Option<RunScores>,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        let (ef, rf) = self
            .validation
            .map_or((f64::NAN, f64::NAN), |v| (v.entity[2], v.relation[2]));
        format!(
            "epoch={} l_ner={:.6} l_rel={:.6} val_entity_f1={:.4} val_relation_f1={:.4}",
            self.epoch, self.ner_loss, self.rel_loss, ef, rf
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub test: Option<MetricReport>,
    pub model: JointModel,
    pub steps: u64,
}

impl RunResult {
    pub fn best_validation(&self) -> Option<RunScores> {
        self.epochs[self.best_epoch - 1].validation
    }

    /// Metrics log: one line per epoch.
    pub fn metrics_log(&self) -> String {
        self.epochs.iter().map(|e| e.log_line() + "\n").collect()
    }
}

pub fn build_vocab(train: &[Document], size: usize) -> Vocab {
    let words = train
        .iter()
        .flat_map(|d| &d.sentences)
        .flat_map(|s| &s.words)
        .map(String::as_str);
    let cfg = VocabConfig {
        max_size: size,
        ..VocabConfig::default()
    };
    Vocab::build(words, &cfg)
}

pub fn prepare_all(model: &JointModel, docs: &[Document]) -> Result<Vec<Prepared>> {
    docs.iter()
        .flat_map(|d| d.keyed())
        .map(|(k, s)| model.prepare(k, s))
        .collect()
}

pub fn predict_all(model: &JointModel, prepared: &[Prepared]) -> Result<Vec<SentencePrediction>> {
    prepared.iter().map(|p| model.predict(p)).collect()
}

/// One optimization step over a batch; returns `(L_ner, L_rel)`.
fn train_batch(
    model: &mut JointModel,
    batch: &[&Prepared],
    dropout: &mut Dropout,
    negatives: &mut rand_chacha::ChaCha8Rng,
    optimizer: &mut AdamW,
    lr: f64,
) -> Result<(f64, f64)> {
    let cfg = &model.config;
    let mut tape = Tape::new();
    let mut ner = Vec::with_capacity(batch.len());
    let mut rel = Vec::new();
    let mut pairs = 0;
    for p in batch {
        let l = model.sentence_loss(&mut tape, p, dropout, negatives)?;
        ner.push(l.ner);
        rel.extend(l.rel);
        pairs += l.rel_pairs;
    }
    let ner_sum = tape.add_n(&ner)?;
    let l_ner = tape.scale(ner_sum, 1.0 / batch.len() as f64);
    let l_rel = if pairs > 0 {
        let s = tape.add_n(&rel)?;
        Some(tape.scale(s, 1.0 / pairs as f64))
    } else {
        None
    };
    let weighted_ner = tape.scale(l_ner, cfg.ner_weight);
    let loss = match l_rel {
        Some(r) => {
            let weighted_rel = tape.scale(r, cfg.rel_weight);
            tape.add(weighted_ner, weighted_rel)?
        }
        None => weighted_ner,
    };
    let (vn, vr) = (tape.value(l_ner).item(), l_rel.map_or(0.0, |r| tape.value(r).item()));
    if !tape.value(loss).item().is_finite() {
        let keys: Vec<String> = batch.iter().map(|p| p.key.to_string()).collect();
        return Err(Error::NonFinite(format!(
            "batch [{}]: l_ner={vn} l_rel={vr} words={:?}",
            keys.join(", "),
            batch.iter().map(|p| &p.sentence.words).collect::<Vec<_>>()
        )));
    }
    model.store.zero_grads();
    tape.backward(loss, &mut model.store)?;
    drop(tape);
    if cfg.grad_norm > 0.0 {
        clip_grad_norm(&mut model.store, cfg.grad_norm);
    }
    optimizer.step(&mut model.store, lr)?;
    Ok((vn, vr))
}

/// Trains on `splits.train`, validating on `splits.validation` after every
/// epoch and keeping the parameters of the epoch with the best validation
/// relation F1 (earliest on ties). Without a validation split the last epoch
/// is kept. The test split, if any, is scored with the kept parameters.
/// `on_epoch` sees every epoch record as it is produced.
pub fn train(config: &TrainConfig, splits: &Splits, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<RunResult> {
    config.validate()?;
    if splits.train.iter().all(|d| d.sentences.is_empty()) {
        return Err(Error::Config("training split has no sentences".into()));
    }
    let vocab = build_vocab(&splits.train, config.vocab_size);
    let mut model = JointModel::new(config.clone(), vocab)?;
    let train_set = prepare_all(&model, &splits.train)?;
    let val_set = prepare_all(&model, &splits.validation)?;

    let batches_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total = batches_per_epoch * config.epochs;
    let schedule = LinearSchedule::new(config.learning_rate, total, config.warmup)?;
    let mut optimizer = AdamW::new(&model.store, config.weight_decay)?;
    let mut shuffle = stream(config.seed, Stream::Shuffle);
    let mut negatives = stream(config.seed, Stream::Negatives);
    let mut dropout = if config.dropout > 0.0 {
        Dropout::train(config.dropout, stream(config.seed, Stream::Dropout))
    } else {
        Dropout::eval()
    };

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let (mut sum_ner, mut sum_rel) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|i| &train_set[*i]).collect();
            let lr = schedule.lr_at(step);
            let (ln, lr_) = train_batch(&mut model, &batch, &mut dropout, &mut negatives, &mut optimizer, lr)?;
            sum_ner += ln;
            sum_rel += lr_;
            step += 1;
        }
        let validation = if val_set.is_empty() {
            None
        } else {
            let preds = predict_all(&model, &val_set)?;
            Some(evaluate(&preds, &splits.validation)?.scores())
        };
        let record = EpochRecord {
            epoch,
            ner_loss: sum_ner / batches_per_epoch as f64,
            rel_loss: sum_rel / batches_per_epoch as f64,
            validation,
        };
        on_epoch(&record);
        let score = validation.map_or(f64::NEG_INFINITY, |v| v.relation[2]);
        let improves = match &best {
            None => true,
            Some((_, b, _)) => score > *b || (validation.is_none()),
        };
        if improves {
            best = Some((epoch, score, model.store.snapshot()));
        }
        epochs.push(record);
    }
    let (best_epoch, _, params) = best.expect("at least one epoch");
    model.store.restore(&params)?;
    let test = if splits.test.is_empty() {
        None
    } else {
        let test_set = prepare_all(&model, &splits.test)?;
        Some(evaluate(&predict_all(&model, &test_set)?, &splits.test)?)
    };
    Ok(RunResult {
        seed: config.seed,
        epochs,
        best_epoch,
        test,
        model,
        steps: step as u64,
    })
}

/// Renders epoch records as an aligned table.
pub fn render_epochs(epochs: &[EpochRecord]) -> String {
    let mut out = format!("{:>5} {:>10} {:>10} {:>9} {:>9}\n", "epoch", "l_ner", "l_rel", "val_ent", "val_rel");
    for e in epochs {
        let (a, b) = e.validation.map_or((f64::NAN, f64::NAN), |v| (v.entity[2], v.relation[2]));
        let _ = writeln!(out, "{:>5} {:>10.5} {:>10.5} {:>9.4} {:>9.4}", e.epoch, e.ner_loss, e.rel_loss, a, b);
    }
    out
}
