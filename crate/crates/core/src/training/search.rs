use std::fmt::Write as _;

use serde::Serialize;

use super::config::TrainConfig;
use super::trainer::{train, EpochRecord};
use crate::corpus::{Document, Splits};
use crate::error::{Error, Result};
use crate::evaluation::{compare_runs, ComparisonRow, RunScores};

/// One searchable axis: a config key and the values to try, as config text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SearchSpace {
    pub axes: Vec<Axis>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn axis(mut self, key: &str, values: &[&str]) -> Self {
        self.axes.push(Axis {
            key: key.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        self
    }

    /// The full hyperparameter space. A weight decay or gradient-norm cap of 0
    /// means none.
    pub fn full() -> Self {
        Self::new()
            .axis("pooling", &["bigru", "mean", "max"])
            .axis("decoder", &["gru_lm", "crf_lm", "linear"])
            .axis("masking", &["true", "false"])
            .axis("dropout", &["0", "0.1", "0.2", "0.3"])
            .axis("alpha", &["0.4", "0.5", "0.6"])
            .axis("filter_impossible", &["true", "false"])
            .axis("filter_overlapping", &["true", "false"])
            .axis("batch_size", &["2", "4", "8"])
            .axis("learning_rate", &["5e-5", "1e-5", "5e-6"])
            .axis("weight_decay", &["0", "0.01", "0.1"])
            .axis("grad_norm", &["0", "1.0"])
    }

    /// Restricts the space to the named axes, in the given order.
    pub fn subset(&self, keys: &[&str]) -> Result<Self> {
        let axes = keys
            .iter()
            .map(|k| {
                self.axes
                    .iter()
                    .find(|a| a.key == *k)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown search axis {k:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { axes })
    }

    pub fn size(&self) -> usize {
        if self.axes.is_empty() {
            0
        } else {
            self.axes.iter().map(|a| a.values.len()).product()
        }
    }

    /// Cartesian product in odometer order, last axis fastest.
    pub fn assignments(&self) -> Vec<Vec<(String, String)>> {
        let mut out: Vec<Vec<(String, String)>> = vec![vec![]];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push((axis.key.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        out
    }

    /// One line per axis: `key: v1, v2, ...`.
    pub fn render(&self) -> String {
        self.axes
            .iter()
            .map(|a| format!("{}: {}\n", a.key, a.values.join(", ")))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub assignment: Vec<(String, String)>,
    pub best_epoch: usize,
    pub validation: RunScores,
    pub test: Option<RunScores>,
}

/// Trains every configuration of `space` on top of `base` and ranks them by
/// validation relation F1 (descending, enumeration order on ties).
pub fn grid_search(
    base: &TrainConfig,
    space: &SearchSpace,
    splits: &Splits,
    mut on_run: impl FnMut(&SearchResult),
) -> Result<Vec<SearchResult>> {
    if space.size() == 0 {
        return Err(Error::Config("search space is empty".into()));
    }
    if splits.validation.iter().all(|d| d.sentences.is_empty()) {
        return Err(Error::Config("grid search needs a validation split".into()));
    }
    let mut results = Vec::with_capacity(space.size());
    for assignment in space.assignments() {
        let mut config = base.clone();
        for (k, v) in &assignment {
            config.set(k, v)?;
        }
        config.validate()?;
        let run = train(&config, splits, |_: &EpochRecord| {})?;
        let result = SearchResult {
            assignment,
            best_epoch: run.best_epoch,
            validation: run.best_validation().expect("validation split is non-empty"),
            test: run.test.as_ref().map(|t| t.scores()),
        };
        on_run(&result);
        results.push(result);
    }
    results.sort_by(|a, b| b.validation.relation[2].total_cmp(&a.validation.relation[2]));
    Ok(results)
}

/// Ranked results as an aligned table of percentages.
pub fn render_search(results: &[SearchResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:>8} {:>8} {:>5}  configuration", "rank", "val_ent", "val_rel", "epoch");
    for (i, r) in results.iter().enumerate() {
        let cfg: Vec<String> = r.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            out,
            "{:>4}  {:>8.2} {:>8.2} {:>5}  {}",
            i + 1,
            100.0 * r.validation.entity[2],
            100.0 * r.validation.relation[2],
            r.best_epoch,
            cfg.join(" ")
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiSeedReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunScores>,
    pub summary: ComparisonRow,
}

/// Seeds `base, base+1, ...`.
pub fn default_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base + i).collect()
}

pub fn multi_seed(config: &TrainConfig, splits: &Splits, n_seeds: usize) -> Result<MultiSeedReport> {
    multi_seed_with(config, splits, &default_seeds(config.seed, n_seeds), |_, _| {})
}

/// Retrains on train and validation combined once per seed, keeps the final
/// epoch and scores the test split.
pub fn multi_seed_with(
    config: &TrainConfig,
    splits: &Splits,
    seeds: &[u64],
    mut on_run: impl FnMut(u64, &RunScores),
) -> Result<MultiSeedReport> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!("multi-seed needs at least 2 seeds, got {}", seeds.len())));
    }
    if splits.test.iter().all(|d| d.sentences.is_empty()) {
        return Err(Error::Config("multi-seed needs a test split".into()));
    }
    let combined = Splits {
        train: splits.train.iter().chain(&splits.validation).cloned().collect::<Vec<Document>>(),
        validation: vec![],
        test: splits.test.clone(),
    };
    let mut runs = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = *seed;
        let run = train(&cfg, &combined, |_: &EpochRecord| {})?;
        let scores = run.test.expect("test split is non-empty").scores();
        on_run(*seed, &scores);
        runs.push(scores);
    }
    let name = config.decoder.name().to_string();
    let summary = compare_runs(&[(name, runs.clone())]).remove(0);
    Ok(MultiSeedReport {
        seeds: seeds.to_vec(),
        runs,
        summary,
    })
}
