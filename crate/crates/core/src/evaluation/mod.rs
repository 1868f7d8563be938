//! Strict micro-averaged scoring. An entity counts only with exact boundaries
//! and type; a relation only when both of its entities do. Relations are
//! unordered, so `(a, b)` matches `(b, a)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Entity, EntityType, Sentence, SentenceKey};
use crate::error::{Error, Result};
use crate::relations::SentencePrediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn of<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> Counts {
        let tp = predicted.intersection(gold).count();
        Counts {
            tp,
            fp: predicted.len() - tp,
            fn_: gold.len() - tp,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub entity: Counts,
    pub relation: Counts,
    /// Entity counts per type name.
    pub per_type: BTreeMap<String, Counts>,
}

type Pair = (Entity, Entity);

fn pair(a: Entity, b: Entity) -> Pair {
    (a.min(b), a.max(b))
}

fn gold_sets(s: &Sentence) -> (BTreeSet<Entity>, BTreeSet<Pair>) {
    let ents = s.entities.iter().copied().collect();
    let rels = s
        .relations
        .iter()
        .map(|r| pair(s.entities[r.head], s.entities[r.tail]))
        .collect();
    (ents, rels)
}

fn predicted_sets(p: &SentencePrediction) -> (BTreeSet<Entity>, BTreeSet<Pair>) {
    let as_entity = |i: usize| {
        let e = &p.entities[i];
        Entity::new(e.start, e.end, e.ty)
    };
    let ents = (0..p.entities.len()).map(as_entity).collect();
    let rels = p
        .relations
        .iter()
        .map(|r| pair(as_entity(r.head_entity), as_entity(r.tail_entity)))
        .collect();
    (ents, rels)
}

impl MetricReport {
    /// Counts for one sentence; `prediction = None` means nothing predicted.
    pub fn for_sentence(prediction: Option<&SentencePrediction>, gold: &Sentence) -> Self {
        let (ge, gr) = gold_sets(gold);
        let (pe, pr) = prediction.map(predicted_sets).unwrap_or_default();
        let mut per_type = BTreeMap::new();
        for ty in EntityType::SPAN_TYPES {
            let sel = |s: &BTreeSet<Entity>| s.iter().filter(|e| e.ty == ty).copied().collect::<BTreeSet<_>>();
            let c = Counts::of(&sel(&pe), &sel(&ge));
            if c != Counts::default() {
                per_type.insert(ty.name().to_string(), c);
            }
        }
        Self {
            entity: Counts::of(&pe, &ge),
            relation: Counts::of(&pr, &gr),
            per_type,
        }
    }

    pub fn merge(&mut self, other: &MetricReport) {
        self.entity.add(other.entity);
        self.relation.add(other.relation);
        for (k, c) in &other.per_type {
            self.per_type.entry(k.clone()).or_default().add(*c);
        }
    }

    pub fn scores(&self) -> RunScores {
        RunScores {
            entity: [self.entity.precision(), self.entity.recall(), self.entity.f1()],
            relation: [self.relation.precision(), self.relation.recall(), self.relation.f1()],
        }
    }

    /// Aligned text table, values in percent.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}\n",
            "", "precision", "recall", "f1", "tp", "fp", "fn"
        );
        let mut row = |name: &str, c: &Counts| {
            let _ = writeln!(
                out,
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>6} {:>6} {:>6}",
                name,
                100.0 * c.precision(),
                100.0 * c.recall(),
                100.0 * c.f1(),
                c.tp,
                c.fp,
                c.fn_
            );
        };
        row("entity", &self.entity);
        row("relation", &self.relation);
        for (k, c) in &self.per_type {
            row(&format!("  {k}"), c);
        }
        out
    }
}

/// Scores predictions against gold documents. Gold sentences without a
/// prediction count as predicting nothing; a prediction for a sentence that
/// is not in the gold set is an alignment error. Duplicate predictions within
/// a sentence count once.
pub fn evaluate(predictions: &[SentencePrediction], gold: &[Document]) -> Result<MetricReport> {
    let gold_by_key: HashMap<SentenceKey, &Sentence> = gold.iter().flat_map(|d| d.keyed()).collect();
    let mut by_key: HashMap<SentenceKey, SentencePrediction> = HashMap::new();
    for p in predictions {
        let key = p.key();
        if !gold_by_key.contains_key(&key) {
            return Err(Error::Alignment(format!("prediction for unknown sentence {key}")));
        }
        match by_key.get_mut(&key) {
            Some(existing) => {
                let offset = existing.entities.len();
                existing.entities.extend(p.entities.iter().cloned());
                existing.relations.extend(p.relations.iter().map(|r| crate::relations::PredictedRelation {
                    head_entity: r.head_entity + offset,
                    tail_entity: r.tail_entity + offset,
                    score: r.score,
                }));
            }
            None => {
                by_key.insert(key, p.clone());
            }
        }
    }
    let mut report = MetricReport::default();
    for doc in gold {
        for (key, sentence) in doc.keyed() {
            report.merge(&MetricReport::for_sentence(by_key.get(&key), sentence));
        }
    }
    Ok(report)
}

/// Precision, recall and F1 of one run for entities and relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub entity: [f64; 3],
    pub relation: [f64; 3],
}

impl RunScores {
    fn cells(&self) -> [f64; 6] {
        let [a, b, c] = self.entity;
        let [d, e, f] = self.relation;
        [a, b, c, d, e, f]
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub runs: usize,
    /// Entity P, R, F1 then relation P, R, F1.
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

fn model_rank(name: &str) -> usize {
    ["linear", "crf_lm", "gru_lm"].iter().position(|m| *m == name).unwrap_or(3)
}

/// One row per model with mean and standard deviation of every metric. Rows
/// come in the order linear, crf_lm, gru_lm, then any others by name.
pub fn compare_runs(runs: &[(String, Vec<RunScores>)]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = runs
        .iter()
        .filter(|(_, r)| !r.is_empty())
        .map(|(model, scores)| {
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for i in 0..6 {
                let col: Vec<f64> = scores.iter().map(|s| s.cells()[i]).collect();
                (mean[i], std[i]) = mean_std(&col);
            }
            ComparisonRow {
                model: model.clone(),
                runs: scores.len(),
                mean,
                std,
            }
        })
        .collect();
    rows.sort_by(|a, b| model_rank(&a.model).cmp(&model_rank(&b.model)).then(a.model.cmp(&b.model)));
    rows
}

/// Aligned table with `mean (std)` cells in percent.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<10} {:^44} {:^44}\n{:<10}",
        "", "Entity", "Relation", "model"
    );
    for _ in 0..2 {
        for h in ["Precision", "Recall", "F1"] {
            let _ = write!(out, " {h:>14}");
        }
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<10}", r.model);
        for i in 0..6 {
            let cell = format!("{:.2} ({:.2})", 100.0 * r.mean[i], 100.0 * r.std[i]);
            let _ = write!(out, " {cell:>14}");
        }
        out.push('\n');
    }
    out
}
