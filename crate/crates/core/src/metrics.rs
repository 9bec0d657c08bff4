//! Span-level evaluation and learning-curve aggregation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{extract_spans, Scheme};
use crate::engine::RunRecord;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{predicted} predicted sentences for {gold} gold sentences")]
    SentenceCount { predicted: usize, gold: usize },
    #[error("sentence {index}: {predicted} predicted tags for {gold} gold tags")]
    Alignment { index: usize, predicted: usize, gold: usize },
    #[error("no run records to aggregate")]
    Empty,
    #[error("run records come from different configurations ({0} vs {1})")]
    ConfigMismatch(String, String),
    #[error("run seed {seed} has {found} iterations, expected {expected}")]
    IterationMismatch { seed: u64, expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub pred_count: usize,
    pub correct_count: usize,
}

impl From<Counts> for TypeScore {
    fn from(c: Counts) -> Self {
        TypeScore {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            gold_count: c.gold,
            pred_count: c.predicted,
            correct_count: c.correct,
        }
    }
}

/// Micro-averaged span scores plus a per-type breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub pred_count: usize,
    pub correct_count: usize,
    pub per_type: BTreeMap<String, TypeScore>,
}

/// Exact-match span precision, recall and F1 over aligned tag sequences.
///
/// A predicted span is correct iff a gold span has the same type, start and
/// end. Zero denominators score 0.
pub fn span_f1<P, G>(predicted: &[Vec<P>], gold: &[Vec<G>], scheme: Scheme) -> Result<F1Report, MetricsError>
where
    P: AsRef<str>,
    G: AsRef<str>,
{
    if predicted.len() != gold.len() {
        return Err(MetricsError::SentenceCount { predicted: predicted.len(), gold: gold.len() });
    }
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for (index, (p, g)) in predicted.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(MetricsError::Alignment { index, predicted: p.len(), gold: g.len() });
        }
        let gold_spans = extract_spans(g, scheme);
        let pred_spans = extract_spans(p, scheme);
        let gold_set: HashSet<_> = gold_spans.iter().collect();
        for s in &gold_spans {
            per_type.entry(s.entity_type.clone()).or_default().gold += 1;
        }
        for s in &pred_spans {
            let c = per_type.entry(s.entity_type.clone()).or_default();
            c.predicted += 1;
            if gold_set.contains(s) {
                c.correct += 1;
            }
        }
    }
    let mut total = Counts::default();
    for c in per_type.values() {
        total.add(*c);
    }
    Ok(F1Report {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        gold_count: total.gold,
        pred_count: total.predicted,
        correct_count: total.correct,
        per_type: per_type.into_iter().map(|(k, v)| (k, v.into())).collect(),
    })
}

/// Sample mean and standard deviation (divisor n - 1, zero for n = 1).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub labeled_token_fraction: f64,
    pub mean_labeled_tokens: f64,
    /// Successor model span F1.
    pub mean_f1: f64,
    pub std_f1: f64,
    pub acquisition_mean_f1: f64,
    pub acquisition_std_f1: f64,
    pub mean_train_seconds: f64,
    pub mean_query_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub config_hash: String,
    pub repeats: usize,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn at(&self, iteration: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.iteration == iteration)
    }
}

/// Per-iteration mean and sample standard deviation over seeded repeats.
pub fn aggregate_runs(records: &[RunRecord]) -> Result<LearningCurve, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    let expected = first.entries.len();
    for r in records {
        if r.config_hash != first.config_hash {
            return Err(MetricsError::ConfigMismatch(first.config_hash.clone(), r.config_hash.clone()));
        }
        if r.entries.len() != expected {
            return Err(MetricsError::IterationMismatch { seed: r.run_seed, expected, found: r.entries.len() });
        }
    }
    let mut points = Vec::with_capacity(expected);
    for k in 0..expected {
        let column = |f: &dyn Fn(&RunRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
        let (mean_f1, std_f1) = mean_std(&column(&|r| r.entries[k].successor.f1));
        let (acq_mean, acq_std) = mean_std(&column(&|r| r.entries[k].acquisition.f1));
        let (frac, _) = mean_std(&column(&|r| r.entries[k].labeled_tokens as f64 / r.total_tokens.max(1) as f64));
        let (tokens, _) = mean_std(&column(&|r| r.entries[k].labeled_tokens as f64));
        let (train, _) = mean_std(&column(&|r| r.entries[k].timing.train_seconds));
        let (query, _) = mean_std(&column(&|r| r.entries[k].timing.query_seconds));
        points.push(CurvePoint {
            iteration: first.entries[k].iteration,
            labeled_token_fraction: frac,
            mean_labeled_tokens: tokens,
            mean_f1,
            std_f1,
            acquisition_mean_f1: acq_mean,
            acquisition_std_f1: acq_std,
            mean_train_seconds: train,
            mean_query_seconds: query,
        });
    }
    Ok(LearningCurve { config_hash: first.config_hash.clone(), repeats: records.len(), points })
}
