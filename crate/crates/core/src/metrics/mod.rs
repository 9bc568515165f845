//! Sequence-match scores, shuffle diagnostics and chance baselines.
//!
//! All scores are percentages. List metrics are normalised by the key
//! length, so a short prediction is penalised for every missing position.

mod chance;
mod diagnostics;

pub use chance::*;
pub use diagnostics::*;

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse::ParsedAnswer;
use crate::synth::{AnswerKey, AnswerShape};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("prediction shape {pred:?} does not match key shape {key:?}")]
    VariantMismatch { pred: AnswerShape, key: AnswerShape },
    #[error("metric {0} does not apply to this task")]
    NotApplicable(Metric),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "EM")]
    Em,
    #[serde(rename = "PM")]
    Pm,
    #[serde(rename = "LM")]
    Lm,
    #[serde(rename = "OM")]
    Om,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Em, Metric::Pm, Metric::Lm, Metric::Om];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Em => "EM",
            Metric::Pm => "PM",
            Metric::Lm => "LM",
            Metric::Om => "OM",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric `{s}` (expected em, pm, lm or om)"))
    }
}

pub fn exact_match<T: PartialEq>(pred: &[T], key: &[T]) -> f64 {
    if pred == key { 100.0 } else { 0.0 }
}

pub fn partial_match<T: PartialEq>(pred: &[T], key: &[T]) -> f64 {
    if key.is_empty() {
        return exact_match(pred, key);
    }
    let hits = key.iter().zip(pred).filter(|(k, p)| k == p).count();
    100.0 * hits as f64 / key.len() as f64
}

/// Classic O(|a|·|b|) dynamic program, one row at a time.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn lcs_match<T: PartialEq>(pred: &[T], key: &[T]) -> f64 {
    if key.is_empty() {
        return exact_match(pred, key);
    }
    100.0 * lcs_len(pred, key) as f64 / key.len() as f64
}

pub fn orderless_match<T: Eq + Hash>(pred: &[T], key: &[T]) -> f64 {
    if key.is_empty() {
        return if pred.is_empty() { 100.0 } else { 0.0 };
    }
    let p: HashSet<&T> = pred.iter().collect();
    let k: HashSet<&T> = key.iter().collect();
    100.0 * p.intersection(&k).count() as f64 / k.len() as f64
}

/// Scores for one answer. PM/LM/OM are present only for label-list tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub em: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub om: Option<f64>,
}

impl ScoreSet {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Em => Some(self.em),
            Metric::Pm => self.pm,
            Metric::Lm => self.lm,
            Metric::Om => self.om,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.em == 100.0
    }

    fn zero_for(shape: AnswerShape) -> Self {
        let list = uses_list_metrics(shape);
        let z = list.then_some(0.0);
        ScoreSet { em: 0.0, pm: z, lm: z, om: z }
    }
}

pub fn uses_list_metrics(shape: AnswerShape) -> bool {
    matches!(shape, AnswerShape::FullSequence | AnswerShape::SubSequence)
}

/// Metrics reported for a key shape, in table order.
pub fn metrics_for(shape: AnswerShape) -> &'static [Metric] {
    if uses_list_metrics(shape) { &Metric::ALL } else { &Metric::ALL[..1] }
}

pub fn score_key(pred: &AnswerKey, key: &AnswerKey) -> Result<ScoreSet, MetricError> {
    if pred.shape() != key.shape() {
        return Err(MetricError::VariantMismatch {
            pred: pred.shape(),
            key: key.shape(),
        });
    }
    Ok(match (pred, key) {
        (AnswerKey::FullSequence { labels: p }, AnswerKey::FullSequence { labels: k })
        | (AnswerKey::SubSequence { labels: p }, AnswerKey::SubSequence { labels: k }) => ScoreSet {
            em: exact_match(p, k),
            pm: Some(partial_match(p, k)),
            lm: Some(lcs_match(p, k)),
            om: Some(orderless_match(p, k)),
        },
        (AnswerKey::Positions { positions: p }, AnswerKey::Positions { positions: k }) => ScoreSet {
            em: exact_match(p, k),
            pm: None,
            lm: None,
            om: None,
        },
        (p, k) => ScoreSet {
            em: if p == k { 100.0 } else { 0.0 },
            pm: None,
            lm: None,
            om: None,
        },
    })
}

/// Unparseable answers score zero on every applicable metric.
pub fn score_answer(parsed: &ParsedAnswer, key: &AnswerKey) -> Result<ScoreSet, MetricError> {
    match parsed {
        ParsedAnswer::Answer(pred) => score_key(pred, key),
        ParsedAnswer::Unparseable { .. } => Ok(ScoreSet::zero_for(key.shape())),
    }
}

/// Mean scores over a group of answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub n: usize,
    pub em: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub om: Option<f64>,
}

impl MeanScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Em => (self.n > 0).then_some(self.em),
            Metric::Pm => self.pm,
            Metric::Lm => self.lm,
            Metric::Om => self.om,
        }
    }
}

/// Summation happens in the given order; callers sort by instance id first.
pub fn mean_scores<'a>(scores: impl IntoIterator<Item = &'a ScoreSet>) -> MeanScores {
    let mut n = 0usize;
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for s in scores {
        n += 1;
        for (i, m) in Metric::ALL.iter().enumerate() {
            if let Some(v) = s.get(*m) {
                sums[i] += v;
                counts[i] += 1;
            }
        }
    }
    let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
    MeanScores {
        n,
        em: mean(0).unwrap_or(0.0),
        pm: mean(1),
        lm: mean(2),
        om: mean(3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn worked_examples() {
        let key = s(&["A", "B", "C", "D"]);
        assert_eq!(exact_match(&key, &key), 100.0);
        assert_eq!(exact_match(&s(&["B", "A", "C", "D"]), &key), 0.0);
        assert_eq!(partial_match(&s(&["A", "B", "D", "C"]), &key), 50.0);
        assert_eq!(lcs_match(&s(&["B", "A", "C", "D"]), &key), 75.0);
        assert_eq!(orderless_match(&s(&["D", "C", "B", "A"]), &key), 100.0);
    }

    #[test]
    fn short_predictions_are_penalised() {
        let key = s(&["A", "B", "C", "D"]);
        assert_eq!(partial_match(&s(&["A", "B"]), &key), 50.0);
        assert_eq!(partial_match(&s(&[]), &key), 0.0);
        assert_eq!(lcs_match(&s(&["A", "B"]), &key), 50.0);
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let a = AnswerKey::OutlierPosition { position: 2 };
        let b = AnswerKey::SingleLabel { label: "x".into() };
        assert!(matches!(score_key(&a, &b), Err(MetricError::VariantMismatch { .. })));
    }

    #[test]
    fn unparseable_scores_zero() {
        let key = AnswerKey::FullSequence { labels: s(&["A", "B"]) };
        let got = score_answer(&ParsedAnswer::unparseable("x"), &key).unwrap();
        assert_eq!(got, ScoreSet { em: 0.0, pm: Some(0.0), lm: Some(0.0), om: Some(0.0) });
        let key = AnswerKey::OutlierPosition { position: 1 };
        let got = score_answer(&ParsedAnswer::unparseable("x"), &key).unwrap();
        assert_eq!(got.pm, None);
    }

    #[test]
    fn means_skip_inapplicable_metrics() {
        let a = ScoreSet { em: 100.0, pm: Some(100.0), lm: Some(100.0), om: Some(100.0) };
        let b = ScoreSet { em: 0.0, pm: Some(50.0), lm: Some(75.0), om: Some(100.0) };
        let m = mean_scores([&a, &b]);
        assert_eq!((m.n, m.em, m.pm, m.lm, m.om), (2, 50.0, Some(75.0), Some(87.5), Some(100.0)));
        let m = mean_scores([&ScoreSet { em: 100.0, pm: None, lm: None, om: None }]);
        assert_eq!(m.pm, None);
    }
}
