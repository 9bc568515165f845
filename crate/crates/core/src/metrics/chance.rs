use num_rational::Ratio;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lcs_match, orderless_match, partial_match, Metric, MetricError};
use crate::catalog::CANDIDATE_SET_SIZE;
use crate::rng::SeededRng;
use crate::synth::{pattern_repetitions, AnswerKey, Level, TaskInstance, TaskQuery, TaskVariant};

/// Description of the random guesser behind every chance value.
pub const GUESS_MODEL: &str = "uniform guesser that knows the answer length: label lists are drawn \
    without replacement from the candidates (excluding the two query events for relative sequencing), \
    index lists without replacement from 1..=N, single answers uniformly";

pub const DEFAULT_CHANCE_TRIALS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ChanceEstimate {
    Analytic {
        numerator: u64,
        denominator: u64,
        percent: f64,
    },
    MonteCarlo {
        percent: f64,
        ci_low: f64,
        ci_high: f64,
        trials: usize,
        seed: u64,
    },
}

impl ChanceEstimate {
    pub fn percent(&self) -> f64 {
        match self {
            ChanceEstimate::Analytic { percent, .. } | ChanceEstimate::MonteCarlo { percent, .. } => *percent,
        }
    }

    fn analytic(r: Ratio<u64>) -> Self {
        ChanceEstimate::Analytic {
            numerator: *r.numer(),
            denominator: *r.denom(),
            percent: 100.0 * *r.numer() as f64 / *r.denom() as f64,
        }
    }
}

fn falling(n: u64, k: u64) -> u64 {
    (0..k).map(|i| n - i).product()
}

fn event_count(variant: TaskVariant, level: Option<Level>) -> Option<usize> {
    match variant {
        TaskVariant::SingleEvent => Some(1),
        TaskVariant::PatternOutlier { m } => level.and_then(|l| pattern_repetitions(m, l)).map(|k| m * k + 1),
        _ => level.map(Level::event_count),
    }
}

/// Candidates left to a relative-sequencing guesser once the two query events are removed.
const RELATIVE_POOL: u64 = CANDIDATE_SET_SIZE as u64 - 2;

/// Closed-form chance value, when one exists.
pub fn analytic_chance(variant: TaskVariant, level: Option<Level>, metric: Metric) -> Option<Ratio<u64>> {
    let c = CANDIDATE_SET_SIZE as u64;
    let n = event_count(variant, level)? as u64;
    let one = |d: u64| Some(Ratio::new(1, d));
    match (variant, metric) {
        (TaskVariant::SingleEvent, Metric::Em) => one(c),
        (TaskVariant::Sequencing, Metric::Em) => one(falling(c, n)),
        (TaskVariant::Sequencing, Metric::Pm) => one(c),
        (TaskVariant::Sequencing, Metric::Om) => Some(Ratio::new(n, c)),
        // in-between count k is uniform on 1..=n-2
        (TaskVariant::Relative, Metric::Em) => {
            let ks = 1..=n - 2;
            let sum: Ratio<u64> = ks.clone().map(|k| Ratio::new(1, falling(RELATIVE_POOL, k))).sum();
            Some(sum / (n - 2))
        }
        (TaskVariant::Relative, Metric::Pm) => one(RELATIVE_POOL),
        (TaskVariant::Relative, Metric::Om) => {
            let mean_k = Ratio::new((1..=n - 2).sum::<u64>(), n - 2);
            Some(mean_k / RELATIVE_POOL)
        }
        (TaskVariant::Position { n_q }, Metric::Em) if (1..=n as usize).contains(&n_q) => one(falling(n, n_q as u64)),
        (TaskVariant::SemanticOutlier | TaskVariant::PatternOutlier { .. }, Metric::Em) => one(n),
        _ => None,
    }
}

fn applies(variant: TaskVariant, metric: Metric) -> bool {
    metric == Metric::Em || matches!(variant, TaskVariant::Sequencing | TaskVariant::Relative)
}

/// Analytic value where available, Monte Carlo under [`GUESS_MODEL`] otherwise.
pub fn chance_baseline(
    variant: TaskVariant,
    level: Option<Level>,
    metric: Metric,
    trials: usize,
    seed: u64,
) -> Result<ChanceEstimate, MetricError> {
    if !applies(variant, metric) || event_count(variant, level).is_none() {
        return Err(MetricError::NotApplicable(metric));
    }
    Ok(match analytic_chance(variant, level, metric) {
        Some(r) => ChanceEstimate::analytic(r),
        None => simulate_chance(variant, level, metric, trials, seed)?,
    })
}

/// Abstract simulation: labels are integers, which is exact because every
/// metric is invariant under relabeling.
pub fn simulate_chance(
    variant: TaskVariant,
    level: Option<Level>,
    metric: Metric,
    trials: usize,
    seed: u64,
) -> Result<ChanceEstimate, MetricError> {
    let n = event_count(variant, level).ok_or(MetricError::NotApplicable(metric))?;
    if !applies(variant, metric) {
        return Err(MetricError::NotApplicable(metric));
    }
    let stream = format!("chance/{variant:?}/{level:?}/{metric}");
    let mut rng = SeededRng::new(seed, stream, 0);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (pred, key): (Vec<usize>, Vec<usize>) = match variant {
            TaskVariant::SingleEvent => (vec![rng.random_range(0..CANDIDATE_SET_SIZE)], vec![0]),
            TaskVariant::Sequencing => (distinct_draw(CANDIDATE_SET_SIZE, n, &mut rng), (0..n).collect()),
            TaskVariant::Relative => {
                let k = rng.random_range(1..=n - 2);
                (distinct_draw(RELATIVE_POOL as usize, k, &mut rng), (0..k).collect())
            }
            TaskVariant::Position { n_q } => (distinct_draw(n, n_q, &mut rng), distinct_draw(n, n_q, &mut rng)),
            TaskVariant::SemanticOutlier | TaskVariant::PatternOutlier { .. } => {
                (vec![rng.random_range(0..n)], vec![rng.random_range(0..n)])
            }
        };
        samples.push(match metric {
            Metric::Em => super::exact_match(&pred, &key),
            Metric::Pm => partial_match(&pred, &key),
            Metric::Lm => lcs_match(&pred, &key),
            Metric::Om => orderless_match(&pred, &key),
        });
    }
    let (percent, ci_low, ci_high) = if metric == Metric::Em {
        let hits = samples.iter().filter(|v| **v == 100.0).count();
        wilson_interval(hits, trials)
    } else {
        mean_interval(&samples)
    };
    Ok(ChanceEstimate::MonteCarlo {
        percent,
        ci_low,
        ci_high,
        trials,
        seed,
    })
}

fn distinct_draw(pool: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..pool).collect();
    v.shuffle(rng);
    v.truncate(k);
    v
}

const Z95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval in percent; stays inside [0, 100] for p near 0.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64, f64) {
    if n == 0 {
        return (0.0, 0.0, 100.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (100.0 * p, 100.0 * (centre - half).max(0.0), 100.0 * (centre + half).min(1.0))
}

/// Mean with a normal-approximation 95% interval.
pub fn mean_interval(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let half = Z95 * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

/// One answer drawn under [`GUESS_MODEL`] for a concrete instance.
pub fn random_guess(instance: &TaskInstance, rng: &mut SeededRng) -> AnswerKey {
    match &instance.key {
        AnswerKey::FullSequence { labels } => AnswerKey::FullSequence {
            labels: draw_labels(&instance.candidates, labels.len(), rng),
        },
        AnswerKey::SubSequence { labels } => {
            let excluded: Vec<String> = match instance.query {
                TaskQuery::RelativePair { q_i, q_j } => {
                    let l = instance.video.labels();
                    [q_i, q_j].iter().filter_map(|q| l.get(q.wrapping_sub(1)).cloned()).collect()
                }
                _ => Vec::new(),
            };
            let pool: Vec<String> = instance
                .candidates
                .iter()
                .filter(|c| !excluded.contains(c))
                .cloned()
                .collect();
            AnswerKey::SubSequence {
                labels: draw_labels(&pool, labels.len(), rng),
            }
        }
        AnswerKey::Positions { positions } => {
            let max = instance.max_position();
            AnswerKey::Positions {
                positions: distinct_draw(max, positions.len().min(max), rng)
                    .into_iter()
                    .map(|p| p + 1)
                    .collect(),
            }
        }
        AnswerKey::OutlierPosition { .. } => AnswerKey::OutlierPosition {
            position: rng.random_range(1..=instance.max_position().max(1)),
        },
        AnswerKey::SingleLabel { .. } => AnswerKey::SingleLabel {
            label: instance.candidates.choose(rng).cloned().unwrap_or_default(),
        },
    }
}

fn draw_labels(pool: &[String], k: usize, rng: &mut SeededRng) -> Vec<String> {
    distinct_draw(pool.len(), k.min(pool.len()), rng)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}

/// Two-decimal rendering used by reports.
pub fn format_percent(v: f64) -> String {
    format!("{v:.2}")
}
