use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::*;
use super::shuffle::make_shuffle_pair;
use super::types::*;
use super::SynthError;
use crate::catalog::ClipCatalog;
use crate::rng::SeededRng;

/// Parameters of one generator. Each spec owns a named random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "spec", rename_all = "snake_case")]
pub enum GenSpec {
    SingleEvent,
    Sequencing { level: Level },
    Relative { level: Level, model: RelativeQueryModel },
    Position { level: Level, n_q: usize },
    SemanticOutlier { level: Level },
    PatternOutlier { level: Level, m: usize },
}

impl GenSpec {
    pub fn stream_name(&self) -> String {
        match self {
            GenSpec::SingleEvent => "t0".into(),
            GenSpec::Sequencing { level } => format!("t1/{level}"),
            GenSpec::Relative { level, model } => match model {
                RelativeQueryModel::UniformGap => format!("t2/{level}"),
                RelativeQueryModel::UniformPair => format!("t2/{level}/uniform-pair"),
            },
            GenSpec::Position { level, n_q } => format!("t3/{level}/nq{n_q}"),
            GenSpec::SemanticOutlier { level } => format!("t4/{level}"),
            GenSpec::PatternOutlier { level, m } => format!("t5/{level}/m{m}"),
        }
    }

    pub fn generate(&self, catalog: &ClipCatalog, rng: &mut SeededRng) -> Result<TaskInstance, SynthError> {
        match *self {
            GenSpec::SingleEvent => gen_single_event(catalog, rng),
            GenSpec::Sequencing { level } => gen_event_sequencing(catalog, level, rng),
            GenSpec::Relative { level, model } => gen_relative_sequencing_with(catalog, level, model, rng),
            GenSpec::Position { level, n_q } => gen_position_identification(catalog, level, n_q, rng),
            GenSpec::SemanticOutlier { level } => gen_semantic_outlier(catalog, level, rng),
            GenSpec::PatternOutlier { level, m } => gen_pattern_outlier(catalog, m, level, rng),
        }
    }
}

/// `count` instances of `spec`; instance `i` uses stream `(seed, spec, i)`.
/// Output order is by index regardless of scheduling.
pub fn generate_batch(catalog: &ClipCatalog, spec: GenSpec, count: usize, seed: u64) -> Result<Vec<TaskInstance>, SynthError> {
    let stream = spec.stream_name();
    (0..count)
        .into_par_iter()
        .map(|i| spec.generate(catalog, &mut SeededRng::new(seed, stream.as_str(), i as u64)))
        .collect()
}

/// Every spec of the full benchmark release with its instance count.
pub fn release_plan(per_row: usize) -> Vec<(GenSpec, usize)> {
    let mut plan = Vec::new();
    for level in Level::ALL {
        plan.push((GenSpec::Sequencing { level }, per_row));
    }
    for level in Level::ALL {
        plan.push((GenSpec::Relative { level, model: RelativeQueryModel::default() }, per_row));
    }
    for n_q in 1..=3 {
        for level in Level::ALL {
            plan.push((GenSpec::Position { level, n_q }, per_row));
        }
    }
    for level in Level::ALL {
        plan.push((GenSpec::SemanticOutlier { level }, per_row));
    }
    for m in [2, 3] {
        for level in Level::ALL {
            plan.push((GenSpec::PatternOutlier { level, m }, per_row));
        }
    }
    plan
}

/// Standard release size: 300 questions per table row.
pub const RELEASE_PER_ROW: usize = 300;
/// Size of the single-event recognition pretest.
pub const PRETEST_COUNT: usize = 2400;

pub fn generate_release(catalog: &ClipCatalog, seed: u64, per_row: usize) -> Result<Vec<TaskInstance>, SynthError> {
    let mut out = Vec::new();
    for (spec, count) in release_plan(per_row) {
        out.extend(generate_batch(catalog, spec, count, seed)?);
    }
    Ok(out)
}

/// Shuffle pairs over Task-1-style instances whose event counts are drawn
/// uniformly from `min_events..=max_events`.
pub fn generate_shuffle_pairs(
    catalog: &ClipCatalog,
    count: usize,
    min_events: usize,
    max_events: usize,
    seed: u64,
) -> Result<Vec<ShufflePair>, SynthError> {
    if min_events < 2 || max_events < min_events {
        return Err(SynthError::InvalidParameter(format!(
            "event range {min_events}..={max_events} must start at 2 or more"
        )));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            use rand::Rng;
            let mut rng = SeededRng::new(seed, "shuffle-pairs", i as u64);
            let n = rng.random_range(min_events..=max_events);
            let inst = gen_sequencing_n(catalog, n, None, &mut rng)?;
            make_shuffle_pair(&inst, &mut rng)
        })
        .collect()
}
