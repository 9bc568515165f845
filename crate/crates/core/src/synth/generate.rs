use std::collections::HashMap;

use rand::seq::{IndexedRandom, IteratorRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::*;
use super::SynthError;
use crate::catalog::{ClipCatalog, GroupId, Split, CANDIDATE_SET_SIZE};
use crate::rng::SeededRng;

/// How Task 2 draws its query pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeQueryModel {
    /// Number of in-between events uniform on `1..=N_e-2`, then a uniform
    /// start position for that gap.
    #[default]
    UniformGap,
    /// Uniform over every `(q_i, q_j)` with `q_j - q_i >= 2`.
    UniformPair,
}

impl RelativeQueryModel {
    /// Probability of each in-between count `k = 1..=n_events-2`.
    pub fn gap_weights(self, n_events: usize) -> Vec<(usize, f64)> {
        let gaps: Vec<usize> = (1..n_events.saturating_sub(1)).collect();
        match self {
            RelativeQueryModel::UniformGap => {
                let p = 1.0 / gaps.len() as f64;
                gaps.into_iter().map(|k| (k, p)).collect()
            }
            RelativeQueryModel::UniformPair => {
                // a gap of k in-between events admits n - k - 1 start positions
                let total: usize = gaps.iter().map(|k| n_events - k - 1).sum();
                gaps.into_iter()
                    .map(|k| (k, (n_events - k - 1) as f64 / total as f64))
                    .collect()
            }
        }
    }
}

fn segment_for(catalog: &ClipCatalog, position: usize, split: Split, rng: &mut SeededRng) -> Result<Segment, SynthError> {
    let clips: Vec<_> = catalog.clips_of(position, split).collect();
    let clip = clips.choose(rng).ok_or_else(|| SynthError::InsufficientCatalog(format!(
        "category `{}` has no {split:?} clip",
        catalog.categories()[position].category_id
    )))?;
    Ok(Segment {
        clip_id: clip.clip_id.clone(),
        category_id: clip.category_id.clone(),
        label: catalog.label_at(position).to_owned(),
        uri: clip.uri.clone(),
        duration_s: clip.duration_s,
    })
}

fn distinct_usable(catalog: &ClipCatalog, n: usize, split: Split, rng: &mut SeededRng) -> Result<Vec<usize>, SynthError> {
    let usable = catalog.usable_positions(split);
    if usable.len() < n {
        return Err(SynthError::InsufficientCatalog(format!(
            "need {n} categories with {split:?} clips, catalog has {}",
            usable.len()
        )));
    }
    let mut picked: Vec<usize> = usable.choose_multiple(rng, n).copied().collect();
    picked.shuffle(rng);
    Ok(picked)
}

fn candidates_for(catalog: &ClipCatalog, positions: &[usize], rng: &mut SeededRng) -> Result<Vec<String>, SynthError> {
    let mut distinct = Vec::with_capacity(positions.len());
    for &p in positions {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    let chosen = catalog.sample_candidate_positions(&distinct, CANDIDATE_SET_SIZE, rng)?;
    Ok(chosen.into_iter().map(|p| catalog.label_at(p).to_owned()).collect())
}

fn build(
    task: TaskKind,
    level: Option<Level>,
    video: MultiEventVideo,
    candidates: Vec<String>,
    query: TaskQuery,
    key: AnswerKey,
    rng: &SeededRng,
) -> TaskInstance {
    TaskInstance {
        instance_id: String::new(),
        task,
        level,
        video,
        candidates,
        query,
        key,
        pattern: None,
        dominant_group: None,
        prior_order: None,
        seed: rng.origin().clone(),
    }
}

fn distinct_event_video(
    catalog: &ClipCatalog,
    n_events: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<usize>, MultiEventVideo), SynthError> {
    let picked = distinct_usable(catalog, n_events, Split::Validation, rng)?;
    let segments = picked
        .iter()
        .map(|&p| segment_for(catalog, p, Split::Validation, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((picked, MultiEventVideo::new(segments)))
}

/// Task 1: enumerate all events chronologically.
pub fn gen_event_sequencing(catalog: &ClipCatalog, level: Level, rng: &mut SeededRng) -> Result<TaskInstance, SynthError> {
    gen_sequencing_n(catalog, level.event_count(), Some(level), rng)
}

/// Task-1-style instance with an arbitrary number of distinct events.
pub fn gen_sequencing_n(
    catalog: &ClipCatalog,
    n_events: usize,
    level: Option<Level>,
    rng: &mut SeededRng,
) -> Result<TaskInstance, SynthError> {
    if n_events == 0 || n_events > CANDIDATE_SET_SIZE {
        return Err(SynthError::InvalidParameter(format!(
            "event count {n_events} must be in 1..={CANDIDATE_SET_SIZE}"
        )));
    }
    let (picked, video) = distinct_event_video(catalog, n_events, rng)?;
    let candidates = candidates_for(catalog, &picked, rng)?;
    let key = AnswerKey::FullSequence { labels: video.labels() };
    Ok(build(TaskKind::Sequencing, level, video, candidates, TaskQuery::None, key, rng).seal())
}

/// Task 2: list the events strictly between two query events.
pub fn gen_relative_sequencing(catalog: &ClipCatalog, level: Level, rng: &mut SeededRng) -> Result<TaskInstance, SynthError> {
    gen_relative_sequencing_with(catalog, level, RelativeQueryModel::default(), rng)
}

pub fn gen_relative_sequencing_with(
    catalog: &ClipCatalog,
    level: Level,
    model: RelativeQueryModel,
    rng: &mut SeededRng,
) -> Result<TaskInstance, SynthError> {
    let n = level.event_count();
    let (picked, video) = distinct_event_video(catalog, n, rng)?;
    let (q_i, q_j) = match model {
        RelativeQueryModel::UniformGap => {
            let between = rng.random_range(1..=n - 2);
            let q_i = rng.random_range(1..=n - between - 1);
            (q_i, q_i + between + 1)
        }
        RelativeQueryModel::UniformPair => {
            let pairs: Vec<(usize, usize)> = (1..=n)
                .flat_map(|i| (i + 2..=n).map(move |j| (i, j)))
                .collect();
            *pairs.choose(rng).expect("n >= 3")
        }
    };
    let key = AnswerKey::SubSequence {
        labels: events_between(&video.labels(), q_i, q_j),
    };
    let candidates = candidates_for(catalog, &picked, rng)?;
    let query = TaskQuery::RelativePair { q_i, q_j };
    Ok(build(TaskKind::Relative, Some(level), video, candidates, query, key, rng).seal())
}

/// Labels at positions strictly between 1-based `q_i` and `q_j`, in order.
pub fn events_between(labels: &[String], q_i: usize, q_j: usize) -> Vec<String> {
    if q_i == 0 || q_i >= q_j || q_j > labels.len() {
        return Vec::new();
    }
    labels[q_i..q_j - 1].to_vec()
}

/// Task 3: report the positions of `n_q` queried events.
pub fn gen_position_identification(
    catalog: &ClipCatalog,
    level: Level,
    n_q: usize,
    rng: &mut SeededRng,
) -> Result<TaskInstance, SynthError> {
    let n = level.event_count();
    if !(1..=3).contains(&n_q) || n_q > n {
        return Err(SynthError::InvalidParameter(format!("n_q must be in 1..=3, got {n_q}")));
    }
    let (picked, video) = distinct_event_video(catalog, n, rng)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.truncate(n_q);
    let labels = video.labels();
    let queried = order.iter().map(|&i| labels[i].clone()).collect();
    let positions = order.iter().map(|&i| i + 1).collect();
    let candidates = candidates_for(catalog, &picked, rng)?;
    let query = TaskQuery::PositionProbe { queried };
    let key = AnswerKey::Positions { positions };
    Ok(build(TaskKind::Position, Some(level), video, candidates, query, key, rng).seal())
}

/// Group with the most events in a sequence; `None` when the maximum is tied
/// or no event is grouped.
pub fn dominant_group(groups: &[Option<GroupId>]) -> Option<GroupId> {
    let mut counts: HashMap<&GroupId, usize> = HashMap::new();
    for g in groups.iter().flatten() {
        *counts.entry(g).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    let mut winners = counts.into_iter().filter(|&(_, c)| c == best);
    let (first, _) = winners.next()?;
    match winners.next() {
        Some(_) => None,
        None => Some(first.clone()),
    }
}

/// Task 4: find the single event outside the dominant semantic group.
pub fn gen_semantic_outlier(catalog: &ClipCatalog, level: Level, rng: &mut SeededRng) -> Result<TaskInstance, SynthError> {
    let n = level.event_count();
    let eligible: Vec<(usize, Vec<usize>)> = catalog
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.excluded)
        .map(|(i, g)| (i, catalog.usable_members(g, Split::Validation)))
        .filter(|(_, members)| !members.is_empty())
        .collect();
    if eligible.len() < 2 {
        return Err(SynthError::InsufficientCatalog(format!(
            "semantic outliers need two non-excluded groups with clips, found {}",
            eligible.len()
        )));
    }
    let dominant_choices: Vec<usize> = (0..eligible.len())
        .filter(|&i| eligible[i].1.len() >= n - 1)
        .collect();
    let &d = dominant_choices.choose(rng).ok_or_else(|| {
        SynthError::InsufficientCatalog(format!("no group has {} members with validation clips", n - 1))
    })?;
    let other = (0..eligible.len()).filter(|&i| i != d).choose(rng).expect("at least two groups");

    let mut picked: Vec<usize> = eligible[d].1.choose_multiple(rng, n - 1).copied().collect();
    picked.shuffle(rng);
    let outlier = *eligible[other].1.choose(rng).expect("non-empty");
    let k = rng.random_range(1..=n);
    picked.insert(k - 1, outlier);

    let segments = picked
        .iter()
        .map(|&p| segment_for(catalog, p, Split::Validation, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let video = MultiEventVideo::new(segments);
    let dominant_id = catalog.groups()[eligible[d].0].group_id.clone();
    let sequence_groups: Vec<Option<GroupId>> = picked
        .iter()
        .map(|&p| catalog.group_of_position(p).map(|g| g.group_id.clone()))
        .collect();
    if dominant_group(&sequence_groups).as_ref() != Some(&dominant_id) {
        return Err(SynthError::Internal("dominant group does not survive recomputation".into()));
    }
    let candidates = candidates_for(catalog, &picked, rng)?;
    let key = AnswerKey::OutlierPosition { position: k };
    let mut inst = build(TaskKind::SemanticOutlier, Some(level), video, candidates, TaskQuery::None, key, rng);
    inst.dominant_group = Some(dominant_id);
    Ok(inst.seal())
}

/// Task 5: find the event that breaks a repeating pattern of length `m`.
pub fn gen_pattern_outlier(
    catalog: &ClipCatalog,
    m: usize,
    level: Level,
    rng: &mut SeededRng,
) -> Result<TaskInstance, SynthError> {
    let reps = pattern_repetitions(m, level)
        .ok_or_else(|| SynthError::InvalidParameter(format!("pattern length must be 2 or 3, got {m}")))?;
    let picked = distinct_usable(catalog, m + 1, Split::Validation, rng)?;
    let (pattern, outlier) = (&picked[..m], picked[m]);
    let insertion = rng.random_range(1..=m * reps + 1);
    let mut order: Vec<usize> = pattern.iter().copied().cycle().take(m * reps).collect();
    order.insert(insertion - 1, outlier);

    let segments = order
        .iter()
        .map(|&p| segment_for(catalog, p, Split::Validation, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let video = MultiEventVideo::new(segments);
    let candidates = candidates_for(catalog, &picked, rng)?;
    let key = AnswerKey::OutlierPosition { position: insertion };
    let mut inst = build(TaskKind::PatternOutlier, Some(level), video, candidates, TaskQuery::None, key, rng);
    inst.pattern = Some(PatternSpec {
        pattern_length: m,
        repetitions: reps,
        pattern: pattern.iter().map(|&p| catalog.label_at(p).to_owned()).collect(),
        outlier: catalog.label_at(outlier).to_owned(),
        insertion_index: insertion,
    });
    Ok(inst.seal())
}

/// Single-event recognition pretest: one clip, 20 candidate labels.
pub fn gen_single_event(catalog: &ClipCatalog, rng: &mut SeededRng) -> Result<TaskInstance, SynthError> {
    let (picked, video) = distinct_event_video(catalog, 1, rng)?;
    let candidates = candidates_for(catalog, &picked, rng)?;
    let key = AnswerKey::SingleLabel {
        label: video.segments[0].label.clone(),
    };
    Ok(build(TaskKind::SingleEvent, None, video, candidates, TaskQuery::None, key, rng).seal())
}

/// Multi-event video of `n_segments` train-split clips for description builds.
pub fn gen_description_video(
    catalog: &ClipCatalog,
    n_segments: usize,
    rng: &mut SeededRng,
) -> Result<MultiEventVideo, SynthError> {
    let picked = distinct_usable(catalog, n_segments, Split::Train, rng)?;
    let segments = picked
        .iter()
        .map(|&p| segment_for(catalog, p, Split::Train, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MultiEventVideo::new(segments))
}
