use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{CategoryId, ClipId, GroupId};
use crate::rng::SeedProvenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "T0_single_event")]
    SingleEvent,
    #[serde(rename = "T1_sequencing")]
    Sequencing,
    #[serde(rename = "T2_relative")]
    Relative,
    #[serde(rename = "T3_position")]
    Position,
    #[serde(rename = "T4_semantic_outlier")]
    SemanticOutlier,
    #[serde(rename = "T5_pattern_outlier")]
    PatternOutlier,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::SingleEvent,
        TaskKind::Sequencing,
        TaskKind::Relative,
        TaskKind::Position,
        TaskKind::SemanticOutlier,
        TaskKind::PatternOutlier,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            TaskKind::SingleEvent => "t0",
            TaskKind::Sequencing => "t1",
            TaskKind::Relative => "t2",
            TaskKind::Position => "t3",
            TaskKind::SemanticOutlier => "t4",
            TaskKind::PatternOutlier => "t5",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TaskKind::SingleEvent => "Single event recognition",
            TaskKind::Sequencing => "Event sequencing",
            TaskKind::Relative => "Relative event sequencing",
            TaskKind::Position => "Event position identification",
            TaskKind::SemanticOutlier => "Discordant semantic-group position identification",
            TaskKind::PatternOutlier => "Discordant event position identification",
        }
    }

    /// Tasks whose answers are label lists scored with PM/LM/OM as well as EM.
    pub fn is_list_task(self) -> bool {
        matches!(self, TaskKind::Sequencing | TaskKind::Relative)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.short_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task `{s}` (expected t0..t5)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::L1, Level::L2];

    /// Event count for Tasks 1-4.
    pub fn event_count(self) -> usize {
        match self {
            Level::L1 => 4,
            Level::L2 => 8,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
        })
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Level::L1),
            "l2" => Ok(Level::L2),
            _ => Err(format!("unknown level `{s}` (expected l1 or l2)")),
        }
    }
}

/// Repetition count of the Task 5 pattern for a pattern length and level.
///
/// Sequence lengths are 7/9 (m = 2) and 7/10 (m = 3) including the outlier.
pub fn pattern_repetitions(pattern_length: usize, level: Level) -> Option<usize> {
    match (pattern_length, level) {
        (2, Level::L1) => Some(3),
        (2, Level::L2) => Some(4),
        (3, Level::L1) => Some(2),
        (3, Level::L2) => Some(3),
        _ => None,
    }
}

/// One event of a multi-event video: a clip and its category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub clip_id: ClipId,
    pub category_id: CategoryId,
    pub label: String,
    pub uri: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiEventVideo {
    pub video_id: String,
    /// Ground-truth chronology.
    pub segments: Vec<Segment>,
}

impl MultiEventVideo {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut hasher = Sha256::new();
        for s in &segments {
            hasher.update(s.clip_id.as_str().as_bytes());
            hasher.update([0u8]);
        }
        let video_id = format!("v-{}", &hex::encode(hasher.finalize())[..16]);
        Self { video_id, segments }
    }

    pub fn event_count(&self) -> usize {
        self.segments.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.label.clone()).collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.duration_s).collect()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// `(start, end)` of every segment on the concatenated timeline.
    pub fn boundaries(&self) -> Vec<(f64, f64)> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration_s;
                (start, t)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskQuery {
    None,
    /// 1-based positions with `q_i < q_j`.
    RelativePair { q_i: usize, q_j: usize },
    /// Queried labels; the answer lists their positions in this order.
    PositionProbe { queried: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnswerKey {
    FullSequence { labels: Vec<String> },
    SubSequence { labels: Vec<String> },
    Positions { positions: Vec<usize> },
    OutlierPosition { position: usize },
    SingleLabel { label: String },
}

impl AnswerKey {
    pub fn shape(&self) -> AnswerShape {
        match self {
            AnswerKey::FullSequence { .. } => AnswerShape::FullSequence,
            AnswerKey::SubSequence { .. } => AnswerShape::SubSequence,
            AnswerKey::Positions { .. } => AnswerShape::Positions,
            AnswerKey::OutlierPosition { .. } => AnswerShape::OutlierPosition,
            AnswerKey::SingleLabel { .. } => AnswerShape::SingleLabel,
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        match self {
            AnswerKey::FullSequence { labels } | AnswerKey::SubSequence { labels } => Some(labels),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerShape {
    FullSequence,
    SubSequence,
    Positions,
    OutlierPosition,
    SingleLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub pattern_length: usize,
    pub repetitions: usize,
    pub pattern: Vec<String>,
    pub outlier: String,
    /// 1-based position of the outlier in the emitted sequence.
    pub insertion_index: usize,
}

impl PatternSpec {
    pub fn sequence_length(&self) -> usize {
        self.pattern_length * self.repetitions + 1
    }

    /// Table-style row label, e.g. `s1s2s1s2s1s2 + x`.
    pub fn shape_label(&self) -> String {
        pattern_shape_label(self.pattern_length, self.repetitions)
    }
}

pub fn pattern_shape_label(pattern_length: usize, repetitions: usize) -> String {
    let unit: String = (1..=pattern_length).map(|i| format!("s{i}")).collect();
    format!("{} + x", unit.repeat(repetitions))
}

/// Reporting bucket: a task plus the parameter that splits its table rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskVariant {
    SingleEvent,
    Sequencing,
    Relative,
    Position { n_q: usize },
    SemanticOutlier,
    PatternOutlier { m: usize },
}

impl TaskVariant {
    pub fn task(self) -> TaskKind {
        match self {
            TaskVariant::SingleEvent => TaskKind::SingleEvent,
            TaskVariant::Sequencing => TaskKind::Sequencing,
            TaskVariant::Relative => TaskKind::Relative,
            TaskVariant::Position { .. } => TaskKind::Position,
            TaskVariant::SemanticOutlier => TaskKind::SemanticOutlier,
            TaskVariant::PatternOutlier { .. } => TaskKind::PatternOutlier,
        }
    }

    /// Row label used in reports.
    pub fn row_label(self, level: Option<Level>) -> String {
        match self {
            TaskVariant::Position { n_q } => match n_q {
                1 => "Single event detection".into(),
                2 => "Double event detection".into(),
                3 => "Triple event detection".into(),
                n => format!("{n}-event detection"),
            },
            TaskVariant::SemanticOutlier => "Single anomaly".into(),
            TaskVariant::PatternOutlier { m } => match level.and_then(|l| pattern_repetitions(m, l)) {
                Some(k) => pattern_shape_label(m, k),
                None => format!("pattern m={m}"),
            },
            other => other.task().title().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// Content hash of everything below; doubles as the campaign idempotency key.
    pub instance_id: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub video: MultiEventVideo,
    pub candidates: Vec<String>,
    pub query: TaskQuery,
    pub key: AnswerKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_group: Option<GroupId>,
    /// Chronology a prior-driven model would expect; set on event-shuffled copies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_order: Option<Vec<String>>,
    pub seed: SeedProvenance,
}

impl TaskInstance {
    pub fn variant(&self) -> TaskVariant {
        match (self.task, &self.query, &self.pattern) {
            (TaskKind::SingleEvent, _, _) => TaskVariant::SingleEvent,
            (TaskKind::Sequencing, _, _) => TaskVariant::Sequencing,
            (TaskKind::Relative, _, _) => TaskVariant::Relative,
            (TaskKind::Position, TaskQuery::PositionProbe { queried }, _) => {
                TaskVariant::Position { n_q: queried.len() }
            }
            (TaskKind::Position, _, _) => TaskVariant::Position { n_q: 0 },
            (TaskKind::SemanticOutlier, _, _) => TaskVariant::SemanticOutlier,
            (TaskKind::PatternOutlier, _, Some(p)) => TaskVariant::PatternOutlier { m: p.pattern_length },
            (TaskKind::PatternOutlier, _, None) => TaskVariant::PatternOutlier { m: 0 },
        }
    }

    /// Recomputes the content hash and stores it as `instance_id`.
    pub fn seal(mut self) -> Self {
        self.instance_id = self.content_hash();
        self
    }

    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.instance_id = String::new();
        let bytes = serde_json::to_vec(&copy).expect("instances serialize");
        let digest = Sha256::digest(&bytes);
        format!("{}-{}", self.task.short_name(), &hex::encode(digest)[..16])
    }

    /// Largest valid 1-based index for position answers.
    pub fn max_position(&self) -> usize {
        self.video.event_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShufflePair {
    pub original: TaskInstance,
    pub shuffled: TaskInstance,
    /// `permutation[i]` is the 1-based original position shown at shuffled position `i + 1`.
    pub permutation: Vec<usize>,
}
