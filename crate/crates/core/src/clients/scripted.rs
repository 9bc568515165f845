use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use super::{BackendKind, CallStage, ClientError, Completion, ModelBackend, ModelRequest, CONDITION_ORIGINAL};
use crate::metrics::random_guess;
use crate::prompts::render_answer;
use crate::rng::SeededRng;
use crate::synth::{AnswerKey, TaskInstance};

/// Chronological narrative of a label sequence.
pub fn chronology_narrative(labels: &[String]) -> String {
    let n = labels.len();
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| match i {
            0 if n == 1 => format!("The video shows {l}."),
            0 => format!("First, the video shows {l}."),
            i if i + 1 == n => format!("Finally, it shows {l}."),
            _ => format!("Then it shows {l}."),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn describe_label(label: &str) -> String {
    format!("A person is {label}.")
}

pub fn merge_scripted(descriptions: &[String]) -> String {
    descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| format!("Segment {}: {d}", i + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Replies shared by every scripted backend for calls that do not answer
/// the question itself. `None` means the call is an answer call.
fn auxiliary_reply(req: &ModelRequest<'_>, narrated: &[String]) -> Option<String> {
    match &req.stage {
        CallStage::CotContext => Some(chronology_narrative(narrated)),
        CallStage::DescribeSegment { index } => Some(
            req.video
                .segments
                .get(*index)
                .map(|s| describe_label(&s.label))
                .unwrap_or_default(),
        ),
        CallStage::MergeDescriptions { descriptions } => Some(merge_scripted(descriptions)),
        CallStage::Answer | CallStage::CotQuery { .. } => None,
    }
}

fn need_instance<'a>(req: &ModelRequest<'a>, backend: &str) -> Result<&'a TaskInstance, ClientError> {
    req.instance.ok_or_else(|| ClientError::MissingInstance {
        backend: backend.to_owned(),
    })
}

/// Always emits the canonical rendering of the answer key.
pub struct OracleBackend {
    id: String,
}

impl OracleBackend {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl ModelBackend for OracleBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> BackendKind {
        BackendKind::Oracle
    }
    fn uses_answer_key(&self) -> bool {
        true
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        if let Some(text) = auxiliary_reply(req, &req.video.labels()) {
            return Ok(Completion::text(text));
        }
        Ok(Completion::text(render_answer(&need_instance(req, &self.id)?.key)))
    }
}

/// With probability `noise_rate`, swaps one random adjacent pair of a list
/// key before rendering. Single-valued keys are rendered unchanged.
pub fn noisy_oracle_policy(key: &AnswerKey, noise_rate: f64, rng: &mut SeededRng) -> String {
    let hit = rng.random::<f64>() < noise_rate;
    let mut key = key.clone();
    if hit {
        let swap = |len: usize, rng: &mut SeededRng| (len >= 2).then(|| rng.random_range(0..len - 1));
        match &mut key {
            AnswerKey::FullSequence { labels } | AnswerKey::SubSequence { labels } => {
                if let Some(i) = swap(labels.len(), rng) {
                    labels.swap(i, i + 1);
                }
            }
            AnswerKey::Positions { positions } => {
                if let Some(i) = swap(positions.len(), rng) {
                    positions.swap(i, i + 1);
                }
            }
            AnswerKey::OutlierPosition { .. } | AnswerKey::SingleLabel { .. } => {}
        }
    }
    render_answer(&key)
}

pub struct NoisyOracleBackend {
    id: String,
    rate: f64,
    seed: u64,
}

impl NoisyOracleBackend {
    pub fn new(id: impl Into<String>, rate: f64, seed: u64) -> Result<Self, ClientError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ClientError::Config(format!("noise rate {rate} outside [0, 1]")));
        }
        Ok(Self { id: id.into(), rate, seed })
    }
}

impl ModelBackend for NoisyOracleBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> BackendKind {
        BackendKind::NoisyOracle
    }
    fn uses_answer_key(&self) -> bool {
        true
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        if let Some(text) = auxiliary_reply(req, &req.video.labels()) {
            return Ok(Completion::text(text));
        }
        let inst = need_instance(req, &self.id)?;
        // keyed by instance so the noise does not depend on scheduling
        let mut rng = SeededRng::new(self.seed, format!("noisy-oracle/{}/{}", req.condition, inst.instance_id), 0);
        Ok(Completion::text(noisy_oracle_policy(&inst.key, self.rate, &mut rng)))
    }
}

/// Answers with the chronology a prior-driven model expects: the original
/// order for event-shuffled copies, the true key otherwise.
pub struct CanonicalBiasBackend {
    id: String,
}

impl CanonicalBiasBackend {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl ModelBackend for CanonicalBiasBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> BackendKind {
        BackendKind::CanonicalBias
    }
    fn uses_answer_key(&self) -> bool {
        true
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        let prior = req.instance.and_then(|i| i.prior_order.clone());
        let narrated = prior.clone().unwrap_or_else(|| req.video.labels());
        if let Some(text) = auxiliary_reply(req, &narrated) {
            return Ok(Completion::text(text));
        }
        let inst = need_instance(req, &self.id)?;
        let key = match (prior, &inst.key) {
            (Some(labels), AnswerKey::FullSequence { .. }) => AnswerKey::FullSequence { labels },
            _ => inst.key.clone(),
        };
        Ok(Completion::text(render_answer(&key)))
    }
}

/// Uniform random guesser; draws depend only on (seed, condition, instance).
pub struct UniformRandomBackend {
    id: String,
    seed: u64,
}

impl UniformRandomBackend {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        Self { id: id.into(), seed }
    }
}

impl ModelBackend for UniformRandomBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> BackendKind {
        BackendKind::UniformRandom
    }
    /// Reads the key only for its length.
    fn uses_answer_key(&self) -> bool {
        true
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        if let Some(text) = auxiliary_reply(req, &req.video.labels()) {
            return Ok(Completion::text(text));
        }
        let inst = need_instance(req, &self.id)?;
        let mut rng = SeededRng::new(self.seed, format!("uniform-random/{}/{}", req.condition, inst.instance_id), 0);
        Ok(Completion::text(render_answer(&random_guess(inst, &mut rng))))
    }
}

#[derive(Deserialize)]
struct FixtureLine {
    instance_id: String,
    #[serde(default)]
    condition: Option<String>,
    #[serde(default)]
    stage: Option<String>,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    raw_response: Option<String>,
    #[serde(default)]
    cot: Option<FixtureCot>,
}

#[derive(Deserialize)]
struct FixtureCot {
    context: String,
}

/// Replays recorded responses keyed by (instance, condition, stage).
///
/// Accepts both hand-written fixture lines (`response`) and campaign record
/// logs (`raw_response`, optional `cot.context`).
pub struct FixtureReplayBackend {
    id: String,
    responses: HashMap<(String, String, String), String>,
}

impl FixtureReplayBackend {
    pub fn from_path(id: impl Into<String>, path: &Path) -> Result<Self, ClientError> {
        let io = |source| ClientError::Io {
            path: path.to_owned(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut responses = HashMap::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine = match serde_json::from_str(&line) {
                Ok(e) => e,
                // header lines of a record log carry no instance id
                Err(_) if !line.contains("\"instance_id\"") => continue,
                Err(e) => return Err(ClientError::Config(format!("{}:{}: {e}", path.display(), n + 1))),
            };
            let condition = entry.condition.unwrap_or_else(|| CONDITION_ORIGINAL.to_owned());
            let Some(text) = entry.response.or(entry.raw_response) else {
                continue;
            };
            let stage = match (&entry.stage, &entry.cot) {
                (Some(s), _) => s.clone(),
                (None, Some(_)) => "cot_query".to_owned(),
                (None, None) => "answer".to_owned(),
            };
            if let Some(cot) = entry.cot {
                responses.insert((entry.instance_id.clone(), condition.clone(), "cot_context".to_owned()), cot.context);
            }
            responses.insert((entry.instance_id, condition, stage), text);
        }
        Ok(Self {
            id: id.into(),
            responses,
        })
    }

    pub fn from_entries(id: impl Into<String>, entries: impl IntoIterator<Item = ((String, String, String), String)>) -> Self {
        Self {
            id: id.into(),
            responses: entries.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ModelBackend for FixtureReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> BackendKind {
        BackendKind::FixtureReplay
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        let key = (req.instance_id().to_owned(), req.condition.to_owned(), req.stage.tag());
        self.responses
            .get(&key)
            .map(|t| Completion::text(t.clone()))
            .ok_or(ClientError::MissingFixture {
                instance_id: key.0,
                condition: key.1,
                stage: key.2,
            })
    }
}
