//! Model backends behind one trait: a remote chat-completion client plus
//! scripted reference models used for testing and calibration.

mod orchestrate;
mod payload;
mod remote;
mod scripted;

pub use orchestrate::*;
pub use payload::*;
pub use remote::*;
pub use scripted::*;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{MultiEventVideo, TaskInstance};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited; gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("payload too large ({detail})")]
    PayloadTooLarge { detail: String },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("no recorded response for {instance_id} ({condition}, {stage})")]
    MissingFixture {
        instance_id: String,
        condition: String,
        stage: String,
    },
    #[error("backend {backend} needs the task instance for this call")]
    MissingInstance { backend: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp,
    Oracle,
    NoisyOracle,
    CanonicalBias,
    UniformRandom,
    FixtureReplay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::RemoteHttp => "remote_http",
            BackendKind::Oracle => "oracle",
            BackendKind::NoisyOracle => "noisy_oracle",
            BackendKind::CanonicalBias => "canonical_bias",
            BackendKind::UniformRandom => "uniform_random",
            BackendKind::FixtureReplay => "fixture_replay",
        })
    }
}

/// Which step of an evaluation a call belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum CallStage {
    Answer,
    CotContext,
    CotQuery { context: String },
    DescribeSegment { index: usize },
    MergeDescriptions { descriptions: Vec<String> },
}

impl CallStage {
    pub fn tag(&self) -> String {
        match self {
            CallStage::Answer => "answer".into(),
            CallStage::CotContext => "cot_context".into(),
            CallStage::CotQuery { .. } => "cot_query".into(),
            CallStage::DescribeSegment { index } => format!("describe_segment/{index}"),
            CallStage::MergeDescriptions { .. } => "merge_descriptions".into(),
        }
    }
}

pub const CONDITION_ORIGINAL: &str = "original";
pub const CONDITION_FRAME_SHUFFLED: &str = "frame_shuffled";

pub struct ModelRequest<'a> {
    /// Absent for description calls that are not tied to a question.
    pub instance: Option<&'a TaskInstance>,
    pub video: &'a MultiEventVideo,
    pub prompt: &'a str,
    pub payload: &'a VisualPayload,
    pub stage: CallStage,
    pub condition: &'a str,
}

impl ModelRequest<'_> {
    pub fn instance_id(&self) -> &str {
        self.instance.map(|i| i.instance_id.as_str()).unwrap_or(&self.video.video_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::Add for Usage {
    type Output = Usage;
    fn add(self, o: Usage) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens + o.prompt_tokens,
            completion_tokens: self.completion_tokens + o.completion_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
        }
    }
}

pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;
    fn kind(&self) -> BackendKind;
    /// True for scripted backends that read the answer key. Their scores
    /// are reference points, never model results.
    fn uses_answer_key(&self) -> bool {
        false
    }
    fn complete(&self, request: &ModelRequest<'_>) -> Result<Completion, ClientError>;
}

/// Backend configuration as written in a campaign config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    RemoteHttp(RemoteConfig),
    Oracle {},
    NoisyOracle { rate: f64, seed: u64 },
    CanonicalBias {},
    UniformRandom { seed: u64 },
    FixtureReplay { path: PathBuf },
}

impl BackendSpec {
    pub fn kind(&self) -> BackendKind {
        match self {
            BackendSpec::RemoteHttp(_) => BackendKind::RemoteHttp,
            BackendSpec::Oracle {} => BackendKind::Oracle,
            BackendSpec::NoisyOracle { .. } => BackendKind::NoisyOracle,
            BackendSpec::CanonicalBias {} => BackendKind::CanonicalBias,
            BackendSpec::UniformRandom { .. } => BackendKind::UniformRandom,
            BackendSpec::FixtureReplay { .. } => BackendKind::FixtureReplay,
        }
    }

    /// Id used in records when none is configured.
    pub fn default_id(&self) -> String {
        match self {
            BackendSpec::RemoteHttp(c) => c.model.clone(),
            BackendSpec::NoisyOracle { rate, .. } => format!("noisy_oracle@{rate}"),
            other => other.kind().to_string(),
        }
    }

    pub fn build(&self, id: Option<&str>) -> Result<Box<dyn ModelBackend>, ClientError> {
        let id = id.map(str::to_owned).unwrap_or_else(|| self.default_id());
        Ok(match self {
            BackendSpec::RemoteHttp(c) => Box::new(RemoteHttpBackend::new(id, c.clone())?),
            BackendSpec::Oracle {} => Box::new(OracleBackend::new(id)),
            BackendSpec::NoisyOracle { rate, seed } => Box::new(NoisyOracleBackend::new(id, *rate, *seed)?),
            BackendSpec::CanonicalBias {} => Box::new(CanonicalBiasBackend::new(id)),
            BackendSpec::UniformRandom { seed } => Box::new(UniformRandomBackend::new(id, *seed)),
            BackendSpec::FixtureReplay { path } => Box::new(FixtureReplayBackend::from_path(id, path)?),
        })
    }
}
