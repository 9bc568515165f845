use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CallStage, ClientError, ModelBackend, ModelRequest, Usage, VisualPayload};
use crate::prompts::{CotPromptPair, DescriptionPrompts};
use crate::synth::{MultiEventVideo, TaskInstance};

/// Both steps of a two-call chain-of-thought query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotTrace {
    /// Narrative produced by the first call.
    pub context: String,
    /// Raw reply of the second call.
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    pub calls: u32,
}

#[derive(Debug, Error)]
#[error("chain-of-thought step {step} failed: {source}")]
pub struct CotError {
    pub step: u32,
    /// Context from step 1 when step 2 failed.
    pub partial_context: Option<String>,
    #[source]
    pub source: ClientError,
}

fn add_usage(a: Option<Usage>, b: Option<Usage>) -> Option<Usage> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a + b),
        (a, b) => a.or(b),
    }
}

/// Generate a chronological context, then ask the question with that context
/// embedded verbatim. Always two calls.
pub fn cot_infer(
    backend: &dyn ModelBackend,
    instance: &TaskInstance,
    question: &str,
    payload: &VisualPayload,
    cot: &CotPromptPair,
    condition: &str,
) -> Result<CotTrace, CotError> {
    let first = backend
        .complete(&ModelRequest {
            instance: Some(instance),
            video: &instance.video,
            prompt: &cot.p_gen,
            payload,
            stage: CallStage::CotContext,
            condition,
        })
        .map_err(|source| CotError {
            step: 1,
            partial_context: None,
            source,
        })?;
    let context = first.text;
    let prompt = cot.query_prompt(&context, question);
    let second = backend
        .complete(&ModelRequest {
            instance: Some(instance),
            video: &instance.video,
            prompt: &prompt,
            payload,
            stage: CallStage::CotQuery { context: context.clone() },
            condition,
        })
        .map_err(|source| CotError {
            step: 2,
            partial_context: Some(context.clone()),
            source,
        })?;
    Ok(CotTrace {
        context,
        answer: second.text,
        usage: add_usage(first.usage, second.usage),
        calls: 2,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedNarrative {
    pub video_id: String,
    pub descriptions: Vec<String>,
    pub narrative: String,
}

#[derive(Debug, Error)]
#[error("describing segment {index} of {video_id} failed: {source}")]
pub struct DescribeError {
    pub video_id: String,
    pub index: usize,
    /// Descriptions finished before the failure.
    pub partial: Vec<String>,
    #[source]
    pub source: ClientError,
}

/// Describe every segment independently, then merge the descriptions into
/// one chronological narrative with a single call.
pub fn describe_and_merge(
    describer: &dyn ModelBackend,
    merger: &dyn ModelBackend,
    video: &MultiEventVideo,
    frames_per_segment: usize,
    prompts: &DescriptionPrompts,
) -> Result<MergedNarrative, DescribeError> {
    let fail = |index, partial: &[String], source| DescribeError {
        video_id: video.video_id.clone(),
        index,
        partial: partial.to_vec(),
        source,
    };
    let mut descriptions = Vec::with_capacity(video.event_count());
    for index in 0..video.event_count() {
        let payload = VisualPayload::segment_frames(video, index, frames_per_segment)
            .map_err(|e| fail(index, &descriptions, ClientError::Config(e.to_string())))?;
        let reply = describer
            .complete(&ModelRequest {
                instance: None,
                video,
                prompt: &prompts.describe,
                payload: &payload,
                stage: CallStage::DescribeSegment { index },
                condition: super::CONDITION_ORIGINAL,
            })
            .map_err(|e| fail(index, &descriptions, e))?;
        descriptions.push(reply.text.trim().to_owned());
    }
    let payload = VisualPayload::Media {
        uri: video.video_id.clone(),
        boundaries: Some(video.boundaries()),
    };
    let merged = merger
        .complete(&ModelRequest {
            instance: None,
            video,
            prompt: &prompts.merge_prompt(&descriptions),
            payload: &payload,
            stage: CallStage::MergeDescriptions {
                descriptions: descriptions.clone(),
            },
            condition: super::CONDITION_ORIGINAL,
        })
        .map_err(|e| fail(video.event_count(), &descriptions, e))?;
    Ok(MergedNarrative {
        video_id: video.video_id.clone(),
        descriptions,
        narrative: merged.text,
    })
}
