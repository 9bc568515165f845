use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::frames::{FrameError, FramePolicy};
use crate::rng::SeededRng;
use crate::synth::MultiEventVideo;

/// One sampled frame. `image` is set once frames have been extracted to disk;
/// scripted backends never need it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub t_s: f64,
    pub segment: usize,
    pub source_uri: String,
    pub offset_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

/// What the model gets to see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VisualPayload {
    Frames {
        policy: FramePolicy,
        frames: Vec<FrameRef>,
        /// Set when the frame order was deliberately permuted.
        #[serde(default)]
        shuffled: bool,
    },
    Media {
        uri: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boundaries: Option<Vec<(f64, f64)>>,
    },
}

impl VisualPayload {
    pub fn frames_for(video: &MultiEventVideo, policy: FramePolicy) -> Result<Self, FrameError> {
        let stamps = policy.timestamps(&video.boundaries())?;
        let frames = stamps
            .into_iter()
            .map(|s| FrameRef {
                t_s: s.t_s,
                segment: s.segment,
                source_uri: video.segments[s.segment].uri.clone(),
                offset_s: s.offset_s,
                image: None,
            })
            .collect();
        Ok(VisualPayload::Frames {
            policy,
            frames,
            shuffled: false,
        })
    }

    /// Points each frame at `<dir>/frame_NNNN.<ext>`, numbered from 1 in
    /// timeline order. Call before shuffling.
    pub fn attach_images(&mut self, dir: &Path, ext: &str) {
        if let VisualPayload::Frames { frames, .. } = self {
            for (i, f) in frames.iter_mut().enumerate() {
                f.image = Some(dir.join(format!("frame_{:04}.{ext}", i + 1)));
            }
        }
    }

    /// Frames of one segment only, sampled over that segment.
    pub fn segment_frames(video: &MultiEventVideo, index: usize, count: usize) -> Result<Self, FrameError> {
        let seg = video.segments.get(index).ok_or(FrameError::EmptyTimeline(0.0))?;
        let policy = FramePolicy::new(count, crate::frames::FrameSampling::Uniform);
        let stamps = policy.timestamps(&[(0.0, seg.duration_s)])?;
        Ok(VisualPayload::Frames {
            policy,
            frames: stamps
                .into_iter()
                .map(|s| FrameRef {
                    t_s: s.t_s,
                    segment: index,
                    source_uri: seg.uri.clone(),
                    offset_s: s.offset_s,
                    image: None,
                })
                .collect(),
            shuffled: false,
        })
    }

    /// Same frames in a random order. Media payloads are returned unchanged.
    pub fn frame_shuffled(&self, rng: &mut SeededRng) -> Self {
        match self {
            VisualPayload::Frames { policy, frames, .. } => {
                let mut frames = frames.clone();
                if frames.len() > 1 {
                    let original = frames.clone();
                    while frames == original {
                        frames.shuffle(rng);
                    }
                }
                VisualPayload::Frames {
                    policy: *policy,
                    frames,
                    shuffled: true,
                }
            }
            other => other.clone(),
        }
    }

    pub fn frame_count(&self) -> usize {
        match self {
            VisualPayload::Frames { frames, .. } => frames.len(),
            VisualPayload::Media { .. } => 0,
        }
    }
}
