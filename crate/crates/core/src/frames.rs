//! Frame sampling policies over a concatenated multi-event timeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FRAME_COUNT: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("frame count must be positive")]
    ZeroFrames,
    #[error("timeline is empty or has non-positive duration ({0} s)")]
    EmptyTimeline(f64),
    #[error("per-segment sampling of {count} frames over {segments} segments leaves a segment without frames")]
    TooFewFrames { count: usize, segments: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSampling {
    /// Midpoints of `count` equal slices of the whole timeline.
    #[default]
    Uniform,
    /// Frames split evenly across segments, midpoints within each.
    PerSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePolicy {
    pub count: usize,
    pub sampling: FrameSampling,
}

impl Default for FramePolicy {
    fn default() -> Self {
        Self {
            count: DEFAULT_FRAME_COUNT,
            sampling: FrameSampling::Uniform,
        }
    }
}

/// One sampled instant on the concatenated timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStamp {
    /// Seconds from the start of the concatenated video.
    pub t_s: f64,
    /// 0-based segment containing `t_s`.
    pub segment: usize,
    /// Seconds from the start of that segment.
    pub offset_s: f64,
}

impl FramePolicy {
    pub fn new(count: usize, sampling: FrameSampling) -> Self {
        Self { count, sampling }
    }

    /// Frames per segment; the remainder goes to the first segments.
    pub fn per_segment_counts(&self, segments: usize) -> Vec<usize> {
        if segments == 0 {
            return Vec::new();
        }
        let base = self.count / segments;
        let extra = self.count % segments;
        (0..segments).map(|i| base + usize::from(i < extra)).collect()
    }

    /// Timestamps for a timeline given as per-segment `(start, end)` pairs.
    pub fn timestamps(&self, boundaries: &[(f64, f64)]) -> Result<Vec<FrameStamp>, FrameError> {
        if self.count == 0 {
            return Err(FrameError::ZeroFrames);
        }
        let total = boundaries.last().map(|b| b.1).unwrap_or(0.0);
        if boundaries.is_empty() || total <= 0.0 || !total.is_finite() {
            return Err(FrameError::EmptyTimeline(total));
        }
        match self.sampling {
            FrameSampling::Uniform => Ok((0..self.count)
                .map(|i| {
                    let t = (i as f64 + 0.5) * total / self.count as f64;
                    locate(boundaries, t)
                })
                .collect()),
            FrameSampling::PerSegment => {
                if self.count < boundaries.len() {
                    return Err(FrameError::TooFewFrames {
                        count: self.count,
                        segments: boundaries.len(),
                    });
                }
                let mut out = Vec::with_capacity(self.count);
                for (seg, (&(start, end), n)) in boundaries.iter().zip(self.per_segment_counts(boundaries.len())).enumerate() {
                    let len = end - start;
                    for i in 0..n {
                        let offset = (i as f64 + 0.5) * len / n as f64;
                        out.push(FrameStamp {
                            t_s: start + offset,
                            segment: seg,
                            offset_s: offset,
                        });
                    }
                }
                Ok(out)
            }
        }
    }
}

fn locate(boundaries: &[(f64, f64)], t: f64) -> FrameStamp {
    let seg = boundaries
        .iter()
        .position(|&(s, e)| t >= s && t < e)
        .unwrap_or(boundaries.len() - 1);
    FrameStamp {
        t_s: t,
        segment: seg,
        offset_s: t - boundaries[seg].0,
    }
}

/// Per-segment `(start, end)` pairs from a list of durations.
pub fn boundaries_from_durations(durations: &[f64]) -> Vec<(f64, f64)> {
    let mut t = 0.0;
    durations
        .iter()
        .map(|d| {
            let b = (t, t + d);
            t += d;
            b
        })
        .collect()
}
