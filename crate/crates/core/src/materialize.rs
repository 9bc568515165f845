//! Render instances into real media through an external ffmpeg-compatible
//! program: hard-cut concatenation and per-timestamp frame extraction.

use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frames::{FrameError, FramePolicy};
use crate::synth::TaskInstance;

/// Image format used by `materialize --extract` and read back by campaigns.
pub const EXTRACTED_FRAME_EXT: &str = "jpg";

/// Where extracted frames of one instance live under a materialize output dir.
pub fn frames_dir_for(out_dir: &Path, instance_id: &str) -> PathBuf {
    out_dir.join(format!("{instance_id}_frames"))
}

#[derive(Debug, Error)]
pub enum MaterializeError {
    #[error("clip asset {0} is missing or unreadable")]
    MissingAsset(String),
    #[error("could not start {program}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{program} exited with {status}: {stderr}")]
    ToolFailed { program: String, status: String, stderr: String },
    #[error("no frame decoded at {t_s:.3} s of {media}")]
    NoFrame { media: String, t_s: f64 },
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("plan has no clips")]
    EmptyPlan,
}

/// The external program and how to call it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaTool {
    pub program: PathBuf,
}

impl Default for MediaTool {
    fn default() -> Self {
        Self {
            program: PathBuf::from("ffmpeg"),
        }
    }
}

impl MediaTool {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self { program: program.into() }
    }

    /// Whether the program can be started at all.
    pub fn available(&self) -> bool {
        Command::new(&self.program)
            .arg("-version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    }

    fn run(&self, args: &[String]) -> Result<(), MaterializeError> {
        let program = self.program.display().to_string();
        tracing::debug!(%program, ?args, "invoking media tool");
        let out = Command::new(&self.program)
            .args(args)
            .output()
            .map_err(|source| MaterializeError::Spawn {
                program: program.clone(),
                source,
            })?;
        if !out.status.success() {
            return Err(MaterializeError::ToolFailed {
                program,
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
            });
        }
        Ok(())
    }
}

/// Encoding settings shared by every clip of a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub codec: String,
    pub container: String,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            fps: 25,
            codec: "libx264".into(),
            container: "mp4".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLocator {
    pub uri: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPlan {
    pub instance_id: String,
    pub video_id: String,
    /// In event order.
    pub clips: Vec<ClipLocator>,
    pub settings: RenderSettings,
    pub frames: FramePolicy,
}

impl RenderPlan {
    pub fn for_instance(instance: &TaskInstance, settings: RenderSettings, frames: FramePolicy) -> Self {
        Self {
            instance_id: instance.instance_id.clone(),
            video_id: instance.video.video_id.clone(),
            clips: instance
                .video
                .segments
                .iter()
                .map(|s| ClipLocator {
                    uri: s.uri.clone(),
                    duration_s: s.duration_s,
                })
                .collect(),
            settings,
            frames,
        }
    }

    pub fn boundaries(&self) -> Vec<(f64, f64)> {
        crate::frames::boundaries_from_durations(&self.clips.iter().map(|c| c.duration_s).collect::<Vec<_>>())
    }

    pub fn total_duration_s(&self) -> f64 {
        self.clips.iter().map(|c| c.duration_s).sum()
    }
}

/// Local path for a clip uri; `file://` prefixes are stripped.
pub fn local_path(uri: &str) -> PathBuf {
    PathBuf::from(uri.strip_prefix("file://").unwrap_or(uri))
}

/// Written next to every rendered video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterializedVideo {
    pub instance_id: String,
    pub video_id: String,
    pub path: PathBuf,
    pub sha256: String,
    pub clip_order: Vec<String>,
    pub boundaries: Vec<(f64, f64)>,
    pub settings: RenderSettings,
}

pub fn sha256_file(path: &Path) -> Result<String, MaterializeError> {
    let bytes = std::fs::read(path).map_err(|source| MaterializeError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn concat_args(plan: &RenderPlan, out: &Path) -> Vec<String> {
    let s = &plan.settings;
    let mut args: Vec<String> = ["-y", "-hide_banner", "-loglevel", "error", "-nostdin"]
        .iter()
        .map(|a| a.to_string())
        .collect();
    for c in &plan.clips {
        args.push("-i".into());
        args.push(local_path(&c.uri).display().to_string());
    }
    let mut graph = String::new();
    for i in 0..plan.clips.len() {
        graph.push_str(&format!(
            "[{i}:v]scale={}:{},fps={},setsar=1,format=yuv420p[v{i}];",
            s.width, s.height, s.fps
        ));
    }
    for i in 0..plan.clips.len() {
        graph.push_str(&format!("[v{i}]"));
    }
    graph.push_str(&format!("concat=n={}:v=1:a=0[out]", plan.clips.len()));
    args.extend(
        [
            "-filter_complex",
            &graph,
            "-map",
            "[out]",
            "-an",
            "-c:v",
            &s.codec,
            "-threads",
            "1",
            "-fflags",
            "+bitexact",
            "-flags:v",
            "+bitexact",
            "-map_metadata",
            "-1",
        ]
        .iter()
        .map(|a| a.to_string()),
    );
    args.push(out.display().to_string());
    args
}

/// Concatenate the plan's clips with hard cuts into `out_dir`, then record a
/// checksum sidecar (`<instance_id>.json`).
pub fn materialize_video(tool: &MediaTool, plan: &RenderPlan, out_dir: &Path) -> Result<MaterializedVideo, MaterializeError> {
    if plan.clips.is_empty() {
        return Err(MaterializeError::EmptyPlan);
    }
    for c in &plan.clips {
        let p = local_path(&c.uri);
        if !p.is_file() {
            return Err(MaterializeError::MissingAsset(c.uri.clone()));
        }
    }
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| MaterializeError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let out = out_dir.join(format!("{}.{}", plan.instance_id, plan.settings.container));
    tool.run(&concat_args(plan, &out))?;
    if !out.is_file() {
        return Err(MaterializeError::ToolFailed {
            program: tool.program.display().to_string(),
            status: "success".into(),
            stderr: format!("no output written to {}", out.display()),
        });
    }
    let video = MaterializedVideo {
        instance_id: plan.instance_id.clone(),
        video_id: plan.video_id.clone(),
        sha256: sha256_file(&out)?,
        path: out,
        clip_order: plan.clips.iter().map(|c| c.uri.clone()).collect(),
        boundaries: plan.boundaries(),
        settings: plan.settings.clone(),
    };
    let sidecar = out_dir.join(format!("{}.json", plan.instance_id));
    let json = serde_json::to_vec_pretty(&video).expect("sidecar serializes");
    std::fs::write(&sidecar, json).map_err(io(&sidecar))?;
    Ok(video)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFrame {
    pub index: usize,
    pub t_s: f64,
    pub segment: usize,
    pub path: PathBuf,
}

/// One decoder call per timestamp; frames come back in timeline order.
pub fn extract_frames(
    tool: &MediaTool,
    media: &Path,
    boundaries: &[(f64, f64)],
    policy: FramePolicy,
    out_dir: &Path,
    extension: &str,
) -> Result<Vec<ExtractedFrame>, MaterializeError> {
    if !media.is_file() {
        return Err(MaterializeError::MissingAsset(media.display().to_string()));
    }
    let stamps = policy.timestamps(boundaries)?;
    std::fs::create_dir_all(out_dir).map_err(|source| MaterializeError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut out = Vec::with_capacity(stamps.len());
    for (index, s) in stamps.into_iter().enumerate() {
        let path = out_dir.join(format!("frame_{:04}.{extension}", index + 1));
        let args: Vec<String> = vec![
            "-y".into(),
            "-hide_banner".into(),
            "-loglevel".into(),
            "error".into(),
            "-nostdin".into(),
            "-ss".into(),
            format!("{:.6}", s.t_s),
            "-i".into(),
            media.display().to_string(),
            "-frames:v".into(),
            "1".into(),
            path.display().to_string(),
        ];
        tool.run(&args)?;
        if !path.is_file() {
            return Err(MaterializeError::NoFrame {
                media: media.display().to_string(),
                t_s: s.t_s,
            });
        }
        out.push(ExtractedFrame {
            index,
            t_s: s.t_s,
            segment: s.segment,
            path,
        });
    }
    Ok(out)
}

/// Render many plans with at most `jobs` tool processes at a time.
pub fn materialize_all(
    tool: &MediaTool,
    plans: &[RenderPlan],
    out_dir: &Path,
    jobs: usize,
) -> Vec<Result<MaterializedVideo, MaterializeError>> {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| plans.par_iter().map(|p| materialize_video(tool, p, out_dir)).collect()),
        Err(_) => plans.iter().map(|p| materialize_video(tool, p, out_dir)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_arguments_keep_clip_order() {
        let plan = RenderPlan {
            instance_id: "t1-x".into(),
            video_id: "v".into(),
            clips: vec![
                ClipLocator { uri: "file:///a.mp4".into(), duration_s: 1.0 },
                ClipLocator { uri: "/b.mp4".into(), duration_s: 2.0 },
            ],
            settings: RenderSettings::default(),
            frames: FramePolicy::default(),
        };
        let args = concat_args(&plan, Path::new("/o/t1-x.mp4"));
        let inputs: Vec<&String> = args.windows(2).filter(|w| w[0] == "-i").map(|w| &w[1]).collect();
        assert_eq!(inputs, vec!["/a.mp4", "/b.mp4"]);
        assert!(args.iter().any(|a| a.ends_with("concat=n=2:v=1:a=0[out]")));
        assert_eq!(args.last().unwrap(), "/o/t1-x.mp4");
        assert_eq!(plan.boundaries(), vec![(0.0, 1.0), (1.0, 3.0)]);
    }

    #[test]
    fn missing_asset_is_reported() {
        let plan = RenderPlan {
            instance_id: "t1-x".into(),
            video_id: "v".into(),
            clips: vec![ClipLocator { uri: "/definitely/not/here.mp4".into(), duration_s: 1.0 }],
            settings: RenderSettings::default(),
            frames: FramePolicy::default(),
        };
        let dir = std::env::temp_dir();
        assert!(matches!(
            materialize_video(&MediaTool::default(), &plan, &dir),
            Err(MaterializeError::MissingAsset(_))
        ));
    }
}
