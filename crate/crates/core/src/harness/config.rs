use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::CampaignConfig;
use super::HarnessError;
use crate::clients::{BackendSpec, CONDITION_ORIGINAL};
use crate::frames::{FramePolicy, FrameSampling, DEFAULT_FRAME_COUNT};

fn default_frames() -> usize {
    DEFAULT_FRAME_COUNT
}
fn default_concurrency() -> usize {
    4
}
fn default_conditions() -> Vec<String> {
    vec![CONDITION_ORIGINAL.to_owned()]
}

/// `[campaign]` table of a run config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFileOptions {
    #[serde(default)]
    pub cot: bool,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub sampling: FrameSampling,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<String>,
    #[serde(default)]
    pub shuffle_seed: u64,
    #[serde(default)]
    pub record_timestamps: bool,
    #[serde(default)]
    pub retry_failed: bool,
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
}

impl Default for CampaignFileOptions {
    fn default() -> Self {
        Self {
            cot: false,
            frames: default_frames(),
            sampling: FrameSampling::default(),
            concurrency: default_concurrency(),
            conditions: default_conditions(),
            shuffle_seed: 0,
            record_timestamps: false,
            retry_failed: false,
            frames_dir: None,
        }
    }
}

/// A run config file:
///
/// ```toml
/// id = "my-model"
///
/// [backend]
/// kind = "remote_http"
/// endpoint = "https://example.invalid/v1/chat/completions"
/// model = "my-model"
/// api_key_env = "MY_API_KEY"
///
/// [campaign]
/// concurrency = 8
/// frames = 32
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub id: Option<String>,
    pub backend: BackendSpec,
    #[serde(default)]
    pub campaign: CampaignFileOptions,
}

impl RunConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn campaign_config(&self) -> CampaignConfig {
        let c = &self.campaign;
        CampaignConfig {
            cot: c.cot,
            frames: FramePolicy::new(c.frames, c.sampling),
            conditions: c.conditions.clone(),
            concurrency: c.concurrency,
            shuffle_seed: c.shuffle_seed,
            record_timestamps: c.record_timestamps,
            retry_failed: c.retry_failed,
            frames_dir: c.frames_dir.clone(),
            backend_spec: Some(self.backend.clone()),
        }
    }
}
