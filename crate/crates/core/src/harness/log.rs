use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::clients::{BackendKind, BackendSpec, CotTrace};
use crate::frames::FramePolicy;
use crate::metrics::ScoreSet;
use crate::parse::ParsedAnswer;
use crate::synth::{Level, TaskKind, TaskVariant};

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Planned record count for one report row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeEntry {
    pub variant: TaskVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub condition: String,
    pub count: usize,
}

/// First line of a record log: everything needed to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignHeader {
    pub schema_version: u32,
    pub tool_version: String,
    pub backend_id: String,
    pub backend_kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_spec: Option<BackendSpec>,
    pub answer_key_access: bool,
    pub manifest_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    pub cot: bool,
    pub frames: FramePolicy,
    pub conditions: Vec<String>,
    pub shuffle_seed: u64,
    pub scope: Vec<ScopeEntry>,
}

impl CampaignHeader {
    pub fn planned(&self) -> usize {
        self.scope.iter().map(|s| s.count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

/// One evaluated (instance, backend, condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: String,
    pub backend_id: String,
    pub condition: String,
    pub task: TaskKind,
    pub variant: TaskVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    /// Original instance id when this is the event-shuffled side of a pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_of: Option<String>,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<ParsedAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<CotTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub model_calls: u32,
    pub answer_key_access: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

pub type RecordKey = (String, String, String);

impl EvalRecord {
    pub fn key(&self) -> RecordKey {
        (self.instance_id.clone(), self.backend_id.clone(), self.condition.clone())
    }

    pub fn is_correct(&self) -> bool {
        self.scores.is_some_and(|s| s.is_correct())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Campaign(Box<CampaignHeader>),
    Record(Box<EvalRecord>),
}

/// Contents of a record log. Later records for the same key supersede
/// earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLog {
    pub header: CampaignHeader,
    pub records: Vec<EvalRecord>,
}

impl RecordLog {
    /// Latest record per key, ordered by key.
    pub fn latest(&self) -> BTreeMap<RecordKey, &EvalRecord> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            out.insert(r.key(), r);
        }
        out
    }
}

/// Bytes of `text` up to and including the last newline whose line parses.
fn valid_prefix_len(text: &str) -> usize {
    let mut good = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let complete = line.ends_with('\n');
        if !complete || serde_json::from_str::<LogLine>(line.trim_end()).is_err() && !line.trim().is_empty() {
            break;
        }
        offset += line.len();
        good = offset;
    }
    good
}

pub fn read_log(path: &Path) -> Result<RecordLog, HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut header = None;
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(&line) {
            Ok(LogLine::Campaign(h)) if header.is_none() => header = Some(*h),
            Ok(LogLine::Campaign(_)) => {
                return Err(HarnessError::Log {
                    path: path.to_owned(),
                    line: n + 1,
                    message: "second campaign header".into(),
                })
            }
            Ok(LogLine::Record(r)) => records.push(*r),
            // a torn final line is tolerated on read and repaired on resume
            Err(e) => {
                tracing::warn!(path = %path.display(), line = n + 1, error = %e, "skipping unreadable log line");
            }
        }
    }
    let header = header.ok_or_else(|| HarnessError::Log {
        path: path.to_owned(),
        line: 1,
        message: "missing campaign header".into(),
    })?;
    Ok(RecordLog { header, records })
}

/// Append-only writer. Opening an existing log truncates a torn tail and
/// checks that the stored header matches.
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    pub fn open(path: &Path, header: &CampaignHeader) -> Result<(Self, Vec<EvalRecord>), HarnessError> {
        let io = |source| HarnessError::Io {
            path: path.to_owned(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io)?;
        let keep = valid_prefix_len(&text);
        if keep < text.len() {
            tracing::warn!(path = %path.display(), dropped = text.len() - keep, "truncating torn log tail");
            file.set_len(keep as u64).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        }
        let mut writer = LogWriter {
            path: path.to_owned(),
            file,
        };
        if keep == 0 {
            writer.write_line(&LogLine::Campaign(Box::new(header.clone())))?;
            return Ok((writer, Vec::new()));
        }
        let existing = read_log(path)?;
        if existing.header != *header {
            return Err(HarnessError::LogMismatch {
                path: path.to_owned(),
                detail: header_diff(&existing.header, header),
            });
        }
        Ok((writer, existing.records))
    }

    fn write_line(&mut self, line: &LogLine) -> Result<(), HarnessError> {
        let mut bytes = serde_json::to_vec(line).map_err(|e| HarnessError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        // one write per line keeps a crash from interleaving partial records
        self.file.write_all(&bytes).map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.file.flush().map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn append(&mut self, record: &EvalRecord) -> Result<(), HarnessError> {
        self.write_line(&LogLine::Record(Box::new(record.clone())))
    }
}

fn header_diff(a: &CampaignHeader, b: &CampaignHeader) -> String {
    let (a, b) = (serde_json::to_value(a).unwrap_or_default(), serde_json::to_value(b).unwrap_or_default());
    let fields: Vec<String> = a
        .as_object()
        .into_iter()
        .flatten()
        .filter(|(k, v)| b.get(k.as_str()) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    format!("existing log was written with different {}", fields.join(", "))
}
