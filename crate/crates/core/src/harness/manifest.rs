use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::synth::{ShufflePair, TaskInstance};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// First line of an instance manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_version: Option<String>,
    /// Free-form generator parameters, kept for lineage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl ManifestHeader {
    pub fn new(seed: Option<u64>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            catalog_source: None,
            catalog_version: None,
            generator: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ManifestLine {
    Header(ManifestHeader),
    Instance(Box<TaskInstance>),
    Pair(Box<ShufflePair>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub instances: Vec<TaskInstance>,
    pub pairs: Vec<ShufflePair>,
}

impl Manifest {
    pub fn new(header: ManifestHeader) -> Self {
        Self {
            header,
            instances: Vec::new(),
            pairs: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty() && self.pairs.is_empty()
    }

    /// Hash over every instance id in file order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for id in self
            .instances
            .iter()
            .map(|i| &i.instance_id)
            .chain(self.pairs.iter().flat_map(|p| [&p.original.instance_id, &p.shuffled.instance_id]))
        {
            h.update(id.as_bytes());
            h.update([b'\n']);
        }
        hex::encode(h.finalize())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &ManifestLine| {
            out.push_str(&serde_json::to_string(line).expect("manifest lines serialize"));
            out.push('\n');
        };
        push(&ManifestLine::Header(self.header.clone()));
        for i in &self.instances {
            push(&ManifestLine::Instance(Box::new(i.clone())));
        }
        for p in &self.pairs {
            push(&ManifestLine::Pair(Box::new(p.clone())));
        }
        out
    }
}

/// Writes through a temporary file and renames, so readers never see a
/// half-written manifest.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp).map_err(io)?);
        w.write_all(manifest.to_jsonl().as_bytes()).map_err(io)?;
        w.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    parse_manifest(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn parse_manifest(reader: impl BufRead, origin: &str) -> Result<Manifest, HarnessError> {
    let bad = |line: usize, message: String| HarnessError::Manifest {
        origin: origin.to_owned(),
        line,
        message,
    };
    let mut manifest: Option<Manifest> = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| bad(n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| bad(n + 1, e.to_string()))?;
        match (parsed, manifest.as_mut()) {
            (ManifestLine::Header(h), None) => {
                if h.schema_version != MANIFEST_SCHEMA_VERSION {
                    return Err(bad(n + 1, format!("unsupported schema_version {}", h.schema_version)));
                }
                manifest = Some(Manifest::new(h));
            }
            (ManifestLine::Header(_), Some(_)) => return Err(bad(n + 1, "second header line".into())),
            (_, None) => return Err(bad(n + 1, "first line must be the header".into())),
            (ManifestLine::Instance(i), Some(m)) => {
                check_id(&i, n + 1, origin)?;
                m.instances.push(*i);
            }
            (ManifestLine::Pair(p), Some(m)) => {
                check_id(&p.original, n + 1, origin)?;
                check_id(&p.shuffled, n + 1, origin)?;
                m.pairs.push(*p);
            }
        }
    }
    manifest.ok_or_else(|| bad(0, "empty manifest".into()))
}

fn check_id(inst: &TaskInstance, line: usize, origin: &str) -> Result<(), HarnessError> {
    let expected = inst.content_hash();
    if inst.instance_id != expected {
        return Err(HarnessError::Manifest {
            origin: origin.to_owned(),
            line,
            message: format!("instance id {} does not match its content ({expected})", inst.instance_id),
        });
    }
    Ok(())
}
