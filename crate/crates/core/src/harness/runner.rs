use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::log::{CampaignHeader, EvalRecord, LogWriter, RecordStatus, ScopeEntry, Timestamps, LOG_SCHEMA_VERSION};
use super::manifest::Manifest;
use super::HarnessError;
use crate::clients::{
    cot_infer, BackendKind, BackendSpec, CallStage, ClientError, Completion, ModelBackend, ModelRequest, VisualPayload,
    CONDITION_FRAME_SHUFFLED, CONDITION_ORIGINAL,
};
use crate::frames::FramePolicy;
use crate::materialize::{frames_dir_for, EXTRACTED_FRAME_EXT};
use crate::metrics::{biased_ratio, mean_scores, robustness_ratio, score_answer, PairOutcome, RobustnessOutcome, ShuffleOutcome};
use crate::parse::{parse_answer, ParsedAnswer};
use crate::prompts::{render_prompt, CotPromptPair};
use crate::rng::SeededRng;
use crate::synth::TaskInstance;

/// Wraps a backend and counts every call that reaches it.
pub struct CountingBackend<'a> {
    inner: &'a dyn ModelBackend,
    calls: AtomicU64,
}

impl<'a> CountingBackend<'a> {
    pub fn new(inner: &'a dyn ModelBackend) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ModelBackend for CountingBackend<'_> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
    fn uses_answer_key(&self) -> bool {
        self.inner.uses_answer_key()
    }
    fn complete(&self, request: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub cot: bool,
    pub frames: FramePolicy,
    pub conditions: Vec<String>,
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Seed for frame-order permutations.
    pub shuffle_seed: u64,
    /// Wall-clock stamps make logs non-reproducible, so they are opt-in.
    pub record_timestamps: bool,
    /// Re-attempt keys whose latest record failed.
    pub retry_failed: bool,
    /// Output directory of `materialize --extract`; frames are read from
    /// `<dir>/<instance_id>_frames/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_spec: Option<BackendSpec>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            cot: false,
            frames: FramePolicy::default(),
            conditions: vec![CONDITION_ORIGINAL.to_owned()],
            concurrency: 4,
            shuffle_seed: 0,
            record_timestamps: false,
            retry_failed: false,
            frames_dir: None,
            backend_spec: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub planned: usize,
    pub evaluated: usize,
    pub resumed: usize,
    pub failed: usize,
    pub model_calls: u64,
}

impl CampaignSummary {
    pub fn is_partial(&self) -> bool {
        self.failed > 0
    }
}

struct WorkItem<'a> {
    instance: &'a TaskInstance,
    pair_of: Option<&'a str>,
    condition: &'a str,
}

fn work_items<'a>(manifest: &'a Manifest, conditions: &'a [String]) -> Vec<WorkItem<'a>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |instance: &'a TaskInstance, pair_of: Option<&'a str>| {
        for c in conditions {
            if seen.insert((instance.instance_id.as_str(), c.as_str())) {
                out.push(WorkItem {
                    instance,
                    pair_of,
                    condition: c,
                });
            }
        }
    };
    for i in &manifest.instances {
        push(i, None);
    }
    for p in &manifest.pairs {
        push(&p.original, None);
        push(&p.shuffled, Some(p.original.instance_id.as_str()));
    }
    out
}

fn scope_of(items: &[WorkItem<'_>]) -> Vec<ScopeEntry> {
    let mut counts: BTreeMap<(String, String), ScopeEntry> = BTreeMap::new();
    for it in items {
        let (variant, level) = (it.instance.variant(), it.instance.level);
        let key = (format!("{variant:?}/{level:?}"), it.condition.to_owned());
        counts
            .entry(key)
            .or_insert_with(|| ScopeEntry {
                variant,
                level,
                condition: it.condition.to_owned(),
                count: 0,
            })
            .count += 1;
    }
    counts.into_values().collect()
}

pub fn campaign_header(manifest: &Manifest, backend: &dyn ModelBackend, config: &CampaignConfig) -> CampaignHeader {
    let items = work_items(manifest, &config.conditions);
    CampaignHeader {
        schema_version: LOG_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        backend_id: backend.id().to_owned(),
        backend_kind: backend.kind(),
        backend_spec: config.backend_spec.clone(),
        answer_key_access: backend.uses_answer_key(),
        manifest_digest: manifest.digest(),
        manifest_seed: manifest.header.seed,
        catalog: manifest
            .header
            .catalog_source
            .as_ref()
            .map(|s| format!("{s}@{}", manifest.header.catalog_version.as_deref().unwrap_or("?"))),
        cot: config.cot,
        frames: config.frames,
        conditions: config.conditions.clone(),
        shuffle_seed: config.shuffle_seed,
        scope: scope_of(&items),
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn evaluate(backend: &dyn ModelBackend, item: &WorkItem<'_>, config: &CampaignConfig, cot: &CotPromptPair) -> EvalRecord {
    let started = config.record_timestamps.then(now_ms);
    let inst = item.instance;
    let mut record = EvalRecord {
        instance_id: inst.instance_id.clone(),
        backend_id: backend.id().to_owned(),
        condition: item.condition.to_owned(),
        task: inst.task,
        variant: inst.variant(),
        level: inst.level,
        pair_of: item.pair_of.map(str::to_owned),
        status: RecordStatus::Failed,
        raw_response: None,
        parsed: None,
        scores: None,
        cot: None,
        error: None,
        model_calls: 0,
        answer_key_access: backend.uses_answer_key(),
        timestamps: None,
    };
    let outcome = (|| -> Result<(), String> {
        let prompt = render_prompt(inst).map_err(|e| e.to_string())?;
        let mut payload = VisualPayload::frames_for(&inst.video, config.frames).map_err(|e| e.to_string())?;
        if let Some(dir) = &config.frames_dir {
            payload.attach_images(&frames_dir_for(dir, &inst.instance_id), EXTRACTED_FRAME_EXT);
        }
        if item.condition == CONDITION_FRAME_SHUFFLED {
            let mut rng = SeededRng::new(config.shuffle_seed, format!("frame-shuffle/{}", inst.instance_id), 0);
            payload = payload.frame_shuffled(&mut rng);
        }
        let raw = if config.cot {
            match cot_infer(backend, inst, &prompt, &payload, cot, item.condition) {
                Ok(trace) => {
                    record.model_calls = trace.calls;
                    let answer = trace.answer.clone();
                    record.cot = Some(trace);
                    answer
                }
                Err(e) => {
                    record.model_calls = e.step;
                    return Err(match &e.partial_context {
                        Some(ctx) => format!("{e} (context from step 1: {ctx:?})"),
                        None => e.to_string(),
                    });
                }
            }
        } else {
            record.model_calls = 1;
            backend
                .complete(&ModelRequest {
                    instance: Some(inst),
                    video: &inst.video,
                    prompt: &prompt,
                    payload: &payload,
                    stage: CallStage::Answer,
                    condition: item.condition,
                })
                .map_err(|e| e.to_string())?
                .text
        };
        let parsed = parse_answer(&raw, inst);
        let scores = score_answer(&parsed, &inst.key).map_err(|e| e.to_string())?;
        record.raw_response = Some(raw);
        record.parsed = Some(parsed);
        record.scores = Some(scores);
        Ok(())
    })();
    match outcome {
        Ok(()) => record.status = RecordStatus::Ok,
        Err(e) => record.error = Some(e),
    }
    if let Some(started_unix_ms) = started {
        record.timestamps = Some(Timestamps {
            started_unix_ms,
            finished_unix_ms: now_ms(),
        });
    }
    record
}

/// Evaluate every manifest instance (both sides of every pair) under every
/// configured condition, appending to the log at `log_path`. Keys already
/// present in the log are skipped, so an interrupted run resumes where it
/// stopped and a finished one makes no new calls.
pub fn run_campaign(
    manifest: &Manifest,
    backend: &dyn ModelBackend,
    config: &CampaignConfig,
    log_path: &Path,
) -> Result<CampaignSummary, HarnessError> {
    if manifest.is_empty() {
        return Err(HarnessError::EmptyCampaign("manifest has no instances".into()));
    }
    if config.conditions.is_empty() {
        return Err(HarnessError::Config("at least one condition is required".into()));
    }
    let header = campaign_header(manifest, backend, config);
    let (mut writer, existing) = LogWriter::open(log_path, &header)?;
    let mut done: BTreeMap<(String, String), RecordStatus> = BTreeMap::new();
    for r in &existing {
        done.insert((r.instance_id.clone(), r.condition.clone()), r.status);
    }
    let items = work_items(manifest, &config.conditions);
    let planned = items.len();
    let todo: Vec<&WorkItem<'_>> = items
        .iter()
        .filter(|it| {
            match done.get(&(it.instance.instance_id.clone(), it.condition.to_owned())) {
                Some(RecordStatus::Ok) => false,
                Some(RecordStatus::Failed) => config.retry_failed,
                None => true,
            }
        })
        .collect();
    let resumed = planned - todo.len();
    tracing::info!(planned, resumed, todo = todo.len(), backend = backend.id(), "campaign start");

    let counter = CountingBackend::new(backend);
    let cot = CotPromptPair::default();
    let next = AtomicUsize::new(0);
    let workers = config.concurrency.max(1).min(todo.len().max(1));
    let mut evaluated = 0;
    let mut write_error = None;
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, EvalRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next, counter, cot) = (&todo, &next, &counter, &cot);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = todo.get(i) else { break };
                let rec = evaluate(counter, item, config, cot);
                if tx.send((i, rec)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer; a reorder buffer keeps the log in work order
        let mut pending: BTreeMap<usize, EvalRecord> = BTreeMap::new();
        let mut cursor = 0;
        for (i, rec) in rx {
            pending.insert(i, rec);
            while let Some(rec) = pending.remove(&cursor) {
                if write_error.is_none() {
                    if let Err(e) = writer.append(&rec) {
                        write_error = Some(e);
                        // stop handing out work
                        next.store(usize::MAX / 2, Ordering::SeqCst);
                    }
                }
                if rec.status == RecordStatus::Failed {
                    tracing::warn!(instance = %rec.instance_id, error = rec.error.as_deref().unwrap_or(""), "record failed");
                }
                evaluated += 1;
                cursor += 1;
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    let log = super::log::read_log(log_path)?;
    let failed = log.latest().values().filter(|r| r.status == RecordStatus::Failed).count();
    Ok(CampaignSummary {
        planned,
        evaluated,
        resumed,
        failed,
        model_calls: counter.calls(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleDiagnosis {
    pub backend_id: String,
    pub shuffle: Option<ShuffleOutcome>,
    pub robustness: Option<RobustnessOutcome>,
}

/// η from event-shuffled pairs and ρ from the frame-shuffled condition,
/// both computed from the records of one backend.
pub fn shuffle_diagnosis(records: &[&EvalRecord], backend_id: &str) -> ShuffleDiagnosis {
    let mine: Vec<&EvalRecord> = records.iter().copied().filter(|r| r.backend_id == backend_id).collect();
    let by_key: BTreeMap<(&str, &str), &EvalRecord> = mine
        .iter()
        .map(|r| ((r.instance_id.as_str(), r.condition.as_str()), *r))
        .collect();
    let parsed = |r: &EvalRecord| {
        r.parsed
            .clone()
            .unwrap_or_else(|| ParsedAnswer::unparseable(r.error.clone().unwrap_or_default()))
    };
    let mut pairs = Vec::new();
    for s in mine.iter().filter(|r| r.condition == CONDITION_ORIGINAL) {
        let Some(orig_id) = &s.pair_of else { continue };
        let Some(o) = by_key.get(&(orig_id.as_str(), CONDITION_ORIGINAL)) else {
            continue;
        };
        pairs.push(PairOutcome {
            original_id: orig_id.clone(),
            shuffled_id: s.instance_id.clone(),
            p_o: parsed(o),
            p_s: parsed(s),
            c_o: o.is_correct(),
            c_s: s.is_correct(),
        });
    }
    pairs.sort_by(|a, b| a.original_id.cmp(&b.original_id).then_with(|| a.shuffled_id.cmp(&b.shuffled_id)));
    let shuffle = (!pairs.is_empty()).then(|| biased_ratio(pairs));

    // ρ over instances present under both frame conditions
    let mut orig = Vec::new();
    let mut shuf = Vec::new();
    for r in mine.iter().filter(|r| r.condition == CONDITION_FRAME_SHUFFLED && r.pair_of.is_none()) {
        let original = by_key.get(&(r.instance_id.as_str(), CONDITION_ORIGINAL)).and_then(|o| o.scores);
        if let (Some(os), Some(ss)) = (original, r.scores) {
            orig.push(os);
            shuf.push(ss);
        }
    }
    let robustness = (!orig.is_empty()).then(|| robustness_ratio(mean_scores(&orig).em, mean_scores(&shuf).em));
    ShuffleDiagnosis {
        backend_id: backend_id.to_owned(),
        shuffle,
        robustness,
    }
}

/// Run the shuffle conditions and compute both diagnostics.
pub fn diagnose_shuffle(
    manifest: &Manifest,
    backend: &dyn ModelBackend,
    config: &CampaignConfig,
    log_path: &Path,
) -> Result<(CampaignSummary, ShuffleDiagnosis), HarnessError> {
    let mut config = config.clone();
    for c in [CONDITION_ORIGINAL, CONDITION_FRAME_SHUFFLED] {
        if !config.conditions.iter().any(|x| x == c) {
            config.conditions.push(c.to_owned());
        }
    }
    let summary = run_campaign(manifest, backend, &config, log_path)?;
    let log = super::log::read_log(log_path)?;
    let latest = log.latest();
    let records: Vec<&EvalRecord> = latest.values().copied().collect();
    Ok((summary, shuffle_diagnosis(&records, backend.id())))
}
