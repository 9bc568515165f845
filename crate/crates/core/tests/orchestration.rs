use std::sync::Mutex;

use vector_core::clients::{
    cot_infer, describe_and_merge, BackendKind, CallStage, ClientError, Completion, FixtureReplayBackend, ModelBackend,
    ModelRequest, NoisyOracleBackend, OracleBackend, VisualPayload, CONDITION_FRAME_SHUFFLED, CONDITION_ORIGINAL,
};
use vector_core::frames::FramePolicy;
use vector_core::harness::{read_log, run_campaign, CampaignConfig, Manifest, ManifestHeader, RecordStatus};
use vector_core::prompts::{CotPromptPair, DescriptionPrompts};
use vector_core::rng::SeededRng;
use vector_core::synth::{gen_description_video, generate_batch, AnswerKey, GenSpec, Level, TaskInstance};
use vector_core::testkit::{demo_catalog, fixture_catalog};

struct Call {
    stage: String,
    prompt: String,
    condition: String,
    payload: VisualPayload,
}

/// Wraps a backend, records every request and optionally fails one stage.
struct Recorder<B> {
    inner: B,
    calls: Mutex<Vec<Call>>,
    fail_stage: Option<&'static str>,
}

impl<B> Recorder<B> {
    fn new(inner: B) -> Self {
        Self { inner, calls: Mutex::new(Vec::new()), fail_stage: None }
    }
}

impl<B: ModelBackend> ModelBackend for Recorder<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        let stage = req.stage.tag();
        self.calls.lock().unwrap().push(Call {
            stage: stage.clone(),
            prompt: req.prompt.to_owned(),
            condition: req.condition.to_owned(),
            payload: req.payload.clone(),
        });
        if self.fail_stage.is_some_and(|s| stage.starts_with(s)) {
            return Err(ClientError::Http { status: 503, body: "down".into() });
        }
        self.inner.complete(req)
    }
}

fn sequencing(n: usize, seed: u64) -> Vec<TaskInstance> {
    generate_batch(&fixture_catalog(), GenSpec::Sequencing { level: Level::L1 }, n, seed).unwrap()
}

#[test]
fn cot_makes_two_calls_and_embeds_the_context() {
    let inst = &sequencing(1, 3)[0];
    let payload = VisualPayload::frames_for(&inst.video, FramePolicy::default()).unwrap();
    let rec = Recorder::new(OracleBackend::new("oracle"));
    let cot = CotPromptPair::default();
    let trace = cot_infer(&rec, inst, "QUESTION-TEXT", &payload, &cot, CONDITION_ORIGINAL).unwrap();
    assert_eq!(trace.calls, 2);
    let labels = inst.video.labels();
    for l in &labels {
        assert!(trace.context.contains(l.as_str()));
    }
    assert_eq!(trace.answer, labels.join(", "));

    let calls = rec.calls.lock().unwrap();
    assert_eq!(calls.iter().map(|c| c.stage.as_str()).collect::<Vec<_>>(), ["cot_context", "cot_query"]);
    assert_eq!(calls[0].prompt, cot.p_gen);
    let q = &calls[1].prompt;
    let ctx_at = q.find(&trace.context).expect("context embedded verbatim");
    assert!(ctx_at < q.find("QUESTION-TEXT").unwrap());
}

#[test]
fn cot_failure_in_step_two_keeps_the_context() {
    let inst = &sequencing(1, 4)[0];
    let payload = VisualPayload::frames_for(&inst.video, FramePolicy::default()).unwrap();
    let mut rec = Recorder::new(OracleBackend::new("oracle"));
    rec.fail_stage = Some("cot_query");
    let err = cot_infer(&rec, inst, "q", &payload, &CotPromptPair::default(), CONDITION_ORIGINAL).unwrap_err();
    assert_eq!(err.step, 2);
    assert!(err.partial_context.unwrap().contains(&inst.video.labels()[0]));
}

#[test]
fn describe_then_merge_keeps_segment_order() {
    let video = gen_description_video(&demo_catalog(), 5, &mut SeededRng::new(1, "describe", 0)).unwrap();
    let rec = Recorder::new(OracleBackend::new("describer"));
    let merged = describe_and_merge(&rec, &rec, &video, 4, &DescriptionPrompts::default()).unwrap();
    assert_eq!(merged.descriptions.len(), 5);
    let calls = rec.calls.lock().unwrap();
    assert_eq!(calls.len(), 6);
    for (i, c) in calls[..5].iter().enumerate() {
        assert_eq!(c.stage, format!("describe_segment/{i}"));
        let VisualPayload::Frames { frames, .. } = &c.payload else { panic!() };
        assert_eq!(frames.len(), 4);
        assert!(frames.iter().all(|f| f.segment == i && f.source_uri == video.segments[i].uri));
    }
    assert_eq!(calls[5].stage, "merge_descriptions");
    for (i, s) in video.segments.iter().enumerate() {
        assert!(merged.descriptions[i].contains(&s.label));
        assert!(calls[5].prompt.contains(&merged.descriptions[i]));
    }
    // Each description precedes the next in the merged narrative.
    let at: Vec<usize> = video.labels().iter().map(|l| merged.narrative.find(l.as_str()).unwrap()).collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]), "{}", merged.narrative);
}

#[test]
fn describe_failure_reports_finished_segments() {
    let video = gen_description_video(&demo_catalog(), 4, &mut SeededRng::new(2, "describe", 0)).unwrap();
    let mut rec = Recorder::new(OracleBackend::new("d"));
    rec.fail_stage = Some("describe_segment/2");
    let err = describe_and_merge(&rec, &rec, &video, 2, &DescriptionPrompts::default()).unwrap_err();
    assert_eq!(err.index, 2);
    assert_eq!(err.partial.len(), 2);
}

#[test]
fn campaign_with_cot_and_frame_shuffle() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new(ManifestHeader::new(Some(5)));
    m.instances = sequencing(6, 5);
    let rec = Recorder::new(OracleBackend::new("oracle"));
    let cfg = CampaignConfig {
        cot: true,
        conditions: vec![CONDITION_ORIGINAL.into(), CONDITION_FRAME_SHUFFLED.into()],
        concurrency: 2,
        ..CampaignConfig::default()
    };
    let log = dir.path().join("cot.jsonl");
    let s = run_campaign(&m, &rec, &cfg, &log).unwrap();
    assert_eq!((s.planned, s.model_calls), (12, 24));
    let records = read_log(&log).unwrap().records;
    assert!(records.iter().all(|r| r.model_calls == 2 && r.cot.is_some() && r.is_correct()));

    let calls = rec.calls.lock().unwrap();
    for inst in &m.instances {
        let frames_of = |cond: &str| {
            calls
                .iter()
                .find(|c| c.condition == cond && c.stage == "cot_context" && payload_video(&c.payload) == inst.video.segments[0].uri)
                .map(|c| c.payload.clone())
        };
        let (Some(VisualPayload::Frames { frames: a, shuffled: sa, .. }), Some(VisualPayload::Frames { frames: b, shuffled: sb, .. })) =
            (frames_of(CONDITION_ORIGINAL), frames_of(CONDITION_FRAME_SHUFFLED))
        else {
            panic!("both conditions must send frames for {}", inst.instance_id);
        };
        assert!(!sa && sb);
        assert_eq!(a.len(), 32);
        assert_ne!(a, b);
        let key = |f: &vector_core::clients::FrameRef| (f.t_s.to_bits(), f.segment);
        let mut ka: Vec<_> = a.iter().map(key).collect();
        let mut kb: Vec<_> = b.iter().map(key).collect();
        ka.sort_unstable();
        kb.sort_unstable();
        assert_eq!(ka, kb, "shuffle must permute, not resample");
    }
}

/// First frame's source uri, used to tell videos apart in the call log.
fn payload_video(p: &VisualPayload) -> String {
    match p {
        VisualPayload::Frames { frames, .. } => {
            let mut v = frames.clone();
            v.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
            v[0].source_uri.clone()
        }
        VisualPayload::Media { uri, .. } => uri.clone(),
    }
}

#[test]
fn replaying_a_log_reproduces_its_scores() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new(ManifestHeader::new(Some(6)));
    m.instances = sequencing(10, 6);
    let noisy = NoisyOracleBackend::new("noisy", 0.5, 9).unwrap();
    let src = dir.path().join("src.jsonl");
    run_campaign(&m, &noisy, &CampaignConfig { cot: true, ..CampaignConfig::default() }, &src).unwrap();

    let replay = FixtureReplayBackend::from_path("noisy", &src).unwrap();
    assert_eq!(replay.len(), 20);
    let dst = dir.path().join("dst.jsonl");
    run_campaign(&m, &replay, &CampaignConfig { cot: true, ..CampaignConfig::default() }, &dst).unwrap();
    let a = read_log(&src).unwrap().records;
    let b = read_log(&dst).unwrap().records;
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((&x.instance_id, &x.scores, &x.cot), (&y.instance_id, &y.scores, &y.cot));
    }

    // Unknown instances fail loudly instead of scoring as wrong.
    let empty = FixtureReplayBackend::from_entries("empty", []);
    let s = run_campaign(&m, &empty, &CampaignConfig::default(), &dir.path().join("e.jsonl")).unwrap();
    assert_eq!(s.failed, 10);
    let r = &read_log(&dir.path().join("e.jsonl")).unwrap().records[0];
    assert_eq!(r.status, RecordStatus::Failed);
    assert!(r.error.as_deref().unwrap().contains("no recorded response"));
}

#[test]
fn noisy_oracle_extremes() {
    let insts = sequencing(50, 8);
    let calm = NoisyOracleBackend::new("n0", 0.0, 1).unwrap();
    let wild = NoisyOracleBackend::new("n1", 1.0, 1).unwrap();
    let payload = VisualPayload::Media { uri: "x".into(), boundaries: None };
    for inst in &insts {
        let ask = |b: &dyn ModelBackend| {
            b.complete(&ModelRequest {
                instance: Some(inst),
                video: &inst.video,
                prompt: "",
                payload: &payload,
                stage: CallStage::Answer,
                condition: CONDITION_ORIGINAL,
            })
            .unwrap()
            .text
        };
        let AnswerKey::FullSequence { labels } = &inst.key else { panic!() };
        assert_eq!(ask(&calm), labels.join(", "));
        let got: Vec<String> = ask(&wild).split(", ").map(str::to_owned).collect();
        assert_eq!(ask(&wild), got.join(", "), "deterministic per instance");
        let diffs: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != got[i]).collect();
        assert_eq!(diffs.len(), 2);
        assert_eq!(diffs[1], diffs[0] + 1);
    }
    assert!(NoisyOracleBackend::new("bad", 1.5, 0).is_err());
}
