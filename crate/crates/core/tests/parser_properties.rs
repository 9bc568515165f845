use proptest::prelude::*;
use serde::Deserialize;
use vector_core::parse::{parse_answer, ParsedAnswer};
use vector_core::prompts::render_answer;
use vector_core::rng::SeededRng;
use vector_core::synth::{AnswerKey, GenSpec, Level, RelativeQueryModel, TaskInstance};
use vector_core::testkit::fixture_catalog;

const FIXTURE: &str = include_str!("fixtures/parser_adversarial.jsonl");
const FIXTURE_MIN_PASS: f64 = 0.95;

fn instance(spec_ix: usize, seed: u64) -> TaskInstance {
    let level = if seed % 2 == 0 { Level::L1 } else { Level::L2 };
    let spec = match spec_ix % 6 {
        0 => GenSpec::SingleEvent,
        1 => GenSpec::Sequencing { level },
        2 => GenSpec::Relative { level, model: RelativeQueryModel::UniformGap },
        3 => GenSpec::Position { level, n_q: 1 + (seed as usize % 3) },
        4 => GenSpec::SemanticOutlier { level },
        _ => GenSpec::PatternOutlier { level, m: 2 + (seed as usize % 2) },
    };
    spec.generate(&fixture_catalog(), &mut SeededRng::new(seed, "parse-prop", 0)).unwrap()
}

/// A wrong-but-valid key of the right shape, built from the candidates.
fn other_key(inst: &TaskInstance, pick: &[usize]) -> AnswerKey {
    let c = &inst.candidates;
    let n = inst.max_position();
    match &inst.key {
        AnswerKey::FullSequence { labels } | AnswerKey::SubSequence { labels } => {
            let mut out: Vec<String> = Vec::new();
            for &p in pick.iter().cycle().take(labels.len() * 4) {
                let l = &c[p % c.len()];
                if !out.contains(l) && out.len() < labels.len() {
                    out.push(l.clone());
                }
            }
            match &inst.key {
                AnswerKey::FullSequence { .. } => AnswerKey::FullSequence { labels: out },
                _ => AnswerKey::SubSequence { labels: out },
            }
        }
        AnswerKey::Positions { positions } => AnswerKey::Positions {
            positions: (0..positions.len()).map(|i| pick.get(i).copied().unwrap_or(i) % n + 1).collect(),
        },
        AnswerKey::OutlierPosition { .. } => AnswerKey::OutlierPosition { position: pick[0] % n + 1 },
        AnswerKey::SingleLabel { .. } => AnswerKey::SingleLabel { label: c[pick[0] % c.len()].clone() },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn canonical_answers_round_trip(spec_ix in 0usize..6, seed in any::<u64>(), pick in prop::collection::vec(0usize..40, 1..10)) {
        let inst = instance(spec_ix, seed);
        prop_assert_eq!(parse_answer(&render_answer(&inst.key), &inst), ParsedAnswer::Answer(inst.key.clone()));
        let other = other_key(&inst, &pick);
        prop_assert_eq!(parse_answer(&render_answer(&other), &inst), ParsedAnswer::Answer(other));
    }

    #[test]
    fn parsing_is_idempotent(spec_ix in 0usize..6, seed in any::<u64>(), noise in "[a-z ,.;:\\-0-9\\n]{0,60}", pick in 0usize..20) {
        let inst = instance(spec_ix, seed);
        let raw = format!("{noise} {} {noise}", inst.candidates[pick]);
        let first = parse_answer(&raw, &inst);
        if let ParsedAnswer::Answer(k) = &first {
            prop_assert_eq!(parse_answer(&render_answer(k), &inst), first.clone());
        }
        prop_assert_eq!(parse_answer(&raw, &inst), first);
    }

    #[test]
    fn arbitrary_text_never_panics(spec_ix in 0usize..6, seed in 0u64..50, raw in "\\PC{0,200}") {
        let inst = instance(spec_ix, seed);
        let _ = parse_answer(&raw, &inst);
    }
}

#[derive(Deserialize)]
struct Case {
    name: String,
    instance: TaskInstance,
    response: String,
    expected: Option<AnswerKey>,
}

#[test]
fn adversarial_fixture_pass_rate() {
    let cases: Vec<Case> = FIXTURE.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(cases.len(), 50);
    let mut failures = Vec::new();
    for c in &cases {
        let got = parse_answer(&c.response, &c.instance);
        let ok = match (&c.expected, &got) {
            (Some(k), ParsedAnswer::Answer(g)) => k == g,
            (None, ParsedAnswer::Unparseable { .. }) => true,
            _ => false,
        };
        if !ok {
            failures.push(format!("{}: {got:?}", c.name));
        }
    }
    let rate = 1.0 - failures.len() as f64 / cases.len() as f64;
    assert!(rate >= FIXTURE_MIN_PASS, "pass rate {rate:.2}; failures: {failures:#?}");
}
