//! Model-facing prompt rendering.
//!
//! Templates live in `templates/*.v1.txt` and are compiled into the binary.
//! A template body may reference `{candidates}`, `{query}` and
//! `{answer_format}` only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{AnswerKey, AnswerShape, TaskInstance, TaskKind, TaskQuery};

pub const TEMPLATE_VERSION: &str = "v1";
pub const PLACEHOLDERS: [&str; 3] = ["candidates", "query", "answer_format"];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("instance {instance_id}: task {task} does not carry a {expected} query")]
    QueryMismatch {
        instance_id: String,
        task: TaskKind,
        expected: &'static str,
    },
    #[error("template {template_id} references unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { template_id: String, name: String },
}

/// Kind of answer a template asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    ListOfLabels,
    IndexList,
    SingleIndex,
    SingleLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: &'static str,
    pub task: TaskKind,
    pub body: &'static str,
    pub answer_format: AnswerFormat,
}

impl PromptTemplate {
    pub fn for_task(task: TaskKind) -> PromptTemplate {
        let (template_id, body, answer_format) = match task {
            TaskKind::SingleEvent => (
                "t0_single_event.v1",
                include_str!("../templates/t0_single_event.v1.txt"),
                AnswerFormat::SingleLabel,
            ),
            TaskKind::Sequencing => (
                "t1_sequencing.v1",
                include_str!("../templates/t1_sequencing.v1.txt"),
                AnswerFormat::ListOfLabels,
            ),
            TaskKind::Relative => (
                "t2_relative.v1",
                include_str!("../templates/t2_relative.v1.txt"),
                AnswerFormat::ListOfLabels,
            ),
            TaskKind::Position => (
                "t3_position.v1",
                include_str!("../templates/t3_position.v1.txt"),
                AnswerFormat::IndexList,
            ),
            TaskKind::SemanticOutlier => (
                "t4_semantic_outlier.v1",
                include_str!("../templates/t4_semantic_outlier.v1.txt"),
                AnswerFormat::SingleIndex,
            ),
            TaskKind::PatternOutlier => (
                "t5_pattern_outlier.v1",
                include_str!("../templates/t5_pattern_outlier.v1.txt"),
                AnswerFormat::SingleIndex,
            ),
        };
        PromptTemplate {
            template_id,
            task,
            body,
            answer_format,
        }
    }

    /// Placeholder names used by the body, in order of appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        placeholder_names(self.body)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        validate_placeholders(self.template_id, self.body, &PLACEHOLDERS)
    }
}

fn placeholder_names(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn validate_placeholders(template_id: &str, body: &str, allowed: &[&str]) -> Result<(), PromptError> {
    for name in placeholder_names(body) {
        if !allowed.contains(&name) {
            return Err(PromptError::UnknownPlaceholder {
                template_id: template_id.to_owned(),
                name: name.to_owned(),
            });
        }
    }
    Ok(())
}

/// How the numbered candidate list is presented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStyle {
    #[default]
    Numbered,
    Lettered,
}

fn render_candidates(candidates: &[String], style: CandidateStyle) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, label)| match style {
            CandidateStyle::Numbered => format!("{}. {label}", i + 1),
            CandidateStyle::Lettered => format!("({}) {label}", (b'A' + i as u8) as char),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn count_word(n: usize) -> String {
    match n {
        1 => "one".into(),
        2 => "two".into(),
        3 => "three".into(),
        n => n.to_string(),
    }
}

fn quote_list(labels: &[String]) -> String {
    labels.iter().map(|l| format!("\"{l}\"")).collect::<Vec<_>>().join(", ")
}

/// The exact answer-format sentence for an instance.
pub fn answer_format_instruction(instance: &TaskInstance) -> String {
    match (instance.task, &instance.query) {
        (TaskKind::SingleEvent, _) => "Answer with exactly one event name from the candidate list.".into(),
        (TaskKind::Sequencing, _) => {
            "Answer as a comma-separated list of event names in chronological order.".into()
        }
        (TaskKind::Relative, _) => "Answer as a comma-separated list of event names in chronological order. \
             Do not include the two query events."
            .into(),
        (TaskKind::Position, TaskQuery::PositionProbe { queried }) if queried.len() == 1 => {
            "Answer with one 1-based position index.".into()
        }
        (TaskKind::Position, TaskQuery::PositionProbe { queried }) => format!(
            "Answer with {} 1-based position indices, comma-separated, in the same order as the query events.",
            count_word(queried.len())
        ),
        (TaskKind::Position, _) => "Answer with 1-based position indices, comma-separated.".into(),
        (TaskKind::SemanticOutlier | TaskKind::PatternOutlier, _) => {
            "Answer with a single 1-based position index.".into()
        }
    }
}

fn render_query(instance: &TaskInstance) -> Result<String, PromptError> {
    let mismatch = |expected| PromptError::QueryMismatch {
        instance_id: instance.instance_id.clone(),
        task: instance.task,
        expected,
    };
    match (instance.task, &instance.query) {
        (TaskKind::Relative, TaskQuery::RelativePair { q_i, q_j }) => {
            let labels = instance.video.labels();
            match (labels.get(q_i.wrapping_sub(1)), labels.get(q_j.wrapping_sub(1))) {
                (Some(a), Some(b)) if q_i < q_j => Ok(format!("Query events: \"{a}\" and \"{b}\".")),
                _ => Err(mismatch("valid relative-pair")),
            }
        }
        (TaskKind::Relative, _) => Err(mismatch("relative-pair")),
        (TaskKind::Position, TaskQuery::PositionProbe { queried }) if !queried.is_empty() => {
            Ok(format!("Query events: {}.", quote_list(queried)))
        }
        (TaskKind::Position, _) => Err(mismatch("position-probe")),
        (_, _) => Ok(String::new()),
    }
}

pub fn render_prompt(instance: &TaskInstance) -> Result<String, PromptError> {
    render_prompt_with(instance, CandidateStyle::default())
}

pub fn render_prompt_with(instance: &TaskInstance, style: CandidateStyle) -> Result<String, PromptError> {
    let template = PromptTemplate::for_task(instance.task);
    template.validate()?;
    let query = render_query(instance)?;
    let text = template
        .body
        .replace("{candidates}", &render_candidates(&instance.candidates, style))
        .replace("{query}", &query)
        .replace("{answer_format}", &answer_format_instruction(instance));
    Ok(text.trim_end().to_owned())
}

/// The string a perfectly compliant model would emit.
pub fn render_answer(key: &AnswerKey) -> String {
    match key {
        AnswerKey::FullSequence { labels } | AnswerKey::SubSequence { labels } => labels.join(", "),
        AnswerKey::Positions { positions } => positions
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(", "),
        AnswerKey::OutlierPosition { position } => position.to_string(),
        AnswerKey::SingleLabel { label } => label.clone(),
    }
}

/// Format descriptor for an answer shape.
pub fn answer_format_of(shape: AnswerShape) -> AnswerFormat {
    match shape {
        AnswerShape::FullSequence | AnswerShape::SubSequence => AnswerFormat::ListOfLabels,
        AnswerShape::Positions => AnswerFormat::IndexList,
        AnswerShape::OutlierPosition => AnswerFormat::SingleIndex,
        AnswerShape::SingleLabel => AnswerFormat::SingleLabel,
    }
}

/// Two-step chain-of-thought prompts: narrate the video, then answer with
/// the narration prepended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotPromptPair {
    pub p_gen: String,
    /// Must contain `{context}` and `{question}`; `{context}` comes first.
    pub p_query: String,
}

impl Default for CotPromptPair {
    fn default() -> Self {
        Self {
            p_gen: include_str!("../templates/cot_generate.v1.txt").trim_end().to_owned(),
            p_query: include_str!("../templates/cot_query.v1.txt").trim_end().to_owned(),
        }
    }
}

impl CotPromptPair {
    /// Second-step prompt with the generated context embedded verbatim.
    pub fn query_prompt(&self, context: &str, question: &str) -> String {
        // split first so `{question}` text inside the context is never substituted
        let (head, tail) = self
            .p_query
            .split_once("{context}")
            .unwrap_or((self.p_query.as_str(), ""));
        format!("{head}{context}{}", tail.replace("{question}", question))
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        validate_placeholders("cot_generate", &self.p_gen, &[])?;
        validate_placeholders("cot_query", &self.p_query, &["context", "question"])?;
        let names = placeholder_names(&self.p_query);
        if names != ["context", "question"] {
            return Err(PromptError::UnknownPlaceholder {
                template_id: "cot_query".into(),
                name: format!("expected {{context}} then {{question}}, found {names:?}"),
            });
        }
        Ok(())
    }
}

/// Prompts for the segment-describe-then-merge description pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionPrompts {
    pub describe: String,
    /// Must contain `{descriptions}`.
    pub merge: String,
}

impl Default for DescriptionPrompts {
    fn default() -> Self {
        Self {
            describe: include_str!("../templates/describe_segment.v1.txt").trim_end().to_owned(),
            merge: include_str!("../templates/merge_descriptions.v1.txt").trim_end().to_owned(),
        }
    }
}

impl DescriptionPrompts {
    pub fn merge_prompt(&self, descriptions: &[String]) -> String {
        let listing = descriptions
            .iter()
            .enumerate()
            .map(|(i, d)| format!("Segment {}: {d}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        self.merge.replace("{descriptions}", &listing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::synth::*;
    use crate::testkit::fixture_catalog;

    #[test]
    fn templates_only_use_known_placeholders() {
        for task in TaskKind::ALL {
            let t = PromptTemplate::for_task(task);
            t.validate().unwrap();
            assert!(t.placeholders().contains(&"candidates"));
            assert!(t.placeholders().contains(&"answer_format"));
        }
        CotPromptPair::default().validate().unwrap();
        assert!(DescriptionPrompts::default().merge.contains("{descriptions}"));
    }

    #[test]
    fn sequencing_prompt_lists_candidates_and_format() {
        let cat = fixture_catalog();
        let inst = gen_event_sequencing(&cat, Level::L1, &mut SeededRng::from_seed(1)).unwrap();
        let p = render_prompt(&inst).unwrap();
        for (i, c) in inst.candidates.iter().enumerate() {
            assert!(p.contains(&format!("{}. {c}\n", i + 1)) || p.contains(&format!("{}. {c}", i + 1)));
        }
        assert!(p.contains("20. "));
        assert!(p.contains("Answer as a comma-separated list of event names in chronological order."));
        assert!(!p.contains('{'));
        assert_eq!(p, render_prompt(&inst).unwrap());
        assert!(!p.contains(&inst.instance_id));
    }

    #[test]
    fn position_prompt_asks_for_two_indices() {
        let cat = fixture_catalog();
        let inst = gen_position_identification(&cat, Level::L1, 2, &mut SeededRng::from_seed(2)).unwrap();
        let p = render_prompt(&inst).unwrap();
        assert!(p.contains("Answer with two 1-based position indices"), "{p}");
        let TaskQuery::PositionProbe { queried } = &inst.query else { panic!() };
        assert!(p.contains(&format!("Query events: \"{}\", \"{}\".", queried[0], queried[1])));
    }

    #[test]
    fn relative_prompt_names_query_events() {
        let cat = fixture_catalog();
        let inst = gen_relative_sequencing(&cat, Level::L2, &mut SeededRng::from_seed(3)).unwrap();
        let TaskQuery::RelativePair { q_i, q_j } = inst.query else { panic!() };
        let labels = inst.video.labels();
        let p = render_prompt(&inst).unwrap();
        assert!(p.contains(&format!("Query events: \"{}\" and \"{}\".", labels[q_i - 1], labels[q_j - 1])));
    }

    #[test]
    fn mismatched_query_is_an_error() {
        let cat = fixture_catalog();
        let mut inst = gen_relative_sequencing(&cat, Level::L1, &mut SeededRng::from_seed(3)).unwrap();
        inst.query = TaskQuery::None;
        assert!(matches!(render_prompt(&inst), Err(PromptError::QueryMismatch { .. })));
    }

    #[test]
    fn lettered_candidates() {
        let cat = fixture_catalog();
        let inst = gen_single_event(&cat, &mut SeededRng::from_seed(4)).unwrap();
        let p = render_prompt_with(&inst, CandidateStyle::Lettered).unwrap();
        assert!(p.contains(&format!("(A) {}", inst.candidates[0])));
        assert!(p.contains(&format!("(T) {}", inst.candidates[19])));
    }

    #[test]
    fn canonical_answers() {
        let seq = AnswerKey::FullSequence {
            labels: vec!["A".into(), "B".into(), "C".into(), "D".into()],
        };
        assert_eq!(render_answer(&seq), "A, B, C, D");
        assert_eq!(render_answer(&AnswerKey::Positions { positions: vec![3, 1] }), "3, 1");
        assert_eq!(render_answer(&AnswerKey::OutlierPosition { position: 4 }), "4");
        assert_eq!(render_answer(&AnswerKey::SingleLabel { label: "swimming".into() }), "swimming");
    }

    #[test]
    fn cot_query_embeds_context_before_question() {
        let cot = CotPromptPair::default();
        let ctx = "First someone swims. Then {question} appears literally.";
        let p = cot.query_prompt(ctx, "Q?");
        let c = p.find(ctx).expect("context verbatim");
        let q = p.rfind("Q?").unwrap();
        assert!(c < q);
    }
}
