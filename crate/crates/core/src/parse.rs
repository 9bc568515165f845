//! Lenient, deterministic extraction of structured answers from free text.
//!
//! Spans are tried in a fixed order (answer tag, answer marker, list block,
//! whole text) and the first one that yields a well-formed answer for the
//! expected shape wins. Nothing here returns an error: a response we cannot
//! read becomes [`ParsedAnswer::Unparseable`] and is scored as wrong.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::synth::{AnswerKey, AnswerShape, TaskInstance, TaskQuery};
use crate::text::tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedAnswer {
    Answer(AnswerKey),
    Unparseable { reason: String },
}

impl ParsedAnswer {
    pub fn unparseable(reason: impl Into<String>) -> Self {
        ParsedAnswer::Unparseable { reason: reason.into() }
    }

    pub fn key(&self) -> Option<&AnswerKey> {
        match self {
            ParsedAnswer::Answer(k) => Some(k),
            ParsedAnswer::Unparseable { .. } => None,
        }
    }

    pub fn is_parsed(&self) -> bool {
        matches!(self, ParsedAnswer::Answer(_))
    }
}

static ANSWER_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<answer>(.*?)(?:</answer>|$)").unwrap());
static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^>]*>").unwrap());
static EMPHASIS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\*\*|__|`+|^#+\s*").unwrap());
static MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:final\s+answer|answer)\b\s*(?:is\b\s*)?[:=]\s*").unwrap());
static LIST_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\(?\d+[.)]|[A-Za-z][.)])\s+\S").unwrap());
static ITEM_SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[,;\n]|->|→|=>").unwrap());
static NUMBERING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]+|\(?\d+[.)]|\(\d+\))\s+").unwrap());
static BARE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\(?(\d+)\)?[.!?]?$").unwrap());
static BARE_LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\(?([A-Z])\)?[.!?]?$").unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());
static POSITION_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:position|index|segment|event|number|no\.)\s*#?\s*(\d+)").unwrap());

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

fn clean(text: &str) -> String {
    let no_tags = HTML_TAG.replace_all(text, " ");
    no_tags
        .lines()
        .map(|l| EMPHASIS.replace_all(l, "").into_owned())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Candidate spans in priority order.
fn spans(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    let body = match ANSWER_TAG.captures(raw) {
        Some(c) => {
            let inner = clean(&c[1]);
            // the tag is explicit, so it is the only span considered
            return vec![inner];
        }
        None => clean(raw),
    };
    if let Some(m) = MARKER.find_iter(&body).last() {
        let rest = &body[m.end()..];
        let para = rest.split("\n\n").next().unwrap_or("").trim();
        if !para.is_empty() {
            out.push(para.to_owned());
        }
    }
    let mut block: Vec<&str> = Vec::new();
    let mut blocks: Vec<String> = Vec::new();
    for line in body.lines() {
        if LIST_ITEM.is_match(line) {
            block.push(line);
        } else if !block.is_empty() {
            blocks.push(block.join("\n"));
            block.clear();
        }
    }
    if !block.is_empty() {
        blocks.push(block.join("\n"));
    }
    // the last list is usually the conclusion; earlier ones are reasoning
    if let Some(last) = blocks.pop() {
        out.push(last);
    }
    out.push(body);
    out
}

struct LabelMatcher<'a> {
    candidates: &'a [String],
    /// (candidate index, tokens) ordered longest first.
    order: Vec<(usize, Vec<String>)>,
}

impl<'a> LabelMatcher<'a> {
    fn new(candidates: &'a [String]) -> Self {
        let mut order: Vec<(usize, Vec<String>)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, tokens(c)))
            .filter(|(_, t)| !t.is_empty())
            .collect();
        order.sort_by(|a, b| {
            b.1.len()
                .cmp(&a.1.len())
                .then_with(|| b.1.concat().len().cmp(&a.1.concat().len()))
                .then_with(|| a.0.cmp(&b.0))
        });
        Self { candidates, order }
    }

    /// Candidate labels found in `text`, in order of appearance.
    fn find(&self, text: &str) -> Vec<String> {
        let toks = tokens(text);
        let mut claimed = vec![false; toks.len()];
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for (idx, label) in &self.order {
            let n = label.len();
            if n > toks.len() {
                continue;
            }
            let mut start = 0;
            while start + n <= toks.len() {
                if !claimed[start..start + n].iter().any(|c| *c) && toks[start..start + n] == label[..] {
                    claimed[start..start + n].iter_mut().for_each(|c| *c = true);
                    hits.push((start, *idx));
                    start += n;
                } else {
                    start += 1;
                }
            }
        }
        hits.sort();
        hits.into_iter().map(|(_, i)| self.candidates[i].clone()).collect()
    }
}

enum ItemResult {
    Labels(Vec<String>),
    OutOfRange(String),
}

fn alias_index(item: &str, n_candidates: usize) -> Option<Result<usize, String>> {
    if let Some(c) = BARE_NUMBER.captures(item) {
        let n: usize = c[1].parse().unwrap_or(0);
        return Some(if n >= 1 && n <= n_candidates {
            Ok(n - 1)
        } else {
            Err(format!("candidate index {} out of range 1..={n_candidates}", &c[1]))
        });
    }
    if let Some(c) = BARE_LETTER.captures(item) {
        let n = (c[1].as_bytes()[0] - b'A') as usize;
        return Some(if n < n_candidates {
            Ok(n)
        } else {
            Err(format!("candidate letter {} out of range", &c[1]))
        });
    }
    None
}

fn labels_in_span(span: &str, matcher: &LabelMatcher) -> ItemResult {
    let mut out: Vec<String> = Vec::new();
    for raw_item in ITEM_SPLIT.split(span) {
        let item = NUMBERING.replace(raw_item.trim(), "");
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        match alias_index(item, matcher.candidates.len()) {
            Some(Ok(i)) => out.push(matcher.candidates[i].clone()),
            Some(Err(reason)) => return ItemResult::OutOfRange(reason),
            None => out.extend(matcher.find(item)),
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|l| seen.insert(l.clone()));
    ItemResult::Labels(out)
}

fn ordinal_indices(span: &str) -> Vec<usize> {
    let toks = tokens(span);
    toks.iter()
        .filter_map(|t| ORDINALS.iter().position(|o| o == t).map(|p| p + 1))
        .collect()
}

enum IndexResult {
    Found(Vec<usize>),
    None,
    OutOfRange(String),
}

fn indices_in_span(span: &str, want: usize, max: usize) -> IndexResult {
    let mut found: Vec<usize> = Vec::new();
    if INTEGER.is_match(span) {
        // prefer numbers introduced by a position-like word
        let keyed: Vec<&str> = POSITION_WORD
            .captures_iter(span)
            .map(|c| c.get(1).unwrap().as_str())
            .collect();
        let pool: Vec<&str> = if keyed.len() >= want {
            keyed
        } else {
            INTEGER.find_iter(span).map(|m| m.as_str()).collect()
        };
        for s in pool.into_iter().take(want) {
            match s.parse::<usize>() {
                Ok(n) if n >= 1 && n <= max => found.push(n),
                _ => return IndexResult::OutOfRange(format!("index {s} out of range 1..={max}")),
            }
        }
    } else {
        found = ordinal_indices(span).into_iter().take(want).collect();
        if let Some(bad) = found.iter().find(|n| **n > max) {
            return IndexResult::OutOfRange(format!("index {bad} out of range 1..={max}"));
        }
    }
    if found.is_empty() {
        IndexResult::None
    } else {
        IndexResult::Found(found)
    }
}

fn expected_index_count(instance: &TaskInstance) -> usize {
    match (&instance.key, &instance.query) {
        (AnswerKey::Positions { positions }, _) => positions.len(),
        (_, TaskQuery::PositionProbe { queried }) => queried.len(),
        _ => 1,
    }
}

/// Recover an answer of the instance's expected shape from `raw`.
pub fn parse_answer(raw: &str, instance: &TaskInstance) -> ParsedAnswer {
    if raw.trim().is_empty() {
        return ParsedAnswer::unparseable("empty response");
    }
    let shape = instance.key.shape();
    let spans = spans(raw);
    match shape {
        AnswerShape::FullSequence | AnswerShape::SubSequence | AnswerShape::SingleLabel => {
            let matcher = LabelMatcher::new(&instance.candidates);
            for span in &spans {
                match labels_in_span(span, &matcher) {
                    ItemResult::OutOfRange(reason) => return ParsedAnswer::unparseable(reason),
                    ItemResult::Labels(labels) if labels.is_empty() => continue,
                    ItemResult::Labels(mut labels) => {
                        return ParsedAnswer::Answer(match shape {
                            AnswerShape::FullSequence => AnswerKey::FullSequence { labels },
                            AnswerShape::SubSequence => AnswerKey::SubSequence { labels },
                            _ => AnswerKey::SingleLabel { label: labels.swap_remove(0) },
                        });
                    }
                }
            }
            ParsedAnswer::unparseable("no candidate label found")
        }
        AnswerShape::Positions | AnswerShape::OutlierPosition => {
            let want = expected_index_count(instance);
            let max = instance.max_position();
            for span in &spans {
                match indices_in_span(span, want, max) {
                    IndexResult::OutOfRange(reason) => return ParsedAnswer::unparseable(reason),
                    IndexResult::None => continue,
                    IndexResult::Found(positions) => {
                        return ParsedAnswer::Answer(if shape == AnswerShape::Positions {
                            AnswerKey::Positions { positions }
                        } else {
                            AnswerKey::OutlierPosition { position: positions[0] }
                        });
                    }
                }
            }
            ParsedAnswer::unparseable("no index found")
        }
    }
}
