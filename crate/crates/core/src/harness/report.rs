use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::log::{CampaignHeader, EvalRecord, RecordLog, RecordStatus};
use super::runner::{shuffle_diagnosis, ShuffleDiagnosis};
use super::HarnessError;
use crate::clients::CONDITION_ORIGINAL;
use crate::metrics::{
    chance_baseline, format_percent, mean_scores, ChanceEstimate, MeanScores, Metric, DEFAULT_CHANCE_TRIALS, GUESS_MODEL,
};
use crate::synth::{Level, TaskKind, TaskVariant};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub chance_trials: usize,
    pub chance_seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            chance_trials: DEFAULT_CHANCE_TRIALS,
            chance_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Md,
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Md),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown report format `{other}` (expected md or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub backend_id: String,
    pub condition: String,
    pub variant: TaskVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub answer_key_access: bool,
    pub failed: usize,
    pub scores: MeanScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceRow {
    pub variant: TaskVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub metric: Metric,
    pub estimate: ChanceEstimate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialInfo {
    pub planned: usize,
    pub missing: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub campaigns: Vec<CampaignHeader>,
    pub options: ReportOptions,
    pub rows: Vec<ReportRow>,
    pub chance: Vec<ChanceRow>,
    pub diagnostics: Vec<ShuffleDiagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<PartialInfo>,
}

type RowKey = (String, String, TaskVariant, Option<Level>);

/// Aggregate one or more record logs. Every number is recomputed from the
/// latest record per key, in key order.
pub fn build_report(logs: &[RecordLog], options: ReportOptions) -> Result<CampaignReport, HarnessError> {
    let mut latest: BTreeMap<_, &EvalRecord> = BTreeMap::new();
    for log in logs {
        latest.extend(log.latest());
    }
    if latest.is_empty() {
        return Err(HarnessError::EmptyCampaign("no evaluation records".into()));
    }
    let key_access: BTreeMap<&str, bool> = logs
        .iter()
        .map(|l| (l.header.backend_id.as_str(), l.header.answer_key_access))
        .collect();

    let mut groups: BTreeMap<RowKey, (Vec<&EvalRecord>, usize)> = BTreeMap::new();
    for r in latest.values().filter(|r| r.pair_of.is_none()) {
        let e = groups
            .entry((r.backend_id.clone(), r.condition.clone(), r.variant, r.level))
            .or_default();
        match r.status {
            RecordStatus::Ok => e.0.push(r),
            RecordStatus::Failed => e.1 += 1,
        }
    }
    let rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|((backend_id, condition, variant, level), (recs, failed))| ReportRow {
            answer_key_access: key_access.get(backend_id.as_str()).copied().unwrap_or(false),
            backend_id,
            condition,
            variant,
            level,
            failed,
            scores: mean_scores(recs.iter().filter_map(|r| r.scores.as_ref())),
        })
        .collect();

    let cells: BTreeSet<(TaskVariant, Option<Level>)> = rows.iter().map(|r| (r.variant, r.level)).collect();
    let mut chance = Vec::new();
    for (variant, level) in cells {
        for metric in Metric::ALL {
            if let Ok(estimate) = chance_baseline(variant, level, metric, options.chance_trials, options.chance_seed) {
                chance.push(ChanceRow {
                    variant,
                    level,
                    metric,
                    estimate,
                });
            }
        }
    }

    let all: Vec<&EvalRecord> = latest.values().copied().collect();
    let backends: BTreeSet<&str> = all.iter().map(|r| r.backend_id.as_str()).collect();
    let diagnostics: Vec<ShuffleDiagnosis> = backends
        .into_iter()
        .map(|b| shuffle_diagnosis(&all, b))
        .filter(|d| d.shuffle.is_some() || d.robustness.is_some())
        .collect();

    let planned: usize = logs.iter().map(|l| l.header.planned()).sum();
    let failed = latest.values().filter(|r| r.status == RecordStatus::Failed).count();
    let missing = planned.saturating_sub(latest.len());
    let partial = (missing > 0 || failed > 0).then_some(PartialInfo { planned, missing, failed });

    Ok(CampaignReport {
        schema_version: REPORT_SCHEMA_VERSION,
        campaigns: logs.iter().map(|l| l.header.clone()).collect(),
        options,
        rows,
        chance,
        diagnostics,
        partial,
    })
}

fn task_code(task: TaskKind) -> String {
    task.short_name().to_uppercase()
}

fn row_name(variant: TaskVariant, level: Option<Level>) -> String {
    match variant {
        TaskVariant::Sequencing => "Full-sequence ordering".into(),
        TaskVariant::Relative => "Sub-sequence ordering".into(),
        TaskVariant::SingleEvent => "Single event recognition".into(),
        other => other.row_label(level),
    }
}

fn level_name(level: Option<Level>) -> String {
    level.map(|l| l.to_string()).unwrap_or_else(|| "-".into())
}

fn column_name(backend: &str, condition: &str) -> String {
    if condition == CONDITION_ORIGINAL {
        backend.to_owned()
    } else {
        format!("{backend} [{condition}]")
    }
}

fn chance_cell(report: &CampaignReport, variant: TaskVariant, level: Option<Level>, metric: Metric) -> String {
    report
        .chance
        .iter()
        .find(|c| c.variant == variant && c.level == level && c.metric == metric)
        .map(|c| match c.estimate {
            ChanceEstimate::Analytic { percent, .. } => format_percent(percent),
            ChanceEstimate::MonteCarlo { percent, .. } => format!("{}*", format_percent(percent)),
        })
        .unwrap_or_else(|| "-".into())
}

fn render_md(report: &CampaignReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Campaign report\n");
    if let Some(p) = &report.partial {
        let _ = writeln!(
            out,
            "> **PARTIAL REPORT**: {} of {} planned records missing, {} failed. Scores cover completed records only.\n",
            p.missing, p.planned, p.failed
        );
    }

    let _ = writeln!(out, "## Lineage\n");
    let _ = writeln!(out, "| Backend | Kind | Reads answer key | CoT | Frames | Conditions | Manifest | Seed | Catalog |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|");
    for c in &report.campaigns {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} {:?} | {} | {} | {} | {} |",
            c.backend_id,
            c.backend_kind,
            if c.answer_key_access { "yes (reference only)" } else { "no" },
            if c.cot { "on" } else { "off" },
            c.frames.count,
            c.frames.sampling,
            c.conditions.join(", "),
            &c.manifest_digest[..16.min(c.manifest_digest.len())],
            c.manifest_seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            c.catalog.as_deref().unwrap_or("-"),
        );
    }
    let _ = writeln!(
        out,
        "\nChance: exact where a closed form exists; values marked * are Monte Carlo ({} trials, seed {}) for a {}.\n",
        report.options.chance_trials, report.options.chance_seed, GUESS_MODEL
    );

    let columns: Vec<(String, String)> = report
        .rows
        .iter()
        .map(|r| (r.backend_id.clone(), r.condition.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cells: BTreeSet<(TaskVariant, Option<Level>)> = report.rows.iter().map(|r| (r.variant, r.level)).collect();
    let score = |b: &str, c: &str, v: TaskVariant, l: Option<Level>, m: Metric| {
        report
            .rows
            .iter()
            .find(|r| r.backend_id == b && r.condition == c && r.variant == v && r.level == l)
            .and_then(|r| r.scores.get(m))
            .map(format_percent)
            .unwrap_or_else(|| "-".into())
    };

    let _ = writeln!(out, "## Exact match (EM)\n");
    let mut head = String::from("| Task | Row | Lvl | Chance |");
    let mut rule = String::from("|---|---|---|---|");
    for (b, c) in &columns {
        let _ = write!(head, " {} |", column_name(b, c));
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{head}\n{rule}");
    for &(variant, level) in &cells {
        let _ = write!(
            out,
            "| {} {} | {} | {} | {} |",
            task_code(variant.task()),
            variant.task().title(),
            row_name(variant, level),
            level_name(level),
            chance_cell(report, variant, level, Metric::Em)
        );
        for (b, c) in &columns {
            let _ = write!(out, " {} |", score(b, c, variant, level, Metric::Em));
        }
        out.push('\n');
    }

    let list_cells: Vec<(TaskVariant, Option<Level>)> = cells
        .iter()
        .copied()
        .filter(|(v, _)| matches!(v, TaskVariant::Sequencing | TaskVariant::Relative))
        .collect();
    if !list_cells.is_empty() {
        let _ = writeln!(out, "\n## Sequence metrics\n");
        let mut head = String::from("| Model |");
        let mut rule = String::from("|---|");
        for (v, l) in &list_cells {
            for m in Metric::ALL {
                let _ = write!(head, " {} {} {} |", task_code(v.task()), level_name(*l), m);
                rule.push_str("---|");
            }
        }
        let _ = writeln!(out, "{head}\n{rule}");
        let _ = write!(out, "| Chance |");
        for (v, l) in &list_cells {
            for m in Metric::ALL {
                let _ = write!(out, " {} |", chance_cell(report, *v, *l, m));
            }
        }
        out.push('\n');
        for (b, c) in &columns {
            let _ = write!(out, "| {} |", column_name(b, c));
            for (v, l) in &list_cells {
                for m in Metric::ALL {
                    let _ = write!(out, " {} |", score(b, c, *v, *l, m));
                }
            }
            out.push('\n');
        }
    }

    if !report.diagnostics.is_empty() {
        let _ = writeln!(out, "\n## Shuffle diagnostics\n");
        let _ = writeln!(out, "| Model | Pairs | Org | Shuf | Eligible | η | Note |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|");
        for d in &report.diagnostics {
            match &d.shuffle {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} | {} | {} |",
                        d.backend_id,
                        s.total_pairs,
                        format_percent(s.accuracy_original()),
                        format_percent(s.accuracy_shuffled()),
                        s.eligible,
                        s.eta.display(2),
                        if s.low_confidence { "low confidence" } else { "" },
                    );
                }
                None => {
                    let _ = writeln!(out, "| {} | 0 | - | - | - | - | no event-shuffled pairs |", d.backend_id);
                }
            }
        }
        let _ = writeln!(out, "\n| Model | Original EM | Frame-shuffled EM | ρ |");
        let _ = writeln!(out, "|---|---|---|---|");
        for d in &report.diagnostics {
            match &d.robustness {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} |",
                        d.backend_id,
                        format_percent(r.accuracy_original),
                        format_percent(r.accuracy_shuffled),
                        r.rho.display(1)
                    );
                }
                None => {
                    let _ = writeln!(out, "| {} | - | - | - |", d.backend_id);
                }
            }
        }
    }
    out
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine<'a> {
    Report {
        schema_version: u32,
        options: &'a ReportOptions,
        #[serde(skip_serializing_if = "Option::is_none")]
        partial: &'a Option<PartialInfo>,
    },
    Campaign(&'a CampaignHeader),
    Row(&'a ReportRow),
    Chance(&'a ChanceRow),
    Diagnostic(&'a ShuffleDiagnosis),
}

fn render_jsonl(report: &CampaignReport) -> String {
    let mut lines = vec![ReportLine::Report {
        schema_version: report.schema_version,
        options: &report.options,
        partial: &report.partial,
    }];
    lines.extend(report.campaigns.iter().map(ReportLine::Campaign));
    lines.extend(report.rows.iter().map(ReportLine::Row));
    lines.extend(report.chance.iter().map(ReportLine::Chance));
    lines.extend(report.diagnostics.iter().map(ReportLine::Diagnostic));
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(&l).expect("report lines serialize"));
        out.push('\n');
    }
    out
}

pub fn emit_report(report: &CampaignReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Md => render_md(report),
        ReportFormat::Jsonl => render_jsonl(report),
    }
}
