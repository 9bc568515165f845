use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use vector_core::catalog::{load_catalog, ClipCatalog};
use vector_core::clients::{BackendSpec, CONDITION_FRAME_SHUFFLED, CONDITION_ORIGINAL};
use vector_core::frames::{FramePolicy, FrameSampling};
use vector_core::harness::{
    build_report, diagnose_shuffle, emit_report, read_log, read_manifest, run_campaign, write_manifest, CampaignConfig,
    Manifest, ManifestHeader, ReportFormat, ReportOptions, RunConfigFile,
};
use vector_core::materialize::{
    extract_frames, frames_dir_for, materialize_all, MediaTool, RenderPlan, RenderSettings, EXTRACTED_FRAME_EXT,
};
use vector_core::metrics::{analytic_chance, chance_baseline, format_percent, score_answer, ChanceEstimate, Metric, GUESS_MODEL};
use vector_core::parse::{parse_answer, ParsedAnswer};
use vector_core::prompts::{render_prompt_with, CandidateStyle, CotPromptPair};
use vector_core::synth::{
    generate_batch, generate_release, generate_shuffle_pairs, GenSpec, Level, RelativeQueryModel, TaskInstance, TaskKind,
    TaskVariant, RELEASE_PER_ROW,
};
use vector_core::testkit::demo_catalog;

const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "vector", version, about = "Temporal-order benchmark generator and evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or create clip catalogs.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Generate instance manifests.
    Gen(GenCmd),
    /// Render prompts for manifest instances.
    #[command(subcommand)]
    Prompts(PromptsCmd),
    /// Run the answer parser over a regression fixture.
    Parse(ParseCmd),
    /// Re-parse and re-score a record log.
    Score(ScoreCmd),
    /// Chance baselines for one task row.
    Chance(ChanceCmd),
    /// Evaluate a backend over a manifest.
    Run(RunCmd),
    /// Prior-reliance diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCmd),
    /// Aggregate record logs into a report.
    Report(ReportCmd),
    /// Render manifest instances into media with an external tool.
    Materialize(MaterializeCmd),
}

#[derive(Subcommand)]
enum CatalogCmd {
    Validate { path: PathBuf },
    Stats {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the built-in demo catalog.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct CatalogSource {
    /// Catalog manifest (JSONL).
    #[arg(long, conflicts_with = "demo")]
    catalog: Option<PathBuf>,
    /// Use the built-in demo catalog.
    #[arg(long)]
    demo: bool,
}

impl CatalogSource {
    fn load(&self) -> Result<ClipCatalog> {
        match (&self.catalog, self.demo) {
            (Some(p), _) => load_catalog(p).with_context(|| format!("loading catalog {}", p.display())),
            (None, true) => Ok(demo_catalog()),
            (None, false) => bail!("pass --catalog <path> or --demo"),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum RelativeModelArg {
    UniformGap,
    UniformPair,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct GenCmd {
    #[command(subcommand)]
    sub: Option<GenSub>,
    #[command(flatten)]
    single: GenSingle,
}

#[derive(Args)]
struct GenSingle {
    /// t0..t5
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    level: Option<Level>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Queried events for position identification (1..=3).
    #[arg(long, default_value_t = 1)]
    n_q: usize,
    /// Pattern length for pattern outliers (2 or 3).
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, value_enum, default_value = "uniform-gap")]
    relative_model: RelativeModelArg,
    #[command(flatten)]
    source: CatalogSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenSub {
    /// Every table row of the benchmark.
    Release {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = RELEASE_PER_ROW)]
        per_row: usize,
        #[command(flatten)]
        source: CatalogSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Original/event-shuffled pairs for the biased-ratio diagnostic.
    ShufflePairs {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        min_events: usize,
        #[arg(long, default_value_t = 8)]
        max_events: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        source: CatalogSource,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PromptsCmd {
    Preview {
        #[arg(long)]
        instances: PathBuf,
        /// 0-based position in the manifest.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        lettered: bool,
        #[arg(long)]
        cot: bool,
    },
}

#[derive(Args)]
struct ParseCmd {
    /// JSONL lines with `instance`, `response` and `expected` (null for unparseable).
    #[arg(long)]
    fixture: PathBuf,
    /// Required fraction of cases parsed as expected.
    #[arg(long, default_value_t = 0.95)]
    min_pass: f64,
}

#[derive(Args)]
struct ScoreCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChanceCmd {
    #[arg(long)]
    task: TaskKind,
    #[arg(long)]
    level: Option<Level>,
    #[arg(long, default_value_t = 1)]
    n_q: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum BackendArg {
    Oracle,
    NoisyOracle,
    CanonicalBias,
    UniformRandom,
    FixtureReplay,
}

#[derive(Copy, Clone, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Copy, Clone, ValueEnum)]
enum SamplingArg {
    Uniform,
    PerSegment,
}

#[derive(Args)]
struct BackendArgs {
    /// Scripted backend; use --config for remote endpoints.
    #[arg(long, value_enum, required_unless_present = "config")]
    backend: Option<BackendArg>,
    /// TOML run config with a [backend] table and optional [campaign] table.
    #[arg(long, conflicts_with = "backend")]
    config: Option<PathBuf>,
    #[arg(long)]
    backend_id: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, default_value_t = 0)]
    backend_seed: u64,
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long, value_enum)]
    cot: Option<OnOff>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Record wall-clock timestamps (makes logs non-reproducible).
    #[arg(long)]
    timestamps: bool,
    #[arg(long)]
    retry_failed: bool,
    /// `materialize --extract` output; frame images are read from here.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
}

impl BackendArgs {
    fn resolve(&self) -> Result<(BackendSpec, Option<String>, CampaignConfig)> {
        let (spec, id, mut config) = match (&self.config, self.backend) {
            (Some(path), _) => {
                let file = RunConfigFile::load(path)?;
                let config = file.campaign_config();
                (file.backend, file.id, config)
            }
            (None, Some(kind)) => {
                let spec = match kind {
                    BackendArg::Oracle => BackendSpec::Oracle {},
                    BackendArg::NoisyOracle => BackendSpec::NoisyOracle {
                        rate: self.noise_rate,
                        seed: self.backend_seed,
                    },
                    BackendArg::CanonicalBias => BackendSpec::CanonicalBias {},
                    BackendArg::UniformRandom => BackendSpec::UniformRandom { seed: self.backend_seed },
                    BackendArg::FixtureReplay => BackendSpec::FixtureReplay {
                        path: self.fixture.clone().context("--backend fixture-replay needs --fixture")?,
                    },
                };
                let config = CampaignConfig {
                    backend_spec: Some(spec.clone()),
                    ..CampaignConfig::default()
                };
                (spec, None, config)
            }
            (None, None) => bail!("pass --backend or --config"),
        };
        if let Some(c) = self.cot {
            config.cot = matches!(c, OnOff::On);
        }
        if let Some(n) = self.frames {
            config.frames.count = n;
        }
        if let Some(s) = self.sampling {
            config.frames.sampling = match s {
                SamplingArg::Uniform => FrameSampling::Uniform,
                SamplingArg::PerSegment => FrameSampling::PerSegment,
            };
        }
        if let Some(k) = self.concurrency {
            config.concurrency = k;
        }
        if let Some(s) = self.shuffle_seed {
            config.shuffle_seed = s;
        }
        config.record_timestamps |= self.timestamps;
        config.retry_failed |= self.retry_failed;
        if let Some(d) = &self.frames_dir {
            config.frames_dir = Some(d.clone());
        }
        Ok((spec, self.backend_id.clone().or(id), config))
    }
}

#[derive(Args)]
struct RunCmd {
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Conditions to evaluate (original, frame_shuffled).
    #[arg(long = "condition")]
    conditions: Vec<String>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// η over event-shuffled pairs and ρ over frame-shuffled payloads.
    Shuffle {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Args)]
struct ReportCmd {
    /// Record logs; repeat for several backends.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "md")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    chance_trials: usize,
    #[arg(long, default_value_t = 0)]
    chance_seed: u64,
}

#[derive(Args)]
struct MaterializeCmd {
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    frames: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    sampling: SamplingArg,
    /// ffmpeg-compatible program.
    #[arg(long, default_value = "ffmpeg")]
    tool: PathBuf,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    /// Also extract frames for every rendered video.
    #[arg(long)]
    extract: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Catalog(c) => catalog(c),
        Command::Gen(g) => gen(g),
        Command::Prompts(p) => prompts(p),
        Command::Parse(p) => parse(p),
        Command::Score(s) => score(s),
        Command::Chance(c) => chance(c),
        Command::Run(r) => run(r),
        Command::Diagnose(d) => diagnose(d),
        Command::Report(r) => report(r),
        Command::Materialize(m) => materialize(m),
    }
}

fn catalog(cmd: CatalogCmd) -> Result<ExitCode> {
    match cmd {
        CatalogCmd::Validate { path } => {
            let cat = load_catalog(&path).with_context(|| format!("validating {}", path.display()))?;
            let s = cat.stats();
            println!(
                "ok: {} categories, {} groups, {} clips ({} usable categories)",
                s.categories, s.groups, s.clips, s.usable_categories
            );
        }
        CatalogCmd::Stats { path, json } => {
            let s = load_catalog(&path)?.stats();
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                println!("source            {} (version {})", s.source, s.version);
                println!("categories        {} ({} usable, {} ungrouped)", s.categories, s.usable_categories, s.ungrouped_categories);
                println!("groups            {} ({} excluded)", s.groups, s.excluded_groups);
                println!("clips             {} ({} validation, {} train)", s.clips, s.validation_clips, s.train_clips);
                for (g, n) in &s.usable_group_sizes {
                    println!("  group {g:<12} {n} usable members");
                }
            }
        }
        CatalogCmd::Demo { out } => {
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = std::io::BufWriter::new(file);
            demo_catalog().write_jsonl(&mut w)?;
            w.flush()?;
            println!("wrote demo catalog to {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn manifest_header(catalog: &ClipCatalog, seed: u64, generator: serde_json::Value) -> ManifestHeader {
    let mut h = ManifestHeader::new(Some(seed));
    h.catalog_source = Some(catalog.meta().source.clone());
    h.catalog_version = Some(catalog.meta().version.clone());
    h.generator = Some(generator);
    h
}

fn gen(cmd: GenCmd) -> Result<ExitCode> {
    let (manifest, out) = match (cmd.sub, cmd.single) {
        (Some(GenSub::Release { seed, per_row, source, out }), _) => {
            let cat = source.load()?;
            let mut m = Manifest::new(manifest_header(&cat, seed, serde_json::json!({"release": {"per_row": per_row}})));
            m.instances = generate_release(&cat, seed, per_row)?;
            (m, out)
        }
        (Some(GenSub::ShufflePairs { count, min_events, max_events, seed, source, out }), _) => {
            let cat = source.load()?;
            let gen = serde_json::json!({"shuffle_pairs": {"count": count, "min_events": min_events, "max_events": max_events}});
            let mut m = Manifest::new(manifest_header(&cat, seed, gen));
            m.pairs = generate_shuffle_pairs(&cat, count, min_events, max_events, seed)?;
            (m, out)
        }
        (None, g) => {
            let (Some(task), Some(count), Some(out)) = (g.task, g.count, g.out.clone()) else {
                bail!("pass --task, --count and --out, or a gen subcommand (release, shuffle-pairs)");
            };
            let cat = g.source.load()?;
            let need_level = || g.level.context("--level is required for this task");
            let spec = match task {
                TaskKind::SingleEvent => GenSpec::SingleEvent,
                TaskKind::Sequencing => GenSpec::Sequencing { level: need_level()? },
                TaskKind::Relative => GenSpec::Relative {
                    level: need_level()?,
                    model: match g.relative_model {
                        RelativeModelArg::UniformGap => RelativeQueryModel::UniformGap,
                        RelativeModelArg::UniformPair => RelativeQueryModel::UniformPair,
                    },
                },
                TaskKind::Position => GenSpec::Position { level: need_level()?, n_q: g.n_q },
                TaskKind::SemanticOutlier => GenSpec::SemanticOutlier { level: need_level()? },
                TaskKind::PatternOutlier => GenSpec::PatternOutlier { level: need_level()?, m: g.m },
            };
            let mut m = Manifest::new(manifest_header(&cat, g.seed, serde_json::to_value(spec)?));
            m.instances = generate_batch(&cat, spec, count, g.seed)?;
            (m, out)
        }
    };
    write_manifest(&out, &manifest)?;
    println!(
        "wrote {} instances and {} pairs to {}",
        manifest.instances.len(),
        manifest.pairs.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn all_instances(m: &Manifest) -> Vec<&TaskInstance> {
    m.instances
        .iter()
        .chain(m.pairs.iter().flat_map(|p| [&p.original, &p.shuffled]))
        .collect()
}

fn prompts(cmd: PromptsCmd) -> Result<ExitCode> {
    let PromptsCmd::Preview { instances, index, id, lettered, cot } = cmd;
    let m = read_manifest(&instances)?;
    let all = all_instances(&m);
    let inst = match id {
        Some(id) => all.into_iter().find(|i| i.instance_id == id).with_context(|| format!("no instance {id}"))?,
        None => *all.get(index).with_context(|| format!("manifest has no instance at index {index}"))?,
    };
    let style = if lettered { CandidateStyle::Lettered } else { CandidateStyle::Numbered };
    let prompt = render_prompt_with(inst, style)?;
    println!("# {} ({})\n", inst.instance_id, inst.variant().row_label(inst.level));
    if cot {
        let pair = CotPromptPair::default();
        println!("## step 1\n\n{}\n\n## step 2\n\n{}", pair.p_gen, pair.query_prompt("<generated context>", &prompt));
    } else {
        println!("{prompt}");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct ParseCase {
    #[serde(default)]
    name: Option<String>,
    instance: TaskInstance,
    response: String,
    expected: Option<vector_core::synth::AnswerKey>,
}

fn parse(cmd: ParseCmd) -> Result<ExitCode> {
    let file = std::fs::File::open(&cmd.fixture).with_context(|| format!("opening {}", cmd.fixture.display()))?;
    let (mut total, mut pass) = (0usize, 0usize);
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: ParseCase = serde_json::from_str(&line).with_context(|| format!("fixture line {}", n + 1))?;
        let got = parse_answer(&case.response, &case.instance);
        let ok = match (&case.expected, &got) {
            (Some(k), ParsedAnswer::Answer(g)) => k == g,
            (None, ParsedAnswer::Unparseable { .. }) => true,
            _ => false,
        };
        total += 1;
        pass += usize::from(ok);
        if !ok {
            println!(
                "FAIL {}: {:?} -> {}",
                case.name.unwrap_or_else(|| format!("line {}", n + 1)),
                case.response,
                serde_json::to_string(&got)?
            );
        }
    }
    let rate = if total == 0 { 0.0 } else { pass as f64 / total as f64 };
    println!("{pass}/{total} cases parsed as expected ({:.1}%)", 100.0 * rate);
    Ok(if rate >= cmd.min_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn score(cmd: ScoreCmd) -> Result<ExitCode> {
    let log = read_log(&cmd.input)?;
    let m = read_manifest(&cmd.instances)?;
    let by_id: std::collections::HashMap<&str, &TaskInstance> =
        all_instances(&m).into_iter().map(|i| (i.instance_id.as_str(), i)).collect();
    let mut out = std::io::BufWriter::new(std::fs::File::create(&cmd.out)?);
    let (mut n, mut changed) = (0usize, 0usize);
    for r in log.latest().values() {
        let Some(raw) = &r.raw_response else { continue };
        let inst = by_id
            .get(r.instance_id.as_str())
            .with_context(|| format!("instance {} not in manifest", r.instance_id))?;
        let parsed = parse_answer(raw, inst);
        let scores = score_answer(&parsed, &inst.key)?;
        if Some(&scores) != r.scores.as_ref() || Some(&parsed) != r.parsed.as_ref() {
            changed += 1;
        }
        let line = serde_json::json!({
            "instance_id": r.instance_id, "backend_id": r.backend_id, "condition": r.condition,
            "parsed": parsed, "scores": scores,
        });
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
        n += 1;
    }
    out.flush()?;
    println!("re-scored {n} records; {changed} differ from the log");
    Ok(ExitCode::SUCCESS)
}

fn chance(cmd: ChanceCmd) -> Result<ExitCode> {
    let variant = match cmd.task {
        TaskKind::SingleEvent => TaskVariant::SingleEvent,
        TaskKind::Sequencing => TaskVariant::Sequencing,
        TaskKind::Relative => TaskVariant::Relative,
        TaskKind::Position => TaskVariant::Position { n_q: cmd.n_q },
        TaskKind::SemanticOutlier => TaskVariant::SemanticOutlier,
        TaskKind::PatternOutlier => TaskVariant::PatternOutlier { m: cmd.m },
    };
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        if let Ok(est) = chance_baseline(variant, cmd.level, metric, cmd.trials, cmd.seed) {
            rows.push((metric, est));
        }
    }
    if rows.is_empty() {
        bail!("no chance value for {variant:?} at level {:?}", cmd.level);
    }
    if cmd.json {
        for (metric, est) in &rows {
            println!("{}", serde_json::json!({"variant": variant, "level": cmd.level, "metric": metric, "estimate": est}));
        }
        return Ok(ExitCode::SUCCESS);
    }
    println!("{} / {}", variant.row_label(cmd.level), cmd.level.map(|l| l.to_string()).unwrap_or_else(|| "-".into()));
    for (metric, est) in &rows {
        match est {
            ChanceEstimate::Analytic { numerator, denominator, percent } => {
                println!("  {metric}  {:>6}  exact {numerator}/{denominator}", format_percent(*percent))
            }
            ChanceEstimate::MonteCarlo { percent, ci_low, ci_high, trials, seed } => println!(
                "  {metric}  {:>6}  Monte Carlo, 95% CI [{}, {}], {trials} trials, seed {seed}",
                format_percent(*percent),
                format_percent(*ci_low),
                format_percent(*ci_high)
            ),
        }
        debug_assert!(analytic_chance(variant, cmd.level, *metric).is_some() == matches!(est, ChanceEstimate::Analytic { .. }));
    }
    println!("  guess model: {GUESS_MODEL}");
    Ok(ExitCode::SUCCESS)
}

fn run(cmd: RunCmd) -> Result<ExitCode> {
    let manifest = read_manifest(&cmd.instances)?;
    let (spec, id, mut config) = cmd.backend.resolve()?;
    if !cmd.conditions.is_empty() {
        for c in &cmd.conditions {
            if c != CONDITION_ORIGINAL && c != CONDITION_FRAME_SHUFFLED {
                bail!("unknown condition `{c}` (expected {CONDITION_ORIGINAL} or {CONDITION_FRAME_SHUFFLED})");
            }
        }
        config.conditions = cmd.conditions.clone();
    }
    let backend = spec.build(id.as_deref())?;
    let summary = run_campaign(&manifest, backend.as_ref(), &config, &cmd.out)?;
    println!(
        "{}: {} planned, {} evaluated now, {} resumed, {} failed, {} model calls",
        backend.id(),
        summary.planned,
        summary.evaluated,
        summary.resumed,
        summary.failed,
        summary.model_calls
    );
    Ok(if summary.is_partial() { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn diagnose(cmd: DiagnoseCmd) -> Result<ExitCode> {
    let DiagnoseCmd::Shuffle { instances, out, json, backend } = cmd;
    let manifest = read_manifest(&instances)?;
    let (spec, id, config) = backend.resolve()?;
    let backend = spec.build(id.as_deref())?;
    let (summary, diag) = diagnose_shuffle(&manifest, backend.as_ref(), &config, &out)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&diag)?);
    } else {
        match &diag.shuffle {
            Some(s) => println!(
                "{}: {} pairs, org {} / shuf {}, eligible {}, eta {}{}",
                diag.backend_id,
                s.total_pairs,
                format_percent(s.accuracy_original()),
                format_percent(s.accuracy_shuffled()),
                s.eligible,
                s.eta.display(2),
                if s.low_confidence { " (low confidence)" } else { "" }
            ),
            None => println!("{}: no event-shuffled pairs in manifest", diag.backend_id),
        }
        if let Some(r) = &diag.robustness {
            println!(
                "{}: original {} / frame-shuffled {}, rho {}",
                diag.backend_id,
                format_percent(r.accuracy_original),
                format_percent(r.accuracy_shuffled),
                r.rho.display(1)
            );
        }
    }
    Ok(if summary.is_partial() { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn report(cmd: ReportCmd) -> Result<ExitCode> {
    let logs = cmd.inputs.iter().map(|p| read_log(p)).collect::<Result<Vec<_>, _>>()?;
    let report = build_report(
        &logs,
        ReportOptions {
            chance_trials: cmd.chance_trials,
            chance_seed: cmd.chance_seed,
        },
    )?;
    let text = emit_report(&report, cmd.format);
    match &cmd.out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(p) = &report.partial {
        eprintln!("partial report: {} missing, {} failed of {} planned", p.missing, p.failed, p.planned);
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn materialize(cmd: MaterializeCmd) -> Result<ExitCode> {
    let manifest = read_manifest(&cmd.instances)?;
    let tool = MediaTool::new(&cmd.tool);
    let policy = FramePolicy::new(
        cmd.frames,
        match cmd.sampling {
            SamplingArg::Uniform => FrameSampling::Uniform,
            SamplingArg::PerSegment => FrameSampling::PerSegment,
        },
    );
    let plans: Vec<RenderPlan> = all_instances(&manifest)
        .into_iter()
        .map(|i| RenderPlan::for_instance(i, RenderSettings::default(), policy))
        .collect();
    let results = materialize_all(&tool, &plans, &cmd.out_dir, cmd.jobs);
    let mut failed = 0;
    for (plan, res) in plans.iter().zip(results) {
        match res {
            Ok(v) => {
                println!("{} {} {}", v.instance_id, v.sha256, v.path.display());
                if cmd.extract {
                    let dir = frames_dir_for(&cmd.out_dir, &v.instance_id);
                    if let Err(e) = extract_frames(&tool, &v.path, &v.boundaries, policy, &dir, EXTRACTED_FRAME_EXT) {
                        eprintln!("{}: frame extraction failed: {e}", v.instance_id);
                        failed += 1;
                    }
                }
            }
            Err(e) => {
                eprintln!("{}: {e}", plan.instance_id);
                failed += 1;
            }
        }
    }
    Ok(match failed {
        0 => ExitCode::SUCCESS,
        n if n == plans.len() => ExitCode::FAILURE,
        _ => ExitCode::from(EXIT_PARTIAL),
    })
}
