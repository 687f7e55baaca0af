use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biovent::construction::{
    construct_document, gold_assignments, make_candidate_instances, with_events, Mode, RoleAssignment,
};
use biovent::corpus::{document_ids, load_corpus, split_sentences, stats_for_split, Corpus, Split};
use biovent::eval::{analyze_cascade, evaluate, MatchingRegime};
use biovent::instances::{
    make_role_instances, make_tagging_instances, CandidateLabel, InstanceLabel, MarkedInstance,
};
use biovent::pipeline::{
    apply_triggers, build_scorer, load_predictions, read_jsonl, run_pipeline, write_file, AssignmentRecord,
    PipelineConfig, PipelineError, ScorerConfig, StageError, TriggerRecord,
};
use biovent::scorer::{NoiseConfig, OracleScorer, RemoteConfig};
use biovent::standoff::{parse_with, serialize_a2, Document, ParseOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SCORER: u8 = 3;

#[derive(Parser)]
#[command(name = "biovent", version, about = "Pipelined biomedical event extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus directory and report every repaired or rejected annotation.
    ParseCheck {
        #[arg(long)]
        input: PathBuf,
        /// Fail on the first invalid annotation instead of repairing.
        #[arg(long)]
        strict: bool,
    },
    /// Event counts per type.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        json: bool,
    },
    /// BIO-tagged sentence instances as JSONL.
    GenTriggers {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Trigger/argument pair instances as JSONL.
    GenRoles {
        #[arg(long)]
        input: PathBuf,
        /// Predicted triggers; gold triggers are used when absent.
        #[arg(long)]
        triggers: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Binding candidate instances as JSONL.
    GenCandidates {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, requires = "assignments")]
        triggers: Option<PathBuf>,
        #[arg(long, requires = "triggers")]
        assignments: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build events from predicted triggers and role assignments.
    Construct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        triggers: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long, value_enum, default_value = "rule")]
        mode: ModeArg,
        #[command(flatten)]
        scorer: ScorerArgs,
        /// Directory receiving one .a2 file per document.
        #[arg(long)]
        output: PathBuf,
    },
    /// Score predicted .a2 files against gold annotations.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "strict")]
        regime: RegimeArg,
        #[arg(long)]
        json: bool,
    },
    /// Attribute Binding false positives to the stage that caused them.
    AnalyzeErrors {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        assignments: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "strict")]
        regime: RegimeArg,
        #[arg(long)]
        json: bool,
    },
    /// Run all stages; flags override the config file.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rule,
    Auto,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rule => Mode::Rule,
            ModeArg::Auto => Mode::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Strict,
    Approx,
}

impl From<RegimeArg> for MatchingRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Strict => MatchingRegime::Strict,
            RegimeArg::Approx => MatchingRegime::Approximate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    Oracle,
    Noisy,
    Remote,
}

#[derive(Args, Default)]
struct ScorerArgs {
    #[arg(long, value_enum)]
    scorer: Option<ScorerKind>,
    /// Base URL of the model service.
    #[arg(long, env = "BIOVENT_SCORER_URL")]
    endpoint: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    flip_trigger: Option<f64>,
    #[arg(long)]
    flip_role: Option<f64>,
    #[arg(long)]
    flip_candidate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Attempts per request batch.
    #[arg(long)]
    attempts: Option<u32>,
}

impl ScorerArgs {
    /// Applies the flags on top of `base`.
    fn resolve(&self, base: Option<ScorerConfig>) -> Option<ScorerConfig> {
        let kind = self.scorer.or(match base {
            Some(ScorerConfig::Oracle) => Some(ScorerKind::Oracle),
            Some(ScorerConfig::Noisy(_)) => Some(ScorerKind::Noisy),
            Some(ScorerConfig::Remote(_)) => Some(ScorerKind::Remote),
            None => None,
        })?;
        Some(match kind {
            ScorerKind::Oracle => ScorerConfig::Oracle,
            ScorerKind::Noisy => {
                let mut n = match base {
                    Some(ScorerConfig::Noisy(n)) => n,
                    _ => NoiseConfig::new(0),
                };
                n.seed = self.seed.unwrap_or(n.seed);
                n.flip_rate_trigger = self.flip_trigger.unwrap_or(n.flip_rate_trigger);
                n.flip_rate_role = self.flip_role.unwrap_or(n.flip_rate_role);
                n.flip_rate_candidate = self.flip_candidate.unwrap_or(n.flip_rate_candidate);
                ScorerConfig::Noisy(n)
            }
            ScorerKind::Remote => {
                let mut r = match base {
                    Some(ScorerConfig::Remote(r)) => r,
                    _ => RemoteConfig::default(),
                };
                if let Some(e) = &self.endpoint {
                    r.endpoint = e.clone();
                }
                r.batch_size = self.batch_size.unwrap_or(r.batch_size);
                r.timeout_ms = self.timeout_ms.unwrap_or(r.timeout_ms);
                r.max_attempts = self.attempts.unwrap_or(r.max_attempts);
                ScorerConfig::Remote(r)
            }
        })
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory for the selected split.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long)]
    gold_triggers: bool,
    #[arg(long)]
    gold_args: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    strict_parsing: bool,
    #[arg(long)]
    json: bool,
}

enum Failure {
    Usage(String),
    Data(String),
    Scorer(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_scorer_unavailable() {
            Failure::Scorer(e.to_string())
        } else if let PipelineError::Config(_) = e {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<biovent::corpus::CorpusError> for Failure {
    fn from(e: biovent::corpus::CorpusError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<biovent::eval::EvalError> for Failure {
    fn from(e: biovent::eval::EvalError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Scorer(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_SCORER)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::ParseCheck { input, strict } => parse_check(&input, strict),
        Command::Stats { input, split, json } => {
            let corpus = load_corpus(&input, split, ParseOptions::default())?;
            let stats = stats_for_split(&corpus);
            if json {
                emit(
                    &(serde_json::to_string_pretty(&stats).expect("serializes") + "\n"),
                    None,
                )
            } else {
                emit(&stats.to_table(), None)
            }
        }
        Command::GenTriggers { input, output } => {
            let corpus = load_gold(&input)?;
            let lines = corpus.documents.iter().flat_map(|doc| {
                let sentences = split_sentences(doc);
                make_tagging_instances(doc, &sentences, true)
            });
            emit_jsonl(lines, output.as_deref())
        }
        Command::GenRoles {
            input,
            triggers,
            output,
        } => {
            let corpus = load_gold(&input)?;
            let predicted = match &triggers {
                Some(path) => Some(read_jsonl::<TriggerRecord>(path)?),
                None => None,
            };
            let oracle = OracleScorer::new(corpus.documents.iter().cloned());
            let mut lines = Vec::new();
            for gold in &corpus.documents {
                match &predicted {
                    None => lines.extend(make_role_instances(gold, &split_sentences(gold), true)),
                    Some(records) => {
                        let mut doc = gold.entities_only();
                        apply_triggers(&mut doc, records);
                        for mut inst in make_role_instances(&doc, &split_sentences(&doc), false) {
                            inst.label = Some(InstanceLabel::Role(
                                oracle
                                    .gold_role(&inst)
                                    .unwrap_or(biovent::instances::RoleLabel::None),
                            ));
                            lines.push(inst);
                        }
                    }
                }
            }
            emit_jsonl(lines, output.as_deref())
        }
        Command::GenCandidates {
            input,
            triggers,
            assignments,
            output,
        } => {
            let corpus = load_gold(&input)?;
            let oracle = OracleScorer::new(corpus.documents.iter().cloned());
            let mut lines: Vec<MarkedInstance> = Vec::new();
            let predicted = match (&triggers, &assignments) {
                (Some(t), Some(a)) => Some((read_jsonl::<TriggerRecord>(t)?, read_assignments(a)?)),
                _ => None,
            };
            for gold in &corpus.documents {
                match &predicted {
                    None => lines.extend(make_candidate_instances(
                        gold,
                        &split_sentences(gold),
                        &gold_assignments(gold),
                        true,
                    )),
                    Some((records, by_doc)) => {
                        let mut doc = gold.entities_only();
                        apply_triggers(&mut doc, records);
                        let assigned = by_doc.get(&doc.doc_id).map_or(&[][..], |v| v);
                        for mut inst in
                            make_candidate_instances(&doc, &split_sentences(&doc), assigned, false)
                        {
                            let label = oracle.gold_candidate(&inst).unwrap_or(CandidateLabel::Invalid);
                            inst.label = Some(InstanceLabel::Candidate(label));
                            lines.push(inst);
                        }
                    }
                }
            }
            emit_jsonl(lines, output.as_deref())
        }
        Command::Construct {
            input,
            triggers,
            assignments,
            mode,
            scorer,
            output,
        } => construct(&input, &triggers, &assignments, mode.into(), &scorer, &output),
        Command::Evaluate {
            gold,
            pred,
            regime,
            json,
        } => {
            let gold_docs = load_gold(&gold)?.documents;
            let pred_docs = load_predictions(&gold, &pred, ParseOptions::default())?;
            let report = evaluate(&gold_docs, &pred_docs, regime.into())?;
            if json {
                emit(
                    &(serde_json::to_string_pretty(&report).expect("serializes") + "\n"),
                    None,
                )
            } else {
                emit(&report.to_table(), None)
            }
        }
        Command::AnalyzeErrors {
            gold,
            pred,
            assignments,
            regime,
            json,
        } => {
            let gold_docs = load_gold(&gold)?.documents;
            let pred_docs = load_predictions(&gold, &pred, ParseOptions::default())?;
            let by_doc = match &assignments {
                Some(path) => read_assignments(path)?,
                None => BTreeMap::new(),
            };
            let report = analyze_cascade(&gold_docs, &pred_docs, &by_doc, regime.into())?;
            if json {
                emit(
                    &(serde_json::to_string_pretty(&report).expect("serializes") + "\n"),
                    None,
                )
            } else {
                emit(&report.to_table(), None)
            }
        }
        Command::Pipeline(args) => pipeline(args),
    }
}

fn load_gold(dir: &Path) -> Result<Corpus, Failure> {
    Ok(load_corpus(dir, Split::Dev, ParseOptions::default())?)
}

fn read_assignments(path: &Path) -> Result<BTreeMap<String, Vec<RoleAssignment>>, Failure> {
    let mut by_doc: BTreeMap<String, Vec<RoleAssignment>> = BTreeMap::new();
    for r in read_jsonl::<AssignmentRecord>(path)? {
        by_doc.entry(r.doc_id).or_default().push(r.assignment);
    }
    Ok(by_doc)
}

fn emit(text: &str, output: Option<&Path>) -> CliResult {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_jsonl<T: serde::Serialize>(items: impl IntoIterator<Item = T>, output: Option<&Path>) -> CliResult {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&item).expect("serializes"));
        text.push('\n');
    }
    emit(&text, output)
}

fn parse_check(input: &Path, strict: bool) -> CliResult {
    let ids = document_ids(input)?;
    let opts = ParseOptions { strict };
    let mut out = String::new();
    let mut violations = 0;
    let mut errors = 0;
    for id in &ids {
        let read = |ext: &str| fs::read_to_string(input.join(format!("{id}.{ext}")));
        let txt = read("txt")?;
        let a1 = match read("a1") {
            Ok(a1) => a1,
            Err(e) => {
                errors += 1;
                out.push_str(&format!("{id}\terror\tmissing .a1: {e}\n"));
                continue;
            }
        };
        let a2 = read("a2").ok();
        match parse_with(id, &txt, &a1, a2.as_deref(), opts) {
            Ok(parsed) => {
                for v in &parsed.violations {
                    violations += 1;
                    out.push_str(&format!("{id}\t{}\t{:?}\t{}\n", v.id, v.kind, v.detail));
                }
            }
            Err(e) => {
                errors += 1;
                out.push_str(&format!("{id}\terror\t{e}\n"));
            }
        }
    }
    out.push_str(&format!(
        "{} documents, {violations} repaired annotations, {errors} rejected documents\n",
        ids.len()
    ));
    emit(&out, None)?;
    if errors > 0 {
        return Err(Failure::Data(format!("{errors} document(s) failed to parse")));
    }
    Ok(())
}

fn construct(
    input: &Path,
    triggers: &Path,
    assignments: &Path,
    mode: Mode,
    scorer_args: &ScorerArgs,
    output: &Path,
) -> CliResult {
    let corpus = load_gold(input)?;
    let records = read_jsonl::<TriggerRecord>(triggers)?;
    let by_doc = read_assignments(assignments)?;
    let scorer = match scorer_args.resolve(None) {
        Some(cfg) => Some(build_scorer(&cfg, &corpus.documents)?),
        None if mode == Mode::Auto => {
            return Err(Failure::Usage("--mode auto requires --scorer".into()));
        }
        None => None,
    };
    fs::create_dir_all(output)?;
    for gold in &corpus.documents {
        let mut doc: Document = gold.entities_only();
        apply_triggers(&mut doc, &records);
        let assigned = by_doc.get(&doc.doc_id).map_or(&[][..], |v| v);
        let events = construct_document(&doc, assigned, mode, scorer.as_deref()).map_err(|e| {
            PipelineError::Stage {
                stage: "construction",
                doc_id: doc.doc_id.clone(),
                source: StageError::Construction(e),
            }
        })?;
        let doc = with_events(&doc, events);
        write_file(&output.join(format!("{}.a2", doc.doc_id)), &serialize_a2(&doc))?;
    }
    Ok(())
}

fn pipeline(args: PipelineArgs) -> CliResult {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<PipelineConfig>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(split) = args.split {
        cfg.split = split;
    }
    if let Some(input) = args.input {
        cfg.corpus.set(cfg.split, input);
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode.into();
    }
    cfg.scorer = args.scorer.resolve(cfg.scorer.take());
    cfg.gold_triggers |= args.gold_triggers;
    cfg.gold_args |= args.gold_args;
    cfg.strict_parsing |= args.strict_parsing;
    if let Some(output) = args.output {
        cfg.output = output;
    }
    if let Some(regime) = args.regime {
        cfg.regime = regime.into();
    }
    let summary = run_pipeline(&cfg)?;
    match &summary.report {
        Some(report) if args.json => emit(
            &(serde_json::to_string_pretty(report).expect("serializes") + "\n"),
            None,
        ),
        Some(report) => emit(
            &format!("{}\n{}", report.evaluation.to_table(), report.cascade.to_table()),
            None,
        ),
        None => emit(&format!("wrote {}\n", summary.a2_dir.display()), None),
    }
}
