//! End-to-end runs: trigger identification, role recognition, event
//! construction and evaluation, with every intermediate result persisted.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construction::{
    construct_document, gold_assignments, with_events, ConstructionError, Mode, RoleAssignment,
};
use crate::corpus::{load_corpus, load_document, split_sentences, Corpus, CorpusError, Split};
use crate::eval::{analyze_cascade, evaluate, CascadeReport, EvalError, EvalReport, MatchingRegime};
use crate::instances::{decode_bio, make_role_instances, make_tagging_instances, InstanceError, RoleLabel};
use crate::scorer::{
    NoiseConfig, NoisyScorer, OracleScorer, RemoteConfig, RemoteScorer, Scorer, ScorerError,
};
use crate::standoff::{serialize_a2, AnnId, Document, EventType, ParseOptions, Span, Trigger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerConfig {
    Oracle,
    Noisy(NoiseConfig),
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl CorpusPaths {
    pub fn get(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => self.train.as_deref(),
            Split::Dev => self.dev.as_deref(),
            Split::Test => self.test.as_deref(),
        }
    }

    pub fn set(&mut self, split: Split, path: PathBuf) {
        match split {
            Split::Train => self.train = Some(path),
            Split::Dev => self.dev = Some(path),
            Split::Test => self.test = Some(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusPaths,
    /// The split to process.
    pub split: Split,
    pub mode: Mode,
    pub scorer: Option<ScorerConfig>,
    /// Use gold triggers instead of tagging.
    pub gold_triggers: bool,
    /// Use gold role assignments; requires `gold_triggers`.
    pub gold_args: bool,
    pub output: PathBuf,
    pub regime: MatchingRegime,
    pub strict_parsing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: CorpusPaths::default(),
            split: Split::Dev,
            mode: Mode::Rule,
            scorer: None,
            gold_triggers: false,
            gold_args: false,
            output: PathBuf::from("out"),
            regime: MatchingRegime::Strict,
            strict_parsing: false,
        }
    }
}

impl PipelineConfig {
    pub fn needs_scorer(&self) -> bool {
        !self.gold_triggers || !self.gold_args || self.mode == Mode::Auto
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.corpus.get(self.split).is_none() {
            return bad(&format!(
                "no corpus path configured for split {}",
                self.split.name()
            ));
        }
        if self.gold_args && !self.gold_triggers {
            return bad("gold_args requires gold_triggers");
        }
        if self.needs_scorer() && self.scorer.is_none() {
            return bad("this configuration requires a scorer");
        }
        if let Some(ScorerConfig::Noisy(n)) = &self.scorer {
            n.validate().map_err(PipelineError::Config)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("stage {stage} failed on document {doc_id}: {source}")]
    Stage {
        stage: &'static str,
        doc_id: String,
        #[source]
        source: StageError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Record {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl PipelineError {
    /// Whether the failure is a scorer that could not be reached.
    pub fn is_scorer_unavailable(&self) -> bool {
        matches!(
            self,
            PipelineError::Stage {
                source: StageError::Scorer(ScorerError::Unavailable { .. })
                    | StageError::Construction(ConstructionError::Scorer(ScorerError::Unavailable { .. })),
                ..
            }
        )
    }
}

fn stage_err<'a>(stage: &'static str, doc_id: &'a str) -> impl FnOnce(StageError) -> PipelineError + 'a {
    move |source| PipelineError::Stage {
        stage,
        doc_id: doc_id.to_string(),
        source,
    }
}

/// One line of `triggers.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub doc_id: String,
    pub id: AnnId,
    #[serde(rename = "type")]
    pub event_type: EventType,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

/// One line of `assignments.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub doc_id: String,
    #[serde(flatten)]
    pub assignment: RoleAssignment,
}

pub fn trigger_records(doc: &Document) -> Vec<TriggerRecord> {
    doc.triggers
        .values()
        .map(|t| TriggerRecord {
            doc_id: doc.doc_id.clone(),
            id: t.id.clone(),
            event_type: t.event_type,
            start: t.span.start,
            end: t.span.end,
            surface: t.surface.clone(),
        })
        .collect()
}

/// Adds recorded triggers to `doc`. Records for other documents are
/// ignored; records whose span does not fit the text are skipped.
pub fn apply_triggers(doc: &mut Document, records: &[TriggerRecord]) {
    for r in records.iter().filter(|r| r.doc_id == doc.doc_id) {
        let span = Span::new(r.start, r.end);
        match doc.slice(span) {
            Some(surface) if !span.is_empty() => {
                let surface = surface.to_string();
                doc.triggers.insert(
                    r.id.clone(),
                    Trigger {
                        id: r.id.clone(),
                        event_type: r.event_type,
                        span,
                        surface,
                    },
                );
            }
            _ => log::warn!(
                "trigger record skipped doc={} id={} reason=invalid span {}",
                r.doc_id,
                r.id,
                span
            ),
        }
    }
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(&item).expect("record serializes");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn build_scorer(config: &ScorerConfig, gold: &[Document]) -> Result<Box<dyn Scorer>, PipelineError> {
    Ok(match config {
        ScorerConfig::Oracle => Box::new(OracleScorer::new(gold.iter().cloned())),
        ScorerConfig::Noisy(noise) => Box::new(
            NoisyScorer::new(OracleScorer::new(gold.iter().cloned()), *noise)
                .map_err(PipelineError::Config)?,
        ),
        ScorerConfig::Remote(remote) => {
            Box::new(RemoteScorer::new(remote.clone()).map_err(PipelineError::Config)?)
        }
    })
}

/// Triggers predicted by tagging each sentence of `doc`.
pub fn predict_triggers(doc: &mut Document, scorer: &dyn Scorer) -> Result<(), StageError> {
    let sentences = split_sentences(doc);
    let instances = make_tagging_instances(doc, &sentences, false);
    let tags = scorer.tag(&instances)?;
    if tags.len() != instances.len() {
        return Err(ScorerError::ProtocolViolation(format!(
            "{} tag sequences for {} sentences",
            tags.len(),
            instances.len()
        ))
        .into());
    }
    for (instance, labels) in instances.iter().zip(&tags) {
        for mention in decode_bio(instance, labels)? {
            doc.add_trigger(mention.event_type, mention.span);
        }
    }
    Ok(())
}

/// Role assignments predicted for every candidate pair of `doc`.
pub fn predict_assignments(doc: &Document, scorer: &dyn Scorer) -> Result<Vec<RoleAssignment>, StageError> {
    let sentences = split_sentences(doc);
    let instances = make_role_instances(doc, &sentences, false);
    let dists = scorer.classify_roles(&instances)?;
    if dists.len() != instances.len() {
        return Err(ScorerError::ProtocolViolation(format!(
            "{} role distributions for {} instances",
            dists.len(),
            instances.len()
        ))
        .into());
    }
    let mut out = Vec::new();
    for (instance, dist) in instances.iter().zip(dists) {
        dist.validate()?;
        let role = match dist.decide() {
            RoleLabel::None => continue,
            label => label.role().expect("not None"),
        };
        let p = &instance.provenance;
        out.push(RoleAssignment::new(
            p.trigger.id.clone(),
            p.participants[0].id.clone(),
            role,
        ));
    }
    out.sort();
    Ok(out)
}

/// Everything produced for one document.
#[derive(Debug, Clone)]
pub struct DocumentRun {
    pub prediction: Document,
    pub assignments: Vec<RoleAssignment>,
}

pub fn run_document(
    gold: &Document,
    cfg: &PipelineConfig,
    scorer: Option<&dyn Scorer>,
) -> Result<DocumentRun, PipelineError> {
    let id = gold.doc_id.as_str();
    let mut doc = gold.entities_only();
    if cfg.gold_triggers {
        doc.triggers = gold.triggers.clone();
    } else {
        let scorer = scorer.ok_or_else(|| PipelineError::Config("trigger stage needs a scorer".into()))?;
        predict_triggers(&mut doc, scorer).map_err(stage_err("triggers", id))?;
    }
    let assignments = if cfg.gold_args {
        gold_assignments(gold)
    } else {
        let scorer = scorer.ok_or_else(|| PipelineError::Config("role stage needs a scorer".into()))?;
        predict_assignments(&doc, scorer).map_err(stage_err("roles", id))?
    };
    let events = construct_document(&doc, &assignments, cfg.mode, scorer)
        .map_err(|e| stage_err("construction", id)(e.into()))?;
    Ok(DocumentRun {
        prediction: with_events(&doc, events),
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub split: Split,
    pub mode: Mode,
    pub gold_triggers: bool,
    pub gold_args: bool,
    pub evaluation: EvalReport,
    pub cascade: CascadeReport,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub triggers: PathBuf,
    pub assignments: PathBuf,
    pub a2_dir: PathBuf,
    pub report_path: Option<PathBuf>,
    pub report: Option<RunReport>,
    pub predictions: Vec<Document>,
}

fn has_gold_events(dir: &Path, corpus: &Corpus) -> bool {
    corpus
        .documents
        .iter()
        .any(|d| dir.join(format!("{}.a2", d.doc_id)).exists())
}

/// Runs every stage over the configured split and writes `triggers.jsonl`,
/// `assignments.jsonl`, `a2/<doc>.a2` and, when gold events exist,
/// `report.json` into the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let dir = cfg.corpus.get(cfg.split).expect("validated");
    let opts = ParseOptions {
        strict: cfg.strict_parsing,
    };
    let mut corpus = load_corpus(dir, cfg.split, opts)?;
    if cfg.split.deduplicates() {
        corpus = corpus.deduplicated();
    }
    let scorer = match &cfg.scorer {
        Some(sc) if cfg.needs_scorer() => Some(build_scorer(sc, &corpus.documents)?),
        _ => None,
    };
    let scorer_ref = scorer.as_deref();
    let runs: Vec<DocumentRun> = corpus
        .documents
        .par_iter()
        .map(|gold| run_document(gold, cfg, scorer_ref))
        .collect::<Result<_, _>>()?;

    let out = &cfg.output;
    let a2_dir = out.join("a2");
    fs::create_dir_all(&a2_dir).map_err(|source| PipelineError::Io {
        path: a2_dir.clone(),
        source,
    })?;
    let triggers = out.join("triggers.jsonl");
    write_jsonl(
        &triggers,
        runs.iter().flat_map(|r| trigger_records(&r.prediction)),
    )?;
    let assignments = out.join("assignments.jsonl");
    write_jsonl(
        &assignments,
        runs.iter().flat_map(|r| {
            r.assignments.iter().map(|a| AssignmentRecord {
                doc_id: r.prediction.doc_id.clone(),
                assignment: a.clone(),
            })
        }),
    )?;
    for run in &runs {
        write_file(
            &a2_dir.join(format!("{}.a2", run.prediction.doc_id)),
            &serialize_a2(&run.prediction),
        )?;
    }

    let predictions: Vec<Document> = runs.iter().map(|r| r.prediction.clone()).collect();
    let (report, report_path) = if has_gold_events(dir, &corpus) {
        let by_doc: BTreeMap<String, Vec<RoleAssignment>> = runs
            .iter()
            .map(|r| (r.prediction.doc_id.clone(), r.assignments.clone()))
            .collect();
        let report = RunReport {
            split: cfg.split,
            mode: cfg.mode,
            gold_triggers: cfg.gold_triggers,
            gold_args: cfg.gold_args,
            evaluation: evaluate(&corpus.documents, &predictions, cfg.regime)?,
            cascade: analyze_cascade(&corpus.documents, &predictions, &by_doc, cfg.regime)?,
        };
        let path = out.join("report.json");
        write_file(
            &path,
            &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        )?;
        (Some(report), Some(path))
    } else {
        (None, None)
    };
    Ok(RunSummary {
        triggers,
        assignments,
        a2_dir,
        report_path,
        report,
        predictions,
    })
}

/// Predicted documents: text and entities from `gold_dir`, events from the
/// `.a2` files in `pred_dir`.
pub fn load_predictions(
    gold_dir: &Path,
    pred_dir: &Path,
    opts: ParseOptions,
) -> Result<Vec<Document>, PipelineError> {
    let ids = crate::corpus::document_ids(gold_dir)?;
    let mut docs = Vec::new();
    for id in &ids {
        let a2_path = pred_dir.join(format!("{id}.a2"));
        if !a2_path.exists() {
            continue;
        }
        let mut doc = load_document(gold_dir, id, opts)?;
        let a2 = fs::read_to_string(&a2_path).map_err(|source| PipelineError::Io {
            path: a2_path.clone(),
            source,
        })?;
        let parsed = crate::standoff::parse_with(
            id,
            &doc.text,
            &crate::standoff::serialize_a1(&doc),
            Some(&a2),
            opts,
        )
        .map_err(|source| CorpusError::Parse {
            doc_id: id.clone(),
            source,
        })?;
        doc = parsed.document;
        docs.push(doc);
    }
    // Prediction files for documents absent from gold.
    let entries = fs::read_dir(pred_dir).map_err(|source| PipelineError::Io {
        path: pred_dir.to_path_buf(),
        source,
    })?;
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "a2") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if ids.binary_search_by(|i| i.as_str().cmp(stem)).is_err() {
                docs.push(Document::new(stem, ""));
            }
        }
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(docs)
}
