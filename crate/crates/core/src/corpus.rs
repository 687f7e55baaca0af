//! Corpus loading, event deduplication, event statistics and sentence
//! segmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::standoff::{parse_with, AnnId, Document, EventType, ParseOptions, Role, Span, StandoffError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// Train and dev statistics are reported after deduplication, test
    /// statistics from the files as distributed.
    pub fn deduplicates(self) -> bool {
        self != Split::Test
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "devel" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub split: Split,
    /// Sorted by `doc_id`.
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(split: Split, mut documents: Vec<Document>) -> Self {
        documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Corpus { split, documents }
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn deduplicated(&self) -> Corpus {
        Corpus {
            split: self.split,
            documents: self.documents.par_iter().map(dedupe_events).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("document {doc_id}: missing .{extension} file")]
    MissingFile { doc_id: String, extension: &'static str },
    #[error("document {doc_id}: {source}")]
    Parse {
        doc_id: String,
        #[source]
        source: StandoffError,
    },
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Document ids of every `.txt` file in `dir`, sorted.
pub fn document_ids(dir: &Path) -> Result<Vec<String>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads one document triple. `.a1` is required, `.a2` optional.
pub fn load_document(dir: &Path, doc_id: &str, opts: ParseOptions) -> Result<Document, CorpusError> {
    let txt = read(&dir.join(format!("{doc_id}.txt")))?;
    let a1_path = dir.join(format!("{doc_id}.a1"));
    if !a1_path.exists() {
        return Err(CorpusError::MissingFile {
            doc_id: doc_id.to_string(),
            extension: "a1",
        });
    }
    let a1 = read(&a1_path)?;
    let a2_path = dir.join(format!("{doc_id}.a2"));
    let a2 = if a2_path.exists() {
        Some(read(&a2_path)?)
    } else {
        None
    };
    let parsed = parse_with(doc_id, &txt, &a1, a2.as_deref(), opts).map_err(|source| CorpusError::Parse {
        doc_id: doc_id.to_string(),
        source,
    })?;
    for v in &parsed.violations {
        log::warn!(
            "standoff repair doc={} id={} kind={:?} detail={:?}",
            doc_id,
            v.id,
            v.kind,
            v.detail
        );
    }
    Ok(parsed.document)
}

pub fn load_corpus(dir: &Path, split: Split, opts: ParseOptions) -> Result<Corpus, CorpusError> {
    let ids = document_ids(dir)?;
    let documents = ids
        .par_iter()
        .map(|id| load_document(dir, id, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus::new(split, documents))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum FillerKey {
    Entity(Span),
    Event(AnnId),
}

type EventKey = (EventType, Span, Vec<(Role, FillerKey)>);

/// Collapses events that share type, trigger span and argument multiset.
///
/// Merging sub-events can make their parents identical, so merging repeats
/// until nothing changes. The smallest id of each duplicate group survives
/// and references to the others are re-pointed to it.
pub fn dedupe_events(doc: &Document) -> Document {
    let mut out = doc.clone();
    loop {
        let mut survivors: BTreeMap<EventKey, AnnId> = BTreeMap::new();
        let mut remap: BTreeMap<AnnId, AnnId> = BTreeMap::new();
        for event in out.events.values() {
            let Some(trigger) = out.triggers.get(&event.trigger) else {
                continue;
            };
            let mut args: Vec<(Role, FillerKey)> = event
                .arguments
                .iter()
                .map(|a| {
                    let key = match out.entities.get(&a.filler) {
                        Some(e) => FillerKey::Entity(e.span),
                        None => FillerKey::Event(a.filler.clone()),
                    };
                    (a.role, key)
                })
                .collect();
            args.sort();
            let key = (event.event_type, trigger.span, args);
            match survivors.get(&key) {
                Some(keep) => {
                    remap.insert(event.id.clone(), keep.clone());
                }
                None => {
                    survivors.insert(key, event.id.clone());
                }
            }
        }
        if remap.is_empty() {
            return out;
        }
        for gone in remap.keys() {
            log::debug!("dedupe doc={} event={} into={}", out.doc_id, gone, remap[gone]);
            out.events.remove(gone);
        }
        for event in out.events.values_mut() {
            for arg in &mut event.arguments {
                if let Some(keep) = remap.get(&arg.filler) {
                    arg.filler = keep.clone();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeStat {
    pub count: usize,
    /// Share of all events in percent, rounded to one decimal.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub split: Split,
    pub documents: usize,
    pub per_type: BTreeMap<EventType, TypeStat>,
    pub total: usize,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Counts events per type as they are in `corpus`; callers decide whether
/// to deduplicate first (see [`stats_for_split`]).
pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut counts: BTreeMap<EventType, usize> = EventType::ALL.iter().map(|&t| (t, 0)).collect();
    for doc in &corpus.documents {
        for event in doc.events.values() {
            *counts.entry(event.event_type).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let per_type = counts
        .into_iter()
        .map(|(t, count)| {
            let percent = if total == 0 {
                0.0
            } else {
                round1(100.0 * count as f64 / total as f64)
            };
            (t, TypeStat { count, percent })
        })
        .collect();
    CorpusStats {
        split: corpus.split,
        documents: corpus.documents.len(),
        per_type,
        total,
    }
}

/// Statistics with the per-split deduplication policy applied.
pub fn stats_for_split(corpus: &Corpus) -> CorpusStats {
    if corpus.split.deduplicates() {
        compute_stats(&corpus.deduplicated())
    } else {
        compute_stats(corpus)
    }
}

impl CorpusStats {
    /// Plain-text table, one row per event type.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<6} {:>8} {:>6}\n", "Type", "#", "%");
        for (t, s) in &self.per_type {
            out.push_str(&format!("{:<6} {:>8} {:>6.1}\n", t.abbr(), s.count, s.percent));
        }
        let all = if self.total == 0 { 0.0 } else { 100.0 };
        out.push_str(&format!("{:<6} {:>8} {:>6.0}\n", "All", self.total, all));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub span: Span,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn contains(&self, span: &Span) -> bool {
        self.span.contains(span)
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Annotation boundaries present in the document. Tokens never cross them.
fn annotation_spans(doc: &Document) -> Vec<Span> {
    doc.entities
        .values()
        .map(|e| e.span)
        .chain(doc.triggers.values().map(|t| t.span))
        .collect()
}

/// Splits `range` of `chars` into tokens: whitespace-separated chunks, cut
/// at every position in `cuts`, with leading and trailing punctuation split
/// off one character at a time. Internal hyphens and periods stay.
pub fn tokenize(chars: &[char], range: Span, cuts: &BTreeSet<usize>) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut push = |start: usize, end: usize| {
        tokens.push(Token {
            text: chars[start..end].iter().collect(),
            span: Span::new(start, end),
        });
    };
    let mut i = range.start;
    while i < range.end {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < range.end && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut piece_bounds = vec![chunk_start];
        piece_bounds.extend(cuts.range(chunk_start + 1..i).copied());
        piece_bounds.push(i);
        for w in piece_bounds.windows(2) {
            let (mut s, mut e) = (w[0], w[1]);
            let mut trailing = Vec::new();
            while s < e && is_punct(chars[s]) {
                push(s, s + 1);
                s += 1;
            }
            while e > s && is_punct(chars[e - 1]) {
                trailing.push(e - 1);
                e -= 1;
            }
            if s < e {
                push(s, e);
            }
            for p in trailing.into_iter().rev() {
                push(p, p + 1);
            }
        }
    }
    tokens
}

/// Sentence segmentation: a sentence ends at `.`, `?` or `!` followed by
/// whitespace and an uppercase letter, or at a line break. Boundaries that
/// would cut an entity or trigger are pushed past the annotation.
pub fn split_sentences(doc: &Document) -> Vec<Sentence> {
    let chars: Vec<char> = doc.text.chars().collect();
    let n = chars.len();
    let spans = annotation_spans(doc);
    let cuts: BTreeSet<usize> = spans.iter().flat_map(|s| [s.start, s.end]).collect();

    let skip_ws = |mut k: usize| {
        while k < n && chars[k].is_whitespace() {
            k += 1;
        }
        k
    };

    let mut candidates = Vec::new();
    for i in 0..n {
        match chars[i] {
            '.' | '?' | '!' if i + 1 < n && chars[i + 1].is_whitespace() => {
                let k = skip_ws(i + 1);
                if k < n && chars[k].is_uppercase() {
                    candidates.push(k);
                }
            }
            '\n' => {
                let k = skip_ws(i + 1);
                if k < n {
                    candidates.push(k);
                }
            }
            _ => {}
        }
    }

    let mut boundaries = vec![0];
    for mut b in candidates {
        loop {
            let pushed = spans.iter().filter(|s| s.straddles(b)).map(|s| s.end).max();
            match pushed {
                Some(end) => {
                    log::debug!(
                        "sentence boundary repair doc={} from={} to={}",
                        doc.doc_id,
                        b,
                        end
                    );
                    b = skip_ws(end);
                }
                None => break,
            }
        }
        if b < n && b > *boundaries.last().unwrap() {
            boundaries.push(b);
        }
    }
    boundaries.push(n);

    let mut sentences = Vec::new();
    for w in boundaries.windows(2) {
        let (mut s, mut e) = (w[0], w[1]);
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s == e {
            continue;
        }
        let span = Span::new(s, e);
        sentences.push(Sentence {
            doc_id: doc.doc_id.clone(),
            index: sentences.len(),
            span,
            tokens: tokenize(&chars, span, &cuts),
        });
    }
    sentences
}

/// Every token of the document, in order.
pub fn document_tokens(doc: &Document) -> Vec<Token> {
    split_sentences(doc).into_iter().flat_map(|s| s.tokens).collect()
}
