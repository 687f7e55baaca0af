//! BioNLP shared-task standoff annotations: `.txt` text, `.a1` given
//! entities, `.a2` triggers and events.
//!
//! Offsets are character offsets into the decoded text. Parsing is lenient
//! by default: events whose roles fall outside the supported composition
//! (Site, ToLoc, AtLoc, ...) lose those arguments, and events that still
//! violate the composition registry are dropped and reported as
//! [`Violation`]s. Strict parsing turns the first violation into an error.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Annotation identifier such as `T12` or `E3`.
///
/// Ordering is by prefix, then by numeric suffix, so `T2 < T10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnId(String);

impl AnnId {
    pub fn new(id: impl Into<String>) -> Self {
        AnnId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>) {
        let digits = self.0.len() - self.0.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (prefix, num) = self.0.split_at(self.0.len() - digits);
        (prefix, num.parse().ok())
    }

    pub fn prefix(&self) -> &str {
        self.split().0
    }

    pub fn number(&self) -> Option<u64> {
        self.split().1
    }
}

impl Ord for AnnId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, na) = self.split();
        let (pb, nb) = other.split();
        pa.cmp(pb).then(na.cmp(&nb)).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for AnnId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AnnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AnnId {
    fn from(s: &str) -> Self {
        AnnId(s.to_string())
    }
}

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// True when `pos` lies strictly inside the span, i.e. a cut at `pos`
    /// would split it.
    pub fn straddles(&self, pos: usize) -> bool {
        self.start < pos && pos < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Slice `text` by character offsets.
pub fn char_slice(text: &str, span: Span) -> Option<&str> {
    if span.end < span.start {
        return None;
    }
    let mut bounds = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()));
    let start = bounds.nth(span.start)?;
    let end = if span.end == span.start {
        start
    } else {
        bounds.nth(span.end - span.start - 1)?
    };
    Some(&text[start..end])
}

/// How many arguments of a role an event may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Arity {
    None,
    ZeroOrOne,
    ExactlyOne,
    OneOrMore,
}

impl Arity {
    pub fn admits(self, count: usize) -> bool {
        match self {
            Arity::None => count == 0,
            Arity::ZeroOrOne => count <= 1,
            Arity::ExactlyOne => count == 1,
            Arity::OneOrMore => count >= 1,
        }
    }
}

/// What may fill an argument slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FillerPolicy {
    EntityOnly,
    EntityOrEvent,
}

impl FillerPolicy {
    pub fn admits_event(self) -> bool {
        self == FillerPolicy::EntityOrEvent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Category {
    Simple,
    Multiple,
    Nested,
}

/// Argument composition of one event type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Composition {
    pub theme_arity: Arity,
    pub theme_filler: FillerPolicy,
    pub cause_arity: Arity,
    pub cause_filler: FillerPolicy,
    pub category: Category,
}

impl Composition {
    /// Whether any argument slot of this type accepts an event.
    pub fn admits_event_arguments(&self) -> bool {
        self.theme_filler.admits_event()
            || (self.cause_arity != Arity::None && self.cause_filler.admits_event())
    }

    pub fn arity(&self, role: Role) -> Arity {
        match role {
            Role::Theme => self.theme_arity,
            Role::Cause => self.cause_arity,
        }
    }

    pub fn filler(&self, role: Role) -> FillerPolicy {
        match role {
            Role::Theme => self.theme_filler,
            Role::Cause => self.cause_filler,
        }
    }
}

const SIMPLE: Composition = Composition {
    theme_arity: Arity::ExactlyOne,
    theme_filler: FillerPolicy::EntityOnly,
    cause_arity: Arity::None,
    cause_filler: FillerPolicy::EntityOnly,
    category: Category::Simple,
};

const BINDING: Composition = Composition {
    theme_arity: Arity::OneOrMore,
    theme_filler: FillerPolicy::EntityOnly,
    cause_arity: Arity::None,
    cause_filler: FillerPolicy::EntityOnly,
    category: Category::Multiple,
};

const REGULATION: Composition = Composition {
    theme_arity: Arity::ExactlyOne,
    theme_filler: FillerPolicy::EntityOrEvent,
    cause_arity: Arity::ZeroOrOne,
    cause_filler: FillerPolicy::EntityOrEvent,
    category: Category::Nested,
};

const MODIFICATION: Composition = Composition {
    theme_arity: Arity::ExactlyOne,
    theme_filler: FillerPolicy::EntityOnly,
    cause_arity: Arity::ZeroOrOne,
    cause_filler: FillerPolicy::EntityOrEvent,
    category: Category::Nested,
};

/// The thirteen GENIA event types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    #[serde(rename = "Gene_expression")]
    GeneExpression,
    Transcription,
    #[serde(rename = "Protein_catabolism")]
    ProteinCatabolism,
    Phosphorylation,
    Localization,
    Binding,
    #[serde(rename = "Protein_modification")]
    ProteinModification,
    Ubiquitination,
    Acetylation,
    Deacetylation,
    Regulation,
    #[serde(rename = "Positive_regulation")]
    PositiveRegulation,
    #[serde(rename = "Negative_regulation")]
    NegativeRegulation,
}

impl EventType {
    pub const ALL: [EventType; 13] = [
        EventType::GeneExpression,
        EventType::Transcription,
        EventType::ProteinCatabolism,
        EventType::Phosphorylation,
        EventType::Localization,
        EventType::Binding,
        EventType::ProteinModification,
        EventType::Ubiquitination,
        EventType::Acetylation,
        EventType::Deacetylation,
        EventType::Regulation,
        EventType::PositiveRegulation,
        EventType::NegativeRegulation,
    ];

    /// Name as written in standoff files.
    pub fn name(self) -> &'static str {
        match self {
            EventType::GeneExpression => "Gene_expression",
            EventType::Transcription => "Transcription",
            EventType::ProteinCatabolism => "Protein_catabolism",
            EventType::Phosphorylation => "Phosphorylation",
            EventType::Localization => "Localization",
            EventType::Binding => "Binding",
            EventType::ProteinModification => "Protein_modification",
            EventType::Ubiquitination => "Ubiquitination",
            EventType::Acetylation => "Acetylation",
            EventType::Deacetylation => "Deacetylation",
            EventType::Regulation => "Regulation",
            EventType::PositiveRegulation => "Positive_regulation",
            EventType::NegativeRegulation => "Negative_regulation",
        }
    }

    pub fn abbr(self) -> &'static str {
        match self {
            EventType::GeneExpression => "GeEx",
            EventType::Transcription => "Tran",
            EventType::ProteinCatabolism => "PrCa",
            EventType::Phosphorylation => "Phos",
            EventType::Localization => "Loca",
            EventType::Binding => "Bind",
            EventType::ProteinModification => "PrMo",
            EventType::Ubiquitination => "Ubiq",
            EventType::Acetylation => "Acet",
            EventType::Deacetylation => "Deac",
            EventType::Regulation => "Regu",
            EventType::PositiveRegulation => "PoRe",
            EventType::NegativeRegulation => "NeRe",
        }
    }

    pub fn composition(self) -> Composition {
        match self {
            EventType::GeneExpression
            | EventType::Transcription
            | EventType::ProteinCatabolism
            | EventType::Phosphorylation
            | EventType::Localization => SIMPLE,
            EventType::Binding => BINDING,
            EventType::Regulation | EventType::PositiveRegulation | EventType::NegativeRegulation => {
                REGULATION
            }
            EventType::ProteinModification
            | EventType::Ubiquitination
            | EventType::Acetylation
            | EventType::Deacetylation => MODIFICATION,
        }
    }

    pub fn category(self) -> Category {
        self.composition().category
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown event type `{0}`")]
pub struct UnknownEventType(pub String);

impl FromStr for EventType {
    type Err = UnknownEventType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s || t.abbr() == s)
            .ok_or_else(|| UnknownEventType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Theme,
    Cause,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Theme => "Theme",
            Role::Cause => "Cause",
        }
    }

    /// Normalizes numbered roles (`Theme2` -> `Theme`). Other roles
    /// (`Site`, `ToLoc`, ...) are not modeled and yield `None`.
    pub fn parse_standoff(s: &str) -> Option<Role> {
        match s.trim_end_matches(|c: char| c.is_ascii_digit()) {
            "Theme" => Some(Role::Theme),
            "Cause" => Some(Role::Cause),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entity {
    pub id: AnnId,
    pub entity_type: String,
    pub span: Span,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trigger {
    pub id: AnnId,
    pub event_type: EventType,
    pub span: Span,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Argument {
    pub role: Role,
    pub filler: AnnId,
}

impl Argument {
    pub fn new(role: Role, filler: impl Into<AnnId>) -> Self {
        Argument {
            role,
            filler: filler.into(),
        }
    }
}

impl From<String> for AnnId {
    fn from(s: String) -> Self {
        AnnId(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub id: AnnId,
    pub event_type: EventType,
    pub trigger: AnnId,
    pub arguments: Vec<Argument>,
}

impl Event {
    pub fn themes(&self) -> impl Iterator<Item = &AnnId> {
        self.fillers(Role::Theme)
    }

    pub fn causes(&self) -> impl Iterator<Item = &AnnId> {
        self.fillers(Role::Cause)
    }

    pub fn fillers(&self, role: Role) -> impl Iterator<Item = &AnnId> {
        self.arguments
            .iter()
            .filter(move |a| a.role == role)
            .map(|a| &a.filler)
    }

    /// Puts Themes before Causes, keeping the relative order within a role.
    pub fn normalize_argument_order(&mut self) {
        self.arguments.sort_by_key(|a| a.role);
    }
}

/// What an argument filler id resolves to within a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillerKind {
    Entity,
    Event,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub entities: BTreeMap<AnnId, Entity>,
    pub triggers: BTreeMap<AnnId, Trigger>,
    pub events: BTreeMap<AnnId, Event>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn slice(&self, span: Span) -> Option<&str> {
        char_slice(&self.text, span)
    }

    pub fn filler_kind(&self, id: &AnnId) -> Option<FillerKind> {
        if self.entities.contains_key(id) {
            Some(FillerKind::Entity)
        } else if self.events.contains_key(id) {
            Some(FillerKind::Event)
        } else {
            None
        }
    }

    /// Copy with the same text and entities and no triggers or events.
    pub fn entities_only(&self) -> Document {
        Document {
            doc_id: self.doc_id.clone(),
            text: self.text.clone(),
            entities: self.entities.clone(),
            ..Default::default()
        }
    }

    fn next_number(&self, prefix: &str) -> u64 {
        let ids = self
            .entities
            .keys()
            .chain(self.triggers.keys())
            .chain(self.events.keys());
        ids.filter(|id| id.prefix() == prefix)
            .filter_map(AnnId::number)
            .max()
            .map_or(1, |n| n + 1)
    }

    pub fn next_trigger_id(&self) -> AnnId {
        AnnId(format!("T{}", self.next_number("T")))
    }

    pub fn next_event_id(&self) -> AnnId {
        AnnId(format!("E{}", self.next_number("E")))
    }

    /// Adds a trigger over `span` with a fresh id and returns the id.
    pub fn add_trigger(&mut self, event_type: EventType, span: Span) -> Option<AnnId> {
        let surface = self.slice(span)?.to_string();
        let id = self.next_trigger_id();
        self.triggers.insert(
            id.clone(),
            Trigger {
                id: id.clone(),
                event_type,
                span,
                surface,
            },
        );
        Some(id)
    }

    /// Span of an entity or trigger id.
    pub fn text_bound_span(&self, id: &AnnId) -> Option<Span> {
        self.entities
            .get(id)
            .map(|e| e.span)
            .or_else(|| self.triggers.get(id).map(|t| t.span))
    }

    pub fn events_on_trigger<'a>(&'a self, trigger: &'a AnnId) -> impl Iterator<Item = &'a Event> {
        self.events.values().filter(move |e| &e.trigger == trigger)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    InvalidSpan,
    SpanMismatch,
    DuplicateId,
    DanglingReference,
    TypeMismatch,
    UnsupportedRole,
    UnsupportedType,
    CompositionViolation,
    CyclicEvent,
    DependsOnDropped,
}

/// One broken invariant, naming the offending annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub id: AnnId,
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    fn new(id: &AnnId, kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            id: id.clone(),
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}: {}", self.id, self.kind, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StandoffError {
    #[error("{file} line {line}: {reason}")]
    MalformedLine {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error("{id}: span {span} does not match text (expected {expected:?}, found {found:?})")]
    SpanMismatch {
        id: AnnId,
        span: Span,
        expected: String,
        found: String,
    },
    #[error("{id}: reference to unknown annotation {target}")]
    DanglingReference { id: AnnId, target: AnnId },
    #[error("{id}: event graph contains a cycle")]
    CyclicEvent { id: AnnId },
    #[error("{id}: {reason}")]
    CompositionViolation { id: AnnId, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub strict: bool,
}

/// A parsed document together with whatever lenient parsing repaired.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub document: Document,
    pub violations: Vec<Violation>,
}

struct TextBound {
    id: AnnId,
    type_name: String,
    span: Span,
    surface: String,
}

fn malformed(file: &'static str, line: usize, reason: impl Into<String>) -> StandoffError {
    StandoffError::MalformedLine {
        file,
        line,
        reason: reason.into(),
    }
}

/// Lines that carry no entity/trigger/event information for this model.
fn is_ignored_line(line: &str) -> bool {
    matches!(line.chars().next(), Some('*' | 'M' | 'A' | 'N' | '#'))
}

fn parse_text_bound(
    file: &'static str,
    lineno: usize,
    line: &str,
    text: &str,
) -> Result<TextBound, StandoffError> {
    let mut fields = line.splitn(3, '\t');
    let id = fields.next().unwrap_or_default();
    let header = fields
        .next()
        .ok_or_else(|| malformed(file, lineno, "missing type and offsets"))?;
    let surface = fields
        .next()
        .ok_or_else(|| malformed(file, lineno, "missing surface text"))?;
    if header.contains(';') {
        return Err(malformed(file, lineno, "discontinuous spans are not supported"));
    }
    let parts: Vec<&str> = header.split(' ').collect();
    let [type_name, start, end] = parts.as_slice() else {
        return Err(malformed(
            file,
            lineno,
            format!("expected `type start end`, got {header:?}"),
        ));
    };
    let start: usize = start
        .parse()
        .map_err(|_| malformed(file, lineno, format!("bad start offset {start:?}")))?;
    let end: usize = end
        .parse()
        .map_err(|_| malformed(file, lineno, format!("bad end offset {end:?}")))?;
    let id = AnnId::new(id);
    let span = Span::new(start, end);
    if span.is_empty() {
        return Err(malformed(file, lineno, format!("empty span {span}")));
    }
    let found = char_slice(text, span).ok_or_else(|| StandoffError::SpanMismatch {
        id: id.clone(),
        span,
        expected: surface.to_string(),
        found: String::new(),
    })?;
    if found != surface {
        return Err(StandoffError::SpanMismatch {
            id,
            span,
            expected: surface.to_string(),
            found: found.to_string(),
        });
    }
    Ok(TextBound {
        id,
        type_name: type_name.to_string(),
        span,
        surface: surface.to_string(),
    })
}

struct RawEvent {
    id: AnnId,
    type_name: String,
    trigger: AnnId,
    arguments: Vec<(String, AnnId)>,
}

fn parse_event_line(lineno: usize, line: &str) -> Result<RawEvent, StandoffError> {
    let (id, body) = line
        .split_once('\t')
        .ok_or_else(|| malformed("a2", lineno, "missing tab after event id"))?;
    let mut items = body.split_whitespace();
    let head = items
        .next()
        .ok_or_else(|| malformed("a2", lineno, "missing event type"))?;
    let (type_name, trigger) = head
        .split_once(':')
        .ok_or_else(|| malformed("a2", lineno, format!("expected `Type:Trigger`, got {head:?}")))?;
    let mut arguments = Vec::new();
    for item in items {
        let (role, filler) = item
            .split_once(':')
            .ok_or_else(|| malformed("a2", lineno, format!("expected `Role:Id`, got {item:?}")))?;
        if role.is_empty() || filler.is_empty() {
            return Err(malformed(
                "a2",
                lineno,
                format!("empty role or filler in {item:?}"),
            ));
        }
        arguments.push((role.to_string(), AnnId::new(filler)));
    }
    if trigger.is_empty() {
        return Err(malformed("a2", lineno, "empty trigger id"));
    }
    Ok(RawEvent {
        id: AnnId::new(id),
        type_name: type_name.to_string(),
        trigger: AnnId::new(trigger),
        arguments,
    })
}

/// Parses one document leniently. Repairs are logged at warn level.
pub fn parse_document(
    doc_id: &str,
    txt: &str,
    a1: &str,
    a2: Option<&str>,
) -> Result<Document, StandoffError> {
    let parsed = parse_with(doc_id, txt, a1, a2, ParseOptions::default())?;
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

pub fn parse_with(
    doc_id: &str,
    txt: &str,
    a1: &str,
    a2: Option<&str>,
    opts: ParseOptions,
) -> Result<Parsed, StandoffError> {
    let mut doc = Document::new(doc_id, txt);
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();

    for (i, line) in a1.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || is_ignored_line(line) {
            continue;
        }
        if !line.starts_with('T') {
            return Err(malformed("a1", i + 1, "expected a text-bound (T) annotation"));
        }
        let tb = parse_text_bound("a1", i + 1, line, txt)?;
        if !seen.insert(tb.id.clone()) {
            return Err(malformed("a1", i + 1, format!("duplicate id {}", tb.id)));
        }
        doc.entities.insert(
            tb.id.clone(),
            Entity {
                id: tb.id,
                entity_type: tb.type_name,
                span: tb.span,
                surface: tb.surface,
            },
        );
    }

    // Text-bound annotations in the .a2 whose type is not an event type
    // (e.g. `Entity` sites). They are only referenced by unsupported roles.
    let mut auxiliary = BTreeSet::new();
    let mut raw_events = Vec::new();
    for (i, line) in a2.unwrap_or_default().lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || is_ignored_line(line) {
            continue;
        }
        match line.chars().next() {
            Some('T') => {
                let tb = parse_text_bound("a2", i + 1, line, txt)?;
                if !seen.insert(tb.id.clone()) {
                    return Err(malformed("a2", i + 1, format!("duplicate id {}", tb.id)));
                }
                match tb.type_name.parse::<EventType>() {
                    Ok(event_type) => {
                        doc.triggers.insert(
                            tb.id.clone(),
                            Trigger {
                                id: tb.id,
                                event_type,
                                span: tb.span,
                                surface: tb.surface,
                            },
                        );
                    }
                    Err(_) => {
                        auxiliary.insert(tb.id);
                    }
                }
            }
            Some('E') => {
                let raw = parse_event_line(i + 1, line)?;
                if !seen.insert(raw.id.clone()) {
                    return Err(malformed("a2", i + 1, format!("duplicate id {}", raw.id)));
                }
                raw_events.push(raw);
            }
            _ => return Err(malformed("a2", i + 1, "unrecognized annotation line")),
        }
    }

    let event_ids: BTreeSet<AnnId> = raw_events.iter().map(|e| e.id.clone()).collect();
    for raw in raw_events {
        let reject = |detail: &str| -> Result<(), StandoffError> {
            if opts.strict {
                Err(StandoffError::CompositionViolation {
                    id: raw.id.clone(),
                    reason: detail.to_string(),
                })
            } else {
                Ok(())
            }
        };
        let Ok(event_type) = raw.type_name.parse::<EventType>() else {
            let detail = format!("event type {} is not modeled", raw.type_name);
            reject(&detail)?;
            violations.push(Violation::new(&raw.id, ViolationKind::UnsupportedType, detail));
            continue;
        };
        if !doc.triggers.contains_key(&raw.trigger) {
            if auxiliary.contains(&raw.trigger) {
                let detail = format!("trigger {} has an unmodeled type", raw.trigger);
                reject(&detail)?;
                violations.push(Violation::new(&raw.id, ViolationKind::UnsupportedType, detail));
                continue;
            }
            return Err(StandoffError::DanglingReference {
                id: raw.id.clone(),
                target: raw.trigger.clone(),
            });
        }
        let mut arguments = Vec::new();
        for (role_name, filler) in raw.arguments {
            if !doc.entities.contains_key(&filler)
                && !event_ids.contains(&filler)
                && !auxiliary.contains(&filler)
            {
                return Err(StandoffError::DanglingReference {
                    id: raw.id.clone(),
                    target: filler,
                });
            }
            match Role::parse_standoff(&role_name) {
                Some(role) if !auxiliary.contains(&filler) => arguments.push(Argument { role, filler }),
                _ => {
                    let detail = format!("dropped unsupported argument {role_name}:{filler}");
                    reject(&detail)?;
                    violations.push(Violation::new(&raw.id, ViolationKind::UnsupportedRole, detail));
                }
            }
        }
        let mut event = Event {
            id: raw.id.clone(),
            event_type,
            trigger: raw.trigger,
            arguments,
        };
        event.normalize_argument_order();
        doc.events.insert(raw.id, event);
    }

    // Events dropped above can leave references behind.
    drop_dependents(&mut doc, &mut violations, opts)?;

    if let Some(id) = find_cycle(&doc) {
        return Err(StandoffError::CyclicEvent { id });
    }

    loop {
        let mut offending = Vec::new();
        for event in doc.events.values() {
            for v in event_violations(&doc, event) {
                if opts.strict {
                    return Err(StandoffError::CompositionViolation {
                        id: v.id,
                        reason: v.detail,
                    });
                }
                offending.push(v);
            }
        }
        if offending.is_empty() {
            break;
        }
        for v in offending {
            doc.events.remove(&v.id);
            violations.push(v);
        }
        drop_dependents(&mut doc, &mut violations, opts)?;
    }

    Ok(Parsed {
        document: doc,
        violations,
    })
}

fn drop_dependents(
    doc: &mut Document,
    violations: &mut Vec<Violation>,
    opts: ParseOptions,
) -> Result<(), StandoffError> {
    loop {
        let orphaned: Vec<(AnnId, AnnId)> = doc
            .events
            .values()
            .filter_map(|e| {
                e.arguments
                    .iter()
                    .find(|a| doc.filler_kind(&a.filler).is_none())
                    .map(|a| (e.id.clone(), a.filler.clone()))
            })
            .collect();
        if orphaned.is_empty() {
            return Ok(());
        }
        for (id, target) in orphaned {
            if opts.strict {
                return Err(StandoffError::DanglingReference { id, target });
            }
            doc.events.remove(&id);
            violations.push(Violation::new(
                &id,
                ViolationKind::DependsOnDropped,
                format!("argument {target} was dropped"),
            ));
        }
    }
}

/// Composition and reference problems of a single event.
pub(crate) fn event_violations(doc: &Document, event: &Event) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(trigger) = doc.triggers.get(&event.trigger) else {
        out.push(Violation::new(
            &event.id,
            ViolationKind::DanglingReference,
            format!("unknown trigger {}", event.trigger),
        ));
        return out;
    };
    if trigger.event_type != event.event_type {
        out.push(Violation::new(
            &event.id,
            ViolationKind::TypeMismatch,
            format!(
                "event type {} differs from trigger type {}",
                event.event_type, trigger.event_type
            ),
        ));
    }
    let comp = event.event_type.composition();
    for role in [Role::Theme, Role::Cause] {
        let count = event.fillers(role).count();
        if !comp.arity(role).admits(count) {
            out.push(Violation::new(
                &event.id,
                ViolationKind::CompositionViolation,
                format!(
                    "{} takes {:?} {} argument(s), found {}",
                    event.event_type,
                    comp.arity(role),
                    role,
                    count
                ),
            ));
        }
    }
    for arg in &event.arguments {
        match doc.filler_kind(&arg.filler) {
            None => out.push(Violation::new(
                &event.id,
                ViolationKind::DanglingReference,
                format!("unknown filler {}", arg.filler),
            )),
            Some(FillerKind::Event) if !comp.filler(arg.role).admits_event() => out.push(Violation::new(
                &event.id,
                ViolationKind::CompositionViolation,
                format!(
                    "{} {} must be an entity, found event {}",
                    event.event_type, arg.role, arg.filler
                ),
            )),
            _ => {}
        }
    }
    out
}

/// Returns an event on a cycle of the event-reference graph, if any.
fn find_cycle(doc: &Document) -> Option<AnnId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<&AnnId, Mark> = BTreeMap::new();
    for root in doc.events.keys() {
        if marks.contains_key(root) {
            continue;
        }
        // Iterative DFS: (node, next child index).
        let mut stack: Vec<(&AnnId, usize)> = vec![(root, 0)];
        marks.insert(root, Mark::Open);
        while let Some((node, idx)) = stack.pop() {
            let children: Vec<&AnnId> = doc.events[node]
                .arguments
                .iter()
                .map(|a| &a.filler)
                .filter(|f| doc.events.contains_key(*f))
                .collect();
            if idx < children.len() {
                stack.push((node, idx + 1));
                let child = children[idx];
                match marks.get(child) {
                    Some(Mark::Open) => return Some(child.clone()),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(child, Mark::Open);
                        stack.push((child, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
            }
        }
    }
    None
}

/// Checks every document invariant. Empty iff the document is valid.
pub fn validate(doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();
    let len = doc.char_len();
    let text_bound = doc
        .entities
        .values()
        .map(|e| (&e.id, e.span, &e.surface))
        .chain(doc.triggers.values().map(|t| (&t.id, t.span, &t.surface)));
    for (id, span, surface) in text_bound {
        if span.is_empty() || span.end > len {
            out.push(Violation::new(
                id,
                ViolationKind::InvalidSpan,
                format!("span {span} outside text of length {len}"),
            ));
        } else if doc.slice(span) != Some(surface.as_str()) {
            out.push(Violation::new(
                id,
                ViolationKind::SpanMismatch,
                format!("surface {surface:?} differs from text at {span}"),
            ));
        }
    }
    for id in doc.triggers.keys() {
        if doc.entities.contains_key(id) {
            out.push(Violation::new(
                id,
                ViolationKind::DuplicateId,
                "id used by entity and trigger",
            ));
        }
    }
    for (key, event) in &doc.events {
        if key != &event.id {
            out.push(Violation::new(
                key,
                ViolationKind::DuplicateId,
                "map key differs from event id",
            ));
        }
        out.extend(event_violations(doc, event));
    }
    if let Some(id) = find_cycle(doc) {
        out.push(Violation::new(
            &id,
            ViolationKind::CyclicEvent,
            "event graph contains a cycle",
        ));
    }
    out
}

fn text_bound_line(id: &AnnId, type_name: &str, span: Span, surface: &str) -> String {
    format!("{id}\t{type_name} {} {}\t{surface}\n", span.start, span.end)
}

/// Entity lines in id order.
pub fn serialize_a1(doc: &Document) -> String {
    doc.entities
        .values()
        .map(|e| text_bound_line(&e.id, &e.entity_type, e.span, &e.surface))
        .collect()
}

/// Trigger lines then event lines, each in id order. Roles are written
/// Theme-first with shared-task numbering (`Theme`, `Theme2`, ...).
pub fn serialize_a2(doc: &Document) -> String {
    let mut out = String::new();
    for t in doc.triggers.values() {
        out.push_str(&text_bound_line(&t.id, t.event_type.name(), t.span, &t.surface));
    }
    for e in doc.events.values() {
        out.push_str(&format!("{}\t{}:{}", e.id, e.event_type.name(), e.trigger));
        for role in [Role::Theme, Role::Cause] {
            for (i, filler) in e.fillers(role).enumerate() {
                if i == 0 {
                    out.push_str(&format!(" {role}:{filler}"));
                } else {
                    out.push_str(&format!(" {role}{}:{filler}", i + 1));
                }
            }
        }
        out.push('\n');
    }
    out
}
