//! Classifier inputs: BIO-tagged sentences for trigger identification and
//! `#`/`@`-marked pair instances for argument role recognition.
//!
//! Entities are masked with the token `gene`; a multi-token entity becomes
//! a single mask. Triggers keep their surface text.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::standoff::{AnnId, Document, EventType, Role, Span};

pub const MASK: &str = "gene";
pub const TRIGGER_MARK: &str = "#";
pub const ARGUMENT_MARK: &str = "@";
pub const NON_PARTICIPANT_MARK: &str = "$";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioLabel {
    O,
    B(EventType),
    I(EventType),
}

impl BioLabel {
    pub fn event_type(self) -> Option<EventType> {
        match self {
            BioLabel::O => None,
            BioLabel::B(t) | BioLabel::I(t) => Some(t),
        }
    }

    /// All 27 labels: `O` then `B-`/`I-` for each event type.
    pub fn all() -> Vec<BioLabel> {
        let mut out = vec![BioLabel::O];
        for t in EventType::ALL {
            out.push(BioLabel::B(t));
            out.push(BioLabel::I(t));
        }
        out
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioLabel::O => f.write_str("O"),
            BioLabel::B(t) => write!(f, "B-{}", t.name()),
            BioLabel::I(t) => write!(f, "I-{}", t.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid BIO label `{0}`")]
pub struct BadLabel(pub String);

impl FromStr for BioLabel {
    type Err = BadLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioLabel::O);
        }
        let bad = || BadLabel(s.to_string());
        let (tag, ty) = s.split_once('-').ok_or_else(bad)?;
        let ty: EventType = ty.parse().map_err(|_| bad())?;
        match tag {
            "B" => Ok(BioLabel::B(ty)),
            "I" => Ok(BioLabel::I(ty)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for BioLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("{doc_id}: {first} and {second} overlap and cannot both be marked")]
    OverlapConflict {
        doc_id: String,
        first: AnnId,
        second: AnnId,
    },
    #[error("{doc_id}: annotation {id} lies outside sentence {sentence}")]
    OutsideSentence {
        doc_id: String,
        id: AnnId,
        sentence: usize,
    },
    #[error("{doc_id}: unknown annotation {id}")]
    UnknownAnnotation { doc_id: String, id: AnnId },
    #[error("label sequence has {got} labels for {expected} tokens")]
    LengthMismatch { expected: usize, got: usize },
}

/// One masked sentence for sequence labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingInstance {
    pub id: String,
    pub doc_id: String,
    pub sentence: usize,
    pub tokens: Vec<String>,
    /// Original character span of every token; a mask token maps to the
    /// whole entity.
    pub offsets: Vec<Span>,
    pub masked: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<BioLabel>>,
}

/// A token unit of a sentence after masking.
struct Unit {
    text: String,
    span: Span,
    masked: bool,
}

/// Merged spans of all entities inside `sentence`.
fn entity_regions(doc: &Document, sentence: &Sentence) -> Vec<Span> {
    let mut spans: Vec<Span> = doc
        .entities
        .values()
        .map(|e| e.span)
        .filter(|s| sentence.span.contains(s))
        .collect();
    spans.sort();
    let mut merged: Vec<Span> = Vec::new();
    for s in spans {
        match merged.last_mut() {
            Some(last) if last.overlaps(&s) => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    merged
}

fn masked_units(doc: &Document, sentence: &Sentence) -> Vec<Unit> {
    let regions = entity_regions(doc, sentence);
    let mut units = Vec::new();
    let mut last_region = None;
    for token in &sentence.tokens {
        match regions.iter().position(|r| r.overlaps(&token.span)) {
            Some(r) => {
                if last_region != Some(r) {
                    units.push(Unit {
                        text: MASK.to_string(),
                        span: regions[r],
                        masked: true,
                    });
                    last_region = Some(r);
                }
            }
            None => units.push(Unit {
                text: token.text.clone(),
                span: token.span,
                masked: false,
            }),
        }
    }
    units
}

/// A trigger to be projected onto tokens.
#[derive(Debug, Clone)]
pub struct TriggerMark<'a> {
    pub id: &'a AnnId,
    pub event_type: EventType,
    pub span: Span,
}

/// Projects triggers onto a masked token sequence as BIO labels.
///
/// Overlapping triggers cannot be represented: the longer one is kept
/// (earlier id on ties). Triggers that do not align with token boundaries
/// or touch a mask are dropped. Dropped triggers are returned.
pub fn project_triggers<'a>(
    doc_id: &str,
    offsets: &[Span],
    masked: &[bool],
    triggers: impl IntoIterator<Item = TriggerMark<'a>>,
) -> (Vec<BioLabel>, Vec<AnnId>) {
    let mut triggers: Vec<TriggerMark> = triggers.into_iter().collect();
    triggers.sort_by(|a, b| b.span.len().cmp(&a.span.len()).then_with(|| a.id.cmp(b.id)));
    let mut labels = vec![BioLabel::O; offsets.len()];
    let mut accepted: Vec<Span> = Vec::new();
    let mut dropped = Vec::new();
    for t in triggers {
        if accepted.iter().any(|s| s.overlaps(&t.span)) {
            log::warn!(
                "overlapping trigger dropped doc={} id={} span={}",
                doc_id,
                t.id,
                t.span
            );
            dropped.push(t.id.clone());
            continue;
        }
        let covered: Vec<usize> = (0..offsets.len())
            .filter(|&i| offsets[i].overlaps(&t.span))
            .collect();
        let aligned = !covered.is_empty()
            && offsets[covered[0]].start == t.span.start
            && offsets[*covered.last().unwrap()].end == t.span.end
            && covered.iter().all(|&i| !masked[i]);
        if !aligned {
            log::warn!(
                "unaligned trigger dropped doc={} id={} span={}",
                doc_id,
                t.id,
                t.span
            );
            dropped.push(t.id.clone());
            continue;
        }
        for (k, &i) in covered.iter().enumerate() {
            labels[i] = if k == 0 {
                BioLabel::B(t.event_type)
            } else {
                BioLabel::I(t.event_type)
            };
        }
        accepted.push(t.span);
    }
    (labels, dropped)
}

pub fn tagging_instance(doc: &Document, sentence: &Sentence, gold: bool) -> TaggingInstance {
    let units = masked_units(doc, sentence);
    let offsets: Vec<Span> = units.iter().map(|u| u.span).collect();
    let masked: Vec<bool> = units.iter().map(|u| u.masked).collect();
    let labels = gold.then(|| {
        let marks = doc
            .triggers
            .values()
            .filter(|t| sentence.span.contains(&t.span))
            .map(|t| TriggerMark {
                id: &t.id,
                event_type: t.event_type,
                span: t.span,
            });
        project_triggers(&doc.doc_id, &offsets, &masked, marks).0
    });
    TaggingInstance {
        id: format!("{}:s{}", doc.doc_id, sentence.index),
        doc_id: doc.doc_id.clone(),
        sentence: sentence.index,
        tokens: units.into_iter().map(|u| u.text).collect(),
        offsets,
        masked,
        labels,
    }
}

/// One instance per sentence. With `gold`, labels come from the document's
/// triggers.
pub fn make_tagging_instances(doc: &Document, sentences: &[Sentence], gold: bool) -> Vec<TaggingInstance> {
    sentences.iter().map(|s| tagging_instance(doc, s, gold)).collect()
}

/// A typed trigger span recovered from BIO labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TriggerMention {
    pub event_type: EventType,
    pub span: Span,
}

/// Turns maximal `B I*` runs into trigger spans. An `I-x` that does not
/// continue a run of type `x` starts a new run.
pub fn decode_bio(
    instance: &TaggingInstance,
    predicted: &[BioLabel],
) -> Result<Vec<TriggerMention>, InstanceError> {
    if predicted.len() != instance.offsets.len() {
        return Err(InstanceError::LengthMismatch {
            expected: instance.offsets.len(),
            got: predicted.len(),
        });
    }
    let mut out = Vec::new();
    let mut current: Option<(EventType, Span)> = None;
    for (label, span) in predicted.iter().zip(&instance.offsets) {
        match (*label, current) {
            (BioLabel::I(t), Some((ct, cs))) if t == ct => {
                current = Some((ct, Span::new(cs.start, span.end)));
            }
            (BioLabel::B(t), _) | (BioLabel::I(t), _) => {
                if matches!(label, BioLabel::I(_)) {
                    log::debug!(
                        "orphan I repaired doc={} label={} at={}",
                        instance.doc_id,
                        label,
                        span
                    );
                }
                if let Some((ct, cs)) = current.take() {
                    out.push(TriggerMention {
                        event_type: ct,
                        span: cs,
                    });
                }
                current = Some((t, *span));
            }
            (BioLabel::O, _) => {
                if let Some((ct, cs)) = current.take() {
                    out.push(TriggerMention {
                        event_type: ct,
                        span: cs,
                    });
                }
            }
        }
    }
    if let Some((ct, cs)) = current {
        out.push(TriggerMention {
            event_type: ct,
            span: cs,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum FillerRef {
    Entity(AnnId),
    Trigger(AnnId),
}

impl FillerRef {
    pub fn id(&self) -> &AnnId {
        match self {
            FillerRef::Entity(id) | FillerRef::Trigger(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RolePair {
    pub trigger: AnnId,
    pub filler: FillerRef,
}

/// Trigger/filler pairs within each sentence. Every entity is a candidate;
/// other triggers are candidates only when the subject trigger's type
/// accepts event arguments.
pub fn enumerate_role_pairs(doc: &Document, sentences: &[Sentence]) -> Vec<RolePair> {
    let mut pairs = Vec::new();
    for sentence in sentences {
        let entities: Vec<&AnnId> = doc
            .entities
            .values()
            .filter(|e| sentence.contains(&e.span))
            .map(|e| &e.id)
            .collect();
        let triggers: Vec<_> = doc
            .triggers
            .values()
            .filter(|t| sentence.contains(&t.span))
            .collect();
        for t in &triggers {
            for e in &entities {
                pairs.push(RolePair {
                    trigger: t.id.clone(),
                    filler: FillerRef::Entity((*e).clone()),
                });
            }
            if t.event_type.composition().admits_event_arguments() {
                for other in triggers.iter().filter(|o| o.id != t.id) {
                    pairs.push(RolePair {
                        trigger: t.id.clone(),
                        filler: FillerRef::Trigger(other.id.clone()),
                    });
                }
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleLabel {
    Theme,
    Cause,
    None,
}

impl RoleLabel {
    pub const ALL: [RoleLabel; 3] = [RoleLabel::Theme, RoleLabel::Cause, RoleLabel::None];

    pub fn role(self) -> Option<Role> {
        match self {
            RoleLabel::Theme => Some(Role::Theme),
            RoleLabel::Cause => Some(Role::Cause),
            RoleLabel::None => None,
        }
    }
}

impl From<Role> for RoleLabel {
    fn from(r: Role) -> Self {
        match r {
            Role::Theme => RoleLabel::Theme,
            Role::Cause => RoleLabel::Cause,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateLabel {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceLabel {
    Role(RoleLabel),
    Candidate(CandidateLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Role,
    Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    Entity,
    Trigger,
}

/// An annotation referenced by an instance, with its span so that
/// instances can be matched against gold data without relying on ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub id: AnnId,
    pub kind: AnchorKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub trigger: Anchor,
    /// The `@`-marked annotations.
    pub participants: Vec<Anchor>,
    /// The `$`-marked annotations (Binding candidates only).
    #[serde(default)]
    pub non_participants: Vec<Anchor>,
}

/// Position of an opening and closing marker token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerSpan {
    pub symbol: String,
    pub open: usize,
    pub close: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedInstance {
    pub id: String,
    pub kind: InstanceKind,
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub markers: Vec<MarkerSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<InstanceLabel>,
    pub provenance: Provenance,
}

impl MarkedInstance {
    pub fn count(&self, symbol: &str) -> usize {
        self.tokens.iter().filter(|t| t.as_str() == symbol).count()
    }
}

/// A region of the sentence to wrap in marker symbols.
pub(crate) struct Mark<'a> {
    pub anchor: &'a Anchor,
    pub symbol: &'static str,
}

/// Renders a sentence with entity masks and the given marks. Marks must not
/// overlap each other; an unmasked (trigger) mark must not overlap a mask.
pub(crate) fn render_marked(
    doc: &Document,
    sentence: &Sentence,
    marks: &[Mark],
) -> Result<(Vec<String>, Vec<MarkerSpan>), InstanceError> {
    let conflict = |a: &AnnId, b: &AnnId| InstanceError::OverlapConflict {
        doc_id: doc.doc_id.clone(),
        first: a.clone(),
        second: b.clone(),
    };
    for m in marks {
        if !sentence.span.contains(&m.anchor.span) {
            return Err(InstanceError::OutsideSentence {
                doc_id: doc.doc_id.clone(),
                id: m.anchor.id.clone(),
                sentence: sentence.index,
            });
        }
    }
    for (i, a) in marks.iter().enumerate() {
        for b in &marks[i + 1..] {
            if a.anchor.span.overlaps(&b.anchor.span) {
                return Err(conflict(&a.anchor.id, &b.anchor.id));
            }
        }
    }
    let units = masked_units(doc, sentence);
    let mut opens = vec![Vec::new(); units.len()];
    let mut closes = vec![Vec::new(); units.len()];
    for (k, m) in marks.iter().enumerate() {
        let covered: Vec<usize> = (0..units.len())
            .filter(|&i| units[i].span.overlaps(&m.anchor.span))
            .collect();
        let Some((&first, &last)) = covered.first().zip(covered.last()) else {
            return Err(conflict(&m.anchor.id, &m.anchor.id));
        };
        if m.anchor.kind == AnchorKind::Trigger {
            if let Some(&i) = covered.iter().find(|&&i| units[i].masked) {
                let entity = doc
                    .entities
                    .values()
                    .find(|e| units[i].span.contains(&e.span) && e.span.overlaps(&m.anchor.span))
                    .map(|e| e.id.clone())
                    .unwrap_or_else(|| m.anchor.id.clone());
                return Err(conflict(&m.anchor.id, &entity));
            }
        } else {
            // An entity mark covers its (possibly merged) mask unit; two
            // marks on the same unit would collide.
            for other in &marks[..k] {
                if covered
                    .iter()
                    .any(|&i| units[i].span.overlaps(&other.anchor.span))
                {
                    return Err(conflict(&other.anchor.id, &m.anchor.id));
                }
            }
        }
        opens[first].push(m.symbol);
        closes[last].push(m.symbol);
    }
    let mut tokens = Vec::with_capacity(units.len() + 2 * marks.len());
    let mut open_at: Vec<(&str, usize)> = Vec::new();
    let mut markers = Vec::new();
    for (i, unit) in units.into_iter().enumerate() {
        for &sym in &opens[i] {
            open_at.push((sym, tokens.len()));
            tokens.push(sym.to_string());
        }
        tokens.push(unit.text);
        for &sym in &closes[i] {
            let pos = open_at
                .iter()
                .rposition(|(s, _)| *s == sym)
                .expect("marker opened");
            let (_, open) = open_at.remove(pos);
            markers.push(MarkerSpan {
                symbol: sym.to_string(),
                open,
                close: tokens.len(),
            });
            tokens.push(sym.to_string());
        }
    }
    markers.sort_by_key(|m| m.open);
    Ok((tokens, markers))
}

pub(crate) fn anchor(doc: &Document, id: &AnnId) -> Result<Anchor, InstanceError> {
    if let Some(e) = doc.entities.get(id) {
        Ok(Anchor {
            id: id.clone(),
            kind: AnchorKind::Entity,
            span: e.span,
        })
    } else if let Some(t) = doc.triggers.get(id) {
        Ok(Anchor {
            id: id.clone(),
            kind: AnchorKind::Trigger,
            span: t.span,
        })
    } else {
        Err(InstanceError::UnknownAnnotation {
            doc_id: doc.doc_id.clone(),
            id: id.clone(),
        })
    }
}

/// Sentence with the trigger wrapped in `#` and the candidate argument in
/// `@`. Entities are masked; a trigger-valued argument keeps its text.
pub fn make_role_instance(
    doc: &Document,
    sentence: &Sentence,
    pair: &RolePair,
) -> Result<MarkedInstance, InstanceError> {
    let trigger = anchor(doc, &pair.trigger)?;
    let filler = anchor(doc, pair.filler.id())?;
    let (tokens, markers) = render_marked(
        doc,
        sentence,
        &[
            Mark {
                anchor: &trigger,
                symbol: TRIGGER_MARK,
            },
            Mark {
                anchor: &filler,
                symbol: ARGUMENT_MARK,
            },
        ],
    )?;
    Ok(MarkedInstance {
        id: format!("{}:role:{}:{}", doc.doc_id, trigger.id, filler.id),
        kind: InstanceKind::Role,
        doc_id: doc.doc_id.clone(),
        tokens,
        markers,
        label: None,
        provenance: Provenance {
            trigger,
            participants: vec![filler],
            non_participants: Vec::new(),
        },
    })
}

/// Gold role of each pair from the document's events. An event-valued
/// argument matches a trigger filler when the sub-event sits on that
/// trigger. A pair annotated with both roles is reported and kept as Theme.
pub fn gold_role_labels(doc: &Document, pairs: &[RolePair]) -> Vec<RoleLabel> {
    pairs.iter().map(|pair| gold_role(doc, pair)).collect()
}

pub(crate) fn gold_roles(doc: &Document, pair: &RolePair) -> BTreeSet<Role> {
    let mut roles = BTreeSet::new();
    for event in doc.events_on_trigger(&pair.trigger) {
        for arg in &event.arguments {
            let hit = match &pair.filler {
                FillerRef::Entity(id) => &arg.filler == id,
                FillerRef::Trigger(id) => doc.events.get(&arg.filler).is_some_and(|sub| &sub.trigger == id),
            };
            if hit {
                roles.insert(arg.role);
            }
        }
    }
    roles
}

pub(crate) fn gold_role(doc: &Document, pair: &RolePair) -> RoleLabel {
    let roles = gold_roles(doc, pair);
    if roles.len() > 1 {
        log::warn!(
            "conflicting roles doc={} trigger={} filler={} kept=Theme",
            doc.doc_id,
            pair.trigger,
            pair.filler.id()
        );
    }
    roles.into_iter().next().map_or(RoleLabel::None, RoleLabel::from)
}

/// Role instances for every enumerated pair, skipping pairs that cannot be
/// rendered (logged). With `gold`, labels are attached.
pub fn make_role_instances(doc: &Document, sentences: &[Sentence], gold: bool) -> Vec<MarkedInstance> {
    let pairs = enumerate_role_pairs(doc, sentences);
    let labels = gold.then(|| gold_role_labels(doc, &pairs));
    let mut out = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let Some(sentence) = sentence_of(doc, sentences, &pair.trigger) else {
            continue;
        };
        match make_role_instance(doc, sentence, pair) {
            Ok(mut inst) => {
                inst.label = labels.as_ref().map(|l| InstanceLabel::Role(l[i]));
                out.push(inst);
            }
            Err(err) => log::warn!(
                "role instance skipped doc={} reason={:?}",
                doc.doc_id,
                err.to_string()
            ),
        }
    }
    out
}

pub(crate) fn sentence_of<'a>(doc: &Document, sentences: &'a [Sentence], id: &AnnId) -> Option<&'a Sentence> {
    let span = doc.text_bound_span(id)?;
    sentences.iter().find(|s| s.contains(&span))
}
