//! Event assembly from triggers and role assignments.
//!
//! Rule-based construction:
//! - a trigger without Themes yields nothing;
//! - a simple trigger yields one event per Theme;
//! - a Binding trigger with one Theme yields one event, with more Themes one
//!   event per unordered pair;
//! - a nested trigger yields one event per Theme, or per (Theme, Cause) pair
//!   when Causes are present. A trigger-valued filler stands for every event
//!   already built on that trigger, so triggers are processed bottom-up.
//!
//! Automatic construction replaces the Binding rule by classifying every
//! nonempty subset of the trigger's Themes as a valid or invalid event.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_sentences, Sentence};
use crate::instances::{
    anchor, render_marked, sentence_of, Anchor, CandidateLabel, InstanceError, InstanceKind, InstanceLabel,
    Mark, MarkedInstance, Provenance, ARGUMENT_MARK, NON_PARTICIPANT_MARK, TRIGGER_MARK,
};
use crate::scorer::{Scorer, ScorerError};
use crate::standoff::{AnnId, Argument, Category, Document, Event, EventType, Role, Trigger};

/// Largest Theme count for which Binding candidates are enumerated.
pub const CANDIDATE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub trigger: AnnId,
    /// An entity id or a trigger id.
    pub filler: AnnId,
    pub role: Role,
}

impl RoleAssignment {
    pub fn new(trigger: impl Into<AnnId>, filler: impl Into<AnnId>, role: Role) -> Self {
        RoleAssignment {
            trigger: trigger.into(),
            filler: filler.into(),
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingCandidate {
    pub trigger: AnnId,
    pub participating: Vec<AnnId>,
    pub non_participating: Vec<AnnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<CandidateLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Rule,
    Auto,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rule => "rule",
            Mode::Auto => "auto",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Mode::Rule),
            "auto" => Ok(Mode::Auto),
            _ => Err(format!("unknown construction mode `{s}` (expected rule or auto)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("trigger {trigger} has {count} Theme arguments, more than the candidate cap of {cap}")]
    TooManyArguments {
        trigger: AnnId,
        count: usize,
        cap: usize,
    },
    #[error("automatic construction requires a scorer")]
    MissingScorer,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// An event before it receives an id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDraft {
    pub event_type: EventType,
    pub trigger: AnnId,
    pub arguments: Vec<Argument>,
}

impl EventDraft {
    pub fn into_event(self, id: AnnId) -> Event {
        let mut event = Event {
            id,
            event_type: self.event_type,
            trigger: self.trigger,
            arguments: self.arguments,
        };
        event.normalize_argument_order();
        event
    }
}

/// Argument filler ids for one role, with trigger-valued fillers expanded
/// to the events built on that trigger.
fn expand_fillers(
    doc: &Document,
    trigger: &Trigger,
    assignments: &[&RoleAssignment],
    role: Role,
    built: &BTreeMap<AnnId, Vec<AnnId>>,
) -> Vec<AnnId> {
    let composition = trigger.event_type.composition();
    let mut out = Vec::new();
    let fillers: BTreeSet<&AnnId> = assignments
        .iter()
        .filter(|a| a.role == role)
        .map(|a| &a.filler)
        .collect();
    if !fillers.is_empty() && composition.arity(role) == crate::standoff::Arity::None {
        log::warn!(
            "assignment dropped doc={} trigger={} role={} reason=role not admitted by {}",
            doc.doc_id,
            trigger.id,
            role,
            trigger.event_type
        );
        return out;
    }
    for filler in fillers {
        if doc.entities.contains_key(filler) {
            out.push(filler.clone());
        } else if doc.triggers.contains_key(filler) {
            if !composition.filler(role).admits_event() {
                log::warn!(
                    "assignment dropped doc={} trigger={} filler={} reason=event filler not admitted by {}",
                    doc.doc_id,
                    trigger.id,
                    filler,
                    trigger.event_type
                );
                continue;
            }
            match built.get(filler) {
                Some(events) if !events.is_empty() => out.extend(events.iter().cloned()),
                _ => log::warn!(
                    "missing subevent doc={} trigger={} filler={} dropped",
                    doc.doc_id,
                    trigger.id,
                    filler
                ),
            }
        } else {
            log::warn!(
                "assignment dropped doc={} trigger={} filler={} reason=unknown filler",
                doc.doc_id,
                trigger.id,
                filler
            );
        }
    }
    out
}

/// Applies the construction rules to one trigger. `built` maps trigger ids
/// to the ids of events already constructed on them.
pub fn construct_rule(
    doc: &Document,
    trigger: &Trigger,
    assignments: &[&RoleAssignment],
    built: &BTreeMap<AnnId, Vec<AnnId>>,
) -> Vec<EventDraft> {
    let themes = expand_fillers(doc, trigger, assignments, Role::Theme, built);
    let causes = expand_fillers(doc, trigger, assignments, Role::Cause, built);
    let draft = |arguments: Vec<Argument>| EventDraft {
        event_type: trigger.event_type,
        trigger: trigger.id.clone(),
        arguments,
    };
    if themes.is_empty() {
        return Vec::new();
    }
    match trigger.event_type.category() {
        Category::Simple => themes
            .into_iter()
            .map(|t| draft(vec![Argument::new(Role::Theme, t)]))
            .collect(),
        Category::Multiple => {
            if themes.len() == 1 {
                return vec![draft(vec![Argument::new(Role::Theme, themes[0].clone())])];
            }
            themes
                .iter()
                .tuple_combinations()
                .map(|(a, b)| {
                    draft(vec![
                        Argument::new(Role::Theme, a.clone()),
                        Argument::new(Role::Theme, b.clone()),
                    ])
                })
                .collect()
        }
        Category::Nested => {
            if causes.is_empty() {
                return themes
                    .into_iter()
                    .map(|t| draft(vec![Argument::new(Role::Theme, t)]))
                    .collect();
            }
            themes
                .iter()
                .cartesian_product(&causes)
                .map(|(t, c)| {
                    draft(vec![
                        Argument::new(Role::Theme, t.clone()),
                        Argument::new(Role::Cause, c.clone()),
                    ])
                })
                .collect()
        }
    }
}

/// Every nonempty subset of `themes`, by size and then lexicographically.
pub fn enumerate_binding_candidates(
    trigger: &AnnId,
    themes: &[AnnId],
) -> Result<Vec<BindingCandidate>, ConstructionError> {
    let themes: Vec<&AnnId> = themes.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if themes.len() > CANDIDATE_CAP {
        return Err(ConstructionError::TooManyArguments {
            trigger: trigger.clone(),
            count: themes.len(),
            cap: CANDIDATE_CAP,
        });
    }
    let mut out = Vec::with_capacity((1usize << themes.len()) - 1);
    for k in 1..=themes.len() {
        for subset in themes.iter().combinations(k) {
            let participating: Vec<AnnId> = subset.iter().map(|id| (**id).clone()).collect();
            let non_participating = themes
                .iter()
                .filter(|id| !participating.contains(id))
                .map(|id| (*id).clone())
                .collect();
            out.push(BindingCandidate {
                trigger: trigger.clone(),
                participating,
                non_participating,
                label: None,
            });
        }
    }
    Ok(out)
}

/// A candidate is valid when a gold Binding event on its trigger has
/// exactly its participating set as Themes.
pub fn label_candidates(gold: &Document, candidates: &mut [BindingCandidate]) {
    for candidate in candidates {
        let participating: BTreeSet<&AnnId> = candidate.participating.iter().collect();
        let valid = gold
            .events_on_trigger(&candidate.trigger)
            .filter(|e| e.event_type == EventType::Binding)
            .any(|e| e.themes().collect::<BTreeSet<_>>() == participating);
        candidate.label = Some(if valid {
            CandidateLabel::Valid
        } else {
            CandidateLabel::Invalid
        });
    }
}

/// `# trigger #`, `@ gene @` for participating and `$ gene $` for the
/// remaining Themes; other entities are plain masks.
pub fn make_binding_instance(
    doc: &Document,
    sentence: &Sentence,
    candidate: &BindingCandidate,
) -> Result<MarkedInstance, InstanceError> {
    let trigger = anchor(doc, &candidate.trigger)?;
    let participants: Vec<Anchor> = candidate
        .participating
        .iter()
        .map(|id| anchor(doc, id))
        .collect::<Result<_, _>>()?;
    let non_participants: Vec<Anchor> = candidate
        .non_participating
        .iter()
        .map(|id| anchor(doc, id))
        .collect::<Result<_, _>>()?;
    let mut marks = vec![Mark {
        anchor: &trigger,
        symbol: TRIGGER_MARK,
    }];
    marks.extend(participants.iter().map(|a| Mark {
        anchor: a,
        symbol: ARGUMENT_MARK,
    }));
    marks.extend(non_participants.iter().map(|a| Mark {
        anchor: a,
        symbol: NON_PARTICIPANT_MARK,
    }));
    let (tokens, markers) = render_marked(doc, sentence, &marks)?;
    Ok(MarkedInstance {
        id: format!(
            "{}:bind:{}:{}",
            doc.doc_id,
            candidate.trigger,
            candidate.participating.iter().join("+")
        ),
        kind: InstanceKind::Binding,
        doc_id: doc.doc_id.clone(),
        tokens,
        markers,
        label: candidate.label.map(InstanceLabel::Candidate),
        provenance: Provenance {
            trigger,
            participants,
            non_participants,
        },
    })
}

fn binding_event(trigger: &AnnId, themes: &[AnnId]) -> EventDraft {
    EventDraft {
        event_type: EventType::Binding,
        trigger: trigger.clone(),
        arguments: themes
            .iter()
            .map(|t| Argument::new(Role::Theme, t.clone()))
            .collect(),
    }
}

/// Candidates and their instances for one Binding trigger, or `None` when
/// the trigger must fall back to the pairing rule.
fn binding_setup(
    doc: &Document,
    sentences: &[Sentence],
    trigger: &AnnId,
    themes: &[AnnId],
) -> Option<(Vec<BindingCandidate>, Vec<MarkedInstance>)> {
    let candidates = match enumerate_binding_candidates(trigger, themes) {
        Ok(c) => c,
        Err(err) => {
            log::warn!(
                "rule fallback doc={} trigger={} reason={:?}",
                doc.doc_id,
                trigger,
                err.to_string()
            );
            return None;
        }
    };
    let sentence = sentence_of(doc, sentences, trigger)?;
    let instances: Result<Vec<_>, _> = candidates
        .iter()
        .map(|c| make_binding_instance(doc, sentence, c))
        .collect();
    match instances {
        Ok(instances) => Some((candidates, instances)),
        Err(err) => {
            log::warn!(
                "rule fallback doc={} trigger={} reason={:?}",
                doc.doc_id,
                trigger,
                err.to_string()
            );
            None
        }
    }
}

/// One Binding event per candidate the scorer judges valid.
pub fn construct_binding_auto(
    doc: &Document,
    sentence: &Sentence,
    trigger: &AnnId,
    themes: &[AnnId],
    scorer: &dyn Scorer,
) -> Result<Vec<EventDraft>, ConstructionError> {
    let candidates = enumerate_binding_candidates(trigger, themes)?;
    let instances: Vec<MarkedInstance> = candidates
        .iter()
        .map(|c| make_binding_instance(doc, sentence, c))
        .collect::<Result<_, _>>()?;
    let decisions = scorer.classify_candidates(&instances)?;
    Ok(candidates
        .iter()
        .zip(decisions)
        .filter(|(_, d)| d.decide() == CandidateLabel::Valid)
        .map(|(c, _)| binding_event(trigger, &c.participating))
        .collect())
}

/// Role assignments implied by a document's events. Event-valued fillers
/// become their trigger ids.
pub fn gold_assignments(doc: &Document) -> Vec<RoleAssignment> {
    let mut out = BTreeSet::new();
    for event in doc.events.values() {
        for arg in &event.arguments {
            let filler = match doc.events.get(&arg.filler) {
                Some(sub) => sub.trigger.clone(),
                None => arg.filler.clone(),
            };
            out.insert(RoleAssignment::new(event.trigger.clone(), filler, arg.role));
        }
    }
    out.into_iter().collect()
}

/// Entity Themes assigned to `trigger`, in id order.
fn entity_themes(doc: &Document, assignments: &[&RoleAssignment]) -> Vec<AnnId> {
    assignments
        .iter()
        .filter(|a| a.role == Role::Theme && doc.entities.contains_key(&a.filler))
        .map(|a| a.filler.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Binding candidate instances for every Binding trigger with Themes.
/// With `gold`, candidates are labeled from the document's events.
pub fn make_candidate_instances(
    doc: &Document,
    sentences: &[Sentence],
    assignments: &[RoleAssignment],
    gold: bool,
) -> Vec<MarkedInstance> {
    let by_trigger = group_by_trigger(doc, assignments);
    let mut out = Vec::new();
    for trigger in doc
        .triggers
        .values()
        .filter(|t| t.event_type == EventType::Binding)
    {
        let themes = entity_themes(doc, by_trigger.get(&trigger.id).map_or(&[][..], |v| v));
        if themes.is_empty() {
            continue;
        }
        let Ok(mut candidates) = enumerate_binding_candidates(&trigger.id, &themes) else {
            log::warn!(
                "candidates skipped doc={} trigger={} reason=too many arguments",
                doc.doc_id,
                trigger.id
            );
            continue;
        };
        if gold {
            label_candidates(doc, &mut candidates);
        }
        let Some(sentence) = sentence_of(doc, sentences, &trigger.id) else {
            continue;
        };
        for c in &candidates {
            match make_binding_instance(doc, sentence, c) {
                Ok(inst) => out.push(inst),
                Err(err) => {
                    log::warn!(
                        "candidate skipped doc={} reason={:?}",
                        doc.doc_id,
                        err.to_string()
                    );
                }
            }
        }
    }
    out
}

fn group_by_trigger<'a>(
    doc: &Document,
    assignments: &'a [RoleAssignment],
) -> BTreeMap<AnnId, Vec<&'a RoleAssignment>> {
    let mut by_trigger: BTreeMap<AnnId, Vec<&RoleAssignment>> = BTreeMap::new();
    for a in assignments {
        if doc.triggers.contains_key(&a.trigger) {
            by_trigger.entry(a.trigger.clone()).or_default().push(a);
        } else {
            log::warn!(
                "assignment dropped doc={} trigger={} reason=unknown trigger",
                doc.doc_id,
                a.trigger
            );
        }
    }
    for list in by_trigger.values_mut() {
        list.sort();
        list.dedup();
    }
    by_trigger
}

/// Trigger-to-trigger dependency edges, with cycles broken by repeatedly
/// dropping the greatest (trigger, filler) edge on a cycle.
fn dependency_edges(
    doc: &Document,
    by_trigger: &BTreeMap<AnnId, Vec<&RoleAssignment>>,
) -> BTreeSet<(AnnId, AnnId)> {
    let mut edges: BTreeSet<(AnnId, AnnId)> = by_trigger
        .values()
        .flatten()
        .filter(|a| doc.triggers.contains_key(&a.filler))
        .map(|a| (a.trigger.clone(), a.filler.clone()))
        .collect();
    while let Some(cycle) = find_cycle(&edges) {
        let worst = cycle.into_iter().max().expect("cycle has edges");
        log::warn!("cycle broken doc={} dropped={}->{}", doc.doc_id, worst.0, worst.1);
        edges.remove(&worst);
    }
    edges
}

/// Edges of some cycle, found by depth-first search in id order.
fn find_cycle(edges: &BTreeSet<(AnnId, AnnId)>) -> Option<Vec<(AnnId, AnnId)>> {
    let mut adjacency: BTreeMap<&AnnId, Vec<&AnnId>> = BTreeMap::new();
    for (a, b) in edges {
        adjacency.entry(a).or_default().push(b);
    }
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Open,
        Done,
    }
    fn visit<'a>(
        node: &'a AnnId,
        adjacency: &BTreeMap<&'a AnnId, Vec<&'a AnnId>>,
        state: &mut BTreeMap<&'a AnnId, State>,
        path: &mut Vec<&'a AnnId>,
    ) -> Option<Vec<(AnnId, AnnId)>> {
        state.insert(node, State::Open);
        path.push(node);
        for &next in adjacency.get(node).map_or(&[][..], |v| v) {
            match state.get(next) {
                Some(State::Open) => {
                    let start = path.iter().position(|n| *n == next).expect("open node on path");
                    let mut cycle: Vec<(AnnId, AnnId)> = path[start..]
                        .windows(2)
                        .map(|w| (w[0].clone(), w[1].clone()))
                        .collect();
                    cycle.push((node.clone(), next.clone()));
                    return Some(cycle);
                }
                Some(State::Done) => {}
                None => {
                    if let Some(c) = visit(next, adjacency, state, path) {
                        return Some(c);
                    }
                }
            }
        }
        path.pop();
        state.insert(node, State::Done);
        None
    }
    let mut state = BTreeMap::new();
    for &node in adjacency.keys() {
        if !state.contains_key(node) {
            if let Some(c) = visit(node, &adjacency, &mut state, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Triggers ordered so that every trigger follows the triggers it depends
/// on; ties are broken by id.
fn topological_order(doc: &Document, edges: &BTreeSet<(AnnId, AnnId)>) -> Vec<AnnId> {
    let mut pending: BTreeMap<&AnnId, usize> = doc.triggers.keys().map(|k| (k, 0)).collect();
    let mut dependents: BTreeMap<&AnnId, Vec<&AnnId>> = BTreeMap::new();
    for (from, to) in edges {
        *pending.get_mut(from).expect("known trigger") += 1;
        dependents.entry(to).or_default().push(from);
    }
    let mut ready: BTreeSet<&AnnId> = pending
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut order = Vec::with_capacity(pending.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.clone());
        for dep in dependents.get(next).map_or(&[][..], |v| v) {
            let n = pending.get_mut(dep).expect("known trigger");
            *n -= 1;
            if *n == 0 {
                ready.insert(dep);
            }
        }
    }
    order
}

/// Rule-based construction over a whole document.
pub fn construct_document_rule(doc: &Document, assignments: &[RoleAssignment]) -> Vec<Event> {
    construct_document(doc, assignments, Mode::Rule, None).expect("rule mode does not fail")
}

/// Builds all events of a document. In auto mode Binding triggers go
/// through candidate classification and every other type uses the rules;
/// nested events refer to whichever Binding events were produced. Event ids
/// are `E1`, `E2`, ... in construction order.
pub fn construct_document(
    doc: &Document,
    assignments: &[RoleAssignment],
    mode: Mode,
    scorer: Option<&dyn Scorer>,
) -> Result<Vec<Event>, ConstructionError> {
    let by_trigger = group_by_trigger(doc, assignments);
    let edges = dependency_edges(doc, &by_trigger);
    let allowed = |a: &&&RoleAssignment| {
        !doc.triggers.contains_key(&a.filler) || edges.contains(&(a.trigger.clone(), a.filler.clone()))
    };
    let assigned = |id: &AnnId| -> Vec<&RoleAssignment> {
        by_trigger
            .get(id)
            .map(|v| v.iter().filter(allowed).copied().collect())
            .unwrap_or_default()
    };

    // Binding triggers only take entity Themes, so all candidate decisions
    // for the document can be made in one batch.
    let mut auto_binding: BTreeMap<AnnId, Vec<EventDraft>> = BTreeMap::new();
    if mode == Mode::Auto {
        let scorer = scorer.ok_or(ConstructionError::MissingScorer)?;
        let sentences = split_sentences(doc);
        let mut pending: Vec<(AnnId, Vec<BindingCandidate>)> = Vec::new();
        let mut instances = Vec::new();
        for trigger in doc
            .triggers
            .values()
            .filter(|t| t.event_type == EventType::Binding)
        {
            let themes = entity_themes(doc, &assigned(&trigger.id));
            if themes.is_empty() {
                continue;
            }
            if let Some((candidates, batch)) = binding_setup(doc, &sentences, &trigger.id, &themes) {
                instances.extend(batch);
                pending.push((trigger.id.clone(), candidates));
            }
        }
        let mut decisions = scorer.classify_candidates(&instances)?.into_iter();
        for (trigger, candidates) in pending {
            let events = candidates
                .iter()
                .filter(|_| {
                    decisions.next().expect("one decision per candidate").decide() == CandidateLabel::Valid
                })
                .map(|c| binding_event(&trigger, &c.participating))
                .collect();
            auto_binding.insert(trigger, events);
        }
    }

    let mut built: BTreeMap<AnnId, Vec<AnnId>> = BTreeMap::new();
    let mut events = Vec::new();
    for trigger_id in topological_order(doc, &edges) {
        let trigger = &doc.triggers[&trigger_id];
        let drafts = match auto_binding.remove(&trigger_id) {
            Some(drafts) => drafts,
            None => construct_rule(doc, trigger, &assigned(&trigger_id), &built),
        };
        let ids: Vec<AnnId> = drafts
            .into_iter()
            .map(|d| {
                let id = AnnId::new(format!("E{}", events.len() + 1));
                events.push(d.into_event(id.clone()));
                id
            })
            .collect();
        built.insert(trigger_id, ids);
    }
    Ok(events)
}

/// A copy of `doc` whose events are replaced by `events`.
pub fn with_events(doc: &Document, events: Vec<Event>) -> Document {
    let mut out = doc.clone();
    out.events = events.into_iter().map(|e| (e.id.clone(), e)).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::BioLabel;
    use crate::instances::TaggingInstance;
    use crate::scorer::{CandidateDistribution, OracleScorer, RoleDistribution};
    use crate::standoff::{parse_document, validate};

    const COORD_TXT: &str = "Sp1 and Sp3 bind A3G.";
    const COORD_A1: &str = "T1\tProtein 0 3\tSp1\nT2\tProtein 8 11\tSp3\nT3\tProtein 17 20\tA3G\n";
    const COORD_A2: &str =
        "T4\tBinding 12 16\tbind\nE1\tBinding:T4 Theme:T1 Theme2:T3\nE2\tBinding:T4 Theme:T2 Theme2:T3\n";

    fn coord() -> Document {
        parse_document("coord", COORD_TXT, COORD_A1, Some(COORD_A2)).unwrap()
    }

    fn theme_sets(events: &[Event]) -> BTreeSet<Vec<String>> {
        events
            .iter()
            .map(|e| e.themes().map(|t| t.to_string()).collect())
            .collect()
    }

    fn set(items: &[&[&str]]) -> BTreeSet<Vec<String>> {
        items
            .iter()
            .map(|s| s.iter().map(|x| x.to_string()).collect())
            .collect()
    }

    #[test]
    fn coord_rule_pairs_every_theme() {
        let doc = coord();
        let events = construct_document_rule(&doc, &gold_assignments(&doc));
        assert_eq!(
            theme_sets(&events),
            set(&[&["T1", "T2"], &["T1", "T3"], &["T2", "T3"]])
        );
    }

    #[test]
    fn coord_auto_with_oracle_matches_gold() {
        let doc = coord();
        let oracle = OracleScorer::new([doc.clone()]);
        let events = construct_document(&doc, &gold_assignments(&doc), Mode::Auto, Some(&oracle)).unwrap();
        assert_eq!(theme_sets(&events), set(&[&["T1", "T3"], &["T2", "T3"]]));
    }

    #[test]
    fn isolated_trigger_yields_nothing() {
        let doc = coord();
        assert!(construct_document_rule(&doc, &[]).is_empty());
    }

    #[test]
    fn nested_theme_cause_cross_product() {
        let text = "A and B are induced by C.";
        let a1 = "T1\tProtein 0 1\tA\nT2\tProtein 6 7\tB\nT3\tProtein 23 24\tC\n";
        let a2 = "T4\tPositive_regulation 12 19\tinduced\n";
        let doc = parse_document("n", text, a1, Some(a2)).unwrap();
        let assignments = vec![
            RoleAssignment::new("T4", "T1", Role::Theme),
            RoleAssignment::new("T4", "T2", Role::Theme),
            RoleAssignment::new("T4", "T3", Role::Cause),
        ];
        let events = construct_document_rule(&doc, &assignments);
        assert_eq!(events.len(), 2);
        for e in &events {
            assert_eq!(e.causes().collect::<Vec<_>>(), vec![&AnnId::from("T3")]);
        }
    }

    #[test]
    fn nested_events_are_built_bottom_up() {
        let text = "CD28 induces IL-2 expression.";
        let a1 = "T1\tProtein 0 4\tCD28\nT2\tProtein 13 17\tIL-2\n";
        let a2 = "T3\tPositive_regulation 5 12\tinduces\nT4\tGene_expression 18 28\texpression\n";
        let doc = parse_document("n", text, a1, Some(a2)).unwrap();
        let assignments = vec![
            RoleAssignment::new("T3", "T4", Role::Theme),
            RoleAssignment::new("T3", "T1", Role::Cause),
            RoleAssignment::new("T4", "T2", Role::Theme),
        ];
        let events = construct_document_rule(&doc, &assignments);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].id.as_str(), "E1");
        assert_eq!(events[0].event_type, EventType::GeneExpression);
        assert_eq!(events[1].themes().next().unwrap().as_str(), "E1");
        let mut reversed = assignments.clone();
        reversed.reverse();
        assert_eq!(construct_document_rule(&doc, &reversed), events);
        assert!(validate(&with_events(&doc, events)).is_empty());
    }

    #[test]
    fn cycles_drop_the_greatest_edge() {
        let text = "A regulates B which regulates A.";
        let a1 = "T1\tProtein 0 1\tA\nT2\tProtein 12 13\tB\n";
        let a2 = "T3\tRegulation 2 11\tregulates\nT4\tRegulation 20 29\tregulates\n";
        let doc = parse_document("c", text, a1, Some(a2)).unwrap();
        let assignments = vec![
            RoleAssignment::new("T3", "T4", Role::Theme),
            RoleAssignment::new("T4", "T3", Role::Theme),
            RoleAssignment::new("T4", "T2", Role::Theme),
        ];
        let events = construct_document_rule(&doc, &assignments);
        // (T4, T3) is dropped: T4 regulates B, T3 regulates that event.
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].trigger.as_str(), "T4");
        assert_eq!(events[0].themes().next().unwrap().as_str(), "T2");
        assert_eq!(events[1].trigger.as_str(), "T3");
        assert_eq!(events[1].themes().next().unwrap().as_str(), "E1");
        assert!(validate(&with_events(&doc, events)).is_empty());
    }

    #[test]
    fn missing_subevent_filler_is_dropped() {
        let text = "CD28 induces IL-2 expression.";
        let a1 = "T1\tProtein 0 4\tCD28\n";
        let a2 = "T3\tPositive_regulation 5 12\tinduces\nT4\tGene_expression 18 28\texpression\n";
        let doc = parse_document("n", text, a1, Some(a2)).unwrap();
        let assignments = vec![
            RoleAssignment::new("T3", "T4", Role::Theme),
            RoleAssignment::new("T3", "T1", Role::Cause),
        ];
        assert!(construct_document_rule(&doc, &assignments).is_empty());
    }

    /// Reference enumeration by bitmask.
    fn subsets_by_mask(n: usize) -> BTreeSet<Vec<usize>> {
        (1u32..(1 << n))
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    #[test]
    fn candidates_are_all_nonempty_subsets() {
        for n in [1usize, 3, 5] {
            let themes: Vec<AnnId> = (1..=n).map(|i| AnnId::new(format!("T{i}"))).collect();
            let candidates = enumerate_binding_candidates(&"T99".into(), &themes).unwrap();
            assert_eq!(candidates.len(), (1 << n) - 1);
            let got: BTreeSet<Vec<usize>> = candidates
                .iter()
                .map(|c| {
                    assert_eq!(c.participating.len() + c.non_participating.len(), n);
                    c.participating
                        .iter()
                        .map(|id| themes.iter().position(|t| t == id).unwrap())
                        .collect()
                })
                .collect();
            assert_eq!(got, subsets_by_mask(n));
            assert!(candidates
                .windows(2)
                .all(|w| w[0].participating.len() <= w[1].participating.len()));
        }
    }

    #[test]
    fn candidate_order_is_size_then_lexicographic() {
        let themes: Vec<AnnId> = ["T10", "T2", "T3"].iter().map(|s| AnnId::from(*s)).collect();
        let candidates = enumerate_binding_candidates(&"T1".into(), &themes).unwrap();
        let got: Vec<String> = candidates
            .iter()
            .map(|c| c.participating.iter().join("+"))
            .collect();
        assert_eq!(got, ["T2", "T3", "T10", "T2+T3", "T2+T10", "T3+T10", "T2+T3+T10"]);
    }

    #[test]
    fn too_many_arguments_is_an_error() {
        let themes: Vec<AnnId> = (1..=13).map(|i| AnnId::new(format!("T{i}"))).collect();
        assert!(matches!(
            enumerate_binding_candidates(&"T99".into(), &themes),
            Err(ConstructionError::TooManyArguments { count: 13, .. })
        ));
    }

    #[test]
    fn three_theme_candidates_have_two_positives() {
        let doc = coord();
        let themes: Vec<AnnId> = ["T1", "T2", "T3"].iter().map(|s| AnnId::from(*s)).collect();
        let mut candidates = enumerate_binding_candidates(&"T4".into(), &themes).unwrap();
        label_candidates(&doc, &mut candidates);
        assert_eq!(candidates.len(), 7);
        let valid: Vec<String> = candidates
            .iter()
            .filter(|c| c.label == Some(CandidateLabel::Valid))
            .map(|c| c.participating.iter().join("+"))
            .collect();
        assert_eq!(valid, ["T1+T3", "T2+T3"]);
    }

    #[test]
    fn binding_instance_markers() {
        let doc = coord();
        let sentences = split_sentences(&doc);
        let candidate = BindingCandidate {
            trigger: "T4".into(),
            participating: vec!["T1".into(), "T3".into()],
            non_participating: vec!["T2".into()],
            label: None,
        };
        let inst = make_binding_instance(&doc, &sentences[0], &candidate).unwrap();
        assert_eq!(inst.tokens.join(" "), "@ gene @ and $ gene $ # bind # @ gene @ .");

        let all = BindingCandidate {
            trigger: "T4".into(),
            participating: vec!["T1".into(), "T2".into(), "T3".into()],
            non_participating: vec![],
            label: None,
        };
        let inst = make_binding_instance(&doc, &sentences[0], &all).unwrap();
        assert_eq!((inst.count("#"), inst.count("@"), inst.count("$")), (2, 6, 0));
    }

    struct RejectAll;

    impl Scorer for RejectAll {
        fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError> {
            Ok(instances
                .iter()
                .map(|i| vec![BioLabel::O; i.tokens.len()])
                .collect())
        }

        fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError> {
            Ok(vec![RoleDistribution::uniform(); instances.len()])
        }

        fn classify_candidates(
            &self,
            instances: &[MarkedInstance],
        ) -> Result<Vec<CandidateDistribution>, ScorerError> {
            Ok(vec![
                CandidateDistribution::one_hot(CandidateLabel::Invalid);
                instances.len()
            ])
        }
    }

    #[test]
    fn rejecting_scorer_builds_no_binding_events() {
        let doc = coord();
        let sentences = split_sentences(&doc);
        let themes: Vec<AnnId> = ["T1", "T2", "T3"].iter().map(|s| AnnId::from(*s)).collect();
        let out = construct_binding_auto(&doc, &sentences[0], &"T4".into(), &themes, &RejectAll).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn auto_mode_requires_a_scorer() {
        let doc = coord();
        assert!(matches!(
            construct_document(&doc, &gold_assignments(&doc), Mode::Auto, None),
            Err(ConstructionError::MissingScorer)
        ));
    }
}
