//! Scoring predicted events against gold annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construction::RoleAssignment;
use crate::corpus::document_tokens;
use crate::standoff::{AnnId, Category, Document, Event, EventType, Role, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingRegime {
    #[default]
    Strict,
    #[serde(alias = "approx")]
    Approximate,
}

impl fmt::Display for MatchingRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchingRegime::Strict => "strict",
            MatchingRegime::Approximate => "approximate",
        })
    }
}

impl FromStr for MatchingRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(MatchingRegime::Strict),
            "approx" | "approximate" => Ok(MatchingRegime::Approximate),
            _ => Err(format!("unknown regime `{s}` (expected strict or approx)")),
        }
    }
}

/// Notes printed with every report.
pub const REPORT_NOTES: [&str; 3] = [
    "approximate span: the prediction must overlap the gold span and lie within it extended by one token on each side",
    "approximate recursive: an event argument matches when the sub-event agrees on type, trigger and Theme set; its Cause is ignored",
    "events are matched greedily in id order, not by optimal assignment",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("document sets differ: only in gold {only_gold:?}, only in predictions {only_pred:?}")]
    DocIdMismatch {
        only_gold: Vec<String>,
        only_pred: Vec<String>,
    },
}

/// Token boundaries of a document, used to extend spans by one token.
#[derive(Debug, Clone)]
pub struct SpanMatcher {
    tokens: Vec<Span>,
}

impl SpanMatcher {
    pub fn new(doc: &Document) -> Self {
        SpanMatcher {
            tokens: document_tokens(doc).into_iter().map(|t| t.span).collect(),
        }
    }

    pub fn from_tokens(tokens: Vec<Span>) -> Self {
        SpanMatcher { tokens }
    }

    /// `gold` widened to include the nearest token on either side.
    pub fn extend(&self, gold: Span) -> Span {
        let start = self
            .tokens
            .iter()
            .rev()
            .find(|t| t.end <= gold.start)
            .map_or(gold.start, |t| t.start);
        let end = self
            .tokens
            .iter()
            .find(|t| t.start >= gold.end)
            .map_or(gold.end, |t| t.end);
        Span::new(start, end)
    }

    pub fn matches(&self, pred: Span, gold: Span, regime: MatchingRegime) -> bool {
        match regime {
            MatchingRegime::Strict => pred == gold,
            MatchingRegime::Approximate => pred.overlaps(&gold) && self.extend(gold).contains(&pred),
        }
    }
}

pub fn match_span(matcher: &SpanMatcher, pred: Span, gold: Span, regime: MatchingRegime) -> bool {
    matcher.matches(pred, gold, regime)
}

/// Event matching between a predicted and a gold document over the same
/// text.
pub struct EventMatcher<'a> {
    pub pred: &'a Document,
    pub gold: &'a Document,
    pub spans: SpanMatcher,
    pub regime: MatchingRegime,
}

impl<'a> EventMatcher<'a> {
    pub fn new(pred: &'a Document, gold: &'a Document, regime: MatchingRegime) -> Self {
        EventMatcher {
            pred,
            gold,
            spans: SpanMatcher::new(gold),
            regime,
        }
    }

    fn trigger_span(doc: &Document, event: &Event) -> Option<Span> {
        doc.triggers.get(&event.trigger).map(|t| t.span)
    }

    fn head_matches(&self, pred: &Event, gold: &Event) -> bool {
        pred.event_type == gold.event_type
            && match (
                Self::trigger_span(self.pred, pred),
                Self::trigger_span(self.gold, gold),
            ) {
                (Some(p), Some(g)) => self.spans.matches(p, g, self.regime),
                _ => false,
            }
    }

    fn filler_matches(&self, pred: &AnnId, gold: &AnnId, depth: usize, full: bool) -> bool {
        if let (Some(p), Some(g)) = (self.pred.entities.get(pred), self.gold.entities.get(gold)) {
            return self.spans.matches(p.span, g.span, self.regime);
        }
        match (self.pred.events.get(pred), self.gold.events.get(gold)) {
            (Some(p), Some(g)) if depth < 64 => {
                if full {
                    self.events_match(p, g, depth + 1)
                } else {
                    self.sub_event_matches(p, g, depth + 1)
                }
            }
            _ => false,
        }
    }

    /// Whether the arguments with `roles` can be paired one-to-one.
    fn arguments_match(&self, pred: &Event, gold: &Event, roles: &[Role], depth: usize, full: bool) -> bool {
        let p: Vec<(Role, &AnnId)> = pred
            .arguments
            .iter()
            .filter(|a| roles.contains(&a.role))
            .map(|a| (a.role, &a.filler))
            .collect();
        let g: Vec<(Role, &AnnId)> = gold
            .arguments
            .iter()
            .filter(|a| roles.contains(&a.role))
            .map(|a| (a.role, &a.filler))
            .collect();
        if p.len() != g.len() {
            return false;
        }
        let compatible: Vec<Vec<bool>> = p
            .iter()
            .map(|(pr, pf)| {
                g.iter()
                    .map(|(gr, gf)| pr == gr && self.filler_matches(pf, gf, depth, full))
                    .collect()
            })
            .collect();
        perfect_matching(&compatible)
    }

    /// Match used for event-valued arguments under the approximate regime:
    /// type, trigger and Themes only.
    fn sub_event_matches(&self, pred: &Event, gold: &Event, depth: usize) -> bool {
        self.head_matches(pred, gold) && self.arguments_match(pred, gold, &[Role::Theme], depth, false)
    }

    fn events_match(&self, pred: &Event, gold: &Event, depth: usize) -> bool {
        let full = self.regime == MatchingRegime::Strict;
        self.head_matches(pred, gold)
            && self.arguments_match(pred, gold, &[Role::Theme, Role::Cause], depth, full)
    }

    pub fn matches(&self, pred: &Event, gold: &Event) -> bool {
        self.events_match(pred, gold, 0)
    }
}

/// Whether a bipartite compatibility matrix has a perfect matching.
fn perfect_matching(compatible: &[Vec<bool>]) -> bool {
    fn assign(row: usize, compatible: &[Vec<bool>], used: &mut Vec<bool>) -> bool {
        if row == compatible.len() {
            return true;
        }
        for col in 0..used.len() {
            if compatible[row][col] && !used[col] {
                used[col] = true;
                if assign(row + 1, compatible, used) {
                    return true;
                }
                used[col] = false;
            }
        }
        false
    }
    let cols = compatible.first().map_or(0, |r| r.len());
    assign(0, compatible, &mut vec![false; cols])
}

pub fn match_event(
    pred_doc: &Document,
    pred: &Event,
    gold_doc: &Document,
    gold: &Event,
    regime: MatchingRegime,
) -> bool {
    EventMatcher::new(pred_doc, gold_doc, regime).matches(pred, gold)
}

/// Outcome of greedy matching within one document.
#[derive(Debug, Clone, Default)]
pub struct DocumentMatch {
    /// Predicted event id to the gold event it matched.
    pub matched: BTreeMap<AnnId, AnnId>,
    pub false_positives: Vec<AnnId>,
    pub false_negatives: Vec<AnnId>,
}

/// Each prediction, in id order, takes the first unmatched gold event
/// (in id order) that it matches.
pub fn match_document(gold: &Document, pred: &Document, regime: MatchingRegime) -> DocumentMatch {
    let matcher = EventMatcher::new(pred, gold, regime);
    let mut taken: BTreeSet<&AnnId> = BTreeSet::new();
    let mut out = DocumentMatch::default();
    for p in pred.events.values() {
        let hit = gold
            .events
            .values()
            .find(|g| !taken.contains(&g.id) && matcher.matches(p, g));
        match hit {
            Some(g) => {
                taken.insert(&g.id);
                out.matched.insert(p.id.clone(), g.id.clone());
            }
            None => out.false_positives.push(p.id.clone()),
        }
    }
    out.false_negatives = gold
        .events
        .keys()
        .filter(|id| !taken.contains(id))
        .cloned()
        .collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn scores(&self) -> Scores {
        Scores {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

/// Percentage, zero when the denominator is zero.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub regime: MatchingRegime,
    pub notes: Vec<String>,
    pub documents: usize,
    pub per_type: BTreeMap<EventType, Scores>,
    pub simple_total: Scores,
    pub binding: Scores,
    pub nested_total: Scores,
    pub overall: Scores,
}

impl EvalReport {
    fn from_counts(regime: MatchingRegime, documents: usize, per_type: &BTreeMap<EventType, Counts>) -> Self {
        let total = |pred: &dyn Fn(EventType) -> bool| {
            let mut c = Counts::default();
            for (t, counts) in per_type {
                if pred(*t) {
                    c.add(*counts);
                }
            }
            c.scores()
        };
        EvalReport {
            regime,
            notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
            documents,
            per_type: per_type.iter().map(|(t, c)| (*t, c.scores())).collect(),
            simple_total: total(&|t| t.category() == Category::Simple),
            binding: total(&|t| t == EventType::Binding),
            nested_total: total(&|t| t.category() == Category::Nested),
            overall: total(&|_| true),
        }
    }

    pub fn get(&self, t: EventType) -> Scores {
        self.per_type[&t]
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("# regime: {}\n", self.regime);
        for note in &self.notes {
            out.push_str(&format!("# {note}\n"));
        }
        out.push_str(&format!(
            "{:<22} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}\n",
            "type", "tp", "fp", "fn", "P", "R", "F1"
        ));
        let row = |name: &str, s: &Scores| {
            format!(
                "{:<22} {:>6} {:>6} {:>6} {:>8.2} {:>8.2} {:>8.2}\n",
                name, s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
            )
        };
        for (t, s) in &self.per_type {
            out.push_str(&row(t.name(), s));
        }
        out.push_str(&row("[simple total]", &self.simple_total));
        out.push_str(&row("[nested total]", &self.nested_total));
        out.push_str(&row("[all]", &self.overall));
        out
    }
}

fn check_alignment(gold: &[Document], pred: &[Document]) -> Result<(), EvalError> {
    let g: BTreeSet<&str> = gold.iter().map(|d| d.doc_id.as_str()).collect();
    let p: BTreeSet<&str> = pred.iter().map(|d| d.doc_id.as_str()).collect();
    if g != p {
        return Err(EvalError::DocIdMismatch {
            only_gold: g.difference(&p).map(|s| s.to_string()).collect(),
            only_pred: p.difference(&g).map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

fn pairs<'a>(gold: &'a [Document], pred: &'a [Document]) -> Vec<(&'a Document, &'a Document)> {
    let by_id: BTreeMap<&str, &Document> = pred.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut out: Vec<_> = gold.iter().map(|g| (g, by_id[g.doc_id.as_str()])).collect();
    out.sort_by(|a, b| a.0.doc_id.cmp(&b.0.doc_id));
    out
}

pub fn evaluate(
    gold: &[Document],
    pred: &[Document],
    regime: MatchingRegime,
) -> Result<EvalReport, EvalError> {
    check_alignment(gold, pred)?;
    let mut per_type: BTreeMap<EventType, Counts> =
        EventType::ALL.iter().map(|t| (*t, Counts::default())).collect();
    for (g, p) in pairs(gold, pred) {
        let m = match_document(g, p, regime);
        for pid in m.matched.keys() {
            per_type.get_mut(&p.events[pid].event_type).unwrap().tp += 1;
        }
        for pid in &m.false_positives {
            per_type.get_mut(&p.events[pid].event_type).unwrap().fp += 1;
        }
        for gid in &m.false_negatives {
            per_type.get_mut(&g.events[gid].event_type).unwrap().fn_ += 1;
        }
    }
    Ok(EvalReport::from_counts(regime, gold.len(), &per_type))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpCause {
    TriggerInduced,
    RoleInduced,
    ConstructionInduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedFp {
    pub doc_id: String,
    pub event: AnnId,
    pub cause: FpCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub count: usize,
    pub share: f64,
}

/// False positives of a nested type whose arguments include a false
/// positive Binding event.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DownstreamFps {
    pub over_binding_fp: usize,
    pub total_fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub regime: MatchingRegime,
    pub binding_fp: usize,
    pub trigger_induced: CategoryCount,
    pub role_induced: CategoryCount,
    pub construction_induced: CategoryCount,
    pub downstream: BTreeMap<EventType, DownstreamFps>,
    pub attributions: Vec<AttributedFp>,
}

impl CascadeReport {
    pub fn count(&self, cause: FpCause) -> usize {
        match cause {
            FpCause::TriggerInduced => self.trigger_induced.count,
            FpCause::RoleInduced => self.role_induced.count,
            FpCause::ConstructionInduced => self.construction_induced.count,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "# regime: {}\n# Binding false positives: {}\n",
            self.regime, self.binding_fp
        );
        out.push_str(&format!("{:<22} {:>6} {:>8}\n", "cause", "count", "share"));
        for (name, c) in [
            ("trigger-induced", &self.trigger_induced),
            ("role-induced", &self.role_induced),
            ("construction-induced", &self.construction_induced),
        ] {
            out.push_str(&format!("{:<22} {:>6} {:>8.2}\n", name, c.count, c.share));
        }
        out.push_str(&format!(
            "{:<22} {:>14} {:>8}\n",
            "type", "over Binding FP", "all FP"
        ));
        for (t, d) in &self.downstream {
            out.push_str(&format!(
                "{:<22} {:>14} {:>8}\n",
                t.name(),
                d.over_binding_fp,
                d.total_fp
            ));
        }
        out
    }
}

/// Attributes every Binding false positive to the earliest stage at fault:
/// - trigger-induced when its trigger matches no gold Binding trigger;
/// - role-induced when a participating filler is not a gold Theme of the
///   matched gold triggers, or when the Themes assigned to the trigger
///   differ from the gold Themes;
/// - construction-induced otherwise.
///
/// `assignments` holds the predicted role assignments per document; when a
/// document has none, the Themes of its predicted Binding events stand in.
pub fn analyze_cascade(
    gold: &[Document],
    pred: &[Document],
    assignments: &BTreeMap<String, Vec<RoleAssignment>>,
    regime: MatchingRegime,
) -> Result<CascadeReport, EvalError> {
    check_alignment(gold, pred)?;
    let mut attributions = Vec::new();
    let mut downstream: BTreeMap<EventType, DownstreamFps> = BTreeMap::new();
    for (g, p) in pairs(gold, pred) {
        let m = match_document(g, p, regime);
        let spans = SpanMatcher::new(g);
        let fps: BTreeSet<&AnnId> = m.false_positives.iter().collect();
        for pid in &m.false_positives {
            let event = &p.events[pid];
            if event.event_type.category() == Category::Nested {
                let d = downstream.entry(event.event_type).or_default();
                d.total_fp += 1;
                let over_binding = event.arguments.iter().any(|a| {
                    fps.contains(&a.filler)
                        && p.events
                            .get(&a.filler)
                            .is_some_and(|e| e.event_type == EventType::Binding)
                });
                if over_binding {
                    d.over_binding_fp += 1;
                }
            }
            if event.event_type != EventType::Binding {
                continue;
            }
            let cause = attribute(g, p, &spans, event, assignments.get(&p.doc_id), regime);
            attributions.push(AttributedFp {
                doc_id: p.doc_id.clone(),
                event: pid.clone(),
                cause,
            });
        }
    }
    let total = attributions.len();
    let category = |cause: FpCause| {
        let count = attributions.iter().filter(|a| a.cause == cause).count();
        CategoryCount {
            count,
            share: ratio(count, total),
        }
    };
    Ok(CascadeReport {
        regime,
        binding_fp: total,
        trigger_induced: category(FpCause::TriggerInduced),
        role_induced: category(FpCause::RoleInduced),
        construction_induced: category(FpCause::ConstructionInduced),
        downstream,
        attributions,
    })
}

fn attribute(
    gold: &Document,
    pred: &Document,
    spans: &SpanMatcher,
    event: &Event,
    assignments: Option<&Vec<RoleAssignment>>,
    regime: MatchingRegime,
) -> FpCause {
    let Some(trigger_span) = pred.triggers.get(&event.trigger).map(|t| t.span) else {
        return FpCause::TriggerInduced;
    };
    let gold_triggers: Vec<&AnnId> = gold
        .triggers
        .values()
        .filter(|t| t.event_type == EventType::Binding && spans.matches(trigger_span, t.span, regime))
        .map(|t| &t.id)
        .collect();
    if gold_triggers.is_empty() {
        return FpCause::TriggerInduced;
    }
    let gold_themes: BTreeSet<Span> = gold_triggers
        .iter()
        .flat_map(|t| gold.events_on_trigger(t))
        .filter(|e| e.event_type == EventType::Binding)
        .flat_map(|e| e.themes())
        .filter_map(|id| gold.entities.get(id).map(|e| e.span))
        .collect();
    let is_gold_theme = |span: Span| gold_themes.iter().any(|g| spans.matches(span, *g, regime));
    let entity_span = |id: &AnnId| pred.entities.get(id).map(|e| e.span);
    let participating_ok = event
        .themes()
        .all(|id| entity_span(id).is_some_and(is_gold_theme));
    if !participating_ok {
        return FpCause::RoleInduced;
    }
    let assigned: BTreeSet<Span> = match assignments {
        Some(list) if !list.is_empty() => list
            .iter()
            .filter(|a| a.trigger == event.trigger && a.role == Role::Theme)
            .filter_map(|a| entity_span(&a.filler))
            .collect(),
        _ => pred
            .events_on_trigger(&event.trigger)
            .flat_map(|e| e.themes())
            .filter_map(entity_span)
            .collect(),
    };
    let covered = gold_themes
        .iter()
        .all(|g| assigned.iter().any(|a| spans.matches(*a, *g, regime)));
    let extra = assigned.iter().any(|a| !is_gold_theme(*a));
    if !covered || extra {
        FpCause::RoleInduced
    } else {
        FpCause::ConstructionInduced
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{construct_document_rule, gold_assignments, with_events};
    use crate::standoff::parse_document;

    fn six_tokens() -> SpanMatcher {
        // "aa bb cc dd ee ff"
        SpanMatcher::from_tokens((0..6).map(|i| Span::new(3 * i, 3 * i + 2)).collect())
    }

    #[test]
    fn span_regimes() {
        let m = six_tokens();
        let gold = Span::new(6, 8);
        assert!(m.matches(gold, gold, MatchingRegime::Strict));
        assert!(m.matches(gold, gold, MatchingRegime::Approximate));
        let with_previous = Span::new(3, 8);
        assert!(m.matches(with_previous, gold, MatchingRegime::Approximate));
        assert!(!m.matches(with_previous, gold, MatchingRegime::Strict));
        assert!(!m.matches(Span::new(0, 2), gold, MatchingRegime::Approximate));
        assert!(!m.matches(Span::new(3, 5), gold, MatchingRegime::Approximate));
    }

    /// Reference rule over token indices: prediction tokens [ps, pe) match
    /// gold tokens [gs, ge) when they overlap and ps >= gs - 1, pe <= ge + 1.
    #[test]
    fn approximate_spans_follow_the_token_rule() {
        let m = six_tokens();
        let span = |s: usize, e: usize| Span::new(3 * s, 3 * (e - 1) + 2);
        for gs in 0..6 {
            for ge in gs + 1..=6 {
                for ps in 0..6 {
                    for pe in ps + 1..=6 {
                        let expected = ps < ge && gs < pe && ps + 1 >= gs && pe <= ge + 1;
                        assert_eq!(
                            m.matches(span(ps, pe), span(gs, ge), MatchingRegime::Approximate),
                            expected,
                            "pred {ps}..{pe} gold {gs}..{ge}"
                        );
                    }
                }
            }
        }
    }

    const COORD_TXT: &str = "Sp1 and Sp3 bind A3G.";
    const COORD_A1: &str = "T1\tProtein 0 3\tSp1\nT2\tProtein 8 11\tSp3\nT3\tProtein 17 20\tA3G\n";
    const COORD_A2: &str =
        "T4\tBinding 12 16\tbind\nE1\tBinding:T4 Theme:T1 Theme2:T3\nE2\tBinding:T4 Theme:T2 Theme2:T3\n";

    #[test]
    fn coord_rule_scores() {
        let gold = parse_document("coord", COORD_TXT, COORD_A1, Some(COORD_A2)).unwrap();
        let pred = with_events(&gold, construct_document_rule(&gold, &gold_assignments(&gold)));
        let report = evaluate(
            std::slice::from_ref(&gold),
            std::slice::from_ref(&pred),
            MatchingRegime::Strict,
        )
        .unwrap();
        let b = report.get(EventType::Binding);
        assert_eq!((b.tp, b.fp, b.fn_), (2, 1, 0));
        assert!((b.precision - 200.0 / 3.0).abs() < 1e-9);
        assert!((b.recall - 100.0).abs() < 1e-9);
        assert!((b.f1 - 80.0).abs() < 1e-9);

        let cascade = analyze_cascade(&[gold], &[pred], &BTreeMap::new(), MatchingRegime::Strict).unwrap();
        assert_eq!(cascade.binding_fp, 1);
        assert_eq!(cascade.construction_induced.count, 1);
    }

    #[test]
    fn identical_predictions_score_perfectly() {
        let gold = parse_document("coord", COORD_TXT, COORD_A1, Some(COORD_A2)).unwrap();
        let report = evaluate(
            std::slice::from_ref(&gold),
            std::slice::from_ref(&gold),
            MatchingRegime::Approximate,
        )
        .unwrap();
        assert_eq!(report.overall.f1, 100.0);
        assert_eq!(report.overall.precision, 100.0);
    }

    #[test]
    fn theme_sets_must_agree() {
        let gold = parse_document(
            "coord",
            COORD_TXT,
            COORD_A1,
            Some("T4\tBinding 12 16\tbind\nE1\tBinding:T4 Theme:T1\n"),
        )
        .unwrap();
        let pred = parse_document(
            "coord",
            COORD_TXT,
            COORD_A1,
            Some("T4\tBinding 12 16\tbind\nE1\tBinding:T4 Theme:T1 Theme2:T2\n"),
        )
        .unwrap();
        for regime in [MatchingRegime::Strict, MatchingRegime::Approximate] {
            assert!(!match_event(
                &pred,
                &pred.events[&AnnId::from("E1")],
                &gold,
                &gold.events[&AnnId::from("E1")],
                regime
            ));
        }
    }

    #[test]
    fn sub_event_cause_only_matters_strictly() {
        let text = "CD28 binds B7 and this is inhibited by CTLA-4 via IL-2.";
        let a1 = "T1\tProtein 0 4\tCD28\nT2\tProtein 11 13\tB7\nT3\tProtein 39 45\tCTLA-4\nT4\tProtein 50 54\tIL-2\n";
        let gold_a2 =
            "T5\tBinding 5 10\tbinds\nT6\tNegative_regulation 26 35\tinhibited\nT7\tRegulation 46 49\tvia\n\
                       E1\tRegulation:T7 Theme:T2 Cause:T4\n\
                       E2\tNegative_regulation:T6 Theme:E1 Cause:T3\n";
        let pred_a2 =
            "T5\tBinding 5 10\tbinds\nT6\tNegative_regulation 26 35\tinhibited\nT7\tRegulation 46 49\tvia\n\
                       E1\tRegulation:T7 Theme:T2\n\
                       E2\tNegative_regulation:T6 Theme:E1 Cause:T3\n";
        let gold = parse_document("n", text, a1, Some(gold_a2)).unwrap();
        let pred = parse_document("n", text, a1, Some(pred_a2)).unwrap();
        let e2 = AnnId::from("E2");
        assert!(match_event(
            &pred,
            &pred.events[&e2],
            &gold,
            &gold.events[&e2],
            MatchingRegime::Approximate
        ));
        assert!(!match_event(
            &pred,
            &pred.events[&e2],
            &gold,
            &gold.events[&e2],
            MatchingRegime::Strict
        ));
    }

    #[test]
    fn mismatched_documents_are_rejected() {
        let a = parse_document("a", "x", "", None).unwrap();
        let b = parse_document("b", "x", "", None).unwrap();
        assert!(matches!(
            evaluate(&[a], &[b], MatchingRegime::Strict),
            Err(EvalError::DocIdMismatch { .. })
        ));
    }

    #[test]
    fn empty_denominators_give_zero() {
        let c = Counts::default();
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
    }
}
