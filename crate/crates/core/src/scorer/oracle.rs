use std::collections::{BTreeSet, HashMap};

use super::{CandidateDistribution, RoleDistribution, Scorer, ScorerError};
use crate::instances::{
    gold_role, project_triggers, Anchor, AnchorKind, BioLabel, CandidateLabel, FillerRef, MarkedInstance,
    RoleLabel, RolePair, TaggingInstance, TriggerMark,
};
use crate::standoff::{AnnId, Document, EventType, Span};

/// Answers from gold annotations. Instances are resolved through the
/// character spans in their provenance, so predicted annotation ids never
/// need to agree with gold ids.
#[derive(Debug, Clone, Default)]
pub struct OracleScorer {
    gold: HashMap<String, Document>,
}

impl OracleScorer {
    pub fn new(gold: impl IntoIterator<Item = Document>) -> Self {
        OracleScorer {
            gold: gold.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
        }
    }

    fn doc(&self, doc_id: &str) -> Option<&Document> {
        let doc = self.gold.get(doc_id);
        if doc.is_none() {
            log::debug!("unknown instance doc={doc_id}");
        }
        doc
    }

    pub fn gold_tags(&self, instance: &TaggingInstance) -> Vec<BioLabel> {
        let Some(doc) = self.doc(&instance.doc_id) else {
            return vec![BioLabel::O; instance.offsets.len()];
        };
        let (Some(first), Some(last)) = (instance.offsets.first(), instance.offsets.last()) else {
            return Vec::new();
        };
        let range = Span::new(first.start, last.end);
        let marks = doc
            .triggers
            .values()
            .filter(|t| range.contains(&t.span))
            .map(|t| TriggerMark {
                id: &t.id,
                event_type: t.event_type,
                span: t.span,
            });
        project_triggers(&doc.doc_id, &instance.offsets, &instance.masked, marks).0
    }

    /// Gold role, or `None` when the trigger or filler is not gold.
    pub fn gold_role(&self, instance: &MarkedInstance) -> Option<RoleLabel> {
        let doc = self.doc(&instance.doc_id)?;
        let filler = instance.provenance.participants.first()?;
        let triggers = triggers_at(doc, instance.provenance.trigger.span);
        let fillers = fillers_at(doc, filler);
        if triggers.is_empty() || fillers.is_empty() {
            log::debug!("unknown instance doc={} id={}", instance.doc_id, instance.id);
            return None;
        }
        let mut best = RoleLabel::None;
        for trigger in &triggers {
            for filler in &fillers {
                let pair = RolePair {
                    trigger: trigger.clone(),
                    filler: filler.clone(),
                };
                best = best.min(gold_role(doc, &pair));
            }
        }
        Some(best)
    }

    /// Gold validity, or `None` when the trigger is not gold.
    pub fn gold_candidate(&self, instance: &MarkedInstance) -> Option<CandidateLabel> {
        let doc = self.doc(&instance.doc_id)?;
        let triggers = triggers_at(doc, instance.provenance.trigger.span);
        if triggers.is_empty() {
            log::debug!("unknown instance doc={} id={}", instance.doc_id, instance.id);
            return None;
        }
        let participating: BTreeSet<Span> = instance.provenance.participants.iter().map(|a| a.span).collect();
        let valid = triggers.iter().any(|t| {
            doc.events_on_trigger(t)
                .filter(|e| e.event_type == EventType::Binding)
                .any(|e| {
                    let themes: BTreeSet<Span> = e
                        .themes()
                        .filter_map(|id| doc.entities.get(id).map(|en| en.span))
                        .collect();
                    themes == participating
                })
        });
        Some(if valid {
            CandidateLabel::Valid
        } else {
            CandidateLabel::Invalid
        })
    }
}

fn triggers_at(doc: &Document, span: Span) -> Vec<AnnId> {
    doc.triggers
        .values()
        .filter(|t| t.span == span)
        .map(|t| t.id.clone())
        .collect()
}

fn fillers_at(doc: &Document, anchor: &Anchor) -> Vec<FillerRef> {
    match anchor.kind {
        AnchorKind::Entity => doc
            .entities
            .values()
            .filter(|e| e.span == anchor.span)
            .map(|e| FillerRef::Entity(e.id.clone()))
            .collect(),
        AnchorKind::Trigger => triggers_at(doc, anchor.span)
            .into_iter()
            .map(FillerRef::Trigger)
            .collect(),
    }
}

impl Scorer for OracleScorer {
    fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError> {
        Ok(instances.iter().map(|i| self.gold_tags(i)).collect())
    }

    fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError> {
        Ok(instances
            .iter()
            .map(|i| {
                self.gold_role(i)
                    .map_or_else(RoleDistribution::uniform, RoleDistribution::one_hot)
            })
            .collect())
    }

    fn classify_candidates(
        &self,
        instances: &[MarkedInstance],
    ) -> Result<Vec<CandidateDistribution>, ScorerError> {
        Ok(instances
            .iter()
            .map(|i| {
                self.gold_candidate(i)
                    .map_or_else(CandidateDistribution::uniform, CandidateDistribution::one_hot)
            })
            .collect())
    }
}
