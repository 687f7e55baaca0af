use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CandidateDistribution, OracleScorer, RoleDistribution, Scorer, ScorerError};
use crate::instances::{BioLabel, CandidateLabel, MarkedInstance, RoleLabel, TaggingInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub seed: u64,
    #[serde(default)]
    pub flip_rate_trigger: f64,
    #[serde(default)]
    pub flip_rate_role: f64,
    #[serde(default)]
    pub flip_rate_candidate: f64,
}

impl NoiseConfig {
    pub fn new(seed: u64) -> Self {
        NoiseConfig {
            seed,
            flip_rate_trigger: 0.0,
            flip_rate_role: 0.0,
            flip_rate_candidate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, rate) in [
            ("flip_rate_trigger", self.flip_rate_trigger),
            ("flip_rate_role", self.flip_rate_role),
            ("flip_rate_candidate", self.flip_rate_candidate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        Ok(())
    }
}

/// The oracle with each decision independently replaced by a uniformly
/// chosen wrong label. Randomness is derived from the seed and the
/// instance's provenance only, so results do not depend on batching or
/// call order.
#[derive(Debug, Clone)]
pub struct NoisyScorer {
    oracle: OracleScorer,
    config: NoiseConfig,
}

impl NoisyScorer {
    pub fn new(oracle: OracleScorer, config: NoiseConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(NoisyScorer { oracle, config })
    }

    fn rng(&self, stage: &str, key: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update(stage.as_bytes());
        hasher.update([0]);
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

fn tagging_key(instance: &TaggingInstance) -> String {
    let spans: Vec<String> = instance.offsets.iter().map(|s| s.to_string()).collect();
    format!("{}|{}", instance.doc_id, spans.join(","))
}

fn marked_key(instance: &MarkedInstance) -> String {
    let p = &instance.provenance;
    let list = |anchors: &[crate::instances::Anchor]| {
        anchors
            .iter()
            .map(|a| format!("{:?}{}", a.kind, a.span))
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        "{}|{}|{}|{}",
        instance.doc_id,
        p.trigger.span,
        list(&p.participants),
        list(&p.non_participants)
    )
}

/// A label drawn uniformly from `space` minus `exclude`.
fn wrong_label<T: Copy + PartialEq>(rng: &mut ChaCha8Rng, space: &[T], exclude: T) -> T {
    let others: Vec<T> = space.iter().copied().filter(|l| *l != exclude).collect();
    others[rng.random_range(0..others.len())]
}

impl Scorer for NoisyScorer {
    fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError> {
        let space = BioLabel::all();
        Ok(instances
            .iter()
            .map(|inst| {
                let mut rng = self.rng("tag", &tagging_key(inst));
                self.oracle
                    .gold_tags(inst)
                    .into_iter()
                    .map(|label| {
                        if rng.random_bool(self.config.flip_rate_trigger) {
                            wrong_label(&mut rng, &space, label)
                        } else {
                            label
                        }
                    })
                    .collect()
            })
            .collect())
    }

    fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError> {
        let clean = self.oracle.classify_roles(instances)?;
        Ok(instances
            .iter()
            .zip(clean)
            .map(|(inst, dist)| {
                let mut rng = self.rng("role", &marked_key(inst));
                if rng.random_bool(self.config.flip_rate_role) {
                    RoleDistribution::one_hot(wrong_label(&mut rng, &RoleLabel::ALL, dist.decide()))
                } else {
                    dist
                }
            })
            .collect())
    }

    fn classify_candidates(
        &self,
        instances: &[MarkedInstance],
    ) -> Result<Vec<CandidateDistribution>, ScorerError> {
        let clean = self.oracle.classify_candidates(instances)?;
        let space = [CandidateLabel::Valid, CandidateLabel::Invalid];
        Ok(instances
            .iter()
            .zip(clean)
            .map(|(inst, dist)| {
                let mut rng = self.rng("candidate", &marked_key(inst));
                if rng.random_bool(self.config.flip_rate_candidate) {
                    CandidateDistribution::one_hot(wrong_label(&mut rng, &space, dist.decide()))
                } else {
                    dist
                }
            })
            .collect())
    }
}
