//! The classifier contract. Scorers return probability distributions;
//! decisions are taken by the caller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::{BioLabel, CandidateLabel, MarkedInstance, RoleLabel, TaggingInstance};

mod noisy;
mod oracle;
mod remote;

pub use noisy::{NoiseConfig, NoisyScorer};
pub use oracle::OracleScorer;
pub use remote::{RemoteConfig, RemoteScorer};

/// Tolerance on the sum of a returned distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer at {endpoint} unavailable after {attempts} attempt(s): {reason}")]
    Unavailable {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("scorer protocol violation: {0}")]
    ProtocolViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleDistribution {
    #[serde(rename = "Theme")]
    pub theme: f64,
    #[serde(rename = "Cause")]
    pub cause: f64,
    #[serde(rename = "None")]
    pub none: f64,
}

impl RoleDistribution {
    pub fn one_hot(label: RoleLabel) -> Self {
        let mut d = RoleDistribution {
            theme: 0.0,
            cause: 0.0,
            none: 0.0,
        };
        *d.get_mut(label) = 1.0;
        d
    }

    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        RoleDistribution {
            theme: third,
            cause: third,
            none: third,
        }
    }

    pub fn get(&self, label: RoleLabel) -> f64 {
        match label {
            RoleLabel::Theme => self.theme,
            RoleLabel::Cause => self.cause,
            RoleLabel::None => self.none,
        }
    }

    fn get_mut(&mut self, label: RoleLabel) -> &mut f64 {
        match label {
            RoleLabel::Theme => &mut self.theme,
            RoleLabel::Cause => &mut self.cause,
            RoleLabel::None => &mut self.none,
        }
    }

    /// Most probable label; ties go to None, then Theme, then Cause.
    pub fn decide(&self) -> RoleLabel {
        let mut best = RoleLabel::None;
        for label in [RoleLabel::Theme, RoleLabel::Cause] {
            if self.get(label) > self.get(best) {
                best = label;
            }
        }
        best
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        check_distribution("role", &[self.theme, self.cause, self.none])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateDistribution {
    pub valid: f64,
    pub invalid: f64,
}

impl CandidateDistribution {
    pub fn one_hot(label: CandidateLabel) -> Self {
        match label {
            CandidateLabel::Valid => CandidateDistribution {
                valid: 1.0,
                invalid: 0.0,
            },
            CandidateLabel::Invalid => CandidateDistribution {
                valid: 0.0,
                invalid: 1.0,
            },
        }
    }

    pub fn uniform() -> Self {
        CandidateDistribution {
            valid: 0.5,
            invalid: 0.5,
        }
    }

    /// Valid when the valid-class probability exceeds one half.
    pub fn decide(&self) -> CandidateLabel {
        if self.valid > 0.5 {
            CandidateLabel::Valid
        } else {
            CandidateLabel::Invalid
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        check_distribution("candidate", &[self.valid, self.invalid])
    }
}

fn check_distribution(what: &str, probs: &[f64]) -> Result<(), ScorerError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ScorerError::ProtocolViolation(format!(
            "{what} distribution has a negative or non-finite entry: {probs:?}"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ScorerError::ProtocolViolation(format!(
            "{what} distribution sums to {sum}"
        )));
    }
    Ok(())
}

/// Batch classifier used by the pipeline. Outputs are in input order.
pub trait Scorer: Send + Sync {
    fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError>;

    fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError>;

    fn classify_candidates(
        &self,
        instances: &[MarkedInstance],
    ) -> Result<Vec<CandidateDistribution>, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError> {
        (**self).tag(instances)
    }

    fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError> {
        (**self).classify_roles(instances)
    }

    fn classify_candidates(
        &self,
        instances: &[MarkedInstance],
    ) -> Result<Vec<CandidateDistribution>, ScorerError> {
        (**self).classify_candidates(instances)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn tag(&self, instances: &[TaggingInstance]) -> Result<Vec<Vec<BioLabel>>, ScorerError> {
        (**self).tag(instances)
    }

    fn classify_roles(&self, instances: &[MarkedInstance]) -> Result<Vec<RoleDistribution>, ScorerError> {
        (**self).classify_roles(instances)
    }

    fn classify_candidates(
        &self,
        instances: &[MarkedInstance],
    ) -> Result<Vec<CandidateDistribution>, ScorerError> {
        (**self).classify_candidates(instances)
    }
}
