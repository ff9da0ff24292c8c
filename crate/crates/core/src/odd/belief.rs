//! Discrete posterior over condition hypotheses.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("belief needs at least one hypothesis with positive weight")]
    Degenerate,
    #[error("weight for `{0}` must be finite and non-negative")]
    BadWeight(String),
    #[error("value `{value}` is not declared for evidence `{key}`")]
    UndeclaredValue { key: String, value: String },
    #[error("no likelihood for hypothesis `{hypothesis}` under {key} = {value}")]
    MissingLikelihood {
        key: String,
        value: String,
        hypothesis: String,
    },
    #[error("inconsistent evidence: {key} = {value} zeroes every hypothesis")]
    InconsistentEvidence { key: String, value: String },
}

/// Normalised weights over named hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BeliefState {
    weights: BTreeMap<String, f64>,
}

/// Weights within this relative distance of the maximum tie for MAP.
const MAP_TIE_TOLERANCE: f64 = 1e-9;

impl BeliefState {
    /// Normalise `weights` into a belief. Any positive scaling of the input
    /// yields the same belief.
    pub fn new<I, S>(weights: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let weights: BTreeMap<String, f64> =
            weights.into_iter().map(|(k, v)| (k.into(), v)).collect();
        for (h, w) in &weights {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(BeliefError::BadWeight(h.clone()));
            }
        }
        let total: f64 = weights.values().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(BeliefError::Degenerate);
        }
        Ok(BeliefState {
            weights: weights.into_iter().map(|(k, v)| (k, v / total)).collect(),
        })
    }

    pub fn uniform<I, S>(hypotheses: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        BeliefState::new(hypotheses.into_iter().map(|h| (h, 1.0)))
    }

    pub fn weight(&self, hypothesis: &str) -> Option<f64> {
        self.weights.get(hypothesis).copied()
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn hypotheses(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    /// Maximum-a-posteriori hypotheses, more than one on a tie, in name order.
    pub fn map_hypotheses(&self) -> Vec<&str> {
        let best = self.weights.values().copied().fold(0.0, f64::max);
        self.weights
            .iter()
            .filter(|(_, &w)| w >= best * (1.0 - MAP_TIE_TOLERANCE))
            .map(|(h, _)| h.as_str())
            .collect()
    }
}

/// Likelihood table for one evidence variable and the micro-ODD each
/// hypothesis selects when it is the most probable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRule {
    pub evidence_key: String,
    /// evidence value → hypothesis → likelihood
    pub likelihoods: BTreeMap<String, BTreeMap<String, f64>>,
    /// hypothesis → micro-ODD id
    pub target_map: BTreeMap<String, String>,
}

impl TransitionRule {
    /// Every declared value must give a finite, non-negative likelihood for
    /// every hypothesis.
    pub fn check_covers<'a>(
        &self,
        hypotheses: impl IntoIterator<Item = &'a str> + Clone,
    ) -> Result<(), BeliefError> {
        for (value, table) in &self.likelihoods {
            for h in hypotheses.clone() {
                match table.get(h) {
                    Some(l) if l.is_finite() && *l >= 0.0 => {}
                    Some(_) => return Err(BeliefError::BadWeight(h.to_string())),
                    None => {
                        return Err(BeliefError::MissingLikelihood {
                            key: self.evidence_key.clone(),
                            value: value.clone(),
                            hypothesis: h.to_string(),
                        })
                    }
                }
            }
        }
        Ok(())
    }
}

/// Posterior ∝ prior × likelihood(observed), renormalised.
pub fn belief_update(
    belief: &BeliefState,
    rule: &TransitionRule,
    observed: &str,
) -> Result<BeliefState, BeliefError> {
    let table = rule
        .likelihoods
        .get(observed)
        .ok_or_else(|| BeliefError::UndeclaredValue {
            key: rule.evidence_key.clone(),
            value: observed.to_string(),
        })?;
    let mut posterior = BTreeMap::new();
    for (h, prior) in &belief.weights {
        let l = *table
            .get(h)
            .ok_or_else(|| BeliefError::MissingLikelihood {
                key: rule.evidence_key.clone(),
                value: observed.to_string(),
                hypothesis: h.clone(),
            })?;
        if !(l.is_finite() && l >= 0.0) {
            return Err(BeliefError::BadWeight(h.clone()));
        }
        posterior.insert(h.clone(), prior * l);
    }
    BeliefState::new(posterior).map_err(|e| match e {
        BeliefError::Degenerate => BeliefError::InconsistentEvidence {
            key: rule.evidence_key.clone(),
            value: observed.to_string(),
        },
        other => other,
    })
}
