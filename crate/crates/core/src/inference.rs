//! Recursive Bayesian intent inference.
//!
//! The posterior of each symbol is its context prior times the likelihood
//! ratio of every trial that flashed it. Products are accumulated in log
//! space.

use serde::{Deserialize, Serialize};

use crate::domain::{EpochState, Pmf, SequenceSpec, Trial};
use crate::error::{Error, Result};
use crate::evidence::EvidenceModel;

/// When an epoch stops querying and commits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub confidence_threshold: f64,
    pub max_sequences: usize,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.9, max_sequences: 8 }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.5 && self.confidence_threshold < 1.0) {
            return Err(Error::InvalidParameter("confidence_threshold must lie in (0.5, 1)".into()));
        }
        if self.max_sequences == 0 {
            return Err(Error::InvalidParameter("max_sequences must be positive".into()));
        }
        Ok(())
    }
}

/// Posterior after one sequence given per-trial log likelihood ratios.
pub fn posterior_update_log_ratios(prior: &Pmf, trials: &[Trial], log_ratios: &[f64]) -> Result<Pmf> {
    if trials.len() != log_ratios.len() {
        return Err(Error::InvalidSequence(format!(
            "{} evidence values for {} trials",
            log_ratios.len(),
            trials.len()
        )));
    }
    let mut log_weights: Vec<f64> = prior.weights().iter().map(|w| w.ln()).collect();
    for (trial, &lr) in trials.iter().zip(log_ratios) {
        if lr.is_nan() {
            return Err(Error::InvalidParameter("log likelihood ratio is NaN".into()));
        }
        for &member in trial.members() {
            let slot = log_weights
                .get_mut(member)
                .ok_or(Error::IndexOutOfRange { index: member, size: prior.len() })?;
            *slot += lr;
        }
    }
    Pmf::from_log_weights(&log_weights)
}

/// Posterior after one sequence given raw evidence scores, evaluated under
/// the densities of `model`.
pub fn posterior_update(
    prior: &Pmf,
    sequence: &SequenceSpec,
    evidence: &[f64],
    model: &EvidenceModel,
) -> Result<Pmf> {
    let log_ratios: Vec<f64> = evidence.iter().map(|&e| model.log_ratio(e)).collect();
    posterior_update_log_ratios(prior, sequence, &log_ratios)
}

/// Chooses the next query sequence from the current posterior.
pub trait QuerySource {
    fn next_sequence(&mut self, posterior: &Pmf) -> Result<SequenceSpec>;
}

/// Produces one evidence score per trial for the hidden target.
pub trait EvidenceSource {
    fn observe(&mut self, sequence: &SequenceSpec) -> Result<Vec<f64>>;
}

impl<F: FnMut(&Pmf) -> Result<SequenceSpec>> QuerySource for F {
    fn next_sequence(&mut self, posterior: &Pmf) -> Result<SequenceSpec> {
        self(posterior)
    }
}

/// Result of one character decision.
#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub decision: usize,
    pub sequences_used: usize,
    pub trial_count: usize,
    pub posterior: Pmf,
    pub evidence_log: Vec<Vec<(Trial, f64)>>,
}

/// Alternates query and inference until the posterior maximum reaches the
/// threshold or `max_sequences` sequences have been shown, then commits the
/// MAP symbol. A prior already above threshold commits with no sequences.
pub fn run_epoch(
    prior: Pmf,
    query: &mut dyn QuerySource,
    evidence: &mut dyn EvidenceSource,
    model: &EvidenceModel,
    config: &DecisionConfig,
) -> Result<EpochOutcome> {
    let mut state = EpochState::new(prior);
    while state.sequences_shown < config.max_sequences
        && state.posterior.max() < config.confidence_threshold
    {
        let sequence = query.next_sequence(&state.posterior)?;
        let scores = evidence.observe(&sequence)?;
        state.posterior = posterior_update(&state.posterior, &sequence, &scores, model)?;
        state.sequences_shown += 1;
        state.evidence_log.push(sequence.trials().iter().cloned().zip(scores).collect());
    }
    let decision = state.posterior.argmax();
    state.committed = Some(decision);
    Ok(EpochOutcome {
        decision,
        sequences_used: state.sequences_shown,
        trial_count: state.trial_count(),
        posterior: state.posterior,
        evidence_log: state.evidence_log,
    })
}
