//! Active recursive Bayesian intent inference for ERP typing interfaces.
//!
//! A language-model prior is fused with simulated EEG evidence one query
//! sequence at a time, and each sequence is chosen to maximize the
//! expected evidence about the most likely symbols.

pub mod domain;
pub mod error;
pub mod evidence;
pub mod inference;
pub mod language_model;
pub mod paradigms;
pub mod query;
pub mod simulator;
pub mod stats;

pub use domain::{normalize, Pmf, SequenceSpec, SimConfig, Trial, Vocabulary};
pub use error::{Error, Result};
pub use evidence::{gaussian_evidence_model, EvidenceModel, SigmaEstimates};
pub use inference::{posterior_update, run_epoch, DecisionConfig, EpochOutcome};
pub use language_model::{NgramModel, PhraseEntry, PhrasePool};
pub use paradigms::{CodeMatrix, Paradigm};
pub use query::{greedy_select, CandidatePool, QueryObjective};
pub use simulator::{run_study, ArmSpec, SessionReport, StudyConfig, StudyReport};
pub use stats::{beta_fit_ci, wilcoxon_signed_rank, BetaFit, WilcoxonResult};
