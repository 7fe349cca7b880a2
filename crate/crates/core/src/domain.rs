//! Shared domain vocabulary: symbols, trials, sequences, epochs and PMFs.
//!
//! Symbols are always handled as indices into a [`Vocabulary`]. PMFs, code
//! matrices and trial members are plain indexed arrays.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest weight an atom may carry after [`normalize`].
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a [`Pmf`].
pub const PMF_TOLERANCE: f64 = 1e-9;

pub const BACKSPACE: char = '<';
pub const SPACE: char = '_';

/// Ordered set of distinct typing symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Vocabulary {
    symbols: Vec<char>,
    backspace_index: usize,
    space_index: usize,
}

impl Vocabulary {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::InvalidVocabulary(format!("duplicate symbol {c:?}")));
            }
        }
        let find = |target: char| {
            symbols.iter().position(|&c| c == target).ok_or_else(|| {
                Error::InvalidVocabulary(format!("missing required symbol {target:?}"))
            })
        };
        let backspace_index = find(BACKSPACE)?;
        let space_index = find(SPACE)?;
        Ok(Self { symbols, backspace_index, space_index })
    }

    /// `A`..`Z`, then `<`, then `_`.
    pub fn english() -> Self {
        Self::new(('A'..='Z').chain([BACKSPACE, SPACE])).expect("static vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> char {
        self.symbols[index]
    }

    pub fn index_of(&self, c: char) -> Result<usize> {
        self.symbols.iter().position(|&s| s == c).ok_or(Error::UnknownSymbol(c))
    }

    pub fn backspace_index(&self) -> usize {
        self.backspace_index
    }

    pub fn space_index(&self) -> usize {
        self.space_index
    }

    /// Uppercases ASCII letters and maps whitespace to `_`, then resolves each
    /// character to its index.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                let c = if c.is_whitespace() { SPACE } else { c.to_ascii_uppercase() };
                self.index_of(c)
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> String {
        indices.iter().map(|&i| self.symbols[i]).collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::english()
    }
}

impl TryFrom<String> for Vocabulary {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value.chars())
    }
}

impl From<Vocabulary> for String {
    fn from(v: Vocabulary) -> Self {
        v.symbols.into_iter().collect()
    }
}

/// Probability mass function over vocabulary indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    weights: Vec<f64>,
}

impl Pmf {
    /// Wraps weights that already form a distribution. Nothing is rescaled.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPmf("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPmf(format!("weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidPmf(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform pmf needs at least one atom");
        Self { weights: vec![1.0 / n as f64; n] }
    }

    /// Normalizes unnormalized log-weights with the probability floor applied.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegeneratePmf);
        }
        let weights: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
        normalize(&weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, index: usize) -> f64 {
        self.weights[index]
    }

    /// Most probable index; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate().skip(1) {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.weights[self.argmax()]
    }

    /// Indices sorted by descending probability, ties by ascending index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        order
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.weights
    }
}

/// Scales nonnegative weights to unit mass, then lifts atoms below
/// [`PROBABILITY_FLOOR`] to the floor and rescales once more.
pub fn normalize(weights: &[f64]) -> Result<Pmf> {
    if weights.is_empty() {
        return Err(Error::InvalidPmf("empty weight vector".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidPmf(format!("weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegeneratePmf);
    }
    let mut out: Vec<f64> = weights.iter().map(|w| w / total).collect();
    if out.iter().any(|&w| w < PROBABILITY_FLOOR) {
        for w in &mut out {
            *w = w.max(PROBABILITY_FLOOR);
        }
        let total: f64 = out.iter().sum();
        for w in &mut out {
            *w /= total;
        }
    }
    Ok(Pmf { weights: out })
}

/// A set of symbols flashed together, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trial {
    members: Vec<usize>,
}

impl Trial {
    pub fn new(members: impl IntoIterator<Item = usize>, vocab_size: usize) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        let before = members.len();
        members.dedup();
        if members.len() != before {
            return Err(Error::InvalidTrial("duplicate members".into()));
        }
        if members.is_empty() {
            return Err(Error::InvalidTrial("a trial must flash at least one symbol".into()));
        }
        if let Some(&index) = members.iter().find(|&&m| m >= vocab_size) {
            return Err(Error::IndexOutOfRange { index, size: vocab_size });
        }
        Ok(Self { members })
    }

    pub fn singleton(index: usize, vocab_size: usize) -> Result<Self> {
        Self::new([index], vocab_size)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, symbol: usize) -> bool {
        self.members.binary_search(&symbol).is_ok()
    }
}

impl fmt::Display for Trial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// Trial label for a hypothesized target: 1 when the target is flashed.
pub fn label(trial: &Trial, target: usize) -> u8 {
    u8::from(trial.contains(target))
}

/// Ordered list of trials shown as one query sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSpec {
    trials: Vec<Trial>,
}

impl SequenceSpec {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidSequence("a sequence needs at least one trial".into()));
        }
        Ok(Self { trials })
    }

    pub fn with_bound(trials: Vec<Trial>, max_trials: usize) -> Result<Self> {
        if trials.len() > max_trials {
            return Err(Error::InvalidSequence(format!(
                "{} trials exceed the bound of {max_trials}",
                trials.len()
            )));
        }
        Self::new(trials)
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn into_trials(self) -> Vec<Trial> {
        self.trials
    }
}

impl Deref for SequenceSpec {
    type Target = [Trial];

    fn deref(&self) -> &[Trial] {
        &self.trials
    }
}

/// Progress of one character decision.
#[derive(Debug, Clone)]
pub struct EpochState {
    pub sequences_shown: usize,
    pub evidence_log: Vec<Vec<(Trial, f64)>>,
    pub posterior: Pmf,
    pub committed: Option<usize>,
}

impl EpochState {
    pub fn new(prior: Pmf) -> Self {
        Self { sequences_shown: 0, evidence_log: Vec::new(), posterior: prior, committed: None }
    }

    pub fn trial_count(&self) -> usize {
        self.evidence_log.iter().map(Vec::len).sum()
    }
}

/// Presentation, decision and timing settings shared by a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub iti_ms: f64,
    pub max_sequences: usize,
    pub trials_per_sequence: usize,
    pub confidence_threshold: f64,
    pub inter_sequence_pause_ms: f64,
    pub post_decision_pause_ms: f64,
    pub phrase_budget_ms: f64,
    pub max_consecutive_errors: usize,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            iti_ms: 150.0,
            max_sequences: 8,
            trials_per_sequence: 14,
            confidence_threshold: 0.9,
            inter_sequence_pause_ms: 1000.0,
            post_decision_pause_ms: 500.0,
            phrase_budget_ms: 5.0 * 60_000.0,
            max_consecutive_errors: 5,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.iti_ms >= 0.0 && self.iti_ms.is_finite()) {
            return bad("iti_ms must be a finite nonnegative number");
        }
        if self.max_sequences == 0 {
            return bad("max_sequences must be positive");
        }
        if self.trials_per_sequence == 0 {
            return bad("trials_per_sequence must be positive");
        }
        if !(self.confidence_threshold > 0.5 && self.confidence_threshold < 1.0) {
            return bad("confidence_threshold must lie in (0.5, 1)");
        }
        for (name, v) in [
            ("inter_sequence_pause_ms", self.inter_sequence_pause_ms),
            ("post_decision_pause_ms", self.post_decision_pause_ms),
            ("phrase_budget_ms", self.phrase_budget_ms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a finite nonnegative number"
                )));
            }
        }
        Ok(())
    }
}
