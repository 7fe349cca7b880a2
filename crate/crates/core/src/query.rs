//! Active query selection.
//!
//! The selection objective is the expected number of flashes of the target
//! under the current posterior, scaled by `ln σ̂⁺`:
//!
//! ```text
//! Q(Φ) = ln σ̂⁺ · Σ_x Π(x) · c⁺_{x,x}(Φ)
//! ```
//!
//! `Q` is modular and monotone, so greedy selection over a candidate pool
//! reaches the optimum whenever the per-symbol budget does not bind.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{Pmf, SequenceSpec, Trial};
use crate::error::{Error, Result};
use crate::evidence::SigmaEstimates;

/// `σ̂⁺` values this far below one are treated as exactly one.
pub const SIGMA_TOLERANCE: f64 = 1e-6;

/// Finite set of admissible trials and the selection constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    candidates: Vec<Trial>,
    per_symbol_budget: usize,
    selection_size: usize,
}

impl CandidatePool {
    pub fn new(candidates: Vec<Trial>, per_symbol_budget: usize, selection_size: usize) -> Result<Self> {
        if selection_size == 0 {
            return Err(Error::InvalidParameter("selection size must be positive".into()));
        }
        if selection_size > candidates.len() {
            return Err(Error::Infeasible(format!(
                "selection size {selection_size} exceeds pool of {} candidates",
                candidates.len()
            )));
        }
        if per_symbol_budget == 0 {
            return Err(Error::InvalidParameter("per-symbol budget must be positive".into()));
        }
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].contains(c) {
                return Err(Error::InvalidParameter(format!("duplicate candidate {c}")));
            }
        }
        Ok(Self { candidates, per_symbol_budget, selection_size })
    }

    pub fn candidates(&self) -> &[Trial] {
        &self.candidates
    }

    pub fn per_symbol_budget(&self) -> usize {
        self.per_symbol_budget
    }

    pub fn selection_size(&self) -> usize {
        self.selection_size
    }

    fn fits(&self, usage: &[usize], candidate: &Trial) -> bool {
        candidate.members().iter().all(|&m| usage.get(m).copied().unwrap_or(0) < self.per_symbol_budget)
    }

    fn max_symbol(&self) -> usize {
        self.candidates.iter().flat_map(|c| c.members().iter().copied()).max().map_or(0, |m| m + 1)
    }
}

/// Posterior and `ln σ̂⁺` defining `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryObjective {
    posterior: Pmf,
    log_sigma_plus: f64,
}

impl QueryObjective {
    /// Fails when `σ̂⁺ < 1`, which would make `Q` decreasing.
    pub fn new(posterior: Pmf, sigma_plus: f64) -> Result<Self> {
        if !(sigma_plus.is_finite() && sigma_plus >= 1.0 - SIGMA_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "sigma_plus = {sigma_plus} must be finite and at least 1"
            )));
        }
        Ok(Self { posterior, log_sigma_plus: sigma_plus.ln().max(0.0) })
    }

    pub fn from_log_sigma(posterior: Pmf, log_sigma_plus: f64) -> Result<Self> {
        if !(log_sigma_plus.is_finite() && log_sigma_plus >= 0.0) {
            return Err(Error::InvalidParameter("log sigma_plus must be finite and nonnegative".into()));
        }
        Ok(Self { posterior, log_sigma_plus })
    }

    pub fn posterior(&self) -> &Pmf {
        &self.posterior
    }

    pub fn log_sigma_plus(&self) -> f64 {
        self.log_sigma_plus
    }

    pub fn with_posterior(&self, posterior: Pmf) -> Self {
        Self { posterior, log_sigma_plus: self.log_sigma_plus }
    }
}

/// Number of trials flashing both `x` and `v`.
pub fn c_plus(x: usize, v: usize, trials: &[Trial]) -> usize {
    trials.iter().filter(|t| t.contains(x) && t.contains(v)).count()
}

/// Number of trials flashing `v` but not `x`.
pub fn c_minus(x: usize, v: usize, trials: &[Trial]) -> usize {
    trials.iter().filter(|t| !t.contains(x) && t.contains(v)).count()
}

/// Flash count of each symbol across `trials`.
pub fn appearance_counts(trials: &[Trial], vocab_size: usize) -> Vec<usize> {
    let mut counts = vec![0; vocab_size];
    for t in trials {
        for &m in t.members() {
            counts[m] += 1;
        }
    }
    counts
}

pub fn q_value(obj: &QueryObjective, trials: &[Trial]) -> f64 {
    let counts = appearance_counts(trials, obj.posterior.len());
    let expected: f64 = obj.posterior.weights().iter().zip(&counts).map(|(p, &c)| p * c as f64).sum();
    obj.log_sigma_plus * expected
}

fn trial_gain(obj: &QueryObjective, candidate: &Trial) -> f64 {
    obj.log_sigma_plus * candidate.members().iter().map(|&x| obj.posterior.get(x)).sum::<f64>()
}

/// `Q(selected ∪ {candidate}) − Q(selected)`, which does not depend on
/// `selected`.
pub fn discrete_derivative(obj: &QueryObjective, selected: &[Trial], candidate: &Trial) -> Result<f64> {
    if selected.contains(candidate) {
        return Err(Error::InvalidParameter(format!("candidate {candidate} is already selected")));
    }
    Ok(trial_gain(obj, candidate))
}

/// Greedy maximization of `Q` over the pool: each step adds the feasible
/// candidate with the largest discrete derivative, ties to the lowest pool
/// index. The result is in selection order.
pub fn greedy_select(obj: &QueryObjective, pool: &CandidatePool) -> Result<SequenceSpec> {
    let mut usage = vec![0; pool.max_symbol().max(obj.posterior.len())];
    let mut taken = vec![false; pool.candidates.len()];
    let mut selected: Vec<Trial> = Vec::with_capacity(pool.selection_size);
    for step in 0..pool.selection_size {
        let mut best: Option<(usize, f64)> = None;
        for (i, candidate) in pool.candidates.iter().enumerate() {
            if taken[i] || !pool.fits(&usage, candidate) {
                continue;
            }
            let gain = discrete_derivative(obj, &selected, candidate)?;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else {
            return Err(Error::Infeasible(format!(
                "per-symbol budget of {} leaves no feasible candidate after {step} of {} trials",
                pool.per_symbol_budget, pool.selection_size
            )));
        };
        taken[i] = true;
        for &m in pool.candidates[i].members() {
            usage[m] += 1;
        }
        selected.push(pool.candidates[i].clone());
    }
    SequenceSpec::new(selected)
}

/// Uniformly random feasible selection of `selection_size` distinct
/// candidates, in random order.
pub fn random_sequence<R: Rng + ?Sized>(pool: &CandidatePool, rng: &mut R) -> Result<SequenceSpec> {
    let mut order: Vec<usize> = (0..pool.candidates.len()).collect();
    order.shuffle(rng);
    let mut usage = vec![0; pool.max_symbol()];
    let mut selected = Vec::with_capacity(pool.selection_size);
    for i in order {
        if selected.len() == pool.selection_size {
            break;
        }
        let candidate = &pool.candidates[i];
        if pool.fits(&usage, candidate) {
            for &m in candidate.members() {
                usage[m] += 1;
            }
            selected.push(candidate.clone());
        }
    }
    if selected.len() < pool.selection_size {
        return Err(Error::Infeasible(format!(
            "per-symbol budget of {} admits only {} of {} trials",
            pool.per_symbol_budget,
            selected.len(),
            pool.selection_size
        )));
    }
    SequenceSpec::new(selected)
}

/// Shuffles the presentation order of a selected sequence.
pub fn shuffle_presentation<R: Rng + ?Sized>(sequence: SequenceSpec, rng: &mut R) -> SequenceSpec {
    let mut trials = sequence.into_trials();
    trials.shuffle(rng);
    SequenceSpec::new(trials).expect("shuffling preserves length")
}

/// Predicted posterior of the hypothesized target after `trials`, with
/// every evidence ratio replaced by its point estimate.
pub fn g_hat(posterior: &Pmf, sigma: &SigmaEstimates, trials: &[Trial], target: usize) -> f64 {
    let p_target = posterior.get(target);
    if p_target <= 0.0 {
        return 0.0;
    }
    let ln_plus = sigma.sigma_plus.max(crate::evidence::DENSITY_FLOOR).ln();
    let ln_minus = sigma.sigma_minus.max(crate::evidence::DENSITY_FLOOR).ln();
    let target_hits: Vec<bool> = trials.iter().map(|t| t.contains(target)).collect();
    let log_term = |v: usize| {
        let mut plus = 0usize;
        let mut minus = 0usize;
        for (t, &hit) in trials.iter().zip(&target_hits) {
            if t.contains(v) {
                if hit {
                    plus += 1;
                } else {
                    minus += 1;
                }
            }
        }
        posterior.get(v).ln() + plus as f64 * ln_plus + minus as f64 * ln_minus
    };
    let logs: Vec<f64> = (0..posterior.len()).map(log_term).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    (logs[target] - denom).exp()
}
