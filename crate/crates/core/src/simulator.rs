//! Monte-Carlo copy-phrase typing with simulated users.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{label, SequenceSpec, SimConfig};
use crate::error::{Error, Result};
use crate::evidence::{gaussian_evidence_model, sigma_point_estimates, EvidenceModel};
use crate::inference::{run_epoch, DecisionConfig, EvidenceSource};
use crate::language_model::{NgramModel, PhraseEntry, PhrasePool, DIFFICULTY_LEVELS};
use crate::paradigms::{Paradigm, ParadigmPlan, ParadigmQuery};

/// Hard stop for configurations whose timing never exhausts the budget.
pub const MAX_EPOCHS_PER_PHRASE: usize = 100_000;

/// Simulated milliseconds spent on one epoch.
pub fn epoch_timing(sequences: usize, trials_total: usize, config: &SimConfig) -> f64 {
    trials_total as f64 * config.iti_ms
        + sequences as f64 * config.inter_sequence_pause_ms
        + config.post_decision_pause_ms
}

/// A user who always attends to the correct next symbol. The system's
/// evidence model is assumed to match the user's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedUser {
    pub auc: f64,
    pub model: EvidenceModel,
}

impl SimulatedUser {
    pub fn from_auc(auc: f64) -> Result<Self> {
        Ok(Self { auc, model: gaussian_evidence_model(auc)? })
    }
}

/// Intended symbol given what has been typed: the next goal symbol while
/// the typed text is a correct prefix, otherwise backspace.
pub fn user_target(typed: &[usize], goal: &[usize], backspace: usize) -> Option<usize> {
    if typed.len() <= goal.len() && goal[..typed.len()] == *typed {
        goal.get(typed.len()).copied()
    } else {
        Some(backspace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    ConsecutiveErrors,
    TimeBudget,
    EpochLimit,
}

/// Counts for one epoch of a phrase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub target: usize,
    pub decision: usize,
    pub sequences: usize,
    pub trials: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseRecord {
    pub phrase_id: usize,
    pub level: usize,
    pub outcome: Outcome,
    pub elapsed_ms: f64,
    pub sequences: usize,
    pub trials: usize,
    pub typed: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
}

impl PhraseRecord {
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn epoch_count(&self) -> usize {
        self.epochs.len()
    }
}

/// Everything `type_phrase` needs besides the phrase and the RNG streams.
#[derive(Debug, Clone, Copy)]
pub struct TypingContext<'a> {
    pub lm: &'a NgramModel,
    pub backspace_prob: f64,
    pub plan: &'a ParadigmPlan,
    pub user: &'a SimulatedUser,
    pub log_sigma_plus: f64,
    pub config: &'a SimConfig,
}

struct SimulatedEvidence<'a, R: Rng> {
    model: &'a EvidenceModel,
    target: usize,
    rng: &'a mut R,
}

impl<R: Rng> EvidenceSource for SimulatedEvidence<'_, R> {
    fn observe(&mut self, sequence: &SequenceSpec) -> Result<Vec<f64>> {
        Ok(sequence.iter().map(|t| self.model.sample(label(t, self.target), self.rng)).collect())
    }
}

/// Types the missing part of one phrase. The prefix is fixed; a backspace
/// with nothing typed is a no-op that still costs its epoch time.
pub fn type_phrase<R: Rng>(
    phrase: &PhraseEntry,
    ctx: &TypingContext<'_>,
    evidence_rng: &mut R,
    query_rng: &mut R,
) -> Result<PhraseRecord> {
    let vocab = ctx.lm.vocabulary();
    let backspace = vocab.backspace_index();
    let decision = DecisionConfig {
        confidence_threshold: ctx.config.confidence_threshold,
        max_sequences: ctx.config.max_sequences,
    };
    let mut typed: Vec<usize> = Vec::new();
    let mut history = phrase.prefix.clone();
    let mut epochs = Vec::new();
    let mut elapsed_ms = 0.0;
    let mut wrong_streak = 0;
    let outcome = loop {
        let Some(target) = user_target(&typed, &phrase.goal, backspace) else {
            break Outcome::Completed;
        };
        if epochs.len() == MAX_EPOCHS_PER_PHRASE {
            break Outcome::EpochLimit;
        }
        let prior = ctx.lm.prior(&ctx.lm.context(&history), ctx.backspace_prob)?;
        let mut query = ParadigmQuery::new(ctx.plan, ctx.log_sigma_plus, query_rng);
        let mut evidence = SimulatedEvidence { model: &ctx.user.model, target, rng: evidence_rng };
        let out = run_epoch(prior, &mut query, &mut evidence, &ctx.user.model, &decision)?;
        let cost = epoch_timing(out.sequences_used, out.trial_count, ctx.config);
        elapsed_ms += cost;
        epochs.push(EpochRecord {
            target,
            decision: out.decision,
            sequences: out.sequences_used,
            trials: out.trial_count,
            elapsed_ms: cost,
        });
        if out.decision == backspace {
            if typed.pop().is_some() {
                history.pop();
            }
        } else {
            typed.push(out.decision);
            history.push(out.decision);
        }
        wrong_streak = if out.decision == target { 0 } else { wrong_streak + 1 };
        if elapsed_ms > ctx.config.phrase_budget_ms {
            // finishing after the budget ran out does not count
            break Outcome::TimeBudget;
        }
        if wrong_streak > ctx.config.max_consecutive_errors {
            break Outcome::ConsecutiveErrors;
        }
    };
    Ok(PhraseRecord {
        phrase_id: phrase.id,
        level: phrase.level,
        outcome,
        elapsed_ms,
        sequences: epochs.iter().map(|e| e.sequences).sum(),
        trials: epochs.iter().map(|e| e.trials).sum(),
        typed,
        epochs,
    })
}

/// Named paradigm arm of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub paradigm: Paradigm,
}

impl ArmSpec {
    pub fn new(paradigm: Paradigm) -> Self {
        Self { name: paradigm.label().to_string(), paradigm }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub arms: Vec<ArmSpec>,
    /// One simulated user per entry; repeated levels are distinct users.
    pub users: Vec<SimulatedUser>,
    pub reps: usize,
    pub phrases_per_session: usize,
    pub backspace_prob: f64,
    /// Timing and decision settings; `rng_seed` keys every random stream.
    pub sim: SimConfig,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl StudyConfig {
    pub fn from_auc_levels(arms: Vec<ArmSpec>, auc_levels: &[f64], reps: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            arms,
            users: auc_levels.iter().map(|&a| SimulatedUser::from_auc(a)).collect::<Result<_>>()?,
            reps,
            phrases_per_session: 2 * DIFFICULTY_LEVELS,
            backspace_prob: crate::language_model::DEFAULT_BACKSPACE_PROB,
            sim: SimConfig { rng_seed: seed, ..SimConfig::default() },
            workers: None,
        })
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.arms.is_empty() || self.users.is_empty() {
            return Err(Error::InvalidParameter("a study needs at least one arm and one user".into()));
        }
        if self.phrases_per_session == 0 {
            return Err(Error::InvalidParameter("phrases per session must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if self.arms[..i].iter().any(|a| a.name == arm.name) {
                return Err(Error::InvalidParameter(format!("duplicate arm name {:?}", arm.name)));
            }
            arm.paradigm.validate(vocab_size)?;
        }
        self.sim.validate()
    }
}

/// Per-phrase result row of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub arm: String,
    pub user: usize,
    pub auc: f64,
    pub rep: usize,
    pub slot: usize,
    pub record: PhraseRecord,
}

/// Aggregate of one session (one arm, user and repetition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub arm: String,
    pub user: usize,
    pub auc: f64,
    pub rep: usize,
    pub phrases: usize,
    pub completed: usize,
    pub elapsed_ms: f64,
}

impl SessionReport {
    pub fn ppc(&self) -> f64 {
        self.completed as f64 / self.phrases as f64
    }

    pub fn ttd_minutes(&self) -> f64 {
        self.elapsed_ms / 60_000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<SessionRow>,
    pub sessions: Vec<SessionReport>,
}

impl StudyReport {
    pub fn sessions_for<'a>(&'a self, arm: &str) -> impl Iterator<Item = &'a SessionReport> + 'a {
        let arm = arm.to_string();
        self.sessions.iter().filter(move |s| s.arm == arm)
    }
}

const STREAM_PHRASES: u64 = 1;
const STREAM_EVIDENCE: u64 = 2;
const STREAM_QUERY: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG stream for a tuple of keys. The arm is deliberately not
/// a key, so every arm sees the same phrase lists and evidence streams.
pub fn substream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let state = keys.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)));
    ChaCha8Rng::seed_from_u64(state)
}

/// Phrase list for one (user, rep) cell: slot `i` draws uniformly from
/// difficulty level `1 + i mod 5`, without repeats while the level lasts.
pub fn session_phrases(
    pool: &PhrasePool,
    count: usize,
    seed: u64,
    user: usize,
    rep: usize,
) -> Result<Vec<&PhraseEntry>> {
    let mut rng = substream(seed, &[STREAM_PHRASES, user as u64, rep as u64]);
    let mut remaining: Vec<Vec<&PhraseEntry>> =
        (1..=DIFFICULTY_LEVELS).map(|l| pool.level(l).collect()).collect();
    if let Some(l) = remaining.iter().position(Vec::is_empty) {
        return Err(Error::InvalidParameter(format!("difficulty level {} has no phrases", l + 1)));
    }
    let mut chosen = Vec::with_capacity(count);
    for slot in 0..count {
        let level = slot % DIFFICULTY_LEVELS;
        if remaining[level].is_empty() {
            remaining[level] = pool.level(level + 1).collect();
        }
        let bucket = &mut remaining[level];
        let pick = rng.random_range(0..bucket.len());
        chosen.push(bucket.remove(pick));
    }
    Ok(chosen)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    config: &StudyConfig,
    lm: &NgramModel,
    arm: &ArmSpec,
    plan: &ParadigmPlan,
    user_index: usize,
    log_sigma_plus: f64,
    rep: usize,
    phrases: &[&PhraseEntry],
) -> Result<(Vec<SessionRow>, SessionReport)> {
    let user = &config.users[user_index];
    let ctx = TypingContext {
        lm,
        backspace_prob: config.backspace_prob,
        plan,
        user,
        log_sigma_plus,
        config: &config.sim,
    };
    let mut rows = Vec::with_capacity(phrases.len());
    for (slot, phrase) in phrases.iter().enumerate() {
        let keys = [user_index as u64, rep as u64, slot as u64];
        let mut evidence_rng = substream(config.sim.rng_seed, &[&[STREAM_EVIDENCE][..], &keys].concat());
        let mut query_rng = substream(config.sim.rng_seed, &[&[STREAM_QUERY][..], &keys].concat());
        let record = type_phrase(phrase, &ctx, &mut evidence_rng, &mut query_rng)?;
        rows.push(SessionRow { arm: arm.name.clone(), user: user_index, auc: user.auc, rep, slot, record });
    }
    let report = SessionReport {
        arm: arm.name.clone(),
        user: user_index,
        auc: user.auc,
        rep,
        phrases: rows.len(),
        completed: rows.iter().filter(|r| r.record.completed()).count(),
        elapsed_ms: rows.iter().map(|r| r.record.elapsed_ms).sum(),
    };
    Ok((rows, report))
}

/// Runs every (arm, user, rep) session. Output order is arm, then user,
/// then rep, regardless of how work is scheduled.
pub fn run_study(config: &StudyConfig, lm: &NgramModel, pool: &PhrasePool) -> Result<StudyReport> {
    let vocab_size = lm.vocabulary().len();
    config.validate(vocab_size)?;
    let plans = config.arms.iter().map(|a| a.paradigm.build(vocab_size)).collect::<Result<Vec<_>>>()?;
    let log_sigmas: Vec<f64> = config
        .users
        .iter()
        .map(|u| sigma_point_estimates(&u.model).sigma_plus.ln().max(0.0))
        .collect();
    let mut phrase_sets = Vec::with_capacity(config.users.len() * config.reps);
    for user in 0..config.users.len() {
        for rep in 0..config.reps {
            phrase_sets.push(session_phrases(pool, config.phrases_per_session, config.sim.rng_seed, user, rep)?);
        }
    }
    let jobs: Vec<(usize, usize, usize)> = (0..config.arms.len())
        .flat_map(|a| (0..config.users.len()).flat_map(move |u| (0..config.reps).map(move |r| (a, u, r))))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(a, u, r)| {
                run_cell(
                    config,
                    lm,
                    &config.arms[a],
                    &plans[a],
                    u,
                    log_sigmas[u],
                    r,
                    &phrase_sets[u * config.reps + r],
                )
            })
            .collect::<Result<Vec<_>>>()
    };
    let cells = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {n} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut report = StudyReport { rows: Vec::new(), sessions: Vec::with_capacity(cells.len()) };
    for (rows, session) in cells {
        report.rows.extend(rows);
        report.sessions.push(session);
    }
    Ok(report)
}
