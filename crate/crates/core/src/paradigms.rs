//! Presentation paradigms: code matrices, candidate pools and the query
//! sources that turn a posterior into the next sequence.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Pmf, SequenceSpec, Trial};
use crate::error::{Error, Result};
use crate::inference::QuerySource;
use crate::query::{greedy_select, random_sequence, shuffle_presentation, CandidatePool, QueryObjective};

/// One binary codeword per symbol; column `j` lists the symbols flashed in
/// trial `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMatrix {
    rows: Vec<Vec<u8>>,
    codeword_length: usize,
}

impl CodeMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let codeword_length = rows.first().map_or(0, Vec::len);
        if codeword_length == 0 {
            return Err(Error::CodeAssignment("code matrix needs nonempty codewords".into()));
        }
        if rows.iter().any(|r| r.len() != codeword_length || r.iter().any(|&b| b > 1)) {
            return Err(Error::CodeAssignment("codewords must be binary and equally long".into()));
        }
        Ok(Self { rows, codeword_length })
    }

    /// Rebuilds the matrix from the trials of one sequence.
    pub fn from_trials(trials: &[Trial], vocab_size: usize) -> Result<Self> {
        let rows = (0..vocab_size)
            .map(|x| trials.iter().map(|t| u8::from(t.contains(x))).collect())
            .collect();
        Self::new(rows)
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn codeword_length(&self) -> usize {
        self.codeword_length
    }

    pub fn row_weight(&self, symbol: usize) -> usize {
        self.rows[symbol].iter().map(|&b| b as usize).sum()
    }

    pub fn rows_distinct(&self) -> bool {
        (0..self.rows.len()).all(|i| !self.rows[..i].contains(&self.rows[i]))
    }

    pub fn trials(&self) -> Result<Vec<Trial>> {
        (0..self.codeword_length)
            .map(|j| {
                let members = (0..self.rows.len()).filter(|&x| self.rows[x][j] == 1);
                Trial::new(members, self.rows.len())
                    .map_err(|_| Error::CodeAssignment(format!("trial {j} flashes no symbol")))
            })
            .collect()
    }
}

/// Row/column paradigm: the symbol in cell `(r, c)` of a row-major grid is
/// flashed by row trial `r` and column trial `n_rows + c`.
pub fn rcp_matrix(n_rows: usize, n_cols: usize, vocab_size: usize) -> Result<CodeMatrix> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
    }
    if n_rows * n_cols < vocab_size {
        return Err(Error::InvalidParameter(format!(
            "a {n_rows}x{n_cols} grid cannot hold {vocab_size} symbols"
        )));
    }
    if (n_rows - 1) * n_cols >= vocab_size || (vocab_size < n_cols && n_rows > 0) {
        return Err(Error::InvalidParameter(format!(
            "a {n_rows}x{n_cols} grid leaves a row or column empty for {vocab_size} symbols"
        )));
    }
    let rows = (0..vocab_size)
        .map(|i| {
            let mut word = vec![0u8; n_rows + n_cols];
            word[i / n_cols] = 1;
            word[n_rows + i % n_cols] = 1;
            word
        })
        .collect();
    CodeMatrix::new(rows)
}

fn word_value(word: &[u8]) -> u64 {
    word.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// Every binary word of the given length with weight in `1..=max_weight`,
/// sorted by weight then numeric value (position 0 most significant).
pub fn alp_codeword_pool(codeword_length: usize, max_weight: usize) -> Result<Vec<Vec<u8>>> {
    if codeword_length == 0 || codeword_length > 32 {
        return Err(Error::InvalidParameter("codeword length must lie in 1..=32".into()));
    }
    if max_weight == 0 || max_weight > codeword_length {
        return Err(Error::InvalidParameter("max weight must lie in 1..=codeword length".into()));
    }
    let mut words: Vec<Vec<u8>> = (1u64..1 << codeword_length)
        .filter(|v| (v.count_ones() as usize) <= max_weight)
        .map(|v| (0..codeword_length).map(|j| ((v >> (codeword_length - 1 - j)) & 1) as u8).collect())
        .collect();
    words.sort_by_key(|w| (w.iter().filter(|&&b| b == 1).count(), word_value(w)));
    Ok(words)
}

/// Moves the less probable symbol of each duplicated pair onto the next
/// spare codeword until all rows are distinct.
pub fn repair_duplicates(
    rows: &mut [Vec<u8>],
    ranked: &[usize],
    spare: &mut VecDeque<Vec<u8>>,
) -> Result<()> {
    loop {
        let mut duplicate = None;
        'scan: for (a_pos, &a) in ranked.iter().enumerate() {
            for &b in &ranked[a_pos + 1..] {
                if rows[a] == rows[b] {
                    duplicate = Some(b);
                    break 'scan;
                }
            }
        }
        let Some(loser) = duplicate else { return Ok(()) };
        let next = loop {
            let Some(word) = spare.pop_front() else {
                return Err(Error::CodeAssignment("ran out of unused codewords".into()));
            };
            if !rows.contains(&word) {
                break word;
            }
        };
        rows[loser] = next;
    }
}

/// Posterior-ranked codeword assignment: likelier symbols receive heavier
/// codewords. Returns the induced trials as a pool that selects all of
/// them, and the code matrix.
pub fn alp_pool_from_posterior(
    posterior: &Pmf,
    codeword_length: usize,
    max_weight: usize,
) -> Result<(CandidatePool, CodeMatrix)> {
    let vocab_size = posterior.len();
    let mut words = alp_codeword_pool(codeword_length, max_weight)?;
    if words.len() < vocab_size {
        return Err(Error::CodeAssignment(format!(
            "{} codewords cannot label {vocab_size} symbols",
            words.len()
        )));
    }
    // heaviest first, numeric order within a weight
    words.sort_by_key(|w| (std::cmp::Reverse(w.iter().filter(|&&b| b == 1).count()), word_value(w)));
    let ranked = posterior.ranked();
    let mut rows = vec![Vec::new(); vocab_size];
    for (word, &symbol) in words.iter().zip(&ranked) {
        rows[symbol] = word.clone();
    }
    let mut spare: VecDeque<Vec<u8>> = words[vocab_size..].iter().cloned().collect();
    repair_duplicates(&mut rows, &ranked, &mut spare)?;
    let matrix = CodeMatrix::new(rows)?;
    debug_assert!(matrix.rows_distinct());
    let trials = matrix.trials()?;
    let pool = CandidatePool::new(trials, max_weight, codeword_length)
        .map_err(|e| Error::CodeAssignment(e.to_string()))?;
    Ok((pool, matrix))
}

/// All singletons; each symbol may be flashed at most once per sequence.
pub fn singleton_pool(vocab_size: usize, n_trials: usize) -> Result<CandidatePool> {
    if n_trials > vocab_size {
        return Err(Error::InvalidParameter(format!(
            "{n_trials} singleton trials exceed the vocabulary of {vocab_size}"
        )));
    }
    let trials = (0..vocab_size).map(|i| Trial::singleton(i, vocab_size)).collect::<Result<Vec<_>>>()?;
    CandidatePool::new(trials, 1, n_trials)
}

/// How sequences are generated in one experimental arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "paradigm", rename_all = "snake_case", deny_unknown_fields)]
pub enum Paradigm {
    /// Random singleton subsets.
    RsvpRandom { trials_per_sequence: usize },
    /// Greedy singleton subsets.
    Arsvp { trials_per_sequence: usize },
    /// Every symbol once per sequence, shuffled.
    Scp {},
    /// Greedy singleton subsets shown on the matrix layout.
    Ascp { trials_per_sequence: usize },
    /// All row and column flashes, shuffled.
    Rcp { rows: usize, cols: usize },
    /// Posterior-ranked codeword assignment.
    Alp { codeword_length: usize, max_weight: usize },
}

impl Paradigm {
    pub fn label(&self) -> &'static str {
        match self {
            Paradigm::RsvpRandom { .. } => "rsvp_random",
            Paradigm::Arsvp { .. } => "arsvp",
            Paradigm::Scp {} => "scp",
            Paradigm::Ascp { .. } => "ascp",
            Paradigm::Rcp { .. } => "rcp",
            Paradigm::Alp { .. } => "alp",
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, Paradigm::Arsvp { .. } | Paradigm::Ascp { .. } | Paradigm::Alp { .. })
    }

    /// Trials shown in every sequence.
    pub fn trials_per_sequence(&self, vocab_size: usize) -> usize {
        match *self {
            Paradigm::RsvpRandom { trials_per_sequence }
            | Paradigm::Arsvp { trials_per_sequence }
            | Paradigm::Ascp { trials_per_sequence } => trials_per_sequence,
            Paradigm::Scp {} => vocab_size,
            Paradigm::Rcp { rows, cols } => rows + cols,
            Paradigm::Alp { codeword_length, .. } => codeword_length,
        }
    }

    /// Checks that sequences can be generated; run before any session.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        self.build(vocab_size).map(|_| ())
    }

    /// Precomputes the fixed part of the paradigm.
    pub fn build(&self, vocab_size: usize) -> Result<ParadigmPlan> {
        let plan = match *self {
            Paradigm::RsvpRandom { trials_per_sequence } => {
                ParadigmPlan::Random(singleton_pool(vocab_size, nonzero(trials_per_sequence)?)?)
            }
            Paradigm::Arsvp { trials_per_sequence } | Paradigm::Ascp { trials_per_sequence } => {
                ParadigmPlan::Greedy(singleton_pool(vocab_size, nonzero(trials_per_sequence)?)?)
            }
            Paradigm::Scp {} => ParadigmPlan::Fixed(singleton_pool(vocab_size, vocab_size)?.candidates().to_vec()),
            Paradigm::Rcp { rows, cols } => ParadigmPlan::Fixed(rcp_matrix(rows, cols, vocab_size)?.trials()?),
            Paradigm::Alp { codeword_length, max_weight } => {
                alp_pool_from_posterior(&Pmf::uniform(vocab_size), codeword_length, max_weight)?;
                ParadigmPlan::Codebook { codeword_length, max_weight }
            }
        };
        Ok(plan)
    }
}

fn nonzero(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidParameter("trials_per_sequence must be positive".into()));
    }
    Ok(n)
}

/// Prepared paradigm state, shared read-only across sessions.
#[derive(Debug, Clone, PartialEq)]
pub enum ParadigmPlan {
    Random(CandidatePool),
    Greedy(CandidatePool),
    Fixed(Vec<Trial>),
    Codebook { codeword_length: usize, max_weight: usize },
}

/// Query source for one epoch of one paradigm.
pub struct ParadigmQuery<'a, R: Rng> {
    plan: &'a ParadigmPlan,
    log_sigma_plus: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng> ParadigmQuery<'a, R> {
    pub fn new(plan: &'a ParadigmPlan, log_sigma_plus: f64, rng: &'a mut R) -> Self {
        Self { plan, log_sigma_plus, rng }
    }
}

impl<R: Rng> QuerySource for ParadigmQuery<'_, R> {
    fn next_sequence(&mut self, posterior: &Pmf) -> Result<SequenceSpec> {
        let objective = || QueryObjective::from_log_sigma(posterior.clone(), self.log_sigma_plus);
        let selected = match self.plan {
            ParadigmPlan::Random(pool) => return random_sequence(pool, self.rng),
            ParadigmPlan::Greedy(pool) => greedy_select(&objective()?, pool)?,
            ParadigmPlan::Fixed(trials) => SequenceSpec::new(trials.clone())?,
            ParadigmPlan::Codebook { codeword_length, max_weight } => {
                let (pool, _) = alp_pool_from_posterior(posterior, *codeword_length, *max_weight)?;
                greedy_select(&objective()?, &pool)?
            }
        };
        Ok(shuffle_presentation(selected, self.rng))
    }
}
