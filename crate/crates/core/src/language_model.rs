//! Character n-gram language model supplying context priors over the
//! vocabulary, plus phrase difficulty scoring and the phrase pool.
//!
//! The model predicts every vocabulary symbol except backspace. Backspace
//! mass is spliced in by [`NgramModel::prior`] at a fixed probability.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Pmf, Vocabulary};
use crate::error::{Error, Result};

/// Words bundled with the crate for training the default model.
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.txt");

/// Copy-phrase tasks bundled with the crate, one per line.
pub const BUNDLED_PHRASES: &str = include_str!("../data/phrases.txt");

pub const DEFAULT_ORDER: usize = 6;
pub const DEFAULT_BACKSPACE_PROB: f64 = 0.05;
pub const DIFFICULTY_LEVELS: usize = 5;

/// Interpolation weights: `top_weight` on the highest order whose context
/// was observed, multiplied by `decay` per lower order, residual on uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub top_weight: f64,
    pub decay: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { top_weight: 0.4, decay: 0.6 }
    }
}

impl Smoothing {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.top_weight) || !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::InvalidParameter(
                "smoothing weights must lie in [0, 1]".into(),
            ));
        }
        // Sum of a geometric series starting at top_weight with ratio decay
        // is at most top_weight / (1 - decay); it must leave room for uniform.
        let worst = if self.decay < 1.0 { self.top_weight / (1.0 - self.decay) } else { f64::INFINITY };
        if self.top_weight > 0.0 && worst > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(
                "smoothing weights can exceed unit total mass".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CountTable {
    counts: Vec<u32>,
    total: u64,
}

/// Interpolated character n-gram model.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    vocab: Vocabulary,
    /// Vocabulary indices of the predicted symbols, in vocabulary order.
    lm_symbols: Vec<usize>,
    /// Maps a vocabulary index to its position in `lm_symbols`.
    lm_code: Vec<Option<u8>>,
    space_code: u8,
    /// `tables[k]` holds contexts of length `k`, i.e. order `k + 1`.
    tables: Vec<HashMap<Vec<u8>, CountTable>>,
    smoothing: Smoothing,
}

/// The `order - 1` most recent symbols, left-padded with space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LmContext {
    history: Vec<u8>,
}

impl LmContext {
    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

impl NgramModel {
    pub fn train(vocab: &Vocabulary, corpus_text: &str, order: usize) -> Result<Self> {
        Self::train_with(vocab, corpus_text, order, Smoothing::default())
    }

    pub fn train_with(
        vocab: &Vocabulary,
        corpus_text: &str,
        order: usize,
        smoothing: Smoothing,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("n-gram order must be at least 1".into()));
        }
        smoothing.validate()?;
        let lm_symbols: Vec<usize> =
            (0..vocab.len()).filter(|&i| i != vocab.backspace_index()).collect();
        if lm_symbols.len() > u8::MAX as usize {
            return Err(Error::InvalidVocabulary("too many symbols for the n-gram model".into()));
        }
        let mut lm_code = vec![None; vocab.len()];
        for (code, &index) in lm_symbols.iter().enumerate() {
            lm_code[index] = Some(code as u8);
        }
        let space_code = lm_code[vocab.space_index()].expect("space is a predicted symbol");

        let mut model = Self {
            order,
            vocab: vocab.clone(),
            lm_symbols,
            lm_code,
            space_code,
            tables: vec![HashMap::new(); order],
            smoothing,
        };
        let text = model.normalize_text(corpus_text);
        if text.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let width = model.lm_symbols.len();
        for (pos, &symbol) in text.iter().enumerate() {
            for ctx_len in 0..order.min(pos + 1) {
                let context = text[pos - ctx_len..pos].to_vec();
                let table = model.tables[ctx_len]
                    .entry(context)
                    .or_insert_with(|| CountTable { counts: vec![0; width], total: 0 });
                table.counts[symbol as usize] += 1;
                table.total += 1;
            }
        }
        Ok(model)
    }

    /// Uppercases, maps anything the model cannot predict to space and
    /// collapses runs of spaces.
    fn normalize_text(&self, text: &str) -> Vec<u8> {
        let mut out = Vec::with_capacity(text.len());
        for c in text.chars() {
            let c = c.to_ascii_uppercase();
            let code = self
                .vocab
                .index_of(c)
                .ok()
                .and_then(|i| self.lm_code[i])
                .unwrap_or(self.space_code);
            if code == self.space_code && out.last() == Some(&self.space_code) {
                continue;
            }
            out.push(code);
        }
        out
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Result<Self> {
        smoothing.validate()?;
        self.smoothing = smoothing;
        Ok(self)
    }

    /// Number of predicted symbols (vocabulary size minus backspace).
    pub fn predicted_symbols(&self) -> usize {
        self.lm_symbols.len()
    }

    /// Builds the context from typed vocabulary indices, most recent last.
    pub fn context(&self, typed: &[usize]) -> LmContext {
        let want = self.order - 1;
        let tail = &typed[typed.len().saturating_sub(want)..];
        let mut history = vec![self.space_code; want - tail.len()];
        history.extend(tail.iter().map(|&i| {
            self.lm_code.get(i).copied().flatten().unwrap_or(self.space_code)
        }));
        LmContext { history }
    }

    /// Unsmoothed relative frequency of `symbol` after `context` for the
    /// given order, or `None` when the context was never observed.
    pub fn mle(&self, order: usize, context: &[usize], symbol: usize) -> Option<f64> {
        if order == 0 || order > self.order || context.len() < order - 1 {
            return None;
        }
        let context: Vec<u8> = context[context.len() - (order - 1)..]
            .iter()
            .map(|&i| self.lm_code.get(i).copied().flatten())
            .collect::<Option<_>>()?;
        let code = self.lm_code.get(symbol).copied().flatten()?;
        let table = self.tables[order - 1].get(&context)?;
        Some(table.counts[code as usize] as f64 / table.total as f64)
    }

    /// Smoothed distribution over the predicted symbols, indexed by model code.
    fn predictive(&self, context: &LmContext) -> Vec<f64> {
        let width = self.lm_symbols.len();
        let mut probs = vec![0.0; width];
        let mut weight = self.smoothing.top_weight;
        let mut used = 0.0;
        for ctx_len in (0..self.order).rev() {
            let ctx = &context.history[context.history.len() - ctx_len..];
            if let Some(table) = self.tables[ctx_len].get(ctx) {
                let scale = weight / table.total as f64;
                for (p, &c) in probs.iter_mut().zip(&table.counts) {
                    *p += scale * c as f64;
                }
                used += weight;
                weight *= self.smoothing.decay;
            }
        }
        let floor = (1.0 - used) / width as f64;
        for p in &mut probs {
            *p += floor;
        }
        probs
    }

    /// Context prior over the full vocabulary with `backspace_prob` on `<`.
    pub fn prior(&self, context: &LmContext, backspace_prob: f64) -> Result<Pmf> {
        if !(0.0..1.0).contains(&backspace_prob) {
            return Err(Error::InvalidParameter("backspace_prob must lie in [0, 1)".into()));
        }
        let predictive = self.predictive(context);
        let mut weights = vec![0.0; self.vocab.len()];
        weights[self.vocab.backspace_index()] = backspace_prob;
        for (&index, p) in self.lm_symbols.iter().zip(predictive) {
            weights[index] = (1.0 - backspace_prob) * p;
        }
        Pmf::new(weights)
    }

    /// Mean negative log probability of `phrase` typed after `prefix`.
    pub fn difficulty_in_context(&self, prefix: &[usize], phrase: &[usize]) -> Result<f64> {
        if phrase.is_empty() {
            return Err(Error::InvalidParameter("phrase must be nonempty".into()));
        }
        let mut typed = prefix.to_vec();
        let mut total = 0.0;
        for &symbol in phrase {
            let prior = self.prior(&self.context(&typed), 0.0)?;
            total -= prior.get(symbol).ln();
            typed.push(symbol);
        }
        Ok(total / phrase.len() as f64)
    }
}

/// Mean negative log probability of each phrase character, left to right
/// from an empty context.
pub fn phrase_difficulty(model: &NgramModel, phrase: &str) -> Result<f64> {
    let encoded = model.vocabulary().encode(phrase)?;
    model.difficulty_in_context(&[], &encoded)
}

/// One copy-phrase task: an already-typed prefix and the missing text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseEntry {
    pub id: usize,
    pub prefix: Vec<usize>,
    pub goal: Vec<usize>,
    pub text: String,
    pub difficulty: f64,
    pub level: usize,
}

/// Phrases bucketed into difficulty quantile levels `1..=5`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhrasePool {
    entries: Vec<PhraseEntry>,
}

impl PhrasePool {
    /// Parses one task per line. A `|` separates the typed prefix from the
    /// missing text; without it the whole line is missing. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(model: &NgramModel, text: &str) -> Result<Self> {
        let vocab = model.vocabulary();
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (prefix, goal) = line.split_once('|').unwrap_or(("", line));
            let prefix = vocab.encode(prefix)?;
            let goal = vocab.encode(goal)?;
            if goal.is_empty() {
                return Err(Error::InvalidParameter(format!("phrase {line:?} has no missing text")));
            }
            if goal.contains(&vocab.backspace_index()) || prefix.contains(&vocab.backspace_index()) {
                return Err(Error::InvalidParameter(format!("phrase {line:?} contains backspace")));
            }
            let difficulty = model.difficulty_in_context(&prefix, &goal)?;
            entries.push(PhraseEntry {
                id: entries.len(),
                prefix,
                goal,
                text: line.to_string(),
                difficulty,
                level: 0,
            });
        }
        if entries.len() < DIFFICULTY_LEVELS {
            return Err(Error::InvalidParameter(format!(
                "phrase pool needs at least {DIFFICULTY_LEVELS} phrases, found {}",
                entries.len()
            )));
        }
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| entries[a].difficulty.total_cmp(&entries[b].difficulty).then(a.cmp(&b)));
        let n = entries.len();
        for (rank, &i) in order.iter().enumerate() {
            entries[i].level = 1 + rank * DIFFICULTY_LEVELS / n;
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[PhraseEntry] {
        &self.entries
    }

    pub fn level(&self, level: usize) -> impl Iterator<Item = &PhraseEntry> {
        self.entries.iter().filter(move |e| e.level == level)
    }

    pub fn get(&self, id: usize) -> Option<&PhraseEntry> {
        self.entries.get(id)
    }
}
