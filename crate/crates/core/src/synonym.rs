//! English paraphrasing by lexicon-driven synonym substitution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Lang, SynonymLexicon};
use crate::tokenize::{detokenize, tokenize_spaced};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynonymError {
    #[error("cannot paraphrase an empty sentence")]
    EmptySentence,
    #[error("replacement probability {0} outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplacementMode {
    /// Replace every word that has a lexicon entry with its first synonym.
    Deterministic,
    /// Replace each eligible word with a fixed probability, picking a
    /// synonym uniformly from a seeded generator.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplacementPolicy {
    pub mode: ReplacementMode,
    pub probability: f64,
    pub seed: u64,
}

impl Default for ReplacementPolicy {
    fn default() -> Self {
        Self::deterministic()
    }
}

impl ReplacementPolicy {
    pub const DEFAULT_PROBABILITY: f64 = 0.5;

    pub fn deterministic() -> Self {
        Self {
            mode: ReplacementMode::Deterministic,
            probability: Self::DEFAULT_PROBABILITY,
            seed: 0,
        }
    }

    pub fn stochastic(probability: f64, seed: u64) -> Result<Self, SynonymError> {
        let policy = Self {
            mode: ReplacementMode::Stochastic,
            probability,
            seed,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), SynonymError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(SynonymError::BadProbability(self.probability));
        }
        Ok(())
    }

    /// Same policy with the seed mixed with `salt`, so that each sentence of
    /// a batch draws from its own stream regardless of scheduling.
    pub fn salted(&self, salt: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for b in salt.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self { seed: h, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplacementLogEntry {
    /// Token index in the sentence.
    pub position: usize,
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub paraphrase: String,
    pub replacements: usize,
    pub unchanged: bool,
    pub log: Vec<ReplacementLogEntry>,
}

/// Paraphrases `sentence` by swapping words for lexicon synonyms.
///
/// Output is lowercase and keeps the original token boundaries: tokens are
/// joined with one space wherever the input had whitespace between them.
pub fn replace_synonyms(
    sentence: &str,
    lexicon: &SynonymLexicon,
    policy: &ReplacementPolicy,
) -> Result<Replacement, SynonymError> {
    policy.validate()?;
    match policy.mode {
        ReplacementMode::Deterministic => substitute(sentence, lexicon, |synonyms| Some(&synonyms[0])),
        ReplacementMode::Stochastic => {
            let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
            replace_synonyms_with_rng(sentence, lexicon, policy.probability, &mut rng)
        }
    }
}

/// Stochastic replacement drawing from a caller-owned generator.
pub fn replace_synonyms_with_rng<R: Rng>(
    sentence: &str,
    lexicon: &SynonymLexicon,
    probability: f64,
    rng: &mut R,
) -> Result<Replacement, SynonymError> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(SynonymError::BadProbability(probability));
    }
    substitute(sentence, lexicon, |synonyms| {
        if rng.random_bool(probability) {
            Some(&synonyms[rng.random_range(0..synonyms.len())])
        } else {
            None
        }
    })
}

fn substitute<'l>(
    sentence: &str,
    lexicon: &'l SynonymLexicon,
    mut choose: impl FnMut(&'l [String]) -> Option<&'l String>,
) -> Result<Replacement, SynonymError> {
    if sentence.trim().is_empty() {
        return Err(SynonymError::EmptySentence);
    }
    let tokens = tokenize_spaced(sentence, Lang::En);
    let mut words = Vec::with_capacity(tokens.len());
    let mut log = Vec::new();
    for (position, t) in tokens.iter().enumerate() {
        let text = t.token.text();
        let synonyms = lexicon.lookup(text);
        let chosen = if t.token.is_punct() || synonyms.is_empty() {
            None
        } else {
            choose(synonyms)
        };
        match chosen {
            Some(replacement) => {
                log.push(ReplacementLogEntry {
                    position,
                    original: text.to_string(),
                    replacement: replacement.clone(),
                });
                words.push((replacement.as_str(), t.space_before));
            }
            None => words.push((text, t.space_before)),
        }
    }
    let replacements = log.len();
    Ok(Replacement {
        paraphrase: detokenize(words),
        replacements,
        unchanged: replacements == 0,
        log,
    })
}
