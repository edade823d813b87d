use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use super::journal::{Journal, Replay};
use super::{AnnotationError, Judgment, Label, OverlapPolicy};
use crate::corpus::SentencePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted,
    /// The annotator already judged this pair; nothing was stored.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub pairs_total: usize,
    /// Pairs that reached the target overlap.
    pub pairs_complete: usize,
    pub judgments_total: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoteCounts {
    pub paraphrase: usize,
    pub not_paraphrase: usize,
    pub skip: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairStatus {
    pub pair_id: String,
    pub source: String,
    pub candidate: String,
    pub judgments: usize,
    pub votes: VoteCounts,
}

/// Pairs under annotation plus every judgment received so far, optionally
/// backed by a journal. Pair ids order assignments.
#[derive(Debug)]
pub struct Store {
    pairs: BTreeMap<String, SentencePair>,
    policy: OverlapPolicy,
    judgments: Vec<Judgment>,
    counts: HashMap<String, usize>,
    seen: HashSet<(String, String)>,
    journal: Option<Journal>,
}

impl Store {
    /// In-memory store without persistence.
    pub fn new(pairs: Vec<SentencePair>, policy: OverlapPolicy) -> Result<Self, AnnotationError> {
        policy.validate()?;
        let mut map = BTreeMap::new();
        for pair in pairs {
            if map.contains_key(&pair.id) {
                return Err(AnnotationError::DuplicatePair(pair.id));
            }
            map.insert(pair.id.clone(), pair);
        }
        Ok(Self {
            pairs: map,
            policy,
            judgments: Vec::new(),
            counts: HashMap::new(),
            seen: HashSet::new(),
            journal: None,
        })
    }

    /// Store backed by the journal at `path`, replaying its contents. Journal
    /// lines naming unknown pairs or repeating a (pair, annotator) are
    /// treated as corruption.
    pub fn open(
        pairs: Vec<SentencePair>,
        policy: OverlapPolicy,
        path: &Path,
    ) -> Result<(Self, Replay), AnnotationError> {
        let mut store = Self::new(pairs, policy)?;
        let (journal, replay) = Journal::open(path)?;
        for (j, &line) in replay.judgments.iter().zip(&replay.line_numbers) {
            let corrupt = |message: String| AnnotationError::Corrupt {
                path: path.to_path_buf(),
                line,
                message,
            };
            match store.check(j) {
                Ok(SubmitOutcome::Accepted) => store.insert(j.clone()),
                Ok(SubmitOutcome::Duplicate) => {
                    return Err(corrupt(format!(
                        "duplicate judgment by {:?} on {:?}",
                        j.annotator_id, j.pair_id
                    )))
                }
                Err(e) => return Err(corrupt(e.to_string())),
            }
        }
        store.journal = Some(journal);
        Ok((store, replay))
    }

    pub fn policy(&self) -> &OverlapPolicy {
        &self.policy
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SentencePair> {
        self.pairs.values()
    }

    pub fn pair(&self, id: &str) -> Option<&SentencePair> {
        self.pairs.get(id)
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    /// Stored judgments for `pair_id`, skips included.
    pub fn judgment_count(&self, pair_id: &str) -> usize {
        self.counts.get(pair_id).copied().unwrap_or(0)
    }

    pub fn has_judged(&self, pair_id: &str, annotator_id: &str) -> bool {
        self.seen.contains(&(pair_id.to_string(), annotator_id.to_string()))
    }

    /// The unjudged-by-`annotator_id` pair below target overlap with the
    /// fewest judgments, lowest id first.
    pub fn next_task(&self, annotator_id: &str) -> Result<Option<&SentencePair>, AnnotationError> {
        if annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        let target = self.policy.target_overlap as usize;
        let mut best: Option<(usize, &SentencePair)> = None;
        for (id, pair) in &self.pairs {
            let n = self.judgment_count(id);
            if n >= target || self.has_judged(id, annotator_id) {
                continue;
            }
            if best.is_none_or(|(m, _)| n < m) {
                best = Some((n, pair));
            }
        }
        Ok(best.map(|(_, p)| p))
    }

    fn check(&self, judgment: &Judgment) -> Result<SubmitOutcome, AnnotationError> {
        if judgment.annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        if !self.pairs.contains_key(&judgment.pair_id) {
            return Err(AnnotationError::UnknownPair(judgment.pair_id.clone()));
        }
        if self.has_judged(&judgment.pair_id, &judgment.annotator_id) {
            return Ok(SubmitOutcome::Duplicate);
        }
        Ok(SubmitOutcome::Accepted)
    }

    fn insert(&mut self, judgment: Judgment) {
        *self.counts.entry(judgment.pair_id.clone()).or_default() += 1;
        self.seen
            .insert((judgment.pair_id.clone(), judgment.annotator_id.clone()));
        self.judgments.push(judgment);
    }

    /// Stores `judgment`, appending it durably to the journal first when one
    /// is attached. Duplicates leave both store and journal untouched.
    pub fn submit(&mut self, judgment: Judgment) -> Result<SubmitOutcome, AnnotationError> {
        let outcome = self.check(&judgment)?;
        if outcome == SubmitOutcome::Accepted {
            if let Some(journal) = &mut self.journal {
                journal.append(&judgment)?;
            }
            self.insert(judgment);
        }
        Ok(outcome)
    }

    pub fn progress(&self) -> Progress {
        let target = self.policy.target_overlap as usize;
        let mut per_annotator = BTreeMap::new();
        for j in &self.judgments {
            *per_annotator.entry(j.annotator_id.clone()).or_default() += 1;
        }
        Progress {
            pairs_total: self.pairs.len(),
            pairs_complete: self.pairs.keys().filter(|id| self.judgment_count(id) >= target).count(),
            judgments_total: self.judgments.len(),
            per_annotator,
        }
    }

    pub fn pair_status(&self, pair_id: &str) -> Option<PairStatus> {
        let pair = self.pairs.get(pair_id)?;
        let mut votes = VoteCounts {
            paraphrase: 0,
            not_paraphrase: 0,
            skip: 0,
        };
        for j in self.judgments.iter().filter(|j| j.pair_id == pair_id) {
            match j.label {
                Label::Paraphrase => votes.paraphrase += 1,
                Label::NotParaphrase => votes.not_paraphrase += 1,
                Label::Skip => votes.skip += 1,
            }
        }
        Some(PairStatus {
            pair_id: pair.id.clone(),
            source: pair.source.clone(),
            candidate: pair.candidate.clone(),
            judgments: self.judgment_count(pair_id),
            votes,
        })
    }
}
