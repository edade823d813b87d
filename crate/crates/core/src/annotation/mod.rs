//! Human judgment collection and aggregation.
//!
//! Judgments are appended to a JSONL journal (the single source of truth),
//! replayed into an in-memory [`Store`] that hands out assignments, and
//! reduced to per-pair [`AggregatedLabel`]s and per-pipeline human rates.

mod journal;
mod service;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateRecord, PipelineId};

pub use journal::{read_journal, Journal, Replay};
pub use service::{router, run_service, spawn_service, ServiceConfig, ServiceHandle, SharedStore};
pub use store::{PairStatus, Progress, Store, SubmitOutcome, VoteCounts};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("annotator id must be non-empty")]
    EmptyAnnotator,
    #[error("unknown pair {0:?}")]
    UnknownPair(String),
    #[error("invalid label {0:?} (expected paraphrase, not_paraphrase or skip)")]
    BadLabel(String),
    #[error("duplicate pair id {0:?} in dataset")]
    DuplicatePair(String),
    #[error("invalid overlap policy: {0}")]
    Policy(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Paraphrase,
    NotParaphrase,
    Skip,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Paraphrase, Label::NotParaphrase, Label::Skip];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Paraphrase => "paraphrase",
            Label::NotParaphrase => "not_paraphrase",
            Label::Skip => "skip",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| AnnotationError::BadLabel(s.to_string()))
    }
}

/// One annotator's verdict on one pair. Timestamps are kept at millisecond
/// precision so that journal replay reproduces them exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub pair_id: String,
    pub annotator_id: String,
    pub label: Label,
    pub timestamp: DateTime<Utc>,
}

impl Judgment {
    pub fn new(
        pair_id: impl Into<String>,
        annotator_id: impl Into<String>,
        label: Label,
        timestamp: DateTime<Utc>,
    ) -> Result<Self, AnnotationError> {
        let annotator_id = annotator_id.into();
        if annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        Ok(Self {
            pair_id: pair_id.into(),
            annotator_id,
            label,
            timestamp: timestamp.trunc_subsecs(3),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPolicy {
    /// Judgments wanted per pair.
    pub target_overlap: u32,
    /// Non-skip votes needed before a pair can count as correct.
    pub min_votes: u32,
    /// Paraphrase share needed, in (0.5, 1].
    pub threshold: f64,
}

impl Default for OverlapPolicy {
    fn default() -> Self {
        Self {
            target_overlap: 5,
            min_votes: 3,
            threshold: 0.8,
        }
    }
}

impl OverlapPolicy {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.target_overlap == 0 {
            return Err(AnnotationError::Policy("target_overlap must be at least 1".into()));
        }
        if self.min_votes == 0 {
            return Err(AnnotationError::Policy("min_votes must be at least 1".into()));
        }
        if !(self.threshold > 0.5 && self.threshold <= 1.0) {
            return Err(AnnotationError::Policy(format!(
                "threshold {} outside (0.5, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn is_correct(&self, votes_paraphrase: u32, votes_total: u32) -> bool {
        // tolerance keeps 4/5 >= 0.8 true under float rounding
        votes_total >= self.min_votes
            && votes_total > 0
            && f64::from(votes_paraphrase) >= self.threshold * f64::from(votes_total) - 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub pair_id: String,
    pub votes_paraphrase: u32,
    pub votes_not: u32,
    /// Excludes skips.
    pub votes_total: u32,
    pub high_confidence_correct: bool,
}

/// Per-pair vote totals, ordered by pair id. Every pair with at least one
/// judgment (skips included) gets a label.
pub fn aggregate(judgments: &[Judgment], policy: &OverlapPolicy) -> Vec<AggregatedLabel> {
    let mut votes: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for j in judgments {
        let entry = votes.entry(j.pair_id.as_str()).or_default();
        match j.label {
            Label::Paraphrase => entry.0 += 1,
            Label::NotParaphrase => entry.1 += 1,
            Label::Skip => {}
        }
    }
    votes
        .into_iter()
        .map(|(pair_id, (p, n))| AggregatedLabel {
            pair_id: pair_id.to_string(),
            votes_paraphrase: p,
            votes_not: n,
            votes_total: p + n,
            high_confidence_correct: policy.is_correct(p, p + n),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanRate {
    pub pairs: usize,
    pub correct: usize,
    pub rate: f64,
}

/// Maps judged pair ids to the pipeline that produced them.
pub type PipelineAssignment = BTreeMap<String, PipelineId>;

pub fn assignment_from_records(records: &[CandidateRecord]) -> PipelineAssignment {
    records.iter().map(|r| (r.id().to_string(), r.pipeline)).collect()
}

/// Recovers the pipeline from ids of the form `m1-p0001`.
pub fn pipeline_from_id(pair_id: &str) -> Option<PipelineId> {
    pair_id.split_once('-').and_then(|(prefix, _)| prefix.parse().ok())
}

pub fn assignment_from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> PipelineAssignment {
    ids.into_iter()
        .filter_map(|id| pipeline_from_id(id).map(|p| (id.to_string(), p)))
        .collect()
}

/// Fraction of each pipeline's pairs that are high-confidence correct.
/// Assigned pairs without a label count as not correct.
pub fn human_rates(labels: &[AggregatedLabel], assignment: &PipelineAssignment) -> BTreeMap<PipelineId, HumanRate> {
    let correct: HashMap<&str, bool> = labels
        .iter()
        .map(|l| (l.pair_id.as_str(), l.high_confidence_correct))
        .collect();
    let mut tallies: BTreeMap<PipelineId, (usize, usize)> = BTreeMap::new();
    for (pair_id, pipeline) in assignment {
        let entry = tallies.entry(*pipeline).or_default();
        entry.0 += 1;
        if correct.get(pair_id.as_str()).copied().unwrap_or(false) {
            entry.1 += 1;
        }
    }
    tallies
        .into_iter()
        .map(|(pipeline, (pairs, correct))| {
            let rate = correct as f64 / pairs as f64;
            (pipeline, HumanRate { pairs, correct, rate })
        })
        .collect()
}

/// Fleiss' kappa over {paraphrase, not_paraphrase}, skips excluded.
///
/// Only items whose rater count equals the modal count are used (ties go to
/// the larger count). `None` when fewer than two such items remain, when
/// fewer than two raters rated them, or when expected agreement is 1.
pub fn agreement_kappa(judgments: &[Judgment]) -> Option<f64> {
    let mut items: BTreeMap<&str, [u64; 2]> = BTreeMap::new();
    for j in judgments {
        let slot = match j.label {
            Label::Paraphrase => 0,
            Label::NotParaphrase => 1,
            Label::Skip => continue,
        };
        items.entry(j.pair_id.as_str()).or_default()[slot] += 1;
    }

    let mut count_freq: BTreeMap<u64, usize> = BTreeMap::new();
    for c in items.values() {
        *count_freq.entry(c[0] + c[1]).or_default() += 1;
    }
    let (&n, _) = count_freq.iter().max_by_key(|&(n, freq)| (*freq, *n))?;
    let rows: Vec<[u64; 2]> = items.into_values().filter(|c| c[0] + c[1] == n).collect();
    if rows.len() < 2 || n < 2 {
        return None;
    }

    let big_n = rows.len() as f64;
    let nf = n as f64;
    let p_bar = rows
        .iter()
        .map(|c| (c[0] * c[0] + c[1] * c[1] - n) as f64 / (nf * (nf - 1.0)))
        .sum::<f64>()
        / big_n;
    let p_e: f64 = (0..2)
        .map(|j| {
            let pj = rows.iter().map(|c| c[j]).sum::<u64>() as f64 / (big_n * nf);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return None;
    }
    Some(((p_bar - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0))
}

/// One [`AggregatedLabel`] per line.
pub fn labels_to_jsonl(labels: &[AggregatedLabel]) -> String {
    labels
        .iter()
        .map(|l| serde_json::to_string(l).expect("label serializes") + "\n")
        .collect()
}

pub fn write_labels_jsonl(labels: &[AggregatedLabel], path: &Path) -> Result<(), AnnotationError> {
    std::fs::write(path, labels_to_jsonl(labels)).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_labels_jsonl(path: &Path) -> Result<Vec<AggregatedLabel>, AnnotationError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| AnnotationError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn j(pair: &str, who: &str, label: Label) -> Judgment {
        Judgment::new(pair, who, label, ts()).unwrap()
    }

    fn votes(pair: &str, labels: &str) -> Vec<Judgment> {
        labels
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let label = match c {
                    'P' => Label::Paraphrase,
                    'N' => Label::NotParaphrase,
                    _ => Label::Skip,
                };
                j(pair, &format!("a{i}"), label)
            })
            .collect()
    }

    fn single(labels: &str) -> AggregatedLabel {
        aggregate(&votes("p1", labels), &OverlapPolicy::default()).remove(0)
    }

    #[test]
    fn labels_parse() {
        assert_eq!("not_paraphrase".parse::<Label>().unwrap(), Label::NotParaphrase);
        assert!(matches!("maybe".parse::<Label>(), Err(AnnotationError::BadLabel(_))));
        assert_eq!(serde_json::to_string(&Label::Skip).unwrap(), "\"skip\"");
    }

    #[test]
    fn empty_annotator_rejected() {
        assert!(matches!(
            Judgment::new("p1", " ", Label::Skip, ts()),
            Err(AnnotationError::EmptyAnnotator)
        ));
    }

    #[test]
    fn policy_bounds() {
        assert!(OverlapPolicy::default().validate().is_ok());
        let bad = |min_votes, threshold| OverlapPolicy {
            target_overlap: 5,
            min_votes,
            threshold,
        };
        assert!(bad(0, 0.8).validate().is_err());
        assert!(bad(3, 0.5).validate().is_err());
        assert!(bad(3, 1.01).validate().is_err());
        assert!(bad(3, 1.0).validate().is_ok());
    }

    #[test]
    fn threshold_cases() {
        assert!(single("PPPPP").high_confidence_correct);
        assert!(!single("PPPNN").high_confidence_correct);
        assert!(single("PPPPN").high_confidence_correct);
        assert!(single("PPP").high_confidence_correct);
        assert!(!single("PP").high_confidence_correct);
        let skipped = single("PPSSS");
        assert_eq!((skipped.votes_total, skipped.high_confidence_correct), (2, false));
        assert_eq!(single("SSS").votes_total, 0);
    }

    #[test]
    fn rates_count_unlabelled_pairs() {
        let mut js = votes("m1-p0001", "PPPP");
        js.extend(votes("m1-p0002", "NNNN"));
        js.extend(votes("m2-p0001", "PPPPN"));
        let labels = aggregate(&js, &OverlapPolicy::default());
        let mut assignment = assignment_from_ids(labels.iter().map(|l| l.pair_id.as_str()));
        assignment.insert("m1-p0003".into(), PipelineId::M1);
        let rates = human_rates(&labels, &assignment);
        assert_eq!(rates[&PipelineId::M1].pairs, 3);
        assert_eq!(rates[&PipelineId::M1].correct, 1);
        assert!((rates[&PipelineId::M1].rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rates[&PipelineId::M2].rate, 1.0);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let labels = aggregate(&votes("m1-p0001", "PPPN"), &OverlapPolicy::default());
        write_labels_jsonl(&labels, &path).unwrap();
        assert_eq!(read_labels_jsonl(&path).unwrap(), labels);
    }

    #[test]
    fn pipeline_prefix() {
        assert_eq!(pipeline_from_id("m3-p0010"), Some(PipelineId::M3));
        assert_eq!(pipeline_from_id("p0010"), None);
        assert_eq!(pipeline_from_id("m9-p1"), None);
    }

    #[test]
    fn kappa_perfect_agreement() {
        let mut js = votes("i1", "PPP");
        js.extend(votes("i2", "NNN"));
        assert!((agreement_kappa(&js).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kappa_degenerate() {
        let mut js = votes("i1", "PPP");
        js.extend(votes("i2", "PPP"));
        assert_eq!(agreement_kappa(&js), None);
        assert_eq!(agreement_kappa(&votes("i1", "PN")), None);
        assert_eq!(agreement_kappa(&[]), None);
    }

    #[test]
    fn kappa_textbook_value() {
        // N=3, n=2 rows (2,0), (1,1), (0,2): P̄ = 2/3, P̄e = 1/2, κ = 1/3
        let mut js = votes("i1", "PP");
        js.extend(votes("i2", "PN"));
        js.extend(votes("i3", "NN"));
        assert!((agreement_kappa(&js).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_filters_to_modal_count() {
        let mut js = votes("i1", "PPP");
        js.extend(votes("i2", "NNN"));
        js.extend(votes("i3", "PN"));
        js.extend(votes("i4", "PPPSS"));
        js.extend(votes("i4b", "NNNSS"));
        assert!((agreement_kappa(&js).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kappa_random_raters_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let js: Vec<Judgment> = (0..200)
            .flat_map(|i| {
                let labels: String = (0..5).map(|_| if rng.random_bool(0.5) { 'P' } else { 'N' }).collect();
                votes(&format!("i{i:03}"), &labels)
            })
            .collect();
        assert!(agreement_kappa(&js).unwrap().abs() < 0.05);
    }

    proptest! {
        #[test]
        fn aggregate_invariants(labels in "[PNS]{0,8}", extra in 0usize..4) {
            let policy = OverlapPolicy::default();
            let base = votes("p1", &labels);
            let agg = aggregate(&base, &policy);
            for l in &agg {
                prop_assert_eq!(l.votes_total, l.votes_paraphrase + l.votes_not);
                prop_assert!(!l.high_confidence_correct || l.votes_total >= policy.min_votes);
            }
            // adding P votes never turns a correct pair incorrect
            let mut more = base.clone();
            for k in 0..extra {
                more.push(j("p1", &format!("extra{k}"), Label::Paraphrase));
            }
            let before = agg.first().is_some_and(|l| l.high_confidence_correct);
            let after = aggregate(&more, &policy).first().is_some_and(|l| l.high_confidence_correct);
            prop_assert!(!before || after);
        }

        #[test]
        fn kappa_in_range(rows in proptest::collection::vec("[PN]{3}", 2..20)) {
            let js: Vec<Judgment> = rows.iter().enumerate().flat_map(|(i, r)| votes(&format!("i{i}"), r)).collect();
            if let Some(k) = agreement_kappa(&js) {
                prop_assert!((-1.0..=1.0).contains(&k));
            }
        }
    }
}
