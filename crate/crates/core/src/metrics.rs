//! Sentence-level BLEU, METEOR and term-frequency cosine similarity.
//!
//! All three metrics map a (candidate, reference) pair of token lists to a
//! value in `[0, 1]` and carry their intermediates in [`MetricScore::details`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateRecord, PipelineId, Scores, SynonymLexicon};
use crate::tokenize::{ngrams, tokenize};

/// Floor applied to zero modified precisions in BLEU.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const BLEU_MAX_ORDER: usize = 4;

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Scores are always computed as candidate (paraphrase) against the source side.
pub const SCORE_DIRECTION: &str = "candidate-vs-source";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{0} is undefined for an empty candidate")]
    EmptyCandidate(Metric),
    #[error("{0} is undefined for an empty reference")]
    EmptyReference(Metric),
    #[error("unknown metric {0:?} (valid: bleu, meteor, cosine)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Meteor,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Bleu, Metric::Meteor, Metric::Cosine];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Meteor => "meteor",
            Metric::Cosine => "cosine",
        }
    }

    pub fn get(self, scores: &Scores) -> Option<f64> {
        match self {
            Metric::Bleu => scores.bleu,
            Metric::Meteor => scores.meteor,
            Metric::Cosine => scores.cosine,
        }
    }

    fn set(self, scores: &mut Scores, value: f64) {
        let slot = match self {
            Metric::Bleu => &mut scores.bleu,
            Metric::Meteor => &mut scores.meteor,
            Metric::Cosine => &mut scores.cosine,
        };
        *slot = Some(value);
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "meteor" => Ok(Metric::Meteor),
            "cosine" => Ok(Metric::Cosine),
            other => Err(MetricError::UnknownMetric(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricScore {
    pub metric: Metric,
    pub value: f64,
    pub details: BTreeMap<&'static str, f64>,
}

impl MetricScore {
    pub fn detail(&self, name: &str) -> Option<f64> {
        self.details.get(name).copied()
    }
}

fn check_inputs<S: AsRef<str>>(metric: Metric, candidate: &[S], reference: &[S]) -> Result<(), MetricError> {
    if candidate.is_empty() {
        return Err(MetricError::EmptyCandidate(metric));
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference(metric));
    }
    Ok(())
}

/// Sentence BLEU with uniform weights over orders `1..=min(4, |candidate|)`.
pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Result<MetricScore, MetricError> {
    check_inputs(Metric::Bleu, candidate, reference)?;
    let orders = BLEU_MAX_ORDER.min(candidate.len());
    let weight = 1.0 / orders as f64;
    let mut details = BTreeMap::new();
    let mut log_sum = 0.0;
    const NAMES: [&str; BLEU_MAX_ORDER] = ["p1", "p2", "p3", "p4"];

    for n in 1..=orders {
        let cand = ngrams(candidate, n).expect("order >= 1");
        let refs = ngrams(reference, n).expect("order >= 1");
        let clipped: usize = cand
            .iter()
            .map(|(gram, &count)| count.min(refs.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len() - n + 1;
        let mut precision = clipped as f64 / total as f64;
        if precision == 0.0 {
            precision = BLEU_EPSILON;
        }
        details.insert(NAMES[n - 1], precision);
        log_sum += weight * precision.ln();
    }

    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    details.insert("bp", bp);
    details.insert("orders", orders as f64);

    Ok(MetricScore {
        metric: Metric::Bleu,
        value: bp * log_sum.exp(),
        details,
    })
}

/// Greedy unigram alignment: exact matches first, then lexicon synonyms.
///
/// Candidate tokens are visited left to right. Each reference position is
/// used at most once; among admissible positions the one directly after the
/// previous candidate token's position wins, otherwise the lowest index.
pub fn meteor_alignment<S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    lexicon: Option<&SynonymLexicon>,
) -> Vec<Option<usize>> {
    let mut used = vec![false; reference.len()];
    let mut alignment: Vec<Option<usize>> = vec![None; candidate.len()];

    let mut stage = |alignment: &mut Vec<Option<usize>>, matches: &dyn Fn(&str, &str) -> bool| {
        for i in 0..candidate.len() {
            if alignment[i].is_some() {
                continue;
            }
            let cand = candidate[i].as_ref();
            let extend = i
                .checked_sub(1)
                .and_then(|p| alignment[p])
                .map(|j| j + 1)
                .filter(|&j| j < reference.len() && !used[j] && matches(cand, reference[j].as_ref()));
            let chosen = extend.or_else(|| {
                (0..reference.len()).find(|&j| !used[j] && matches(cand, reference[j].as_ref()))
            });
            if let Some(j) = chosen {
                used[j] = true;
                alignment[i] = Some(j);
            }
        }
    };

    stage(&mut alignment, &|a, b| a == b);
    if let Some(lex) = lexicon {
        stage(&mut alignment, &|a, b| lex.lookup(a).iter().any(|s| s == b));
    }
    alignment
}

/// Number of maximal runs contiguous in both candidate and reference.
pub fn count_chunks(alignment: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    for (i, slot) in alignment.iter().enumerate() {
        let Some(j) = *slot else { continue };
        let continues = i > 0 && j > 0 && alignment[i - 1] == Some(j - 1);
        if !continues {
            chunks += 1;
        }
    }
    chunks
}

pub fn meteor<S: AsRef<str>>(
    candidate: &[S],
    reference: &[S],
    lexicon: Option<&SynonymLexicon>,
) -> Result<MetricScore, MetricError> {
    check_inputs(Metric::Meteor, candidate, reference)?;
    let alignment = meteor_alignment(candidate, reference, lexicon);
    let matches = alignment.iter().flatten().count();
    let chunks = count_chunks(&alignment);

    let mut details = BTreeMap::new();
    details.insert("matches", matches as f64);
    details.insert("chunks", chunks as f64);
    if matches == 0 {
        details.insert("precision", 0.0);
        details.insert("recall", 0.0);
        return Ok(MetricScore {
            metric: Metric::Meteor,
            value: 0.0,
            details,
        });
    }

    let m = matches as f64;
    let precision = m / candidate.len() as f64;
    let recall = m / reference.len() as f64;
    let fmean = precision * recall / (METEOR_ALPHA * precision + (1.0 - METEOR_ALPHA) * recall);
    let penalty = METEOR_GAMMA * (chunks as f64 / m).powf(METEOR_BETA);
    details.insert("precision", precision);
    details.insert("recall", recall);
    details.insert("fmean", fmean);
    details.insert("penalty", penalty);

    Ok(MetricScore {
        metric: Metric::Meteor,
        value: fmean * (1.0 - penalty),
        details,
    })
}

/// Cosine of raw term-frequency vectors over the union vocabulary.
pub fn cosine_similarity<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Result<MetricScore, MetricError> {
    check_inputs(Metric::Cosine, candidate, reference)?;
    fn tf<S: AsRef<str>>(tokens: &[S]) -> HashMap<&str, f64> {
        let mut counts: HashMap<&str, f64> = HashMap::new();
        for t in tokens {
            *counts.entry(t.as_ref()).or_insert(0.0) += 1.0;
        }
        counts
    }
    let u = tf(candidate);
    let v = tf(reference);
    let dot: f64 = u
        .iter()
        .filter_map(|(term, a)| v.get(term).map(|b| a * b))
        .sum();
    let norm = |w: &HashMap<&str, f64>| w.values().map(|x| x * x).sum::<f64>().sqrt();
    let (nu, nv) = (norm(&u), norm(&v));
    let value = (dot / (nu * nv)).clamp(0.0, 1.0);

    let mut details = BTreeMap::new();
    details.insert("dot", dot);
    details.insert("norm_candidate", nu);
    details.insert("norm_reference", nv);
    Ok(MetricScore {
        metric: Metric::Cosine,
        value,
        details,
    })
}

pub fn compute<S: AsRef<str>>(
    metric: Metric,
    candidate: &[S],
    reference: &[S],
    lexicon: Option<&SynonymLexicon>,
) -> Result<MetricScore, MetricError> {
    match metric {
        Metric::Bleu => bleu(candidate, reference),
        Metric::Meteor => meteor(candidate, reference, lexicon),
        Metric::Cosine => cosine_similarity(candidate, reference),
    }
}

/// Per-pipeline arithmetic means of the requested metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub n: usize,
    pub bleu: Option<f64>,
    pub meteor: Option<f64>,
    pub cosine: Option<f64>,
}

impl MetricMeans {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Bleu => self.bleu,
            Metric::Meteor => self.meteor,
            Metric::Cosine => self.cosine,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusScores {
    pub records: Vec<CandidateRecord>,
    pub means: BTreeMap<PipelineId, MetricMeans>,
    /// Records whose tokenization left one side empty.
    pub skipped: usize,
    pub direction: &'static str,
}

/// Scores every record (in parallel) and averages per pipeline in record order.
///
/// Metrics not requested keep whatever value the record already carried.
pub fn score_corpus(
    records: &[CandidateRecord],
    metrics: &[Metric],
    lexicon: Option<&SynonymLexicon>,
) -> CorpusScores {
    let scored: Vec<Option<CandidateRecord>> = records
        .par_iter()
        .map(|record| {
            let pair = &record.pair;
            let cand = tokenize(&pair.candidate, pair.candidate_lang);
            let reference = tokenize(&pair.source, pair.source_lang);
            if cand.is_empty() || reference.is_empty() {
                return None;
            }
            let mut scores = record.scores.unwrap_or_default();
            for &metric in metrics {
                let score = compute(metric, &cand, &reference, lexicon).expect("inputs checked non-empty");
                metric.set(&mut scores, score.value);
            }
            let mut out = record.clone();
            out.scores = Some(scores);
            Some(out)
        })
        .collect();

    let mut skipped = 0;
    let mut sums: BTreeMap<PipelineId, (usize, [f64; 3])> = BTreeMap::new();
    let mut out = Vec::with_capacity(records.len());
    for (original, scored) in records.iter().zip(scored) {
        match scored {
            Some(record) => {
                let entry = sums.entry(record.pipeline).or_insert((0, [0.0; 3]));
                entry.0 += 1;
                let scores = record.scores.expect("scored records carry scores");
                for &metric in metrics {
                    entry.1[metric as usize] += metric.get(&scores).expect("metric was just set");
                }
                out.push(record);
            }
            None => {
                skipped += 1;
                out.push(original.clone());
            }
        }
    }

    let means = sums
        .into_iter()
        .map(|(pipeline, (n, totals))| {
            let mean = |metric: Metric| metrics.contains(&metric).then(|| totals[metric as usize] / n as f64);
            let means = MetricMeans {
                n,
                bleu: mean(Metric::Bleu),
                meteor: mean(Metric::Meteor),
                cosine: mean(Metric::Cosine),
            };
            (pipeline, means)
        })
        .collect();

    CorpusScores {
        records: out,
        means,
        skipped,
        direction: SCORE_DIRECTION,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Lang, SentencePair};
    use proptest::prelude::*;

    const CAT: [&str; 3] = ["the", "cat", "sat"];
    const MAT: [&str; 6] = ["the", "cat", "sat", "on", "the", "mat"];

    #[test]
    fn bleu_identity() {
        assert_eq!(bleu(&CAT, &CAT).unwrap().value, 1.0);
        assert_eq!(bleu(&["x"], &["x"]).unwrap().value, 1.0);
    }

    #[test]
    fn bleu_brevity_only() {
        let s = bleu(&CAT, &MAT).unwrap();
        assert_eq!(s.detail("p1"), Some(1.0));
        assert_eq!(s.detail("p2"), Some(1.0));
        assert_eq!(s.detail("p3"), Some(1.0));
        assert_eq!(s.detail("p4"), None);
        assert!((s.detail("bp").unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.value - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn bleu_epsilon_floor() {
        let s = bleu(&["a", "b"], &["c", "d"]).unwrap();
        assert_eq!(s.detail("p1"), Some(BLEU_EPSILON));
        assert_eq!(s.detail("p2"), Some(BLEU_EPSILON));
        assert_eq!(s.detail("bp"), Some(1.0));
        assert!((s.value - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn bleu_clips_repeats() {
        // "the the the" against "the cat": p1 = 1/3 after clipping
        let s = bleu(&["the", "the", "the"], &["the", "cat"]).unwrap();
        assert!((s.detail("p1").unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let empty: [&str; 0] = [];
        assert_eq!(bleu(&empty, &CAT).unwrap_err(), MetricError::EmptyCandidate(Metric::Bleu));
        assert_eq!(
            meteor(&CAT, &empty, None).unwrap_err(),
            MetricError::EmptyReference(Metric::Meteor)
        );
        assert!(cosine_similarity(&empty, &empty).is_err());
    }

    #[test]
    fn meteor_disjoint() {
        assert_eq!(meteor(&["a", "b"], &["c", "d"], None).unwrap().value, 0.0);
    }

    #[test]
    fn meteor_identity_closed_form() {
        let s = meteor(&CAT, &CAT, None).unwrap();
        assert_eq!(s.detail("matches"), Some(3.0));
        assert_eq!(s.detail("chunks"), Some(1.0));
        assert!((s.detail("penalty").unwrap() - 0.018519).abs() < 1e-6);
        assert!((s.value - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
        assert!((s.value - 0.981481).abs() < 1e-6);
    }

    #[test]
    fn meteor_recall_heavy() {
        let s = meteor(&CAT, &MAT, None).unwrap();
        assert_eq!(s.detail("matches"), Some(3.0));
        assert_eq!(s.detail("chunks"), Some(1.0));
        assert_eq!(s.detail("precision"), Some(1.0));
        assert_eq!(s.detail("recall"), Some(0.5));
        assert!((s.detail("fmean").unwrap() - 0.526316).abs() < 1e-6);
        assert!((s.value - 0.516569).abs() < 1e-6);
    }

    #[test]
    fn meteor_prefers_chunk_extension() {
        // second "the" in the candidate should follow "on" (index 4), not reuse index 0
        let alignment = meteor_alignment(&["on", "the"], &MAT, None);
        assert_eq!(alignment, vec![Some(3), Some(4)]);
        assert_eq!(count_chunks(&alignment), 1);
    }

    #[test]
    fn meteor_synonym_stage() {
        let lex = SynonymLexicon::from_pairs([("glad", "happy")]);
        let without = meteor(&["i", "am", "glad"], &["i", "am", "happy"], None).unwrap();
        let with = meteor(&["i", "am", "glad"], &["i", "am", "happy"], Some(&lex)).unwrap();
        assert_eq!(without.detail("matches"), Some(2.0));
        assert_eq!(with.detail("matches"), Some(3.0));
        assert_eq!(with.detail("chunks"), Some(1.0));
        assert!(with.value > without.value);
    }

    #[test]
    fn meteor_fragmentation() {
        // reversed order: every match is its own chunk
        let s = meteor(&["c", "b", "a"], &["a", "b", "c"], None).unwrap();
        assert_eq!(s.detail("chunks"), Some(3.0));
        assert!((s.value - 0.5).abs() < 1e-12);
    }

    /// Exhaustive search over injective exact-match alignments.
    fn exhaustive_best(candidate: &[&str], reference: &[&str]) -> (usize, usize) {
        fn go(
            i: usize,
            cand: &[&str],
            reference: &[&str],
            used: &mut Vec<bool>,
            align: &mut Vec<Option<usize>>,
            best: &mut (usize, usize),
        ) {
            if i == cand.len() {
                let m = align.iter().flatten().count();
                let chunks = count_chunks(align);
                if m > best.0 || (m == best.0 && chunks < best.1) {
                    *best = (m, chunks);
                }
                return;
            }
            align[i] = None;
            go(i + 1, cand, reference, used, align, best);
            for j in 0..reference.len() {
                if !used[j] && cand[i] == reference[j] {
                    used[j] = true;
                    align[i] = Some(j);
                    go(i + 1, cand, reference, used, align, best);
                    used[j] = false;
                    align[i] = None;
                }
            }
        }
        let mut best = (0, usize::MAX);
        go(0, candidate, reference, &mut vec![false; reference.len()], &mut vec![None; candidate.len()], &mut best);
        best
    }

    #[test]
    fn meteor_matches_exhaustive_search_on_cat_mat() {
        let (m, chunks) = exhaustive_best(&CAT, &MAT);
        let s = meteor(&CAT, &MAT, None).unwrap();
        assert_eq!(s.detail("matches"), Some(m as f64));
        assert_eq!(s.detail("chunks"), Some(chunks as f64));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&CAT, &CAT).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&["a"], &["b"]).unwrap().value, 0.0);
        let s = cosine_similarity(&["a", "b"], &["a", "c"]).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
    }

    fn ml_record(id: &str, pipeline: PipelineId, source: &str, candidate: &str) -> CandidateRecord {
        CandidateRecord {
            pair: SentencePair::new(id, source, candidate, Lang::Ml, Lang::Ml).unwrap(),
            source_en: "x".into(),
            pipeline,
            params: None,
            scores: None,
            unchanged: source == candidate,
        }
    }

    #[test]
    fn corpus_empty() {
        let out = score_corpus(&[], &Metric::ALL, None);
        assert!(out.means.is_empty());
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn corpus_means_and_skips() {
        let records = vec![
            ml_record("a", PipelineId::M1, "p q", "p q"),
            ml_record("b", PipelineId::M1, "p q", "r s"),
            ml_record("c", PipelineId::M2, "x y", "x y"),
            ml_record("d", PipelineId::M2, "x y", "..."),
        ];
        let out = score_corpus(&records, &[Metric::Bleu], None);
        assert_eq!(out.skipped, 0);
        let m1 = &out.means[&PipelineId::M1];
        assert_eq!(m1.n, 2);
        assert!((m1.bleu.unwrap() - (1.0 + 1e-9) / 2.0).abs() < 1e-15);
        assert_eq!(m1.meteor, None);
        assert_eq!(out.records[0].scores.unwrap().meteor, None);

        // "..." tokenizes to punctuation only, still non-empty
        assert_eq!(out.means[&PipelineId::M2].n, 2);
    }

    #[test]
    fn corpus_two_record_mean() {
        // cosine 1.0 for the identical pair and 0.0 for the disjoint one
        let records = vec![
            ml_record("a", PipelineId::M3, "ക ഖ", "ക ഖ"),
            ml_record("b", PipelineId::M3, "ക ഖ", "ഗ ഘ"),
        ];
        let out = score_corpus(&records, &Metric::ALL, None);
        let means = &out.means[&PipelineId::M3];
        assert!((means.cosine.unwrap() - 0.5).abs() < 1e-15);
    }

    fn token_list() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop_oneof![Just("a"), Just("b"), Just("c"), Just("d"), Just("e")], 1..10)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn metrics_in_unit_range(a in token_list(), b in token_list()) {
            for metric in Metric::ALL {
                for (x, y) in [(&a, &b), (&b, &a)] {
                    let v = compute(metric, x, y, None).unwrap().value;
                    prop_assert!((0.0..=1.0).contains(&v), "{metric} = {v}");
                }
            }
        }

        #[test]
        fn cosine_symmetric(a in token_list(), b in token_list()) {
            let ab = cosine_similarity(&a, &b).unwrap().value;
            let ba = cosine_similarity(&b, &a).unwrap().value;
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn identities(a in token_list()) {
            prop_assert_eq!(bleu(&a, &a).unwrap().value, 1.0);
            prop_assert!((cosine_similarity(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
        }

        #[test]
        fn meteor_alignment_sanity(a in token_list(), b in token_list()) {
            let s = meteor(&a, &b, None).unwrap();
            let m = s.detail("matches").unwrap();
            let chunks = s.detail("chunks").unwrap();
            prop_assert!(chunks <= m);
            prop_assert!(m <= a.len().min(b.len()) as f64);
        }

        #[test]
        fn meteor_distinct_identity(n in 1usize..12) {
            let x: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let expected = 1.0 - 0.5 / (n as f64).powi(3);
            prop_assert!((meteor(&x, &x, None).unwrap().value - expected).abs() < 1e-9);
        }
    }
}
