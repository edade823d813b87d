//! Sentence pairs, synonym lexicons, candidate records and their file formats.
//!
//! Three line-oriented formats are supported:
//!
//! * pairs TSV: `<source>\t<candidate>`, no header, no quoting;
//! * synonyms CSV: `<word>,<synonym>`, no header, no quoting;
//! * candidates JSONL: one [`CandidateRecord`] object per line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::BeamParams;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid record: {0}")]
    Invalid(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn line(line: usize, message: impl Into<String>) -> Self {
        Self::Line {
            line,
            message: message.into(),
        }
    }
}

/// Language tag of a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Ml,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Ml => "ml",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Lang::En),
            "ml" => Ok(Lang::Ml),
            other => Err(CorpusError::Invalid(format!("unknown language tag {other:?}"))),
        }
    }
}

/// Two sentences with language tags: the unit that is scored and judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub source: String,
    pub candidate: String,
    pub source_lang: Lang,
    pub candidate_lang: Lang,
}

impl SentencePair {
    /// Builds a pair, rejecting sentences that are empty after trimming.
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        candidate: impl Into<String>,
        source_lang: Lang,
        candidate_lang: Lang,
    ) -> Result<Self, CorpusError> {
        let pair = Self {
            id: id.into(),
            source: source.into(),
            candidate: candidate.into(),
            source_lang,
            candidate_lang,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::Invalid("empty pair id".into()));
        }
        if self.source.trim().is_empty() {
            return Err(CorpusError::Invalid(format!("{}: empty source", self.id)));
        }
        if self.candidate.trim().is_empty() {
            return Err(CorpusError::Invalid(format!("{}: empty candidate", self.id)));
        }
        Ok(())
    }
}

/// Identifier of one of the four generation pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineId {
    M1,
    M2,
    M3,
    M4,
}

impl PipelineId {
    pub const ALL: [PipelineId; 4] = [PipelineId::M1, PipelineId::M2, PipelineId::M3, PipelineId::M4];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineId::M1 => "m1",
            PipelineId::M2 => "m2",
            PipelineId::M3 => "m3",
            PipelineId::M4 => "m4",
        }
    }

    /// Human-readable model name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            PipelineId::M1 => "MultiIndic Paraphrase",
            PipelineId::M2 => "Synonym Replacement",
            PipelineId::M3 => "BART",
            PipelineId::M4 => "OPUS",
        }
    }
}

impl fmt::Display for PipelineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m1" => Ok(PipelineId::M1),
            "m2" => Ok(PipelineId::M2),
            "m3" => Ok(PipelineId::M3),
            "m4" => Ok(PipelineId::M4),
            other => Err(CorpusError::Invalid(format!(
                "unknown pipeline {other:?} (expected one of m1, m2, m3, m4)"
            ))),
        }
    }
}

/// Automated metric scores of one record. Absent metrics are `null` on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub bleu: Option<f64>,
    pub meteor: Option<f64>,
    pub cosine: Option<f64>,
}

impl Scores {
    fn values(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [("bleu", self.bleu), ("meteor", self.meteor), ("cosine", self.cosine)]
            .into_iter()
            .filter_map(|(name, v)| v.map(|v| (name, v)))
    }
}

/// Output of one pipeline run on one English sentence.
///
/// `pair.source` is the Malayalam source side and `pair.candidate` the
/// Malayalam paraphrase; both languages are `ml`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub pair: SentencePair,
    pub source_en: String,
    pub pipeline: PipelineId,
    pub params: Option<BeamParams>,
    pub scores: Option<Scores>,
    pub unchanged: bool,
}

impl CandidateRecord {
    pub fn id(&self) -> &str {
        &self.pair.id
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        self.pair.validate()?;
        if let Some(scores) = &self.scores {
            for (name, v) in scores.values() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CorpusError::Invalid(format!(
                        "{}: {name} score {v} outside [0, 1]",
                        self.pair.id
                    )));
                }
            }
        }
        if let Some(params) = &self.params {
            params
                .validate()
                .map_err(|e| CorpusError::Invalid(format!("{}: {e}", self.pair.id)))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CandidateLine {
    id: String,
    pipeline: PipelineId,
    source_en: String,
    source_ml: String,
    paraphrase_ml: String,
    params: Option<BeamParams>,
    scores: Option<Scores>,
    unchanged: bool,
}

const CANDIDATE_KEYS: [&str; 8] = [
    "id",
    "pipeline",
    "source_en",
    "source_ml",
    "paraphrase_ml",
    "params",
    "scores",
    "unchanged",
];

impl From<&CandidateRecord> for CandidateLine {
    fn from(r: &CandidateRecord) -> Self {
        Self {
            id: r.pair.id.clone(),
            pipeline: r.pipeline,
            source_en: r.source_en.clone(),
            source_ml: r.pair.source.clone(),
            paraphrase_ml: r.pair.candidate.clone(),
            params: r.params,
            scores: r.scores,
            unchanged: r.unchanged,
        }
    }
}

impl From<CandidateLine> for CandidateRecord {
    fn from(l: CandidateLine) -> Self {
        Self {
            pair: SentencePair {
                id: l.id,
                source: l.source_ml,
                candidate: l.paraphrase_ml,
                source_lang: Lang::Ml,
                candidate_lang: Lang::Ml,
            },
            source_en: l.source_en,
            pipeline: l.pipeline,
            params: l.params,
            scores: l.scores,
            unchanged: l.unchanged,
        }
    }
}

/// Synonym lookup table: lowercase word to its sorted, deduplicated synonyms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

/// Result of loading a lexicon file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconLoad {
    pub lexicon: SynonymLexicon,
    /// Self-pairs such as `sad,sad` that were dropped.
    pub skipped: usize,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a symmetric lexicon from word pairs. Self-pairs are ignored.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut lexicon = Self::new();
        for (a, b) in pairs {
            lexicon.insert_pair(a, b);
        }
        lexicon
    }

    /// Inserts `b` under `a` and `a` under `b`. Returns false for a self-pair.
    pub fn insert_pair(&mut self, a: &str, b: &str) -> bool {
        let a = a.to_lowercase();
        let b = b.to_lowercase();
        if a == b {
            return false;
        }
        Self::insert_sorted(self.entries.entry(a.clone()).or_default(), b.clone());
        Self::insert_sorted(self.entries.entry(b).or_default(), a);
        true
    }

    fn insert_sorted(list: &mut Vec<String>, word: String) {
        if let Err(pos) = list.binary_search(&word) {
            list.insert(pos, word);
        }
    }

    /// Synonyms of `word` (already lowercase), empty when unknown.
    pub fn lookup(&self, word: &str) -> &[String] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))
}

/// Parses pairs TSV text. Ids are `p` plus the zero-padded line number.
pub fn parse_pairs_tsv(text: &str) -> Result<Vec<SentencePair>, CorpusError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::line(
                line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let source = fields[0].trim();
        let candidate = fields[1].trim();
        if source.is_empty() || candidate.is_empty() {
            return Err(CorpusError::line(line_no, "empty field"));
        }
        pairs.push(SentencePair {
            id: format!("p{line_no:04}"),
            source: source.to_string(),
            candidate: candidate.to_string(),
            source_lang: Lang::En,
            candidate_lang: Lang::En,
        });
    }
    Ok(pairs)
}

pub fn load_pairs_tsv(path: impl AsRef<Path>) -> Result<Vec<SentencePair>, CorpusError> {
    parse_pairs_tsv(&read_text(path.as_ref())?)
}

pub fn parse_synonyms_csv(text: &str) -> Result<LexiconLoad, CorpusError> {
    let mut lexicon = SynonymLexicon::new();
    let mut skipped = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(CorpusError::line(
                line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        for field in &fields {
            if field.is_empty() || field.chars().any(char::is_whitespace) {
                return Err(CorpusError::line(
                    line_no,
                    format!("{field:?} is not a single token"),
                ));
            }
        }
        if !lexicon.insert_pair(fields[0], fields[1]) {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} self-synonym pair(s)");
    }
    Ok(LexiconLoad { lexicon, skipped })
}

pub fn load_synonyms_csv(path: impl AsRef<Path>) -> Result<LexiconLoad, CorpusError> {
    parse_synonyms_csv(&read_text(path.as_ref())?)
}

/// Serializes one record as a single JSON line (no trailing newline).
pub fn candidate_to_json_line(record: &CandidateRecord) -> String {
    serde_json::to_string(&CandidateLine::from(record)).expect("candidate records always serialize")
}

pub fn write_candidates_to<W: Write>(
    records: &[CandidateRecord],
    mut out: W,
) -> std::io::Result<usize> {
    for record in records {
        out.write_all(candidate_to_json_line(record).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(records.len())
}

/// Writes records as JSONL, returning the number written.
pub fn write_candidates_jsonl(
    records: &[CandidateRecord],
    path: impl AsRef<Path>,
) -> Result<usize, CorpusError> {
    let path = path.as_ref();
    for record in records {
        record.validate()?;
    }
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_candidates_to(records, BufWriter::new(file)).map_err(|e| CorpusError::io(path, e))
}

pub fn parse_candidates_jsonl(text: &str) -> Result<Vec<CandidateRecord>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CorpusError::line(line_no, format!("malformed JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| CorpusError::line(line_no, "expected a JSON object"))?;
        if let Some(missing) = CANDIDATE_KEYS.iter().find(|k| !obj.contains_key(**k)) {
            return Err(CorpusError::line(line_no, format!("missing field {missing}")));
        }
        let parsed: CandidateLine = serde_json::from_value(value)
            .map_err(|e| CorpusError::line(line_no, e.to_string()))?;
        let record = CandidateRecord::from(parsed);
        record
            .validate()
            .map_err(|e| CorpusError::line(line_no, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_candidates_jsonl(path: impl AsRef<Path>) -> Result<Vec<CandidateRecord>, CorpusError> {
    parse_candidates_jsonl(&read_text(path.as_ref())?)
}
